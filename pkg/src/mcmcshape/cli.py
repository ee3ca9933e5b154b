"""Command-line front end: prepare, sample, evaluate, report."""

import argparse
import csv
import json
import shutil
import sys
import tempfile
from pathlib import Path

import numpy as np

from . import config as C
from .alignment import align_training_set
from .dataset import CorpusError, check_rect, load_shape_dir, synthesize_test
from .evaluation import gd_baseline
from .io import read_field_csv, read_mask, write_field_csv, write_field_pgm, write_mask
from .report import (chain_summary, emit_report, read_manifest, render_figures,
                     load_samples, write_manifest, write_samples)
from .sampler import prepare_start, run_sampling


class UsageError(Exception):
    pass


def case_dir_name(shape_id):
    return shape_id.replace("/", "__")


# -- training data -----------------------------------------------------------

def load_training(cfg, exclude=None):
    """Aligned training set from ``train_dir``, leaving out shape id ``exclude``."""
    shapes = load_shape_dir(cfg["train_dir"], cfg["threshold"])
    names = sorted({c for _, c, _ in shapes})
    kept = [(m, c, i) for m, c, i in shapes if i != exclude]
    if not kept:
        raise CorpusError("no training shapes left after excluding the test shape")
    # keep class ids stable even if a class loses its only shape
    used = sorted({c for _, c, _ in kept})
    if used != names:
        missing = sorted(set(names) - set(used))
        raise CorpusError(f"class(es) {missing} would be empty after leaving out {exclude}")
    ids = {n: k for k, n in enumerate(names)}
    raw = [(m, ids[c]) for m, c, _ in kept]
    return align_training_set(raw, class_names=tuple(names), ids=[i for _, _, i in kept],
                              sigma=cfg["sigma"], rotation_range_deg=cfg["rotation_range_deg"],
                              align=cfg["align"])


def load_case(case_dir):
    d = Path(case_dir)
    meta_path = d / "meta.json"
    if not meta_path.is_file():
        raise CorpusError(f"{d}: not a prepared case (meta.json missing)")
    meta = json.loads(meta_path.read_text())
    image = read_field_csv(d / "image.csv")
    gt = read_mask(d / "gt.png")
    return meta, image, gt


# -- prepare -----------------------------------------------------------------

def cmd_prepare(cfg):
    if cfg["out"] is None:
        raise UsageError("prepare needs --out")
    shapes = load_shape_dir(cfg["train_dir"], cfg["threshold"])
    names = sorted({c for _, c, _ in shapes})
    ids = {n: k for k, n in enumerate(names)}
    dims = shapes[0][0].shape
    occl = tuple(cfg["occlude"]) if cfg["occlude"] is not None else None
    if occl is not None:
        check_rect(occl, dims)
    ts = align_training_set([(m, ids[c]) for m, c, _ in shapes], class_names=tuple(names),
                            ids=[i for _, _, i in shapes], sigma=cfg["sigma"],
                            rotation_range_deg=cfg["rotation_range_deg"], align=cfg["align"])

    out = Path(cfg["out"])
    out.parent.mkdir(parents=True, exist_ok=True)
    # stage everything, then move into place, so a failure leaves nothing behind
    stage = Path(tempfile.mkdtemp(prefix=".prepare-", dir=out.parent))
    try:
        with open(stage / "alignment.csv", "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("shape_id", "class", "tx", "ty", "theta", "log_scale", "sigma"))
            for s in ts.shapes:
                p = s.pose_from_raw
                w.writerow([s.id, names[s.class_id], repr(float(p.tx)), repr(float(p.ty)),
                            repr(float(p.theta)), repr(float(p.log_scale)), repr(ts.sigma)])
                target = stage / "aligned" / names[s.class_id]
                target.mkdir(parents=True, exist_ok=True)
                write_mask(target / f"{s.id.split('/', 1)[-1]}.png", s.mask)
        for k, (mask, cname, sid) in enumerate(shapes):
            rng = np.random.default_rng([cfg["seed"], k])
            case = synthesize_test(mask, occl, cfg["snr_db"], rng=rng, source_id=sid)
            cdir = stage / "cases" / case_dir_name(sid)
            cdir.mkdir(parents=True)
            write_field_csv(cdir / "image.csv", case.image)
            write_field_pgm(cdir / "image.pgm", case.image)
            write_mask(cdir / "gt.png", mask)
            meta = {"source_id": sid, "class": cname, "class_id": ids[cname],
                    "occlusion": list(occl) if occl else None, "snr_db": cfg["snr_db"],
                    "seed": [cfg["seed"], k], "dims": list(dims)}
            (cdir / "meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
        out.mkdir(exist_ok=True)
        for name in ("aligned", "cases", "alignment.csv"):
            if (out / name).is_dir():
                shutil.rmtree(out / name)
            elif (out / name).exists():
                (out / name).unlink()
            shutil.move(str(stage / name), str(out / name))
    finally:
        shutil.rmtree(stage, ignore_errors=True)
    print(f"prepared {len(shapes)} cases in {out / 'cases'}")
    return 0


# -- sample ------------------------------------------------------------------

def cmd_sample(cfg):
    if cfg["train_dir"] is None or not Path(cfg["train_dir"]).is_dir():
        raise UsageError(f"training directory {cfg['train_dir']!r} not found (--train-dir)")
    if cfg["case"] is None:
        raise UsageError("sample needs --case")
    if cfg["out"] is None:
        raise UsageError("sample needs --out")
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    manifest = {"status": "running", "config": cfg}
    try:
        meta, image, _ = load_case(cfg["case"])
        ts = load_training(cfg, exclude=meta.get("source_id"))
        cfg = dict(cfg, sigma=ts.sigma)
        run_cfg = C.run_config(cfg)
        records = run_sampling(image, ts, run_cfg, workers=cfg["workers"])
    except Exception as exc:
        manifest.update(status="failed", error=f"{type(exc).__name__}: {exc}")
        write_manifest(out / "manifest.json", manifest)
        raise
    if (out / "samples").is_dir():
        shutil.rmtree(out / "samples")
    write_samples(out, records)
    manifest = {
        "status": "ok",
        "config": cfg,
        "case_source_id": meta.get("source_id"),
        "class_names": list(ts.class_names),
        "training_ids": [s.id for s in ts.shapes],
        "seeds": {"master": cfg["seed"], "chains": [[cfg["seed"], r.chain_id] for r in records]},
        "chains": [chain_summary(r) for r in records],
    }
    write_manifest(out / "manifest.json", manifest)
    print(f"wrote {len(records)} samples to {out / 'samples'}")
    return 0


# -- evaluate / report ---------------------------------------------------------

def cmd_evaluate(cfg, run_dir, no_baseline):
    run_dir = Path(run_dir)
    if not (run_dir / "manifest.json").is_file():
        raise UsageError(f"{run_dir}: no manifest.json; run `sample` first")
    manifest = read_manifest(run_dir / "manifest.json")
    if manifest.get("status") != "ok":
        raise CorpusError(f"{run_dir}: run did not complete ({manifest.get('error', 'unknown')})")
    run = C.resolve(manifest["config"])
    records = load_samples(run_dir, manifest)
    _, image, gt = load_case(run["case"])
    baseline = None
    if not no_baseline and run["baseline"]:
        ts = load_training(run, exclude=manifest.get("case_source_id"))
        chain = C.chain_config(run)
        baseline = gd_baseline(image, ts, chain, prepare_start(image, ts, chain), with_energy=True)
    out = Path(cfg["out"]) if cfg["out"] else run_dir / "report"
    emit_report(out, records, gt, len(manifest["class_names"]), image, baseline)
    (out / "report.json").write_text(json.dumps(
        {"run": str(run_dir), "case": run["case"], "baseline": baseline is not None},
        indent=2, sort_keys=True) + "\n")
    print(f"report written to {out}")
    return 0


def cmd_report(report_dir):
    d = Path(report_dir)
    info_path = d / "report.json"
    if not info_path.is_file():
        raise UsageError(f"{d}: not a report directory (run `evaluate` first)")
    info = json.loads(info_path.read_text())
    image = read_field_csv(Path(info["case"]) / "image.csv")
    render_figures(d, image)
    print(f"figures rendered in {d}")
    return 0


# -- argument parsing ----------------------------------------------------------

def _add_common(p):
    p.add_argument("--config", help="YAML/JSON settings file (a run manifest works too)")
    p.add_argument("--train-dir", help="corpus laid out as <class>/<shape>.png")
    p.add_argument("--seed", type=int)
    p.add_argument("--out")
    p.add_argument("--sigma", type=float, help="kernel size; default is the nearest-neighbour rule")
    p.add_argument("--rotation-range-deg", type=float)
    p.add_argument("--no-align", dest="align", action="store_const", const=False)
    p.add_argument("--threshold", type=int)


def build_parser():
    parser = argparse.ArgumentParser(prog="mcmcshape", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", help="align a corpus and synthesize leave-one-out test cases")
    _add_common(p)
    p.add_argument("--snr-db", type=float)
    p.add_argument("--occlude", help="occluder rectangle x,y,w,h")

    p = sub.add_parser("sample", help="draw samples for one prepared case")
    _add_common(p)
    p.add_argument("--case", help="prepared case directory")
    p.add_argument("--samples", type=int, help="number of chains M")
    p.add_argument("--iters", type=int, help="sampling iterations N per chain")
    p.add_argument("--gamma", type=int)
    p.add_argument("--alpha", type=float)
    p.add_argument("--max-step", type=float)
    p.add_argument("--beta-shape", type=float)
    p.add_argument("--target", choices=("full", "shape-only"))
    p.add_argument("--data-only-iters", type=int)
    p.add_argument("--reinit-period", type=int)
    p.add_argument("--local-priors", action="store_const", const=True)
    p.add_argument("--patch-grid", help="RxC")
    p.add_argument("--blend-width", type=int)
    p.add_argument("--mu-length", type=float)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--reverse-eval", choices=("candidate", "literal_prev_curve"))
    p.add_argument("--workers", type=int)
    p.add_argument("--no-baseline", dest="baseline", action="store_const", const=False)

    p = sub.add_parser("evaluate", help="score a sample run and write its report")
    p.add_argument("run", help="run directory written by `sample`")
    p.add_argument("--out", help="report directory (default: <run>/report)")
    p.add_argument("--no-baseline", action="store_true")

    p = sub.add_parser("report", help="re-render the figures of a report directory")
    p.add_argument("report_dir")
    return parser


NON_CONFIG = {"command", "config", "run", "report_dir", "no_baseline"}


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    flags = {k: v for k, v in vars(args).items() if v is not None and k not in NON_CONFIG}
    try:
        if args.command == "report":
            return cmd_report(args.report_dir)
        file_values = C.load_config_file(args.config) if getattr(args, "config", None) else {}
        cfg = C.resolve(file_values, flags)
        if args.command == "prepare":
            if cfg["train_dir"] is None:
                raise UsageError("prepare needs --train-dir")
            return cmd_prepare(cfg)
        if args.command == "sample":
            return cmd_sample(cfg)
        return cmd_evaluate(cfg, args.run, args.no_baseline)
    except UsageError as exc:
        parser.error(str(exc))
    except (C.ConfigError, CorpusError, ValueError, OSError) as exc:
        print(f"mcmcshape: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
