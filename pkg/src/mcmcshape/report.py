"""Run directories and evaluation reports on disk.

A run directory holds ``samples/chain_<k>.png``, ``samples/trace_<k>.csv`` and
``manifest.json``. A report directory holds ``pr.csv``, ``counts.csv``,
``h.pgm``, ``energy_trace.csv`` and the rendered figures.
"""

import csv
import json
from pathlib import Path

import numpy as np

from .energy import EnergyBreakdown
from .evaluation import class_counts, histogram_image, mean_traces, precision_recall
from .io import read_mask, write_mask
from .sampler import SampleRecord

TRACE_FIELDS = ("chain_id", "iteration", "e_data", "e_shape", "e_total", "accepted")
PR_FIELDS = ("sample_id", "precision", "recall", "f_measure", "class_id", "e_total")
ENERGY_FIELDS = ("class_id", "iteration", "n_chains", "mean_e_data", "mean_e_shape", "mean_e_total")


def _fmt(x):
    return repr(float(x))


def sample_id(chain_id):
    return f"chain_{chain_id:03d}"


def write_trace_csv(path, record):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TRACE_FIELDS)
        for t, (e, acc) in enumerate(zip(record.energy_trace, record.accepted), start=1):
            w.writerow([record.chain_id, t, _fmt(e.e_data), _fmt(e.e_shape), _fmt(e.e_total),
                        int(acc)])


def read_trace_csv(path, beta_shape=1.0, mode="full"):
    energies, accepted = [], []
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            energies.append(EnergyBreakdown(float(row["e_data"]), float(row["e_shape"]),
                                            float(row["e_total"]), beta_shape, mode))
            accepted.append(bool(int(row["accepted"])))
    if not energies:
        raise ValueError(f"{path}: empty trace")
    return energies, accepted


def chain_summary(rec):
    e = rec.final_energy
    return {
        "chain_id": rec.chain_id,
        "class_id": rec.class_id,
        "e_data": e.e_data,
        "e_shape": e.e_shape,
        "e_total": e.e_total,
        "accept_count": rec.accept_count,
        "accept_rate": rec.accept_rate,
        "class_fallback": rec.class_fallback,
        "selection_fallbacks": rec.selection_fallbacks,
        "flagged_steps": rec.flagged_steps,
        "selection_history_digest": rec.selection_history_digest,
        "pose": rec.pose,
        "fingerprint": rec.fingerprint(),
    }


def write_manifest(path, manifest):
    with open(path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def read_manifest(path):
    with open(path) as fh:
        return json.load(fh)


def write_samples(run_dir, records):
    sdir = Path(run_dir) / "samples"
    sdir.mkdir(parents=True, exist_ok=True)
    for rec in records:
        write_mask(sdir / f"chain_{rec.chain_id}.png", rec.final_mask_image_frame)
        write_trace_csv(sdir / f"trace_{rec.chain_id}.csv", rec)


def load_samples(run_dir, manifest=None):
    """Rebuild SampleRecords (mask, class, trace) from a run directory."""
    run_dir = Path(run_dir)
    if manifest is None:
        manifest = read_manifest(run_dir / "manifest.json")
    chains = manifest.get("chains") or []
    if not chains:
        raise ValueError(f"{run_dir}: run holds no samples")
    cfg = manifest["config"]
    out = []
    for ch in chains:
        k = ch["chain_id"]
        mask = read_mask(run_dir / "samples" / f"chain_{k}.png")
        trace, accepted = read_trace_csv(run_dir / "samples" / f"trace_{k}.csv",
                                         cfg.get("beta_shape", 1.0), cfg.get("target", "full"))
        out.append(SampleRecord(k, mask, ch["class_id"], trace, accepted, ch["accept_count"],
                                ch["selection_history_digest"], ch["class_fallback"],
                                ch["selection_fallbacks"], ch["flagged_steps"], ch["pose"]))
    return out


def write_histogram_pgm(path, records):
    """H as a binary PGM with maxval M, so each stored value is the exact
    count H * M."""
    masks = [r.final_mask_image_frame for r in records]
    m = len(masks)
    counts = np.rint(histogram_image(masks) * m).astype(int)
    h, w = counts.shape
    dtype = ">u1" if m < 256 else ">u2"
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n{max(m, 1)}\n".encode("ascii"))
        fh.write(counts.astype(dtype).tobytes())


def read_histogram_pgm(path):
    """Returns (H, M)."""
    data = Path(path).read_bytes()
    parts = data.split(maxsplit=4)
    if parts[0] != b"P5":
        raise ValueError(f"{path}: not a binary PGM")
    w, h, m = int(parts[1]), int(parts[2]), int(parts[3])
    raw = data[len(data) - w * h * (1 if m < 256 else 2):]
    counts = np.frombuffer(raw, dtype=">u1" if m < 256 else ">u2").reshape(h, w)
    return counts / float(m), m


def write_pr_csv(path, records, gt, baseline=None):
    """One row per sample plus an optional ``baseline`` row ``(mask, energy)``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(PR_FIELDS)
        for r in records:
            pr = precision_recall(r.final_mask_image_frame, gt)
            w.writerow([sample_id(r.chain_id), _fmt(pr.precision), _fmt(pr.recall),
                        _fmt(pr.f_measure), r.class_id, _fmt(r.final_energy.e_total)])
        if baseline is not None:
            mask, energy = baseline
            pr = precision_recall(mask, gt)
            w.writerow(["baseline", _fmt(pr.precision), _fmt(pr.recall), _fmt(pr.f_measure),
                        "", _fmt(energy.e_total) if energy is not None else ""])


def read_pr_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


def write_counts_csv(path, records, n_classes):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("class_id", "count"))
        for c, n in enumerate(class_counts(records, n_classes)):
            w.writerow([c, int(n)])


def write_energy_csv(path, records):
    """Per-class iteration-wise means of every energy column."""
    cols = {f: mean_traces(records, f) for f in ("e_data", "e_shape", "e_total")}
    sizes = {}
    for r in records:
        sizes[r.class_id] = sizes.get(r.class_id, 0) + 1
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ENERGY_FIELDS)
        for c in sorted(sizes):
            for t in range(len(cols["e_shape"][c])):
                w.writerow([c, t + 1, sizes[c], _fmt(cols["e_data"][c][t]),
                            _fmt(cols["e_shape"][c][t]), _fmt(cols["e_total"][c][t])])


def read_energy_csv(path, field="e_shape"):
    traces = {}
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            traces.setdefault(int(row["class_id"]), []).append(float(row[f"mean_{field}"]))
    return {c: np.array(v) for c, v in traces.items()}


def render_figures(report_dir, background=None, offset=0):
    """Draw pr_scatter.svg, energy_trace.svg and mcb_overlay.png from the
    tables already in ``report_dir``."""
    from .plotting import energy_traces, pr_scatter, write_mcb_overlay

    d = Path(report_dir)
    rows, base = [], None
    for row in read_pr_csv(d / "pr.csv"):
        pr = (float(row["precision"]), float(row["recall"]))
        if row["sample_id"] == "baseline":
            base = pr
        else:
            rows.append(pr + (int(row["class_id"]),))
    pr_scatter(d / "pr_scatter.svg", rows, base)
    energy_traces(d / "energy_trace.svg", read_energy_csv(d / "energy_trace.csv"), offset=offset)
    h, _ = read_histogram_pgm(d / "h.pgm")
    write_mcb_overlay(d / "mcb_overlay.png", h, background)


def emit_report(out_dir, records, gt, n_classes, image=None, baseline=None, offset=0):
    """Write every table and figure of a report for one run."""
    if not records:
        raise ValueError("no samples to report")
    d = Path(out_dir)
    d.mkdir(parents=True, exist_ok=True)
    write_pr_csv(d / "pr.csv", records, gt, baseline)
    write_counts_csv(d / "counts.csv", records, n_classes)
    write_histogram_pgm(d / "h.pgm", records)
    write_energy_csv(d / "energy_trace.csv", records)
    render_figures(d, image, offset)
    return d
