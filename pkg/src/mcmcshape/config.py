"""Resolved run configuration: built-in defaults, then a config file, then flags.

Keys mirror the command-line flag names (dashes or underscores both accepted
in files). A run manifest is itself a valid config file, which is how runs are
replayed.
"""

from pathlib import Path

import yaml

from .energy import ChanVeseParams, FULL, SHAPE_ONLY
from .local_priors import parse_patch_grid
from .sampler import REVERSE_CANDIDATE, ChainConfig, RunConfig

_CV = ChanVeseParams()

DEFAULTS = {
    "train_dir": None,
    "case": None,
    "out": None,
    "samples": 50,
    "iters": 300,
    "gamma": 5,
    "alpha": 1.0,
    "max_step": 1.0,
    "sigma": None,
    "beta_shape": 1.0,
    "target": "full",
    "data_only_iters": 300,
    "reinit_period": 10,
    "local_priors": False,
    "patch_grid": "2x4",
    "blend_width": 3,
    "snr_db": None,
    "occlude": None,
    "seed": 0,
    "epsilon": _CV.epsilon,
    "lambda1": _CV.lambda1,
    "lambda2": _CV.lambda2,
    "mu_length": _CV.mu_length,
    "reverse_eval": REVERSE_CANDIDATE,
    "align": True,
    "rotation_range_deg": 180.0,
    "init_radius_frac": 0.25,
    "threshold": 128,
    "workers": 1,
    "baseline": True,
}

TARGETS = {"full": FULL, "shape-only": SHAPE_ONLY, "shape_only": SHAPE_ONLY}


class ConfigError(ValueError):
    pass


def normalize_key(key):
    return str(key).strip().lstrip("-").replace("-", "_")


def parse_rect(text):
    """``"x,y,w,h"`` -> tuple of four ints."""
    if text is None:
        return None
    if isinstance(text, (list, tuple)):
        vals = list(text)
    else:
        vals = str(text).split(",")
    try:
        rect = tuple(int(v) for v in vals)
    except ValueError as exc:
        raise ConfigError(f"bad rectangle {text!r}; expected x,y,w,h") from exc
    if len(rect) != 4:
        raise ConfigError(f"bad rectangle {text!r}; expected x,y,w,h")
    return rect


def load_config_file(path):
    """Flat mapping from a YAML (or JSON) file; a manifest's ``config`` block is used
    when present."""
    try:
        data = yaml.safe_load(Path(path).read_text())
    except (OSError, yaml.YAMLError) as exc:
        raise ConfigError(f"{path}: cannot read config ({exc})") from exc
    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected key: value pairs")
    if isinstance(data.get("config"), dict):
        data = data["config"]
    return {normalize_key(k): v for k, v in data.items()}


def resolve(file_values=None, flag_values=None):
    """Merge defaults < file < flags and validate; returns a plain dict."""
    cfg = dict(DEFAULTS)
    for layer in (file_values or {}, flag_values or {}):
        for k, v in layer.items():
            k = normalize_key(k)
            if k not in DEFAULTS:
                raise ConfigError(f"unknown setting {k!r}")
            cfg[k] = v
    target = str(cfg["target"])
    if target not in TARGETS:
        raise ConfigError(f"target must be one of full, shape-only; got {target!r}")
    cfg["target"] = "shape-only" if TARGETS[target] == SHAPE_ONLY else "full"
    if cfg["occlude"] is not None:
        cfg["occlude"] = list(parse_rect(cfg["occlude"]))
    try:
        rows, cols = parse_patch_grid(str(cfg["patch_grid"]))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    cfg["patch_grid"] = f"{rows}x{cols}"
    for k in ("train_dir", "case", "out"):
        if cfg[k] is not None:
            cfg[k] = str(cfg[k])
    for k in ("alpha", "max_step", "beta_shape", "epsilon", "lambda1", "lambda2",
              "mu_length", "rotation_range_deg", "init_radius_frac"):
        cfg[k] = float(cfg[k])
    for k in ("samples", "iters", "gamma", "data_only_iters", "reinit_period",
              "blend_width", "seed", "threshold", "workers"):
        cfg[k] = int(cfg[k])
    for k in ("sigma", "snr_db"):
        cfg[k] = None if cfg[k] is None else float(cfg[k])
    for k in ("local_priors", "align", "baseline"):
        cfg[k] = bool(cfg[k])
    # constructing the typed configs validates the ranges
    try:
        run_config(cfg)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    return cfg


def chain_config(cfg):
    return ChainConfig(
        n_iters=cfg["iters"], gamma=cfg["gamma"], alpha=cfg["alpha"], max_step=cfg["max_step"],
        data_only_iters=cfg["data_only_iters"], reinit_period=cfg["reinit_period"],
        target_mode=TARGETS[cfg["target"]], beta_shape=cfg["beta_shape"], seed=cfg["seed"],
        chan_vese=ChanVeseParams(cfg["epsilon"], cfg["lambda1"], cfg["lambda2"], cfg["mu_length"]),
        reverse_eval=cfg["reverse_eval"], align=cfg["align"],
        rotation_range_deg=cfg["rotation_range_deg"], init_radius_frac=cfg["init_radius_frac"],
        patch_grid=parse_patch_grid(cfg["patch_grid"]) if cfg["local_priors"] else None,
        blend_width=cfg["blend_width"],
    )


def run_config(cfg):
    return RunConfig(cfg["samples"], chain_config(cfg))
