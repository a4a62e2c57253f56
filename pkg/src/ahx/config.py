"""Flat key = value experiment configs.

Lines are ``key = value``; ``#`` and ``;`` start comments. Values are read as
JSON when possible (numbers, lists, true/false), ``a:b:step`` expands to an
inclusive integer range, and anything else stays a string.
"""
from __future__ import annotations

import configparser
import hashlib
import json
from pathlib import Path

EXPERIMENTS = ("interp", "morse", "moments", "transport", "rates")
FAMILIES = ("identity", "linear", "powerlaw", "powerlaw_asymp", "iresnet", "transport")
TARGETS = ("f1", "f2", "h3", "gaussian", "morse", "custom")


class ConfigError(ValueError):
    pass


def _parse_value(raw: str):
    s = raw.strip()
    parts = s.split(":")
    if len(parts) in (2, 3) and all(p.strip().lstrip("-").isdigit() for p in parts):
        a, b = int(parts[0]), int(parts[1])
        step = int(parts[2]) if len(parts) == 3 else 1
        if step <= 0:
            raise ConfigError(f"range step must be positive in {s!r}")
        return list(range(a, b + 1, step))
    try:
        return json.loads(s)
    except json.JSONDecodeError:
        return s


def parse_config(text: str) -> dict:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
    cp.optionxform = str  # keep key case
    try:
        cp.read_string("[ahx]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    cfg = {k: _parse_value(v) for k, v in cp["ahx"].items()}
    validate(cfg)
    return cfg


def load_config(path) -> tuple[dict, str]:
    """Parsed config and the hex digest of its bytes."""
    p = Path(path)
    try:
        data = p.read_bytes()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    cfg = parse_config(data.decode("utf-8"))
    cfg["_dir"] = str(p.resolve().parent)
    return cfg, hashlib.sha256(data).hexdigest()[:12]


def _as_list(v):
    if isinstance(v, list):
        return v
    if isinstance(v, str):
        return [t.strip() for t in v.split(",") if t.strip()]
    return [v]


def validate(cfg: dict) -> None:
    exp = cfg.get("experiment")
    if exp not in EXPERIMENTS:
        raise ConfigError(f"experiment must be one of {EXPERIMENTS}, got {exp!r}")
    if "family" in cfg:
        fams = _as_list(cfg["family"])
        bad = [f for f in fams if f not in FAMILIES]
        if bad:
            raise ConfigError(f"unknown family {bad[0]!r}; choose from {FAMILIES}")
        cfg["family"] = fams
    if "target" in cfg and cfg["target"] not in TARGETS:
        raise ConfigError(f"unknown target {cfg['target']!r}; choose from {TARGETS}")
    for key in ("zeta",):
        if key in cfg and not (isinstance(cfg[key], (int, float)) and 0 <= cfg[key] <= 1):
            raise ConfigError(f"{key} must be a number in [0, 1]")
    for key in ("Ns", "N_sweep", "s_grid"):
        if key in cfg:
            v = cfg[key]
            v = [v] if isinstance(v, (int, float)) else v
            if not isinstance(v, list) or not v or not all(isinstance(t, (int, float)) for t in v):
                raise ConfigError(f"{key} must be a nonempty list of numbers")
            cfg[key] = v
    if "grid" in cfg:
        g = cfg["grid"]
        if not (isinstance(g, list) and len(g) == 3 and g[0] < g[1] and int(g[2]) >= 3):
            raise ConfigError("grid must be [lo, hi, n] with lo < hi and n >= 3")
    for key in ("seed", "iters"):
        if key in cfg and not (isinstance(cfg[key], int) and cfg[key] >= 0):
            raise ConfigError(f"{key} must be a nonnegative integer")
    if "lr" in cfg and not (isinstance(cfg["lr"], (int, float)) and cfg["lr"] > 0):
        raise ConfigError("lr must be positive")
