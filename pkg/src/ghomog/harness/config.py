"""Flat ``key = value`` experiment configuration with typed keys and a stable digest."""
from __future__ import annotations

import hashlib
import math
import re
from dataclasses import dataclass, field

__all__ = ["ConfigError", "ExperimentConfig", "parse_config", "load_config", "parse_seeds", "EXPERIMENT_NAMES"]

EXPERIMENT_NAMES = ("waiting-time-tail", "flux-tail", "cluster-stats", "shape-estimate", "homog-rate",
                    "skeleton-validate")


class ConfigError(ValueError):
    """Invalid configuration; the message names the offending key."""


def parse_seeds(text):
    """``"A..B"`` (both ends included) or a single integer."""
    m = re.fullmatch(r"\s*(-?\d+)\s*(?:\.\.\s*(-?\d+)\s*)?", str(text))
    if not m:
        raise ConfigError(f"seeds: expected 'A..B', got {text!r}")
    a = int(m.group(1))
    b = int(m.group(2)) if m.group(2) is not None else a
    if b < a:
        raise ConfigError(f"seeds: empty range {text!r}")
    return a, b


def _float(v):
    x = float(v)
    if math.isnan(x):
        raise ValueError("nan")
    return x


def _floats(v):
    out = tuple(_float(s) for s in str(v).split(",") if s.strip())
    if not out:
        raise ValueError("empty list")
    return out


def _fmt(v):
    if isinstance(v, tuple) and len(v) == 2 and all(isinstance(x, int) for x in v):
        return f"{v[0]}..{v[1]}"
    if isinstance(v, tuple):
        return ",".join(repr(float(x)) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


_TYPES = {
    "int": int,
    "float": _float,
    "str": str,
    "floats": _floats,
    "seeds": parse_seeds,
}

# name -> (type, default, experiments it applies to; None = all)
_COMMON = {
    "experiment": ("str", None, None),
    "seeds": ("seeds", (0, 9), None),
    "out": ("str", "results", None),
    "workers": ("int", 1, None),
    "dim": ("int", 2, None),
    "amplitude": ("float", 2.0, None),
    "div_knob": ("float", 0.0, None),
    "refine": ("int", 1, None),
    "radius": ("float", 0.45, None),
    "smoothness": ("int", 0, None),
    "budget_seconds": ("float", math.inf, None),
    "budget_cells": ("int", 50_000_000, None),
}

_SPECIFIC = {
    "waiting-time-tail": {
        "h": ("float", 1 / 16),
        "half_width": ("float", 4.0),
        "t_max": ("float", 64.0),
        "ball_radius": ("float", 0.5),
        "base_point": ("str", "random"),
    },
    "flux-tail": {
        # in d = 2 a divergence-free field has bounded segment flux; a gradient part gives the tail
        "div_knob": ("float", 0.3),
        "R1": ("float", 8.0),
        "R0_list": ("floats", (2.0, 3.0, 4.0, 5.0)),
        "eps": ("float", 0.2),
        "grid_steps": ("int", 8),
        "quad_order": ("int", 4),
        "pitch": ("float", 0.0),
        "eval_budget": ("float", 2e7),
    },
    "cluster-stats": {
        "h": ("float", 1 / 4),
        "tau": ("float", 2.6),
        "side": ("int", 9),
        "R": ("float", 2.0),
        "n": ("int", 2),
    },
    "shape-estimate": {
        "h": ("float", 1 / 8),
        "n_dirs": ("int", 64),
        "radii": ("floats", (4.0, 8.0, 16.0)),
        "model": ("str", "scaling"),
    },
    "homog-rate": {
        "h": ("float", 1 / 4),
        "T": ("float", 2.0),
        "eps_list": ("floats", (0.25, 0.125, 0.0625, 0.03125)),
        "p": ("floats", (0.6, 0.8)),
        "n_times": ("int", 8),
        "n_space": ("int", 4),
        "shape_seeds": ("seeds", (100000, 100015)),
        "shape_dirs": ("int", 64),
        "shape_radii": ("floats", (4.0, 8.0, 16.0)),
        "shape_h": ("float", 1 / 8),
        "model": ("str", "scaling"),
    },
    "skeleton-validate": {
        "p_open": ("float", 0.95),
        "side": ("int", 70),
        "R": ("int", 25),
        "n": ("int", 8),
        "pairs": ("int", 10),
        "max_dist": ("float", 40.0),
    },
}

# keys that do not change any record and stay out of the digest
_RUN_ONLY = ("seeds", "out", "workers", "budget_seconds")


@dataclass(frozen=True)
class ExperimentConfig:
    """Resolved configuration: every key of the experiment with its typed value."""

    values: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.values[key]

    def get(self, key, default=None):
        return self.values.get(key, default)

    @property
    def experiment(self) -> str:
        return self.values["experiment"]

    @property
    def seeds(self):
        a, b = self.values["seeds"]
        return list(range(a, b + 1))

    def replace(self, **kw):
        vals = dict(self.values)
        for k, v in kw.items():
            vals[k] = _coerce(k, v, vals["experiment"]) if isinstance(v, str) else v
        return ExperimentConfig(vals)

    def canonical(self, include_run=False):
        """Sorted ``key = value`` text; without run-only keys it is what the digest hashes."""
        keys = sorted(k for k in self.values if include_run or k not in _RUN_ONLY)
        return "".join(f"{k} = {_fmt(self.values[k])}\n" for k in keys)

    @property
    def digest(self) -> str:
        return hashlib.sha256(self.canonical().encode()).hexdigest()[:16]

    def env_params(self, seed):
        return {"kind": "lattice", "seed": int(seed), "dim": self["dim"], "amplitude": self["amplitude"],
                "div_knob": self["div_knob"], "radius": self["radius"], "smoothness": self["smoothness"],
                "refine": self["refine"]}


def _schema(experiment):
    keys = {k: (t, d) for k, (t, d, _) in _COMMON.items()}
    keys.update(_SPECIFIC[experiment])
    return keys


def _coerce(key, raw, experiment):
    schema = _schema(experiment)
    if key not in schema:
        known = any(key in s for s in _SPECIFIC.values())
        why = f"does not apply to experiment {experiment!r}" if known else "is not a known key"
        raise ConfigError(f"{key}: {why}")
    typ = schema[key][0]
    try:
        return _TYPES[typ](raw)
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{key}: cannot read {raw!r} as {typ} ({exc})") from None


def _validate(vals):
    def need(ok, key, msg):
        if not ok:
            raise ConfigError(f"{key}: {msg}")

    need(vals["dim"] in (2, 3), "dim", "must be 2 or 3")
    need(vals["amplitude"] >= 0, "amplitude", "must be nonnegative")
    need(vals["div_knob"] >= 0, "div_knob", "must be nonnegative")
    need(vals["refine"] >= 1, "refine", "must be at least 1")
    need(0 < vals["radius"] <= 0.5, "radius", "must lie in (0, 1/2]")
    need(vals["workers"] >= 1, "workers", "must be at least 1")
    need(vals["budget_seconds"] > 0, "budget_seconds", "must be positive")
    need(vals["budget_cells"] > 0, "budget_cells", "must be positive")
    if "h" in vals:
        need(vals["h"] > 0, "h", "must be positive")
    exp = vals["experiment"]
    if exp == "waiting-time-tail":
        need(vals["base_point"] in ("random", "origin"), "base_point", "must be 'random' or 'origin'")
    if exp == "flux-tail":
        need(all(1 <= r <= vals["R1"] for r in vals["R0_list"]), "R0_list", "entries must lie in [1, R1]")
        need(vals["eps"] > 0, "eps", "must be positive")
    if exp == "homog-rate":
        need(len(vals["p"]) == vals["dim"], "p", "length must equal dim")
        need(all(0 < e < 1 for e in vals["eps_list"]), "eps_list", "entries must lie in (0, 1)")
        need(vals["T"] > 0, "T", "must be positive")
        a, b = vals["shape_seeds"]
        s0, s1 = vals["seeds"]
        need(b < s0 or a > s1, "shape_seeds", "must be disjoint from seeds")
        need(b - a + 1 >= 8, "shape_seeds", "need at least 8 seeds")
    if exp in ("shape-estimate", "homog-rate"):
        need(vals["model"] in ("scaling", "inverse"), "model", "must be 'scaling' or 'inverse'")
    if exp == "skeleton-validate":
        need(0 <= vals["p_open"] <= 1, "p_open", "must lie in [0, 1]")
        need(vals["side"] >= 2 * (vals["R"] + vals["n"]) + 1, "side", "must fit Q_{R+n}")


def parse_config(text, overrides=None):
    """Parse ``key = value`` lines (``#`` starts a comment) plus an optional override dict."""
    raw = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        k, v = (s.strip() for s in line.split("=", 1))
        if k in raw:
            raise ConfigError(f"{k}: given twice")
        raw[k] = v
    for k, v in (overrides or {}).items():
        if v is not None:
            raw[k] = v
    exp = raw.get("experiment")
    if exp is None:
        raise ConfigError("experiment: missing")
    if exp not in EXPERIMENT_NAMES:
        raise ConfigError(f"experiment: unknown experiment {exp!r}")
    vals = {k: d for k, (_, d) in _schema(exp).items()}
    for k, v in raw.items():
        vals[k] = _coerce(k, v, exp) if isinstance(v, str) else v
    _validate(vals)
    return ExperimentConfig(vals)


def load_config(path, overrides=None):
    with open(path) as fh:
        return parse_config(fh.read(), overrides)
