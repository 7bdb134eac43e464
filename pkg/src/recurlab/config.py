"""Run configuration (TOML in) and deterministic JSON/CSV serialization (out)."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np
import tomli

from .errors import ConfigError

ARITHMETIC_MODES = ("auto", "exact-lattice", "high-precision")


@dataclass(frozen=True)
class VerdictThresholds:
    hit_fraction: float = 0.95
    window: tuple = (0.5, 2.0)
    tail: float = 0.2
    s_inf_factor: float = 2.0

    @classmethod
    def from_dict(cls, d):
        d = dict(d or {})
        unknown = set(d) - {"hit_fraction", "window", "tail", "s_inf_factor"}
        if unknown:
            raise ConfigError(f"unknown threshold keys {sorted(unknown)}")
        if "window" in d:
            w = tuple(float(v) for v in d["window"])
            if len(w) != 2 or not 0 < w[0] <= w[1]:
                raise ConfigError("window must be [lo, hi] with 0 < lo <= hi")
            d["window"] = w
        return cls(**d)

    def to_dict(self):
        out = asdict(self)
        out["window"] = list(self.window)
        return out


@dataclass(frozen=True)
class RunConfig:
    map: dict
    twist: dict
    schedule: dict
    M: int
    N: int
    seed: int = 0
    arithmetic_mode: str = "auto"
    prime_bits: int = 61
    thresholds: VerdictThresholds = field(default_factory=VerdictThresholds)
    output_dir: str = "out"

    def __post_init__(self):
        if not 0 <= int(self.seed) < 2 ** 64:
            raise ConfigError("seed must be a 64-bit unsigned integer")
        if self.M < 1 or self.N < 1:
            raise ConfigError("M and N must be positive")
        if self.arithmetic_mode not in ARITHMETIC_MODES:
            raise ConfigError(f"arithmetic_mode must be one of {ARITHMETIC_MODES}")
        if "kind" not in self.schedule:
            raise ConfigError("schedule needs a 'kind'")

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        run = dict(data.pop("run", {}))
        for key in ("map", "twist", "schedule"):
            if key not in data:
                if key == "twist":
                    data["twist"] = {"kind": "identity"}
                else:
                    raise ConfigError(f"config is missing the [{key}] table")
        unknown = set(data) - {"map", "twist", "schedule", "thresholds"}
        if unknown:
            raise ConfigError(f"unknown config tables {sorted(unknown)}")
        allowed = {"M", "N", "seed", "arithmetic_mode", "prime_bits", "output_dir"}
        if set(run) - allowed:
            raise ConfigError(f"unknown [run] keys {sorted(set(run) - allowed)}")
        try:
            return cls(map=dict(data["map"]), twist=dict(data["twist"]),
                       schedule=dict(data["schedule"]),
                       thresholds=VerdictThresholds.from_dict(data.get("thresholds")),
                       **{k: v for k, v in run.items()})
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc

    @classmethod
    def from_toml(cls, path):
        try:
            with open(path, "rb") as fh:
                data = tomli.load(fh)
        except (OSError, tomli.TOMLDecodeError) as exc:
            raise ConfigError(f"cannot read {path}: {exc}") from exc
        return cls.from_dict(data)

    def to_dict(self):
        return {
            "run": {"M": self.M, "N": self.N, "seed": self.seed,
                    "arithmetic_mode": self.arithmetic_mode,
                    "prime_bits": self.prime_bits, "output_dir": self.output_dir},
            "map": self.map,
            "twist": self.twist,
            "schedule": self.schedule,
            "thresholds": self.thresholds.to_dict(),
        }


def load_map_config(path):
    """A [map] table from a TOML file, or the whole file if it has no such table."""
    try:
        with open(path, "rb") as fh:
            data = tomli.load(fh)
    except (OSError, tomli.TOMLDecodeError) as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from exc
    return data.get("map", data)


# ---------------------------------------------------------------------------
# serialization

def fmt_float(x):
    x = float(x)
    if math.isnan(x):
        return "NaN"
    if math.isinf(x):
        return "Infinity" if x > 0 else "-Infinity"
    return format(x, ".17g")


def _normalize(obj):
    if isinstance(obj, Fraction):
        return f"{obj.numerator}/{obj.denominator}"
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.ndarray):
        return [_normalize(v) for v in obj.tolist()]
    if isinstance(obj, (list, tuple)):
        return [_normalize(v) for v in obj]
    if isinstance(obj, dict):
        return {str(k): _normalize(v) for k, v in obj.items()}
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def _emit(obj, indent, level, out):
    pad = " " * (indent * (level + 1))
    end = " " * (indent * level)
    if obj is None:
        out.append("null")
    elif obj is True:
        out.append("true")
    elif obj is False:
        out.append("false")
    elif isinstance(obj, int):
        out.append(str(obj))
    elif isinstance(obj, float):
        out.append(fmt_float(obj))
    elif isinstance(obj, str):
        out.append(json.dumps(obj))
    elif isinstance(obj, list):
        if not obj:
            out.append("[]")
            return
        if all(not isinstance(v, (list, dict)) for v in obj):
            out.append("[")
            for i, v in enumerate(obj):
                if i:
                    out.append(", ")
                _emit(v, indent, level + 1, out)
            out.append("]")
            return
        out.append("[\n")
        for i, v in enumerate(obj):
            out.append(pad)
            _emit(v, indent, level + 1, out)
            out.append(",\n" if i < len(obj) - 1 else "\n")
        out.append(end + "]")
    elif isinstance(obj, dict):
        if not obj:
            out.append("{}")
            return
        out.append("{\n")
        items = list(obj.items())
        for i, (k, v) in enumerate(items):
            out.append(pad + json.dumps(k) + ": ")
            _emit(v, indent, level + 1, out)
            out.append(",\n" if i < len(items) - 1 else "\n")
        out.append(end + "}")
    else:
        raise TypeError(f"cannot serialize {type(obj).__name__}")


def dumps(obj, indent=2):
    """JSON text with 17 significant digits per float and num/den fractions."""
    out = []
    _emit(_normalize(obj), indent, 0, out)
    return "".join(out) + "\n"


def write_json(path, obj):
    Path(path).write_text(dumps(obj), encoding="utf-8")


def csv_text(header, rows):
    lines = [",".join(header)]
    for row in rows:
        lines.append(",".join(fmt_float(v) if isinstance(v, (float, np.floating)) else str(v)
                              for v in row))
    return "\n".join(lines) + "\n"
