"""Target sets on the torus and the schedules that shrink them.

Distances are per-coordinate nearest-integer distances, so a rectangle
R(c, r) is a product of arcs and a hyperboloid H(c, delta) is
{y : prod_i ||y_i - c_i|| < delta}.  Both use strict inequalities.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, DomainError

DIVERGENT = "divergent"
CONVERGENT = "convergent"
UNDETERMINED = "undetermined"


def torus_distance(a, b):
    """Coordinatewise nearest-integer distance ||a - b||, broadcasting."""
    # |x - rint x| stays exact for tiny x, where x mod 1 can round to 1.0
    x = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    return np.abs(x - np.rint(x))


def _coords(y):
    return y.as_floats() if hasattr(y, "as_floats") else np.asarray(y, dtype=float)


@dataclass(frozen=True, eq=False)
class RectTarget:
    center: np.ndarray
    radii: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.radii, dtype=float)
        if np.any(r < 0):
            raise DomainError("radii must be non-negative")
        object.__setattr__(self, "center", _coords(self.center))
        object.__setattr__(self, "radii", np.minimum(r, 0.5))

    @property
    def measure(self):
        """Lebesgue measure on the torus (a clamped radius of 1/2 covers the circle)."""
        return float(np.prod(np.where(self.radii >= 0.5, 1.0, 2.0 * self.radii)))


@dataclass(frozen=True, eq=False)
class HyperboloidTarget:
    center: np.ndarray
    delta: float

    def __post_init__(self):
        if self.delta < 0:
            raise DomainError("delta must be non-negative")
        object.__setattr__(self, "center", _coords(self.center))

    @property
    def measure(self):
        return hyperboloid_volume(len(self.center), self.delta)


def rect_contains(target, y):
    dist = torus_distance(_coords(y), target.center)
    full = target.radii >= 0.5
    return bool(np.all((dist < target.radii) | full))


def hyperboloid_contains(target, y):
    dist = torus_distance(_coords(y), target.center)
    return bool(np.prod(dist) < target.delta)


def hyperboloid_volume(d, delta):
    """Lebesgue measure of {y in [0,1)^d : ||y_1|| ... ||y_d|| < delta}."""
    if delta < 0:
        raise DomainError("delta must be non-negative")
    if d < 1:
        raise DomainError("d must be >= 1")
    if delta >= 2.0 ** -d:
        return 1.0
    if delta == 0:
        return 0.0
    log_term = math.log(1.0 / (2.0 ** d * delta))
    return 2.0 ** d * delta * math.fsum(log_term ** t / math.factorial(t) for t in range(d))


def hyperboloid_volume_array(d, deltas):
    """Vectorized hyperboloid_volume over an array of deltas."""
    v = np.asarray(deltas, dtype=float)
    out = np.ones_like(v)
    small = v < 2.0 ** -d
    out[v <= 0] = 0.0
    mid = small & (v > 0)
    L = np.log(1.0 / (2.0 ** d * v[mid]))
    series = sum(L ** t / math.factorial(t) for t in range(d))
    out[mid] = 2.0 ** d * v[mid] * series
    return out


def ball_hyperboloid_volume(d, r, delta):
    """m_d(B(x, r) cap H(x, delta)) for 0 < delta < r^d, with r <= 1/2."""
    if not 0 < delta < r ** d:
        raise DomainError("needs 0 < delta < r^d")
    log_term = math.log(r ** d / delta)
    return 2.0 ** d * delta * math.fsum(log_term ** t / math.factorial(t) for t in range(d))


def hyperboloid_volume_bounds(d, delta, r=None, n=None, c0=None):
    """(lower, upper) bounds on hyperboloid volumes.

    upper is d 2^d delta (-log delta)^(d-1); with n and c0 given it is the
    perturbed bound d 2^(d+1) delta (-log delta)^(d-1), which covers the
    hyperboloid of size delta + c0 n^-3.  lower needs r with r^d > sqrt(delta)
    and bounds m_d(B(x, r) cap H(x, delta)) from below.
    """
    if not 0 < delta < 1:
        raise DomainError("bounds need 0 < delta < 1")
    L = -math.log(delta)
    if n is not None and c0 is not None:
        upper = d * 2.0 ** (d + 1) * delta * L ** (d - 1)
    else:
        upper = d * 2.0 ** d * delta * L ** (d - 1)
    lower = None
    if r is not None:
        if not r ** d > math.sqrt(delta):
            raise DomainError("lower bound needs r^d > sqrt(delta)")
        lower = 2.0 / math.factorial(d - 1) * delta * L ** (d - 1)
    return lower, upper


# ---------------------------------------------------------------------------
# schedules

@dataclass(frozen=True)
class RadiusSchedule:
    """n -> r_n in (R>=0)^d for hyperrectangle targets."""

    family: str
    d: int
    params: dict
    declared_divergence: str
    aspect_bounded: bool
    aspect_sup: float | None
    thresholded: bool = False
    kind: str = field(default="radius", init=False)

    def _raw(self, n):
        n = np.asarray(n, dtype=float)
        p = self.params
        if self.family == "rect-power":
            c = np.asarray(p["c"], dtype=float)
            a = np.asarray(p["alpha"], dtype=float)
            return c[None, :] * n[:, None] ** (-a[None, :])
        if self.family == "rect-isotropic":
            r = p["c"] * n ** (-p["alpha"])
            return np.repeat(r[:, None], self.d, axis=1)
        if self.family == "rect-constant-then-zero":
            c = np.asarray(p["c"], dtype=float)
            keep = (n <= p["n0"])[:, None]
            return np.where(keep, c[None, :], 0.0)
        if self.family == "rect-table":
            table = np.asarray(p["table"], dtype=float).reshape(-1, self.d)
            idx = n.astype(int) - 1
            out = np.zeros((len(n), self.d))
            ok = idx < len(table)
            out[ok] = table[idx[ok]]
            return out
        raise ConfigError(f"unknown radius family {self.family!r}")

    def values(self, N):
        """(N, d) array of r_1 .. r_N."""
        n = np.arange(1, N + 1)
        r = self._raw(n)
        if self.thresholded:
            keep = r.min(axis=1) > n.astype(float) ** -2.0
            r = np.where(keep[:, None], r, 0.0)
        return r

    def __call__(self, n):
        return self.values(n)[n - 1]

    def volume_terms(self, N):
        return np.prod(self.values(N), axis=1)

    def measure_terms(self, N):
        r = np.minimum(self.values(N), 0.5)
        return np.prod(np.where(r >= 0.5, 1.0, 2.0 * r), axis=1)

    def to_config(self):
        return {"kind": self.family, "d": self.d, **_jsonable(self.params),
                "threshold": self.thresholded}


@dataclass(frozen=True)
class DeltaSchedule:
    """n -> delta_n for hyperboloid targets."""

    family: str
    d: int
    params: dict
    declared_divergence: str
    thresholded: bool = False
    kind: str = field(default="delta", init=False)

    def _raw(self, n):
        n = np.asarray(n, dtype=float)
        p = self.params
        if self.family == "delta-log":
            return p["c"] / (n * np.log(n + 2.0) ** p["beta"])
        if self.family == "delta-power":
            return p["c"] * n ** (-p["alpha"])
        if self.family == "delta-constant-then-zero":
            return np.where(n <= p["n0"], p["c"], 0.0)
        if self.family == "delta-table":
            table = np.asarray(p["table"], dtype=float)
            idx = n.astype(int) - 1
            out = np.zeros(len(n))
            ok = idx < len(table)
            out[ok] = table[idx[ok]]
            return out
        raise ConfigError(f"unknown delta family {self.family!r}")

    def values(self, N):
        n = np.arange(1, N + 1)
        v = self._raw(n)
        if self.thresholded:
            v = np.where(v > n.astype(float) ** -2.0, v, 0.0)
        return v

    def __call__(self, n):
        return self.values(n)[n - 1]

    def volume_terms(self, N):
        v = self.values(N)
        out = np.zeros_like(v)
        pos = v > 0
        L = np.maximum(-np.log(v[pos]), 0.0)
        out[pos] = v[pos] * L ** (self.d - 1)
        return out

    def measure_terms(self, N):
        return hyperboloid_volume_array(self.d, self.values(N))

    def to_config(self):
        return {"kind": self.family, "d": self.d, **_jsonable(self.params),
                "threshold": self.thresholded}


def _jsonable(params):
    out = {}
    for k, v in params.items():
        if isinstance(v, np.ndarray):
            v = v.tolist()
        elif isinstance(v, tuple):
            v = list(v)
        out[k] = v
    return out


def _nonneg(name, value):
    arr = np.asarray(value, dtype=float)
    if np.any(arr < 0) or not np.all(np.isfinite(arr)):
        raise ConfigError(f"parameter {name} must be finite and non-negative")
    return value


def _per_axis(value, d, name):
    if np.ndim(value) == 0:
        return [float(value)] * d
    value = [float(v) for v in value]
    if len(value) != d:
        raise ConfigError(f"{name} needs {d} entries")
    return value


def build_schedule(family, params, d=None):
    """Build a built-in schedule with its analytic divergence class.

    Radius families classify sum_n prod_i r_{n,i}; delta families classify
    sum_n delta_n (-log delta_n)^(d-1).
    """
    params = dict(params)
    params.pop("kind", None)
    d = int(params.pop("d", d) or 0)
    if d < 1:
        raise ConfigError("schedule needs a dimension d >= 1")
    for k, v in params.items():
        if k != "table":
            _nonneg(k, v)
    if family == "rect-isotropic":
        c, alpha = float(params["c"]), float(params["alpha"])
        div = CONVERGENT if c == 0 else (DIVERGENT if alpha * d <= 1 else CONVERGENT)
        return RadiusSchedule(family, d, {"c": c, "alpha": alpha}, div, c > 0,
                              1.0 if c > 0 else None)
    if family == "rect-power":
        c = _per_axis(params["c"], d, "c")
        alpha = _per_axis(params["alpha"], d, "alpha")
        if min(c) == 0:
            div = CONVERGENT
        else:
            div = DIVERGENT if sum(alpha) <= 1 else CONVERGENT
        bounded = min(c) > 0 and max(alpha) == min(alpha)
        sup = max(c) / min(c) if bounded else None
        return RadiusSchedule(family, d, {"c": c, "alpha": alpha}, div, bounded, sup)
    if family == "rect-constant-then-zero":
        c = _per_axis(params["c"], d, "c")
        n0 = int(params["n0"])
        bounded = min(c) > 0
        return RadiusSchedule(family, d, {"c": c, "n0": n0}, CONVERGENT, bounded,
                              max(c) / min(c) if bounded else None)
    if family == "rect-table":
        table = np.asarray(params["table"], dtype=float).reshape(-1, d)
        if np.any(table < 0):
            raise ConfigError("radius table must be non-negative")
        pos = table[table.min(axis=1) > 0]
        sup = float((pos.max(axis=1) / pos.min(axis=1)).max()) if len(pos) else None
        return RadiusSchedule(family, d, {"table": table.tolist()}, UNDETERMINED,
                              sup is not None, sup)
    if family == "delta-log":
        c, beta = float(params["c"]), float(params["beta"])
        div = CONVERGENT if c == 0 else (DIVERGENT if beta <= d else CONVERGENT)
        return DeltaSchedule(family, d, {"c": c, "beta": beta}, div)
    if family == "delta-power":
        c, alpha = float(params["c"]), float(params["alpha"])
        div = CONVERGENT if c == 0 else (DIVERGENT if alpha <= 1 else CONVERGENT)
        return DeltaSchedule(family, d, {"c": c, "alpha": alpha}, div)
    if family == "delta-constant-then-zero":
        return DeltaSchedule(family, d, {"c": float(params["c"]), "n0": int(params["n0"])},
                             CONVERGENT)
    if family == "delta-table":
        table = [float(v) for v in params["table"]]
        if min(table, default=0.0) < 0:
            raise ConfigError("delta table must be non-negative")
        return DeltaSchedule(family, d, {"table": table}, UNDETERMINED)
    raise ConfigError(f"unknown schedule family {family!r}")


def schedule_from_config(spec, d):
    spec = dict(spec)
    kind = spec.pop("kind", None)
    if kind is None:
        raise ConfigError("schedule spec needs a 'kind'")
    threshold = spec.pop("threshold", None)
    sched = build_schedule(kind, spec, d=spec.pop("d", d))
    if threshold:
        sched = threshold_schedule(sched)
    return sched


def threshold_schedule(schedule):
    """Zero every term whose smallest radius (or delta) is not above n^-2.

    Dropping those terms never changes whether the volume sum diverges.
    """
    return replace(schedule, thresholded=True)


def volume_partial_sums(schedule, N):
    """Partial sums of the volume series and of the exact target measures."""
    if N < 1:
        raise ValueError("N must be >= 1")
    return {
        "volume": np.cumsum(schedule.volume_terms(N)),
        "measure": np.cumsum(schedule.measure_terms(N)),
    }
