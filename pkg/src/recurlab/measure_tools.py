"""Invariant densities (Ulam's method), empirical mixing rates, density bounds
and the scaled-radius solver.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.stats import qmc

from .errors import ConfigError, DomainError, NumericalFailure
from .targets import torus_distance
from .torus_maps import derive_seed, make_ensemble

ULAM_TOL = 1e-10
ULAM_MAX_ITER = 10_000


def _is_pow2(n):
    return n >= 1 and not n & (n - 1)


@dataclass(frozen=True, eq=False)
class DensityGrid:
    """Cell masses on a uniform grid of `resolution` cells per axis."""

    resolution: int
    masses: np.ndarray = field(repr=False)
    iterations: int = 0
    residual: float = 0.0

    def __post_init__(self):
        m = np.asarray(self.masses, dtype=float)
        if not _is_pow2(self.resolution):
            raise ConfigError("resolution must be a power of 2")
        if m.shape != (self.resolution,) * m.ndim:
            raise ConfigError("masses must have shape (resolution,)*d")
        if np.any(m < 0) or abs(m.sum() - 1.0) > 1e-12:
            raise ConfigError("masses must be non-negative and sum to 1")
        object.__setattr__(self, "masses", m)

    @property
    def dim(self):
        return self.masses.ndim

    @property
    def h(self):
        return self.masses * self.masses.size

    @classmethod
    def uniform(cls, d, resolution):
        n = resolution ** d
        return cls(resolution, np.full((resolution,) * d, 1.0 / n))

    @classmethod
    def from_density(cls, h):
        h = np.asarray(h, dtype=float)
        m = h / h.sum()
        return cls(h.shape[0], m)

    def to_rows(self):
        """(cell index tuple, centre coords, h) rows for CSV output."""
        R = self.resolution
        h = self.h
        rows = []
        for idx in np.ndindex(h.shape):
            rows.append((idx, tuple((i + 0.5) / R for i in idx), float(h[idx])))
        return rows


def _cell_lower_corners(R, d):
    grids = np.meshgrid(*([np.arange(R)] * d), indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=1) / R


def ulam_density(tmap, resolution, seed=0, samples_per_cell=64, chunk_cells=4096):
    """Stationary vector of the Ulam discretization of the transfer operator."""
    cert = getattr(tmap, "certificate", None)
    if cert is not None and not cert.passes:
        raise DomainError("map is not certified expanding")
    if not _is_pow2(resolution):
        raise ConfigError("resolution must be a power of 2")
    d = tmap.dim
    R = resolution
    ncell = R ** d
    # same scrambled Sobol offsets in every cell
    m = max(int(math.ceil(math.log2(samples_per_cell))), 0)
    offsets = qmc.Sobol(d, scramble=True, seed=derive_seed(seed, 0)).random_base2(m)
    offsets = offsets[:samples_per_cell]
    S = len(offsets)
    corners = _cell_lower_corners(R, d)
    strides = R ** np.arange(d - 1, -1, -1)
    rows, cols = [], []
    for start in range(0, ncell, chunk_cells):
        c = corners[start:start + chunk_cells]
        X = (c[:, None, :] + offsets[None, :, :] / R).reshape(-1, d)
        Y = tmap.apply_array(X)
        idx = np.clip(np.floor(Y * R).astype(np.int64), 0, R - 1)
        cols.append(idx @ strides)
        rows.append(np.repeat(np.arange(start, start + len(c)), S))
    P = sparse.csr_matrix((np.full(ncell * S, 1.0 / S), (np.concatenate(rows),
                                                        np.concatenate(cols))),
                          shape=(ncell, ncell))
    PT = P.T.tocsr()
    mass = np.full(ncell, 1.0 / ncell)
    residual = np.inf
    for it in range(1, ULAM_MAX_ITER + 1):
        new = PT @ mass
        new /= new.sum()
        residual = float(np.abs(new - mass).sum())
        mass = new
        if residual < ULAM_TOL:
            break
    else:
        raise NumericalFailure(f"Ulam iteration did not converge in {ULAM_MAX_ITER} steps",
                               residual)
    mass = np.maximum(mass, 0.0)
    mass /= mass.sum()
    return DensityGrid(R, mass.reshape((R,) * d), it, residual)


@dataclass(frozen=True)
class DensityBound:
    h_max: float
    h_min: float
    c: float | None
    ok: bool

    def to_dict(self):
        return {"h_max": self.h_max, "h_min": self.h_min, "c": self.c, "ok": self.ok}


def density_bound_check(grid):
    """Smallest c >= 1 with 1/c <= h <= c on every cell, or ok=False if h_min <= 0."""
    h = grid.h
    hmax, hmin = float(h.max()), float(h.min())
    if hmin <= 0:
        return DensityBound(hmax, hmin, None, False)
    return DensityBound(hmax, hmin, max(hmax, 1.0 / hmin, 1.0), True)


# ---------------------------------------------------------------------------
# scaled radius

@dataclass(frozen=True)
class ScaledRadius:
    l: float
    achieved_measure: float
    target: float
    iterations: int
    tolerance: float


def _arc_overlap(center, half, R):
    """Length of (center-half, center+half) mod 1 inside each cell [j/R, (j+1)/R)."""
    if half >= 0.5:
        return np.full(R, 1.0 / R)
    lo = np.arange(R) / R
    hi = lo + 1.0 / R
    a, b = center - half, center + half
    out = np.zeros(R)
    for shift in (-1.0, 0.0, 1.0):
        out += np.clip(np.minimum(hi, b + shift) - np.maximum(lo, a + shift), 0.0, None)
    return out


def grid_rect_measure(grid, center, radii):
    """mu(R(center, radii)) under the piecewise-constant grid density."""
    R = grid.resolution
    h = grid.h
    out = h
    # contract one axis at a time; the leading axis is always the next one
    for c, r in zip(center, radii):
        w = _arc_overlap(float(c) % 1.0, float(r), R)
        out = np.tensordot(w, out, axes=(0, 0))
    return float(out)


def solve_scaled_radius(grid, center, r_n, target_volume, tol=1e-9, max_iter=200):
    """Bisection for l with mu(R(center, l * r_n)) = target_volume."""
    if not 0.0 <= target_volume <= 1.0:
        raise DomainError("target_volume must lie in [0, 1]")
    r = np.asarray(r_n, dtype=float)
    if r.shape != (grid.dim,) or np.any(r <= 0):
        raise DomainError("r_n needs one positive entry per axis")
    center = np.asarray(center, dtype=float)
    if target_volume == 0.0:
        return ScaledRadius(0.0, 0.0, 0.0, 0, tol)
    lo, hi = 0.0, 0.5 / float(r.min())
    mu = lambda l: grid_rect_measure(grid, center, l * r)
    best_l, best_mu = hi, mu(hi)
    it = 0
    for it in range(1, max_iter + 1):
        mid = 0.5 * (lo + hi)
        m = mu(mid)
        if abs(m - target_volume) < abs(best_mu - target_volume):
            best_l, best_mu = mid, m
        if abs(m - target_volume) <= tol * target_volume or hi - lo <= 1e-17 * hi:
            break
        if m < target_volume:
            lo = mid
        else:
            hi = mid
    return ScaledRadius(best_l, best_mu, float(target_volume), it,
                        abs(best_mu - target_volume))


# ---------------------------------------------------------------------------
# mixing

@dataclass(frozen=True, eq=False)
class Box:
    """Axis-parallel box lo <= x < hi inside [0,1)^d."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=float)
        hi = np.asarray(self.hi, dtype=float)
        if lo.shape != hi.shape or np.any(lo < 0) or np.any(hi > 1) or np.any(hi <= lo):
            raise ConfigError("box needs 0 <= lo < hi <= 1")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def measure(self):
        return float(np.prod(self.hi - self.lo))

    def contains(self, X):
        return np.all((X >= self.lo) & (X < self.hi), axis=1)

    def to_list(self):
        return [self.lo.tolist(), self.hi.tolist()]


def default_pair_family(d, seed=0):
    """The 2^d half-side orthant boxes plus two random boxes, all ordered pairs."""
    boxes = []
    for corner in np.ndindex((2,) * d):
        lo = np.array(corner) / 2.0
        boxes.append(Box(lo, lo + 0.5))
    rng = np.random.default_rng(derive_seed(seed, 2))
    for _ in range(2):
        a, b = rng.random(d), rng.random(d)
        lo, hi = np.minimum(a, b), np.maximum(a, b)
        hi = np.maximum(hi, lo + 0.05)
        lo = np.minimum(lo, hi - 0.05)
        boxes.append(Box(np.clip(lo, 0, 1), np.clip(hi, 0, 1)))
    return [(F, G) for F in boxes for G in boxes]


@dataclass(frozen=True, eq=False)
class MixingProfile:
    lags: tuple
    phi: np.ndarray
    per_pair: np.ndarray = field(repr=False)
    sigma: np.ndarray = field(repr=False)
    noise_floor: float = 0.0
    c: float | None = None
    tau: float | None = None
    usable_lags: tuple = ()
    note: str = ""
    samples: int = 0

    @property
    def grades(self):
        """Exponential, summable and polynomial decay all follow from tau > 0."""
        ok = self.tau is not None and self.tau > 0
        return {"exponential": ok, "summable": ok, "polynomial": ok}

    def to_rows(self):
        return [(int(n), float(p)) for n, p in zip(self.lags, self.phi)]


def estimate_mixing(tmap, pair_family=None, lags=range(1, 21), samples=100_000, seed=0,
                    mode="high-precision"):
    """phi(n) = max over pairs |mu(F & T^-n G) - mu(F)mu(G)| / mu(G), by Monte Carlo."""
    if samples < 100_000:
        raise ConfigError("mixing estimates need at least 1e5 samples")
    lags = tuple(sorted(int(n) for n in lags))
    if not lags or lags[0] < 0:
        raise ConfigError("lags must be non-negative")
    pairs = list(pair_family) if pair_family is not None else default_pair_family(tmap.dim, seed)
    ens = make_ensemble(tmap, range(samples), seed, max(lags[-1], 1), mode=mode)
    X0 = ens.floats()
    inF = np.stack([F.contains(X0) for F, _ in pairs])
    pF = inF.mean(axis=1)
    per_pair = np.zeros((len(lags), len(pairs)))
    sig = np.zeros((len(lags), len(pairs)))
    want = set(lags)
    n = 0
    X = X0
    while True:
        if n in want:
            j = lags.index(n)
            inG = np.stack([G.contains(X) for _, G in pairs])
            pG = inG.mean(axis=1)
            joint = (inF & inG).mean(axis=1)
            with np.errstate(divide="ignore", invalid="ignore"):
                val = np.abs(joint - pF * pG) / pG
                s = np.sqrt(joint * (1 - joint) / samples) / pG
            per_pair[j] = np.where(pG > 0, val, 0.0)
            sig[j] = np.where(pG > 0, s, 0.0)
        if n >= lags[-1]:
            break
        ens.step()
        n += 1
        X = ens.floats()
    phi = per_pair.max(axis=1)
    floor = 3.0 / math.sqrt(samples)
    usable = tuple(lg for lg, p in zip(lags, phi) if p > floor and lg > 0)
    c = tau = None
    note = ""
    if len(usable) >= 2:
        y = np.log([phi[lags.index(lg)] for lg in usable])
        slope, icept = np.polyfit(np.array(usable, dtype=float), y, 1)
        c, tau = float(math.exp(icept)), float(-slope)
        if len(usable) < 3:
            note = "fit uses fewer than 3 lags; tau is unreliable"
    elif len(usable) == 1:
        note = "only one lag above the noise floor; no fit"
    else:
        note = "all positive lags below the noise floor; fit omitted"
    return MixingProfile(lags, phi, per_pair, sig, floor, c, tau, usable, note, samples)
