"""Twist functions f: [0,1)^d -> [0,1)^d that place the target centre at f(x).

Outputs are reduced mod 1.  Lipschitz constants are with respect to the max
norm on inputs in [0,1)^d and torus distance on outputs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable

import numpy as np

from .errors import ConfigError, RangeError
from .torus_maps import TorusPoint, derive_seed, parse_entry, entry_to_mpf, entry_to_text
from .targets import torus_distance

# (name, map on [0,1), Lipschitz constant on [0,1))
_E = math.e
_DEMO_COMPONENTS = (
    ("reflect", lambda x: 1.0 - x, 1.0),
    ("exp", lambda x: np.expm1(x) / (_E - 1.0), _E / (_E - 1.0)),
    ("log", lambda x: np.log1p(x) / math.log(2.0), 1.0 / math.log(2.0)),
    ("scale", None, None),
    ("tan", lambda x: np.tan(math.pi * x / 4.0), math.pi / 2.0),
    ("arctan", lambda x: 4.0 / math.pi * np.arctan(x), 4.0 / math.pi),
)


@dataclass(frozen=True, eq=False)
class TwistFunction:
    kind: str
    dim: int
    params: dict = field(default_factory=dict)
    declared_p: float = 1.0
    coordinatewise: bool = True
    func: Callable | None = field(default=None, repr=False)

    # ---- constructors ----
    @classmethod
    def identity(cls, d):
        return cls("identity", d, {}, 1.0, True)

    @classmethod
    def constant(cls, y):
        y = tuple(float(v) % 1.0 for v in y)
        # p is stored as 0; any positive p works for a constant map
        return cls("constant", len(y), {"y": list(y)}, 0.0, True)

    @classmethod
    def permutation(cls, sigma):
        """Output coordinate i is x_{sigma[i]}; sigma is 1-based."""
        sigma = tuple(int(s) for s in sigma)
        d = len(sigma)
        if sorted(sigma) != list(range(1, d + 1)):
            raise ConfigError(f"{sigma} is not a permutation of 1..{d}")
        return cls("permute", d, {"sigma": list(sigma)}, 1.0, True)

    @classmethod
    def affine(cls, A, b=None):
        A_exact = [[parse_entry(v) for v in row] for row in A]
        d = len(A_exact)
        if any(len(row) != d for row in A_exact):
            raise ConfigError("affine twist needs a square matrix")
        Af = np.array([[float(entry_to_mpf(v, 80)) for v in row] for row in A_exact])
        b = [0.0] * d if b is None else [float(v) for v in b]
        p = float(np.abs(Af).sum(axis=0).max())
        coordinatewise = bool(np.all((Af != 0).sum(axis=0) <= 1))
        return cls("affine", d,
                   {"A": [[entry_to_text(v) for v in row] for row in A_exact], "b": b,
                    "_A": Af, "_b": np.array(b)}, p, coordinatewise)

    @classmethod
    def coordinatewise_demo(cls, d, k=0.5):
        if not abs(k) <= 1:
            raise ConfigError("demo scale factor k must satisfy |k| <= 1")
        names, ps = [], []
        for i in range(d):
            name, _, p = _DEMO_COMPONENTS[i % len(_DEMO_COMPONENTS)]
            names.append(name)
            ps.append(abs(k) if name == "scale" else p)
        return cls("coordinatewise-demo", d, {"k": k, "components": names}, max(ps), True)

    @classmethod
    def custom(cls, d, func, declared_p, coordinatewise=False):
        return cls("custom", d, {}, float(declared_p), coordinatewise, func)

    @classmethod
    def from_config(cls, spec, d):
        spec = dict(spec)
        kind = spec.pop("kind", "identity")
        if kind == "identity":
            return cls.identity(d)
        if kind == "constant":
            return cls.constant(spec["y"])
        if kind == "permute":
            return cls.permutation(spec["sigma"])
        if kind == "affine":
            return cls.affine(spec["A"], spec.get("b"))
        if kind == "coordinatewise-demo":
            return cls.coordinatewise_demo(d, spec.get("k", 0.5))
        raise ConfigError(f"unknown twist kind {kind!r}")

    def to_config(self):
        out = {"kind": self.kind}
        out.update({k: v for k, v in self.params.items()
                    if not k.startswith("_") and k != "components"})
        return out

    # ---- evaluation ----
    def evaluate_array(self, X):
        """f applied row-wise to an (M, d) float array, reduced mod 1."""
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != self.dim:
            raise ValueError(f"expected shape (M, {self.dim})")
        k = self.kind
        if k == "identity":
            Y = X.copy()
        elif k == "constant":
            Y = np.broadcast_to(np.array(self.params["y"]), X.shape).copy()
        elif k == "permute":
            Y = X[:, [s - 1 for s in self.params["sigma"]]]
        elif k == "affine":
            Y = X @ self.params["_A"] + self.params["_b"]
        elif k == "coordinatewise-demo":
            Y = np.empty_like(X)
            for i in range(self.dim):
                name, fn, _ = _DEMO_COMPONENTS[i % len(_DEMO_COMPONENTS)]
                Y[:, i] = self.params["k"] * X[:, i] if name == "scale" else fn(X[:, i])
        elif k == "custom":
            Y = np.asarray(self.func(X), dtype=float)
            if Y.shape != X.shape or not np.all(np.isfinite(Y)) \
                    or np.any((Y < 0) | (Y >= 1)):
                raise RangeError("custom twist must return values in [0,1)^d")
        else:
            raise ConfigError(f"unknown twist kind {k!r}")
        Y = np.mod(Y, 1.0)
        Y[Y >= 1.0] = 0.0
        return Y

    def evaluate(self, x):
        """f(x) for a TorusPoint; lattice points stay exact under identity and permutations."""
        if x.dim != self.dim:
            raise ValueError("dimension mismatch")
        if x.is_lattice and self.kind in ("identity", "permute"):
            ks = x.numerators
            if self.kind == "permute":
                ks = tuple(ks[s - 1] for s in self.params["sigma"])
            return TorusPoint(numerators=ks, modulus=x.modulus)
        if x.is_lattice and self.kind == "affine" and _is_integer_affine(self.params):
            return _affine_lattice(self.params, x)
        return TorusPoint.from_coords(self.evaluate_array(x.as_floats()[None, :])[0])


def _is_integer_affine(params):
    A = params["_A"]
    return np.all(A == np.round(A)) and np.all(np.asarray(params["b"]) == 0)


def _affine_lattice(params, x):
    A = np.round(params["_A"]).astype(int)
    d = len(A)
    k = x.numerators
    out = tuple(sum(k[i] * int(A[i][j]) for i in range(d)) % x.modulus for j in range(d))
    return TorusPoint(numerators=out, modulus=x.modulus)


def evaluate(f, x):
    return f.evaluate(x)


def estimate_lipschitz(f, sample_pairs=10_000, seed=0):
    """Largest observed |f(x) - f(y)| / |x - y| over random pairs.

    Inputs use the max norm on [0,1)^d and outputs the torus max-distance.
    This only ever underestimates the true constant.
    """
    if sample_pairs < 1000:
        raise ValueError("need at least 1000 pairs")
    rng = np.random.default_rng(derive_seed(seed, 0))
    d = f.dim
    X = rng.random((sample_pairs, d))
    # half the pairs are close together so local slopes are probed
    close = np.arange(sample_pairs) % 2 == 1
    step = rng.uniform(-1e-3, 1e-3, (sample_pairs, d))
    Y = np.where(close[:, None], np.clip(X + step, 0.0, np.nextafter(1.0, 0.0)),
                 rng.random((sample_pairs, d)))
    den = np.max(np.abs(X - Y), axis=1)
    ok = den > 0
    num = np.max(torus_distance(f.evaluate_array(X[ok]), f.evaluate_array(Y[ok])), axis=1)
    return float(np.max(num / den[ok])) if ok.any() else 0.0


@dataclass(frozen=True)
class PushforwardDiagnostic:
    grid_res: int
    samples: int
    ratios: np.ndarray = field(repr=False)
    max_ratio: float
    flagged_cells: tuple
    noise_level: float
    heuristic: bool = True
    note: str = ("heuristic: a histogram of f(X) for uniform X; large ratios that grow "
                 "under refinement suggest a singular pushforward, nothing is proved")


def pushforward_diagnostic(f, grid_res=16, samples=200_000, seed=0):
    """Histogram the pushforward of Lebesgue measure under f on a grid_res^d grid."""
    if grid_res < 1 or grid_res & (grid_res - 1):
        raise ValueError("grid_res must be a power of 2")
    if samples < 100_000:
        raise ValueError("need at least 1e5 samples")
    d = f.dim
    rng = np.random.default_rng(derive_seed(seed, 1))
    Y = f.evaluate_array(rng.random((samples, d)))
    idx = np.minimum((Y * grid_res).astype(int), grid_res - 1)
    flat = np.ravel_multi_index(idx.T, (grid_res,) * d)
    counts = np.bincount(flat, minlength=grid_res ** d).reshape((grid_res,) * d)
    ratios = counts / samples * grid_res ** d
    expected = samples / grid_res ** d
    noise = 1.0 / math.sqrt(expected)
    threshold = max(2.0, 1.0 + 6.0 * noise)
    flagged = tuple(tuple(int(i) for i in ix) for ix in np.argwhere(ratios > threshold))
    return PushforwardDiagnostic(grid_res, samples, ratios, float(ratios.max()),
                                 flagged, noise)
