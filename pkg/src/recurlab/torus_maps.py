"""Matrix maps of the d-torus, x -> xT mod 1.

Points are row vectors.  Two arithmetic paths are supported:

* exact lattice points (k_1/p, ..., k_d/p) for integer matrices, iterated
  with modular integer arithmetic, and
* binary floating point at an explicit precision, where every step spends
  log2(||T||_2) bits of the precision budget.
"""

from __future__ import annotations

import ast
import math
import operator
import random
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Protocol, Sequence

import mpmath
import numpy as np
import sympy

from .errors import (
    ConfigError,
    NumericalFailure,
    PrecisionExhausted,
    SingularMatrix,
    UnsupportedExactPath,
)

GUARD_BITS = 64
EIGEN_RTOL = 1e-9
_CERT_DPS = 40


# ---------------------------------------------------------------------------
# matrix entries: rationals, or small expressions such as "sqrt(2)" and "pi"

_BINOPS = {
    ast.Add: operator.add,
    ast.Sub: operator.sub,
    ast.Mult: operator.mul,
    ast.Div: operator.truediv,
    ast.Pow: operator.pow,
}
_FUNCS = {
    "sqrt": mpmath.sqrt,
    "exp": mpmath.exp,
    "log": mpmath.log,
    "sin": mpmath.sin,
    "cos": mpmath.cos,
    "tan": mpmath.tan,
}
_CONSTS = {"pi": lambda: +mpmath.pi, "e": lambda: +mpmath.e}


def _eval_node(node, exact):
    # exact=True folds rationals only and returns None on anything irrational
    if isinstance(node, ast.Expression):
        return _eval_node(node.body, exact)
    if isinstance(node, ast.Constant) and isinstance(node.value, (int, float)) \
            and not isinstance(node.value, bool):
        v = Fraction(str(node.value))
        return v if exact else mpmath.mpf(v.numerator) / v.denominator
    if isinstance(node, ast.UnaryOp) and isinstance(node.op, (ast.USub, ast.UAdd)):
        v = _eval_node(node.operand, exact)
        if v is None:
            return None
        return -v if isinstance(node.op, ast.USub) else v
    if isinstance(node, ast.BinOp) and type(node.op) in _BINOPS:
        a = _eval_node(node.left, exact)
        b = _eval_node(node.right, exact)
        if a is None or b is None:
            return None
        if exact and isinstance(node.op, ast.Pow):
            if b.denominator != 1:
                return None
            return a ** int(b)
        return _BINOPS[type(node.op)](a, b)
    if isinstance(node, ast.Name) and node.id in _CONSTS:
        return None if exact else _CONSTS[node.id]()
    if isinstance(node, ast.Call) and isinstance(node.func, ast.Name) \
            and node.func.id in _FUNCS and len(node.args) == 1 and not node.keywords:
        if exact:
            return None
        return _FUNCS[node.func.id](_eval_node(node.args[0], exact))
    raise ConfigError(f"unsupported token in matrix entry: {ast.dump(node)}")


def parse_entry(value):
    """Normalize a matrix entry to a Fraction when rational, else an expression string."""
    if isinstance(value, bool):
        raise ConfigError("boolean is not a matrix entry")
    if isinstance(value, (int, Fraction)):
        return Fraction(value)
    if isinstance(value, float):
        if not math.isfinite(value):
            raise ConfigError("matrix entries must be finite")
        return Fraction(value)
    if isinstance(value, str):
        text = value.strip()
        try:
            return Fraction(text)
        except (ValueError, ZeroDivisionError):
            pass
        try:
            tree = ast.parse(text, mode="eval")
        except SyntaxError as exc:
            raise ConfigError(f"cannot parse matrix entry {value!r}") from exc
        try:
            folded = _eval_node(tree, exact=True)
        except ZeroDivisionError as exc:
            raise ConfigError(f"division by zero in {value!r}") from exc
        if folded is not None:
            return folded
        with mpmath.workprec(64):
            v = _eval_node(tree, exact=False)
        if not mpmath.isfinite(v) or isinstance(v, mpmath.mpc):
            raise ConfigError(f"matrix entry {value!r} is not a finite real")
        return text
    raise ConfigError(f"unsupported matrix entry type {type(value).__name__}")


def entry_to_mpf(entry, prec):
    with mpmath.workprec(prec):
        if isinstance(entry, Fraction):
            return mpmath.mpf(entry.numerator) / entry.denominator
        return +_eval_node(ast.parse(entry, mode="eval"), exact=False)


def entry_to_text(entry):
    if isinstance(entry, Fraction):
        return str(entry)
    return entry


# ---------------------------------------------------------------------------
# certificates and budgets

@dataclass(frozen=True)
class ExpansionCertificate:
    eigen_moduli: tuple
    passes: bool
    margin: float
    op_norm_2: float
    expansion_L: float
    corollary_flags: dict

    def to_dict(self):
        return {
            "eigen_moduli": list(self.eigen_moduli),
            "passes": self.passes,
            "margin": self.margin,
            "op_norm_2": self.op_norm_2,
            "expansion_L": self.expansion_L,
            "corollary_flags": dict(self.corollary_flags),
        }


@dataclass(frozen=True)
class PrecisionBudget:
    n_max: int
    bits_required: int
    guard_bits: int = GUARD_BITS


# ---------------------------------------------------------------------------
# the map

class PiecewiseExpandingMap(Protocol):
    """Anything the density and mixing estimators can push points through."""

    dim: int

    def apply_array(self, X: np.ndarray) -> np.ndarray: ...


@dataclass(frozen=True, eq=False)
class MatrixTorusMap:
    """x -> xT mod 1 for a non-singular real d x d matrix T."""

    entries: tuple
    name: str = ""
    _mp_cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        rows = [tuple(parse_entry(v) for v in row) for row in self.entries]
        d = len(rows)
        if d == 0 or any(len(r) != d for r in rows):
            raise ConfigError("matrix must be square with d >= 1")
        object.__setattr__(self, "entries", tuple(rows))

    # constructors -----------------------------------------------------------
    @classmethod
    def from_config(cls, spec):
        if "matrix" not in spec:
            raise ConfigError("map spec needs a 'matrix' entry")
        m = cls(spec["matrix"], name=spec.get("name", ""))
        if spec.get("exact") and not m.is_integer:
            raise UnsupportedExactPath("exact = true requires an integer matrix")
        return m

    @classmethod
    def doubling(cls):
        return cls([[2]], name="doubling")

    @classmethod
    def scaled_identity(cls, d, c=2):
        return cls([[c if i == j else 0 for j in range(d)] for i in range(d)],
                   name=f"{c}I")

    @classmethod
    def sqrt2_example(cls):
        return cls([["3/2", "sqrt(2)"], [1, -2]], name="sqrt2-example")

    # basic views ------------------------------------------------------------
    @property
    def dim(self):
        return len(self.entries)

    @cached_property
    def is_integer(self):
        return all(isinstance(v, Fraction) and v.denominator == 1
                   for row in self.entries for v in row)

    @cached_property
    def is_diagonal(self):
        d = self.dim
        for i in range(d):
            for j in range(d):
                if i != j:
                    v = self.entries[i][j]
                    if isinstance(v, str):
                        if entry_to_mpf(v, 200) != 0:
                            return False
                    elif v != 0:
                        return False
        return True

    @cached_property
    def int_matrix(self):
        if not self.is_integer:
            raise UnsupportedExactPath("exact lattice arithmetic needs an integer matrix")
        return tuple(tuple(int(v) for v in row) for row in self.entries)

    @cached_property
    def float_matrix(self):
        return np.array([[float(entry_to_mpf(v, 80)) for v in row] for row in self.entries])

    def mp_matrix(self, prec):
        if prec not in self._mp_cache:
            self._mp_cache[prec] = [[entry_to_mpf(v, prec) for v in row]
                                    for row in self.entries]
        return self._mp_cache[prec]

    def to_config(self):
        return {"matrix": [[entry_to_text(v) for v in row] for row in self.entries],
                "exact": self.is_integer}

    # spectral data ------------------------------------------------------------
    @cached_property
    def certificate(self):
        return validate_expanding(self)

    @cached_property
    def _op_norm_mp(self):
        with mpmath.workdps(_CERT_DPS):
            T = mpmath.matrix(self.mp_matrix(mpmath.mp.prec))
            ev = mpmath.eigsy(T.T * T, eigvals_only=True)
            return mpmath.sqrt(max(ev))

    @property
    def op_norm_2(self):
        return float(self._op_norm_mp)

    @cached_property
    def log2_op_norm(self):
        with mpmath.workdps(_CERT_DPS):
            return mpmath.log(self._op_norm_mp, 2)

    def apply_array(self, X):
        """Vectorized float64 step for an (M, d) array; no precision accounting."""
        return np.mod(np.asarray(X, dtype=float) @ self.float_matrix, 1.0)


def _exact_det(rows):
    a = [list(r) for r in rows]
    n = len(a)
    det = Fraction(1)
    for c in range(n):
        piv = next((r for r in range(c, n) if a[r][c] != 0), None)
        if piv is None:
            return Fraction(0)
        if piv != c:
            a[c], a[piv] = a[piv], a[c]
            det = -det
        det *= a[c][c]
        for r in range(c + 1, n):
            f = a[r][c] / a[c][c]
            if f:
                for k in range(c, n):
                    a[r][k] -= f * a[c][k]
    return det


def _charpoly(T):
    d = len(T)
    if d == 1:
        return [1, -T[0][0]]
    tr = sum(T[i][i] for i in range(d))
    if d == 2:
        return [1, -tr, T[0][0] * T[1][1] - T[0][1] * T[1][0]]
    m2 = sum(T[i][i] * T[j][j] - T[i][j] * T[j][i] for i in range(3) for j in range(i + 1, 3))
    det = mpmath.det(mpmath.matrix(T))
    return [1, -tr, m2, -det]


def validate_expanding(tmap):
    """Eigenvalue-modulus certificate for x -> xT mod 1.

    Moduli come from characteristic-polynomial roots for d <= 3 and a dense
    eigen-solver otherwise.  A modulus within EIGEN_RTOL of 1 is a tie and
    fails the certificate.
    """
    d = tmap.dim
    with mpmath.workdps(_CERT_DPS):
        T = tmap.mp_matrix(mpmath.mp.prec)
        if all(isinstance(v, Fraction) for row in tmap.entries for v in row):
            singular = _exact_det(tmap.entries) == 0
        else:
            det = mpmath.det(mpmath.matrix(T))
            scale = max(abs(v) for row in T for v in row) ** d
            singular = abs(det) <= mpmath.mpf(2) ** (-100) * scale
        if singular:
            raise SingularMatrix("matrix is singular")
        try:
            if d <= 3:
                roots = mpmath.polyroots(_charpoly(T), maxsteps=200, extraprec=400)
            else:
                roots = mpmath.eig(mpmath.matrix(T), left=False, right=False)
        except mpmath.libmp.NoConvergence as exc:
            raise NumericalFailure("eigenvalue iteration did not converge") from exc
        moduli = sorted(float(abs(r)) for r in roots)
    lo = moduli[0]
    margin = lo - 1.0
    if abs(margin) <= EIGEN_RTOL:
        margin = 0.0
    flags = {
        "min_modulus_gt_1_plus_sqrt_d": lo > 1.0 + math.sqrt(d) * (1 + EIGEN_RTOL),
        "diagonal": tmap.is_diagonal,
        "integer": tmap.is_integer,
    }
    return ExpansionCertificate(
        eigen_moduli=tuple(moduli),
        passes=margin > 0,
        margin=margin,
        op_norm_2=tmap.op_norm_2,
        expansion_L=lo,
        corollary_flags=flags,
    )


def required_precision(tmap, N, guard_bits=GUARD_BITS):
    if N < 0:
        raise ValueError("N must be non-negative")
    with mpmath.workdps(_CERT_DPS):
        need = N * tmap.log2_op_norm
        bits = int(mpmath.ceil(need - mpmath.mpf(10) ** -25 * max(1, need)))
    return PrecisionBudget(n_max=N, bits_required=max(bits, 0) + guard_bits,
                           guard_bits=guard_bits)


# ---------------------------------------------------------------------------
# points

def _frac(x):
    r = x - mpmath.floor(x)
    return mpmath.mpf(0) if r >= 1 else r


@dataclass(frozen=True)
class TorusPoint:
    """A point of [0,1)^d, either as binary floats or as an exact lattice point."""

    coords: tuple | None = None
    precision_bits: int = 53
    lost_bits: float = 0.0
    numerators: tuple | None = None
    modulus: int | None = None

    @classmethod
    def from_coords(cls, values, precision_bits=53):
        if precision_bits < 53:
            raise ValueError("precision_bits must be at least 53")
        with mpmath.workprec(precision_bits):
            cs = []
            for v in values:
                if isinstance(v, Fraction):
                    v = mpmath.mpf(v.numerator) / v.denominator
                cs.append(_frac(mpmath.mpf(v)))
        return cls(coords=tuple(cs), precision_bits=precision_bits)

    @classmethod
    def lattice(cls, numerators, modulus, check_prime=True):
        p = int(modulus)
        if check_prime and not sympy.isprime(p):
            raise ValueError(f"lattice modulus {p} is not prime")
        ks = tuple(int(k) % p for k in numerators)
        return cls(numerators=ks, modulus=p)

    @property
    def is_lattice(self):
        return self.numerators is not None

    @property
    def dim(self):
        return len(self.numerators) if self.is_lattice else len(self.coords)

    def as_floats(self):
        if self.is_lattice:
            v = np.array([k / self.modulus for k in self.numerators], dtype=float)
        else:
            v = np.array([float(c) for c in self.coords], dtype=float)
        # values just below 1 can round up to 1.0, which is the torus point 0
        return np.where(v >= 1.0, 0.0, v)

    def as_fractions(self):
        if not self.is_lattice:
            raise UnsupportedExactPath("only lattice points have exact coordinates")
        return tuple(Fraction(k, self.modulus) for k in self.numerators)

    def with_precision(self, bits):
        if self.is_lattice:
            with mpmath.workprec(bits):
                cs = tuple(mpmath.mpf(k) / self.modulus for k in self.numerators)
            return TorusPoint(coords=cs, precision_bits=bits)
        with mpmath.workprec(bits):
            cs = tuple(+c for c in self.coords)
        return TorusPoint(coords=cs, precision_bits=bits, lost_bits=self.lost_bits)

    def to_dict(self):
        if self.is_lattice:
            return {"numerators": list(self.numerators), "modulus": self.modulus}
        return {"coords": [mpmath.nstr(c, 17) for c in self.coords],
                "precision_bits": self.precision_bits}


def apply(tmap, x):
    """One step x -> xT mod 1, exact on lattice points."""
    d = tmap.dim
    if x.dim != d:
        raise ValueError(f"point has dimension {x.dim}, map has {d}")
    if x.is_lattice:
        T = tmap.int_matrix
        p = x.modulus
        k = x.numerators
        out = tuple(sum(k[i] * T[i][j] for i in range(d)) % p for j in range(d))
        return TorusPoint(numerators=out, modulus=p)
    step = float(tmap.log2_op_norm)
    if x.lost_bits + step > x.precision_bits:
        raise PrecisionExhausted(
            f"{x.precision_bits}-bit point has no budget left for another step",
            max_steps=0)
    prec = x.precision_bits
    T = tmap.mp_matrix(prec)
    with mpmath.workprec(prec):
        out = tuple(_frac(mpmath.fsum(x.coords[i] * T[i][j] for i in range(d)))
                    for j in range(d))
    return TorusPoint(coords=out, precision_bits=prec, lost_bits=x.lost_bits + step)


def orbit(tmap, x, N, budget=None):
    """[x, Tx, ..., T^N x]; float points must carry budget.bits_required bits."""
    if budget is None:
        budget = required_precision(tmap, N)
    if budget.n_max < N:
        raise PrecisionExhausted(f"budget covers {budget.n_max} steps, {N} requested",
                                 max_steps=budget.n_max)
    if not x.is_lattice:
        if x.precision_bits < budget.bits_required:
            step = float(tmap.log2_op_norm)
            usable = max(0, x.precision_bits - budget.guard_bits)
            max_n = int(usable // step) if step > 0 else N
            raise PrecisionExhausted(
                f"orbit of length {N} needs {budget.bits_required} bits, point has "
                f"{x.precision_bits}; admissible N is {max_n}", max_steps=max_n)
    elif not tmap.is_integer:
        raise UnsupportedExactPath("lattice orbits need an integer matrix")
    out = [x]
    for _ in range(N):
        x = apply(tmap, x)
        out.append(x)
    return out


# ---------------------------------------------------------------------------
# deterministic sampling

def derive_seed(master_seed, index):
    """Stateless per-sample seed: depends only on (master_seed, index)."""
    ss = np.random.SeedSequence(entropy=int(master_seed) & (2 ** 64 - 1),
                                spawn_key=(int(index),))
    return int.from_bytes(ss.generate_state(4, dtype=np.uint32).tobytes(), "little")


def random_prime(rng, bits):
    return int(sympy.nextprime((1 << bits) | rng.getrandbits(bits)))


def lattice_sample(index, dim, prime_bits, seed):
    rng = random.Random(derive_seed(seed, index))
    p = random_prime(rng, prime_bits)
    return TorusPoint(numerators=tuple(rng.randrange(p) for _ in range(dim)), modulus=p)


def sample_lattice_points(tmap, count, prime_bits=61, seed=0):
    """Uniform lattice points, a fresh prime p >= 2**prime_bits for each sample."""
    if not tmap.is_integer:
        raise UnsupportedExactPath("lattice sampling needs an integer matrix")
    if prime_bits < 31:
        raise ConfigError("prime_bits must be at least 31")
    return [lattice_sample(i, tmap.dim, prime_bits, seed) for i in range(count)]


# ---------------------------------------------------------------------------
# vectorized ensembles, used by the Monte Carlo estimators

class LatticeEnsemble:
    """M lattice points, one prime per row, iterated in lockstep with exact integers."""

    mode = "exact-lattice"

    def __init__(self, tmap, numerators, moduli):
        self.T = np.array(tmap.int_matrix, dtype=object)
        self.k = np.array(numerators, dtype=object).reshape(len(moduli), tmap.dim)
        self.p = np.array(moduli, dtype=object).reshape(-1, 1)
        self._pf = self.p.astype(float)

    @classmethod
    def sample(cls, tmap, indices, seed, prime_bits=61):
        if not tmap.is_integer:
            raise UnsupportedExactPath("exact-lattice mode needs an integer matrix")
        pts = [lattice_sample(i, tmap.dim, prime_bits, seed) for i in indices]
        return cls(tmap, [pt.numerators for pt in pts], [pt.modulus for pt in pts])

    @property
    def min_modulus(self):
        return int(self.p.min()) if len(self.p) else None

    def step(self):
        self.k = self.k.dot(self.T) % self.p

    def floats(self):
        return np.mod(self.k.astype(float) / self._pf, 1.0)

    def describe(self, row):
        return {"numerators": [int(v) for v in self.k[row]], "modulus": int(self.p[row, 0])}


class FixedPointEnsemble:
    """M points X / 2**bits with a fixed-point copy of T at the same scale.

    bits comes from required_precision, so after n_max steps the accumulated
    rounding error stays below 2**-guard_bits.
    """

    mode = "high-precision"

    def __init__(self, tmap, numerators, bits):
        self.bits = bits
        self.k = np.array(numerators, dtype=object).reshape(-1, tmap.dim)
        self._mask = (1 << bits) - 1
        T = tmap.mp_matrix(bits + 64)
        with mpmath.workprec(bits + 64):
            scale = mpmath.mpf(2) ** bits
            self.T = np.array([[int(mpmath.nint(v * scale)) for v in row] for row in T],
                              dtype=object)

    @classmethod
    def sample(cls, tmap, indices, seed, n_steps, guard_bits=GUARD_BITS):
        bits = max(required_precision(tmap, n_steps, guard_bits).bits_required, 53)
        nums = []
        for i in indices:
            rng = random.Random(derive_seed(seed, i))
            nums.append([rng.getrandbits(bits) for _ in range(tmap.dim)])
        return cls(tmap, nums, bits)

    def step(self):
        self.k = (self.k.dot(self.T) >> self.bits) & self._mask

    def floats(self):
        top = self.k >> (self.bits - 53)
        return top.astype(float) * 2.0 ** -53

    def describe(self, row):
        return {"numerators": [int(v) for v in self.k[row]], "denominator_bits": self.bits}


def make_ensemble(tmap, indices, seed, n_steps, mode="auto", prime_bits=61,
                  guard_bits=GUARD_BITS):
    if mode == "auto":
        mode = "exact-lattice" if tmap.is_integer else "high-precision"
    if mode == "exact-lattice":
        return LatticeEnsemble.sample(tmap, indices, seed, prime_bits)
    if mode == "high-precision":
        return FixedPointEnsemble.sample(tmap, indices, seed, n_steps, guard_bits)
    raise ConfigError(f"unknown arithmetic mode {mode!r}")
