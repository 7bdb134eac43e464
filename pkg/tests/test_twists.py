import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from recurlab.errors import ConfigError, RangeError
from recurlab.torus_maps import TorusPoint
from recurlab.twists import TwistFunction, estimate_lipschitz, evaluate, pushforward_diagnostic

unit = st.floats(0, 1, exclude_max=True)

BUILTINS = [
    TwistFunction.identity(2),
    TwistFunction.constant([0.3, 0.8]),
    TwistFunction.permutation([2, 1]),
    TwistFunction.affine([["1/2", "1/2"], [0, 1]]),
    TwistFunction.affine([[2, 0], [0, 2]], [0.1, 0.2]),
    TwistFunction.coordinatewise_demo(6, k=0.5),
    TwistFunction.coordinatewise_demo(3, k=-1.0),
]


def test_evaluate_examples():
    x = TorusPoint.from_coords([0.3, 0.7])
    assert evaluate(TwistFunction.identity(2), x).as_floats() == pytest.approx([0.3, 0.7])
    assert evaluate(TwistFunction.permutation([2, 1]), x).as_floats() == pytest.approx([0.7, 0.3])
    A = TwistFunction.affine([["1/2", "1/2"], [0, 1]])
    y = evaluate(A, TorusPoint.from_coords([0.5, 0.5])).as_floats()
    assert y == pytest.approx([0.25, 0.75])


def test_declared_constants():
    assert TwistFunction.identity(3).declared_p == 1
    assert TwistFunction.constant([0.1]).declared_p == 0
    assert TwistFunction.permutation([3, 1, 2]).declared_p == 1
    assert TwistFunction.affine([[2, 0], [0, 2]]).declared_p == 2
    assert TwistFunction.affine([["1/2", "1/2"], [0, 1]]).declared_p == pytest.approx(1.5)
    demo = TwistFunction.coordinatewise_demo(6)
    assert demo.declared_p == pytest.approx(max(1, math.e / (math.e - 1), 1 / math.log(2),
                                                0.5, math.pi / 2, 4 / math.pi))


def test_coordinatewise_flags():
    assert TwistFunction.permutation([2, 1]).coordinatewise
    assert TwistFunction.coordinatewise_demo(4).coordinatewise
    assert not TwistFunction.affine([["1/2", "1/2"], [0, 1]]).coordinatewise
    assert TwistFunction.affine([[0, 2], [3, 0]]).coordinatewise


def test_bad_permutation():
    with pytest.raises(ConfigError):
        TwistFunction.permutation([1, 1])


def test_custom_range_error():
    f = TwistFunction.custom(1, lambda X: X + 2.0, declared_p=1.0)
    with pytest.raises(RangeError):
        evaluate(f, TorusPoint.from_coords([0.2]))


@pytest.mark.parametrize("f", BUILTINS, ids=lambda f: f.kind)
def test_lipschitz_estimate_below_declared(f):
    p_hat = estimate_lipschitz(f, 10_000, seed=1)
    if f.kind == "constant":
        assert p_hat == 0
    else:
        assert p_hat <= f.declared_p + 1e-9


def test_identity_lipschitz_near_one():
    assert estimate_lipschitz(TwistFunction.identity(2), 10_000, seed=0) >= 0.99


@pytest.mark.parametrize("f", BUILTINS, ids=lambda f: f.kind)
def test_outputs_in_unit_cube(f):
    X = np.random.default_rng(0).random((5000, f.dim))
    Y = f.evaluate_array(X)
    assert np.all((Y >= 0) & (Y < 1))


@settings(max_examples=50)
@given(st.integers(1, 10 ** 9), st.integers(0, 10 ** 9), st.integers(0, 10 ** 9),
       st.integers(0, 10 ** 9))
def test_permutation_inverse_exact_on_lattice(_, a, b, c):
    p = 1_000_000_007
    x = TorusPoint.lattice((a % p, b % p, c % p), p, check_prime=False)
    sigma = TwistFunction.permutation([2, 3, 1])
    inv = TwistFunction.permutation([3, 1, 2])
    assert inv.evaluate(sigma.evaluate(x)).numerators == x.numerators


@settings(max_examples=50)
@given(st.lists(unit, min_size=2, max_size=2))
def test_evaluate_deterministic(xs):
    f = TwistFunction.coordinatewise_demo(2)
    x = TorusPoint.from_coords(xs)
    assert list(f.evaluate(x).as_floats()) == list(f.evaluate(x).as_floats())


def test_pushforward_identity_flat():
    diag = pushforward_diagnostic(TwistFunction.identity(2), 16, 200_000, seed=0)
    assert diag.heuristic and "heuristic" in diag.note
    assert diag.max_ratio < 1 + 6 * diag.noise_level
    assert diag.flagged_cells == ()


def test_pushforward_constant_singular():
    diag = pushforward_diagnostic(TwistFunction.constant([0.3, 0.3]), 16, 100_000, seed=0)
    assert diag.max_ratio == pytest.approx(256.0)
    assert len(diag.flagged_cells) == 1


def test_pushforward_affine_bounded():
    A = TwistFunction.affine([["1/2", "1/2"], [0, 1]])
    diag = pushforward_diagnostic(A, 8, 200_000, seed=2)
    det = 0.5
    assert diag.max_ratio <= max(1, 1 / det) + 6 * diag.noise_level


def test_pushforward_preconditions():
    with pytest.raises(ValueError):
        pushforward_diagnostic(TwistFunction.identity(1), 3, 200_000)
    with pytest.raises(ValueError):
        pushforward_diagnostic(TwistFunction.identity(1), 4, 1000)


def test_from_config_round_trip():
    for f in BUILTINS:
        g = TwistFunction.from_config(f.to_config(), f.dim)
        X = np.random.default_rng(1).random((100, f.dim))
        assert np.allclose(f.evaluate_array(X), g.evaluate_array(X))
