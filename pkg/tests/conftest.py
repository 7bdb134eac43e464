import numpy as np
import pytest


class MarkovMap:
    """Three-branch Markov interval map with a known piecewise-constant density.

    [0,1/3) and [1/3,2/3) map onto [0,1) with slope 3; [2/3,1) maps onto
    [1/3,1) with slope 2.  Solving the transfer equations by hand gives
    h = 3/5 on [0,1/3) and h = 6/5 on [1/3,1).
    """

    dim = 1

    def apply_array(self, X):
        x = np.asarray(X, dtype=float)[:, 0]
        y = np.where(x < 2 / 3, np.mod(3 * x, 1.0), 1 / 3 + 2 * (x - 2 / 3))
        return y[:, None]

    @staticmethod
    def density(x):
        return np.where(x < 1 / 3, 0.6, 1.2)


@pytest.fixture
def markov_map():
    return MarkovMap()
