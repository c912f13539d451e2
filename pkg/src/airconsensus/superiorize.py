"""Sparsity-promoting bounded perturbations via reweighted soft thresholds.

The threshold for each component is inversely proportional to the
magnitude that component had in the previous iteration, so persistently
small components are driven to exact zero while active ones are barely
touched.  The implied perturbation direction z = (Q(y) - y) / zeta is
bounded: |z[m]| <= 1 / varsigma, which keeps the scaled perturbation
sequence summable and the outer iteration convergent.
"""

from dataclasses import dataclass

import numpy as np

VARSIGMA_FLOOR = 1e-11


def default_varsigma(zeta):
    """Companion regularizer: max(25 * zeta, floor)."""
    return max(25.0 * zeta, VARSIGMA_FLOOR)


@dataclass
class SparsityState:
    """Per-agent reweighting state.

    prev_y holds the reference iterate from the previous round (zero at
    the first iteration); zeta_i and varsigma_i are the current scales.
    """

    prev_y: np.ndarray
    zeta_i: float
    varsigma_i: float

    def __post_init__(self):
        if self.varsigma_i < VARSIGMA_FLOOR:
            raise ValueError("varsigma below the configured floor")
        if self.zeta_i < 0:
            raise ValueError("zeta must be nonnegative")


def soft_threshold(y, state):
    """Reweighted soft threshold, elementwise.

    Q(y)[m] = sign(y[m]) * max(|y[m]| - zeta / (|prev_y[m]| + varsigma), 0).
    Output magnitudes never exceed input magnitudes and signs are either
    preserved or zeroed.
    """
    y = np.asarray(y, dtype=float)
    thresh = state.zeta_i / (np.abs(state.prev_y) + state.varsigma_i)
    return np.sign(y) * np.maximum(np.abs(y) - thresh, 0.0)


def perturbation_z(y, state):
    """Perturbation direction z = (Q(y) - y) / zeta with its bound asserted.

    Every component satisfies |z[m]| <= 1 / varsigma; a violation would
    mean the threshold formula is wrong, so it is treated as an internal
    error rather than a recoverable condition.
    """
    y = np.asarray(y, dtype=float)
    if state.zeta_i == 0.0:
        return np.zeros_like(y)
    z = (soft_threshold(y, state) - y) / state.zeta_i
    bound = 1.0 / state.varsigma_i
    assert np.max(np.abs(z)) <= bound * (1.0 + 1e-12), \
        "perturbation bound violated"
    return z
