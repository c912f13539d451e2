import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from airconsensus.superiorize import (SparsityState, default_varsigma,
                                      perturbation_z, soft_threshold)


def _state(prev, zeta):
    prev = np.asarray(prev, dtype=float)
    return SparsityState(prev_y=prev, zeta_i=zeta,
                         varsigma_i=default_varsigma(zeta))


def test_default_varsigma_values():
    assert np.isclose(default_varsigma(1.6666666666666667e-8),
                      4.1666666666666667e-7)
    assert default_varsigma(0.0) == 1e-11   # floor keeps divisions finite


def test_state_validation():
    with pytest.raises(ValueError):
        SparsityState(prev_y=np.zeros(2), zeta_i=1e-8, varsigma_i=1e-12)
    with pytest.raises(ValueError):
        SparsityState(prev_y=np.zeros(2), zeta_i=-1.0, varsigma_i=1e-7)


def test_soft_threshold_zeroes_small_persistent_components():
    zeta = 1e-4
    st_ = _state([1.0, 1e-9, 0.0], zeta)
    y = np.array([0.5, 1e-6, -1e-6])
    out = soft_threshold(y, st_)
    # large component with large history barely moves
    assert abs(out[0] - 0.5) < 2 * zeta
    # tiny components with tiny history are crushed to exact zero
    assert out[1] == 0.0 and out[2] == 0.0


def test_soft_threshold_preserves_sign_and_shrinks():
    st_ = _state([0.2, -0.4, 0.0, 3.0], 1e-3)
    y = np.array([0.3, -0.5, 0.1, -2.0])
    out = soft_threshold(y, st_)
    assert np.all(np.abs(out) <= np.abs(y))
    nz = out != 0.0
    assert np.all(np.sign(out[nz]) == np.sign(y[nz]))


@given(st.integers(0, 2 ** 32 - 1), st.floats(1e-9, 1e-3))
@settings(max_examples=50, deadline=None)
def test_perturbation_bound_holds(seed, zeta):
    rng = np.random.default_rng(seed)
    st_ = _state(rng.normal(size=8), zeta)
    z = perturbation_z(rng.normal(size=8) * 2, st_)
    assert np.max(np.abs(z)) <= 1.0 / st_.varsigma_i * (1 + 1e-12)


def test_perturbation_zero_when_zeta_zero():
    st_ = _state(np.ones(3), 0.0)
    assert np.array_equal(perturbation_z(np.array([1.0, -2.0, 0.3]), st_),
                          np.zeros(3))


def test_perturbed_point_matches_threshold():
    # y + zeta * z reproduces Q(y) exactly: the perturbation is the
    # threshold displacement in disguise
    st_ = _state([0.5, 0.01, -0.2], 1e-3)
    y = np.array([0.4, 0.05, -0.3])
    z = perturbation_z(y, st_)
    assert np.allclose(y + st_.zeta_i * z, soft_threshold(y, st_))
