import numpy as np
import pytest

from airconsensus.apsm import (AverageEstimate, NeighborEstimate, OtaEstimate,
                               backend_names, get_backend, local_step,
                               mix_step, subgradient_displacement)
from airconsensus.kernel_model import Hyperslab, box_operator, product_cost


class SlabOracle:
    """Adapts one hyperslab cost to the oracle protocol used by the step."""

    def __init__(self, slab, anchor):
        self.slab = slab
        self.anchor = np.asarray(anchor, dtype=float)

    def evaluate(self, agent, iteration, h):
        return product_cost(self.slab, h, self.anchor)


def _slab():
    return Hyperslab(phi=np.array([1.0, 0.0]), y=0.0, eps=0.1)


def test_subgradient_displacement_hand_case():
    slab = _slab()
    h = np.array([0.5, 0.3])
    oracle = SlabOracle(slab, anchor=h)
    # value = 0.16, grad = (0.4, 0), ||grad||^2 = 0.16
    # mu * value / ||g||^2 * g = mu * (0.4, 0)
    disp = subgradient_displacement(oracle, 0, 0, h, mu=0.5)
    assert np.allclose(disp, [0.2, 0.0])
    # with mu = 1 the step lands exactly on the slab boundary here
    disp1 = subgradient_displacement(oracle, 0, 0, h, mu=1.0)
    assert np.allclose(h - disp1, [0.1, 0.3])


def test_subgradient_displacement_zero_cases():
    slab = _slab()
    inside = np.array([0.05, -2.0])
    oracle = SlabOracle(slab, anchor=inside)
    assert np.array_equal(
        subgradient_displacement(oracle, 0, 0, inside, 0.5), np.zeros(2))
    with pytest.raises(ValueError):
        subgradient_displacement(oracle, 0, 0, inside, mu=2.5)

    class Negative:
        def evaluate(self, agent, iteration, h):
            return -1.0, np.ones_like(h)

    with pytest.raises(ValueError):
        subgradient_displacement(Negative(), 0, 0, inside, 0.5)


def test_local_step_passes_through_constraint():
    slab = _slab()
    h = np.array([3.0, 0.0])
    oracle = SlabOracle(slab, anchor=h)
    box = box_operator((-1.0, 1.0))
    out = local_step(h, oracle, box, perturb=None, mu=1.0)
    # mu = 1 projects onto the slab (to 0.1), already inside the box
    assert np.allclose(out, [0.1, 0.0])
    # the box clamps whatever the inner step produces
    out2 = local_step(np.array([5.0, 0.0]), oracle, box, None, mu=0.1)
    assert np.all(out2 <= 1.0)


class ConstantShift:
    def __init__(self, vec):
        self.vec = np.asarray(vec, dtype=float)

    def displacement(self, agent, iteration, y):
        return self.vec


def test_local_step_applies_perturbation():
    slab = _slab()
    h = np.array([0.05, 0.0])   # inside: no subgradient motion
    oracle = SlabOracle(slab, anchor=h)
    box = box_operator((-1.0, 1.0))
    out = local_step(h, oracle, box, ConstantShift([0.0, 2.0]), mu=0.5)
    assert np.allclose(out, [0.05, 1.0])   # shift applied, then clamped


def test_mix_step_payload_kinds():
    lam = np.array([0.2, 0.6])
    # None: identity (returns a copy, not the same array)
    out = mix_step(lam, None, 0.7)
    assert np.array_equal(out, lam) and out is not lam
    avg = AverageEstimate(vector=np.array([1.0, 1.0]))
    assert np.allclose(mix_step(lam, avg, 0.5), [0.6, 0.8])
    nbr = NeighborEstimate(vector=np.array([0.0, 0.0]))
    assert np.allclose(mix_step(lam, nbr, 0.25), 0.75 * lam)
    ota = OtaEstimate(v_hat=2.0 * lam, v_prime_hat=np.array([2.0, 2.0]),
                      gamma=0.5)
    # gamma * v' = 1: the update replaces lam by gamma * v = lam exactly
    assert np.allclose(mix_step(lam, ota, 0.9), lam)
    with pytest.raises(TypeError):
        mix_step(lam, object(), 0.5)


def test_backend_registry():
    names = backend_names()
    for expected in ("NOC", "CEN", "DBC", "ANB", "OTA-C", "OTA-CS"):
        assert expected in names
    with pytest.raises(KeyError):
        get_backend("definitely-not-registered")
