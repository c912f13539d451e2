import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from airconsensus.core import (ConsensusProjector, Dimensions, StackedState,
                               consensus_residual, default_schedules,
                               named_streams, project_consensus)


def test_dimensions_total_and_validation():
    d = Dimensions(n_agents=4, param_dim=3)
    assert d.total == 12
    with pytest.raises(ValueError):
        Dimensions(0, 3)
    with pytest.raises(ValueError):
        Dimensions(3, 0)


def test_stacked_state_flat_roundtrip():
    dims = Dimensions(3, 2)
    psi = np.arange(6.0)
    state = StackedState.from_flat(psi, dims)
    assert state.blocks.shape == (3, 2)
    # agent-major layout: block k is psi[k*M:(k+1)*M]
    assert np.array_equal(state.blocks[1], [2.0, 3.0])
    assert np.array_equal(state.flat(), psi)
    with pytest.raises(ValueError):
        StackedState.from_flat(np.zeros(5), dims)


def test_projector_means_blocks():
    blocks = np.array([[1.0, 0.0], [3.0, 2.0]])
    out = project_consensus(blocks)
    assert np.allclose(out, [[2.0, 1.0], [2.0, 1.0]])
    # wrapped input comes back wrapped
    st_out = project_consensus(StackedState(blocks))
    assert isinstance(st_out, StackedState)
    assert np.allclose(st_out.blocks, out)


def test_projector_idempotent_and_residual_zero_on_consensus():
    rng = np.random.default_rng(3)
    blocks = rng.normal(size=(6, 4))
    once = project_consensus(blocks)
    assert np.allclose(project_consensus(once), once)
    assert consensus_residual(once) < 1e-14
    # orthogonal decomposition: ||psi||^2 = ||J psi||^2 + residual^2
    total = np.linalg.norm(blocks) ** 2
    assert np.isclose(total,
                      np.linalg.norm(once) ** 2 + consensus_residual(blocks) ** 2)


@given(st.integers(2, 8), st.integers(1, 5), st.integers(0, 2 ** 32 - 1))
@settings(max_examples=30, deadline=None)
def test_projector_nonexpansive(n, m, seed):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(n, m))
    b = rng.normal(size=(n, m))
    pa, pb = project_consensus(a), project_consensus(b)
    assert np.linalg.norm(pa - pb) <= np.linalg.norm(a - b) + 1e-12


def test_bound_projector_checks_shape():
    proj = ConsensusProjector(Dimensions(2, 2))
    with pytest.raises(ValueError):
        proj(np.zeros((3, 2)))


def test_base_mixing_schedule_values():
    sched = default_schedules(family="base")
    assert sched.beta(0) == 1.0
    assert sched.beta(49) == 1.0
    assert np.isclose(sched.beta(100), 0.7022224378689986)
    assert np.isclose(sched.beta(500), 0.30902954325135906)
    # monotone non-increasing
    vals = [sched.beta(i) for i in range(0, 2000, 25)]
    assert all(a >= b for a, b in zip(vals, vals[1:]))


def test_snr_mixing_schedule_values():
    low = default_schedules(snr_db=-20.0, family="snr")
    # below the threshold the weight is constant
    assert np.isclose(low.beta(0), 0.01778279410038923)
    assert low.beta(0) == low.beta(4999)
    high = default_schedules(snr_db=0.0, family="snr")
    assert np.isclose(high.beta(250), 0.12574334296829356)
    assert high.beta(50) == high.beta(0)   # floor clamps k below 100
    with pytest.raises(ValueError):
        default_schedules(family="nope")


def test_perturbation_schedule_values():
    plain = default_schedules(sparsity=False)
    assert plain.zeta(123) == 0.0
    sparse = default_schedules(sparsity=True)
    assert np.isclose(sparse.zeta(500), 1.6666666666666667e-8)
    # summable envelope: partial sums grow like log, stay modest
    total = sum(sparse.zeta(i) for i in range(0, 100000, 100)) * 100
    assert total < 1e-2


def test_mu_validated():
    with pytest.raises(ValueError):
        default_schedules(mu=2.0)
    with pytest.raises(ValueError):
        default_schedules(mu=0.0)


def test_named_streams_reproducible_and_independent():
    a = named_streams(2024, run_index=0)
    b = named_streams(2024, run_index=0)
    assert set(a) == {"mobility", "roles", "fading", "noise", "signs",
                      "measure", "dither", "init"}
    for label in a:
        assert np.array_equal(a[label].random(8), b[label].random(8))
    # different run index gives different draws on every stream
    c = named_streams(2024, run_index=1)
    d = named_streams(2024, run_index=0)
    assert not any(np.array_equal(c[k].random(8), d[k].random(8)) for k in c)


def test_named_streams_order_free():
    a = named_streams(7)
    fading_first = a["fading"].random(5)
    b = named_streams(7)
    b["noise"].random(100)   # consuming one stream leaves the others alone
    assert np.array_equal(b["fading"].random(5), fading_first)
