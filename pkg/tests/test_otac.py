import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from airconsensus.channel import NoiseModel, make_topology
from airconsensus.core import named_streams
from airconsensus.otac import (OtaRoundOutput, ProtocolParams,
                               consensus_update, encode, gamma_bound,
                               gamma_for_topology, post_process,
                               run_vector_round)

PARAMS01 = ProtocolParams(b_symbols=1, delta_min=0.0, delta_max=1.0)


def test_params_validation_and_power_map():
    with pytest.raises(ValueError):
        ProtocolParams(b_symbols=0, delta_min=0, delta_max=1)
    with pytest.raises(ValueError):
        ProtocolParams(b_symbols=1, delta_min=1, delta_max=1)
    p = ProtocolParams(b_symbols=4, delta_min=-1.0, delta_max=1.0,
                       peak_power=25.0)
    assert p.delta == 2.0
    assert p.power_map(-1.0) == 0.0
    assert p.power_map(1.0) == 25.0
    assert p.power_map(0.0) == 12.5


def test_encode_energies_and_clamping():
    rng = np.random.default_rng(0)
    p = ProtocolParams(b_symbols=3, delta_min=0.0, delta_max=1.0,
                       peak_power=4.0)
    frame = encode(0.25, p, rng)
    assert frame.symbols.shape == (6,)
    assert not frame.clamped
    assert np.allclose(frame.symbols[0::2] ** 2, 1.0)   # g(0.25) = 1
    assert np.allclose(frame.symbols[1::2] ** 2, 4.0)   # reference at peak
    assert encode(1.5, p, rng).clamped
    assert encode(-0.1, p, rng).clamped
    # clamped value transmits at the boundary energy
    assert np.allclose(encode(1.5, p, rng).symbols[0::2] ** 2, 4.0)


def test_post_process_hand_case():
    # B = 1, no noise correction: info energy 0.4, reference energy 1
    out = post_process(np.array([np.sqrt(0.4), 1.0]), m_w=0.0, params=PARAMS01)
    assert isinstance(out, OtaRoundOutput)
    assert np.isclose(out.v_hat, 0.4)
    assert np.isclose(out.v_prime_hat, 1.0)
    with pytest.raises(ValueError):
        post_process(np.zeros(3), 0.0, PARAMS01)


def test_post_process_range_offset():
    # same reception, shifted range: v = delta*e_info + delta_min*v'
    p = ProtocolParams(b_symbols=1, delta_min=-1.0, delta_max=1.0)
    out = post_process(np.array([np.sqrt(0.4), 1.0]), m_w=0.0, params=p)
    assert np.isclose(out.v_hat, 2 * 0.4 - 1.0)


def test_encode_post_process_roundtrip_ideal_channel():
    # unit gain, no noise: the estimate recovers the value exactly
    rng = np.random.default_rng(42)
    p = ProtocolParams(b_symbols=8, delta_min=0.0, delta_max=1.0)
    for value in (0.0, 0.3, 1.0):
        frame = encode(value, p, rng)
        out = post_process(frame.symbols, m_w=0.0, params=p)
        assert np.isclose(out.v_hat, value)
        assert np.isclose(out.v_prime_hat, 1.0)


def _round_fixture(n=6, m=3, b=2, seed=0):
    rng = np.random.default_rng(seed)
    pos = rng.uniform(0, 1000, (n, 3))
    role_tx = np.zeros(n, dtype=bool)
    role_tx[: n // 2] = True
    topo = make_topology(pos, role_tx)
    lam = rng.uniform(0.05, 0.95, (n, m))
    params = ProtocolParams(b_symbols=b, delta_min=0.0, delta_max=1.0)
    noise = NoiseModel(m_w=1e-13)
    return lam, topo, params, noise


def test_vector_round_shapes_and_roles():
    lam, topo, params, noise = _round_fixture()
    streams = named_streams(1)
    res = run_vector_round(lam, topo, noise, params, streams)
    n, m = lam.shape
    assert res.v_hat.shape == (n, m)
    assert res.v_prime_hat.shape == (n, m)
    assert np.array_equal(res.receivers, ~topo.role_tx)
    # transmitters produce no estimates
    assert np.all(res.v_hat[topo.role_tx] == 0.0)
    assert np.all(res.v_prime_hat[topo.role_tx] == 0.0)
    # receivers see positive weight sums at this noise level
    assert np.all(res.v_prime_hat[res.receivers] > 0.0)


def test_vector_round_channel_uses_by_mode():
    lam, topo, params, noise = _round_fixture(m=3, b=2)
    res_c = run_vector_round(lam, topo, noise, params, named_streams(2),
                             coordinate_coherent=True)
    assert res_c.channel_uses == (3 + 1) * 2      # shared reference round
    res_n = run_vector_round(lam, topo, noise, params, named_streams(2),
                             coordinate_coherent=False)
    assert res_n.channel_uses == 2 * 2 * 3        # per-coordinate rounds
    # per-transmitter ledger: B info per coordinate plus references
    n_tx = int(topo.role_tx.sum())
    assert res_c.symbols_sent == n_tx * (3 * 2 + 2)
    assert res_n.symbols_sent == n_tx * (3 * 2 + 3 * 2)


def test_vector_round_energy_respects_peak():
    lam, topo, params, noise = _round_fixture()
    res = run_vector_round(lam, topo, noise, params, named_streams(3))
    # every symbol is at most peak power, so energy <= symbols * peak
    assert res.energy <= res.symbols_sent * params.peak_power + 1e-9
    assert res.energy > 0


def test_vector_round_skip_zeros_ledger():
    lam, topo, params, noise = _round_fixture()
    lam[:, 0] = 0.0   # one all-zero coordinate
    res_all = run_vector_round(lam, topo, noise, params, named_streams(4))
    res_skip = run_vector_round(lam, topo, noise, params, named_streams(4),
                                skip_zeros=True)
    n_tx = int(topo.role_tx.sum())
    assert res_all.symbols_sent - res_skip.symbols_sent \
        == n_tx * params.b_symbols
    assert np.isclose(res_all.energy, res_skip.energy)   # zeros carried no energy
    # identical receptions: the omitted symbols had zero amplitude
    assert np.allclose(res_all.v_hat, res_skip.v_hat)
    bad = ProtocolParams(b_symbols=2, delta_min=-1.0, delta_max=1.0)
    with pytest.raises(ValueError):
        run_vector_round(lam, topo, noise, bad, named_streams(4),
                         skip_zeros=True)


def test_vector_round_skip_zeros_silences_references_per_coordinate():
    lam, topo, params, _ = _round_fixture()
    noise = NoiseModel(m_w=1e-16)   # quiet floor separates residue cleanly
    lam[:, 0] = 0.0
    res_all = run_vector_round(lam, topo, noise, params, named_streams(4),
                               coordinate_coherent=False)
    res_skip = run_vector_round(lam, topo, noise, params, named_streams(4),
                                coordinate_coherent=False, skip_zeros=True)
    n_tx = int(topo.role_tx.sum())
    b = params.b_symbols
    # a silent component drops its info symbols and its reference symbols
    assert res_all.symbols_sent - res_skip.symbols_sent == 2 * n_tx * b
    assert np.isclose(res_all.energy - res_skip.energy,
                      n_tx * b * params.peak_power)
    rx = ~topo.role_tx
    # nobody sent a reference on the zero coordinate: its weight estimate
    # collapses to (noise-only) residue, far below the populated one
    assert np.all(np.abs(res_skip.v_prime_hat[rx, 0])
                  < 0.01 * res_all.v_prime_hat[rx, 0])
    # populated coordinates are untouched (identical draws either way)
    assert np.allclose(res_skip.v_hat[:, 1:], res_all.v_hat[:, 1:])
    assert np.allclose(res_skip.v_prime_hat[:, 1:], res_all.v_prime_hat[:, 1:])


def test_vector_round_clamps_out_of_range():
    lam, topo, params, noise = _round_fixture()
    lam[0, 0] = 2.0
    res = run_vector_round(lam, topo, noise, params, named_streams(5))
    assert res.clamped == 1


def test_vector_round_unbiased_small_mc():
    lam, topo, params, noise = _round_fixture(n=4, m=1, b=1, seed=7)
    nu_bar = params.peak_power * topo.link_var * topo.active_links()
    rx = ~topo.role_tx
    exp_vp = nu_bar.sum(axis=0)[rx]
    exp_v = (nu_bar.T @ lam[:, 0])[rx]
    streams = named_streams(6)
    trials = 4000
    samp_v = np.empty((trials, exp_v.size))
    samp_vp = np.empty((trials, exp_vp.size))
    for t in range(trials):
        res = run_vector_round(lam, topo, noise, params, streams)
        samp_v[t] = res.v_hat[rx, 0]
        samp_vp[t] = res.v_prime_hat[rx, 0]
    for samples, expected in ((samp_v, exp_v), (samp_vp, exp_vp)):
        se = samples.std(axis=0) / np.sqrt(trials)
        dev = np.abs(samples.mean(axis=0) - expected)
        assert np.all(dev <= 5.0 * se)


def test_consensus_update_formula_and_fixed_point():
    lam = np.array([0.2, 0.8])
    v_prime = np.array([2.0, 2.0])
    v = 2.0 * np.array([0.5, 0.5])   # weighted sum of a consensus value
    out = consensus_update(lam, v, v_prime, beta_i=0.5, gamma_i=0.25)
    expected = (1 - 0.5 * 0.25 * 2.0) * lam + 0.5 * 0.25 * v
    assert np.allclose(out, expected)
    # consensus is a fixed point whatever beta and gamma do
    flat = consensus_update(np.array([0.5, 0.5]), v, v_prime, 0.9, 0.3)
    assert np.allclose(flat, 0.5)


@given(st.floats(0.01, 1.0), st.floats(0.0, 1.0), st.floats(0.01, 1.0))
@settings(max_examples=60, deadline=None)
def test_consensus_update_convex_when_admissible(beta, x, frac):
    # noiseless weights summing to at most 1/gamma make the update a
    # convex combination of the receiver's own value and the inputs
    lams = np.array([0.1, 0.9])
    weights = np.array([x, 1.0 - x]) * 2.0 * frac
    gamma = 0.5
    v = float(weights @ lams)
    out = consensus_update(0.4, v, weights.sum(), beta, gamma)
    assert 0.1 - 1e-12 <= out <= 0.9 + 1e-12


def test_gamma_bound_values():
    assert gamma_bound([0.5, 2.0, 1.0]) == 0.5
    with pytest.raises(ValueError):
        gamma_bound([])
    with pytest.raises(ValueError):
        gamma_bound([0.0, 0.0])


def test_gamma_for_topology_matches_manual():
    _, topo, params, _ = _round_fixture()
    g = gamma_for_topology(topo, peak_power=2.0)
    sums = (2.0 * topo.link_var).sum(axis=0)
    assert np.isclose(g, 1.0 / sums.max())
