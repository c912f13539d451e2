import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from airconsensus.kernel_model import (Hyperslab, box_operator, features,
                                       hyperslab_project, load_dataset,
                                       make_dictionary, predict, product_cost,
                                       project_all, sample_dataset,
                                       save_dataset, synthetic_field)


def test_dictionary_determinism_and_dims():
    d1 = make_dictionary(seed=3)
    d2 = make_dictionary(seed=3)
    assert np.array_equal(d1.omega, d2.omega)
    assert np.array_equal(d1.theta, d2.theta)
    assert d1.dim == 20
    signed = make_dictionary(signed=True, seed=3)
    assert signed.dim == 40
    with pytest.raises(ValueError):
        make_dictionary(n_kernels=3, widths=(300.0, 600.0))


def test_features_shape_and_norm():
    d = make_dictionary(seed=0)
    x = np.array([100.0, 200.0, 300.0])
    phi = features(d, x)
    assert phi.shape == (20,)
    batch = features(d, np.stack([x, 2 * x]))
    assert batch.shape == (2, 20)
    assert np.allclose(batch[0], phi)
    # sqrt(2/P) cos features: squared norm concentrates near L
    rng = np.random.default_rng(1)
    pts = rng.uniform(0, 1000, (200, 3))
    norms = np.sum(features(d, pts) ** 2, axis=1)
    assert 1.0 < np.mean(norms) < 3.0


def test_signed_features_mirror():
    d = make_dictionary(signed=True, seed=0)
    phi = features(d, np.array([10.0, 20.0, 30.0]))
    half = phi.size // 2
    assert np.allclose(phi[half:], -phi[:half])
    # prediction with mirrored nonnegative weights can realize any sign
    w = np.zeros(phi.size)
    w[:half] = 1.0
    assert np.isclose(predict(d, w, np.array([10.0, 20.0, 30.0])),
                      phi[:half].sum())


def test_hyperslab_projection_hand_case():
    slab = Hyperslab(phi=np.array([1.0]), y=0.0, eps=0.1)
    assert np.isclose(hyperslab_project(slab, np.array([0.5]))[0], 0.1)
    # inside points are untouched
    assert hyperslab_project(slab, np.array([0.05]))[0] == 0.05
    assert np.isclose(slab.distance(np.array([0.5])), 0.4)
    assert slab.distance(np.array([0.05])) == 0.0
    with pytest.raises(ValueError):
        Hyperslab(phi=np.array([1.0]), y=0.0, eps=0.0)


@given(st.integers(0, 2 ** 32 - 1))
@settings(max_examples=30, deadline=None)
def test_hyperslab_projection_idempotent_and_feasible(seed):
    rng = np.random.default_rng(seed)
    slab = Hyperslab(phi=rng.normal(size=4), y=float(rng.normal()),
                     eps=float(rng.uniform(0.05, 0.5)))
    h = rng.normal(size=4) * 3
    p = hyperslab_project(slab, h)
    assert slab.distance(p) <= 1e-9
    assert np.allclose(hyperslab_project(slab, p), p)
    # projection never moves farther than the starting distance
    assert np.linalg.norm(p - h) <= slab.distance(h) + 1e-9


def test_project_all_matches_scalar_path():
    rng = np.random.default_rng(8)
    n, m = 5, 4
    phis = rng.normal(size=(n, m))
    ys = rng.normal(size=n)
    hs = rng.normal(size=(n, m))
    eps = 0.2
    out = project_all(phis, ys, eps, hs)
    for k in range(n):
        slab = Hyperslab(phi=phis[k], y=ys[k], eps=eps)
        assert np.allclose(out[k], hyperslab_project(slab, hs[k]))


def test_product_cost_hand_case():
    slab = Hyperslab(phi=np.array([1.0]), y=0.0, eps=0.1)
    h = np.array([0.5])
    value, grad = product_cost(slab, h, h_anchor=h)
    assert np.isclose(value, 0.16)
    assert np.allclose(grad, [0.4])
    # inside the slab both the value and the subgradient vanish
    value0, grad0 = product_cost(slab, np.array([0.0]), h_anchor=h)
    assert value0 == 0.0 and np.all(grad0 == 0.0)


def test_box_operator_clamps_and_is_idempotent():
    box = box_operator((-1.0, 1.0))
    x = np.array([-3.0, -0.5, 0.0, 2.0])
    out = box(x)
    assert np.array_equal(out, [-1.0, -0.5, 0.0, 1.0])
    assert np.array_equal(box(out), out)
    with pytest.raises(ValueError):
        box_operator((1.0, 1.0))


@given(st.integers(0, 2 ** 32 - 1))
@settings(max_examples=30, deadline=None)
def test_box_operator_nonexpansive(seed):
    rng = np.random.default_rng(seed)
    box = box_operator((-1.0, 1.0))
    a, b = rng.normal(size=6) * 4, rng.normal(size=6) * 4
    assert np.linalg.norm(box(a) - box(b)) <= np.linalg.norm(a - b) + 1e-12


def test_synthetic_field_range_and_determinism():
    f1 = synthetic_field(seed=10)
    f2 = synthetic_field(seed=10)
    rng = np.random.default_rng(0)
    pts = rng.uniform(0, 1000, (500, 3))
    v1, v2 = f1(pts), f2(pts)
    assert np.array_equal(v1, v2)
    assert np.all(v1 >= 0.0) and np.all(v1 <= 1.0)
    assert np.var(v1) > 1e-4   # not constant
    assert isinstance(f1(pts[0]), float)


def test_dataset_roundtrip(tmp_path):
    field = synthetic_field(seed=1)
    xyz, values = sample_dataset(field, rows=50, seed=2)
    assert xyz.shape == (50, 3) and values.shape == (50,)
    assert np.allclose(values, field(xyz))
    path = tmp_path / "field.csv"
    save_dataset(path, xyz, values)
    xyz2, values2 = load_dataset(path)
    assert np.allclose(xyz, xyz2, atol=1e-9)
    assert np.allclose(values, values2, atol=1e-9)
    with pytest.raises(ValueError):
        sample_dataset(field, rows=0, seed=2)
