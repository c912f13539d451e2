"""Random-Fourier-feature field model, hyperslab constraints, synthetic data.

The scalar field over the 3-D domain is modeled as h' phi(x) where phi
stacks cosine features of L Gaussian kernels (P features each).  A signed
dictionary duplicates the block with negated sign so that nonnegative
weights suffice.  Each measurement induces a hyperslab constraint
{h : |h' phi(x) - y| <= eps}; the local cost is the product of the
distance to the current slab and the distance of the anchor iterate to it.
"""

from dataclasses import dataclass

import numpy as np

DOMAIN_SIZE_M = 1000.0


@dataclass(frozen=True)
class RffDictionary:
    """Frozen random-feature draws shared by every agent.

    omega : (L, P, 3) Gaussian frequency vectors with per-kernel scale
        1/width (widths in meters).
    theta : (L, P) phases, uniform on [0, 2pi).
    widths : (L,) kernel widths the frequencies were drawn for.
    signed : duplicate the feature block with negated sign, doubling M.
    """

    omega: np.ndarray
    theta: np.ndarray
    widths: tuple
    signed: bool

    @property
    def n_kernels(self):
        return self.omega.shape[0]

    @property
    def features_per_kernel(self):
        return self.omega.shape[1]

    @property
    def dim(self):
        base = self.n_kernels * self.features_per_kernel
        return 2 * base if self.signed else base


def make_dictionary(n_kernels=2, features_per_kernel=10, widths=(300.0, 600.0),
                    signed=False, seed=0):
    """Draw and freeze a dictionary; the same seed gives identical draws."""
    if len(widths) != n_kernels:
        raise ValueError("need one width per kernel")
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    omega = rng.standard_normal((n_kernels, features_per_kernel, 3))
    omega = omega / np.asarray(widths, dtype=float)[:, None, None]
    theta = rng.uniform(0.0, 2.0 * np.pi, (n_kernels, features_per_kernel))
    return RffDictionary(omega=omega, theta=theta,
                         widths=tuple(float(w) for w in widths),
                         signed=signed)


def features(dictionary, x):
    """Feature map phi(x); x is (3,) or (Q, 3), output (M,) or (Q, M)."""
    x = np.asarray(x, dtype=float)
    single = x.ndim == 1
    pts = x[None, :] if single else x
    l, p, _ = dictionary.omega.shape
    proj = np.einsum("qd,lpd->qlp", pts, dictionary.omega)
    base = np.sqrt(2.0 / p) * np.cos(proj + dictionary.theta[None])
    base = base.reshape(pts.shape[0], l * p)
    out = np.concatenate([base, -base], axis=1) if dictionary.signed else base
    return out[0] if single else out


def predict(dictionary, h, x):
    """Model output h' phi(x) for one weight vector at one or more points."""
    return features(dictionary, x) @ np.asarray(h, dtype=float)


@dataclass
class Hyperslab:
    """Measurement constraint {h : |h' phi - y| <= eps}."""

    phi: np.ndarray
    y: float
    eps: float

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError("eps must be positive")

    def distance(self, h):
        r = float(np.dot(self.phi, h) - self.y)
        excess = max(abs(r) - self.eps, 0.0)
        norm = np.linalg.norm(self.phi)
        if norm == 0.0:
            if excess > 0:
                raise ValueError("empty hyperslab: zero phi with |y| > eps")
            return 0.0
        return excess / norm


def hyperslab_project(slab, h):
    """Exact projection onto the hyperslab.

    Inside points are returned unchanged; outside points move along phi by
    the residual excess over eps, normalized by ||phi||^2.
    """
    h = np.asarray(h, dtype=float)
    r = float(np.dot(slab.phi, h) - slab.y)
    if abs(r) <= slab.eps:
        return h.copy()
    nrm2 = float(np.dot(slab.phi, slab.phi))
    if nrm2 == 0.0:
        raise ValueError("empty hyperslab: zero phi with |y| > eps")
    shift = (r - np.sign(r) * slab.eps) / nrm2
    return h - shift * slab.phi


def project_all(phis, ys, eps, h_all):
    """Vectorized hyperslab projection, one slab and one h per agent.

    phis (N, M), ys (N,), h_all (N, M); returns (N, M).  Matches
    hyperslab_project row by row.
    """
    r = np.einsum("nm,nm->n", phis, h_all) - ys
    excess = np.sign(r) * np.maximum(np.abs(r) - eps, 0.0)
    nrm2 = np.einsum("nm,nm->n", phis, phis)
    safe = np.where(nrm2 > 0, nrm2, 1.0)
    return h_all - (excess / safe)[:, None] * phis


def product_cost(slab, h, h_anchor):
    """Cost d(h, Q) * d(anchor, Q) and one subgradient at h.

    The anchor distance is a constant factor, so away from the slab the
    subgradient is that constant times the unit vector from the projection
    to h; inside the slab both vanish.
    """
    h = np.asarray(h, dtype=float)
    d_anchor = slab.distance(h_anchor)
    d_h = slab.distance(h)
    value = d_h * d_anchor
    if d_h == 0.0 or d_anchor == 0.0:
        return value, np.zeros_like(h)
    direction = (h - hyperslab_project(slab, h)) / d_h
    return value, d_anchor * direction


@dataclass(frozen=True)
class BoxOperator:
    """Elementwise clamp onto [lo, hi]^M; an idempotent projection."""

    lo: float
    hi: float

    def __post_init__(self):
        if not self.hi > self.lo:
            raise ValueError("box upper bound must exceed lower bound")

    def __call__(self, x):
        return np.clip(x, self.lo, self.hi)


def box_operator(bounds):
    lo, hi = bounds
    return BoxOperator(float(lo), float(hi))


class SyntheticField:
    """Deterministic smooth field on [0, domain]^3 with range in [0, 1].

    A sum of isotropic Gaussian bumps plus a constant floor, clipped to
    [0, 1].  Construction is fully determined by the seed.
    """

    def __init__(self, seed=0, n_bumps_range=(3, 5), width_range=(300.0, 550.0),
                 amp_range=(0.25, 0.65), floor=0.15, domain=DOMAIN_SIZE_M):
        rng = np.random.Generator(
            np.random.Philox(np.random.SeedSequence(int(seed))))
        lo, hi = n_bumps_range
        k = int(rng.integers(lo, hi + 1))
        self.centers = rng.uniform(0.0, domain, (k, 3))
        self.widths = rng.uniform(*width_range, k)
        self.amps = rng.uniform(*amp_range, k)
        self.floor = float(floor)
        self.domain = float(domain)
        self.seed = int(seed)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        pts = x[None, :] if single else x
        d2 = ((pts[:, None, :] - self.centers[None]) ** 2).sum(axis=-1)
        vals = self.floor + (
            self.amps[None] * np.exp(-d2 / (2.0 * self.widths[None] ** 2))
        ).sum(axis=1)
        vals = np.clip(vals, 0.0, 1.0)
        return float(vals[0]) if single else vals


def synthetic_field(seed=0, **kwargs):
    """Factory kept thin so configs can carry only a seed."""
    return SyntheticField(seed=seed, **kwargs)


def sample_dataset(field, rows, seed):
    """Draw measurement rows (position, field value) from a field."""
    if rows < 1:
        raise ValueError("rows must be >= 1")
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(int(seed))))
    xyz = rng.uniform(0.0, field.domain, (int(rows), 3))
    return xyz, field(xyz)


def save_dataset(path, xyz, values):
    """Write rows as CSV with header x,y,z,value (UTF-8, \\n endings)."""
    xyz = np.asarray(xyz, dtype=float)
    values = np.asarray(values, dtype=float)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("x,y,z,value\n")
        for (px, py, pz), v in zip(xyz, values):
            fh.write(f"{px:.10g},{py:.10g},{pz:.10g},{v:.10g}\n")


def load_dataset(path):
    """Read a x,y,z,value CSV; row order is irrelevant to consumers."""
    data = np.genfromtxt(path, delimiter=",", names=True)
    xyz = np.column_stack([data["x"], data["y"], data["z"]])
    return np.atleast_2d(xyz), np.atleast_1d(data["value"])
