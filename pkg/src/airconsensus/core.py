"""Shared state types, the consensus-subspace projector, and step schedules.

The network-wide estimate is a stack of per-agent parameter blocks.  The
consensus subspace is the set of stacks whose blocks are all equal; its
orthogonal projector replaces every block by the arithmetic mean of the
blocks, which is computed block-wise here (the dense projector matrix is
never materialized outside of tests).
"""

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

STREAM_LABELS = (
    "mobility",
    "roles",
    "fading",
    "noise",
    "signs",
    "measure",
    "dither",
    "init",
)


@dataclass(frozen=True)
class Dimensions:
    """Basic problem sizes: N agents, each holding an M-dimensional block."""

    n_agents: int
    param_dim: int

    def __post_init__(self):
        if self.n_agents < 1:
            raise ValueError("n_agents must be >= 1")
        if self.param_dim < 1:
            raise ValueError("param_dim must be >= 1")

    @property
    def total(self):
        return self.n_agents * self.param_dim


class StackedState:
    """Stack of N agent blocks of length M, flattenable to a single vector.

    The flat layout is agent-major: block k occupies entries
    [k*M, (k+1)*M) of the flat vector.
    """

    def __init__(self, blocks):
        blocks = np.asarray(blocks, dtype=float)
        if blocks.ndim != 2:
            raise ValueError("blocks must be a 2-D (N, M) array")
        self.blocks = blocks

    @classmethod
    def from_flat(cls, psi, dims):
        psi = np.asarray(psi, dtype=float)
        if psi.size != dims.total:
            raise ValueError(
                f"flat length {psi.size} != N*M = {dims.total}"
            )
        return cls(psi.reshape(dims.n_agents, dims.param_dim))

    @property
    def dims(self):
        return Dimensions(self.blocks.shape[0], self.blocks.shape[1])

    def flat(self):
        return self.blocks.reshape(-1)

    def copy(self):
        return StackedState(self.blocks.copy())


def _as_blocks(psi):
    if isinstance(psi, StackedState):
        return psi.blocks, True
    arr = np.asarray(psi, dtype=float)
    if arr.ndim != 2:
        raise ValueError("expected a StackedState or a 2-D (N, M) array")
    return arr, False


def project_consensus(psi):
    """Project a stacked state onto the consensus subspace.

    Every block of the output is the arithmetic mean of the input blocks.
    The operation is idempotent and accepts either a ``StackedState`` or a
    plain (N, M) array, returning the same kind.
    """
    blocks, wrapped = _as_blocks(psi)
    mean = blocks.mean(axis=0, keepdims=True)
    out = np.broadcast_to(mean, blocks.shape).copy()
    return StackedState(out) if wrapped else out


def consensus_residual(psi):
    """Euclidean norm of the disagreement component of a stacked state.

    Returns ||psi - project_consensus(psi)||; zero exactly when all blocks
    are equal.
    """
    blocks, _ = _as_blocks(psi)
    return float(np.linalg.norm(blocks - blocks.mean(axis=0, keepdims=True)))


@dataclass
class ConsensusProjector:
    """Matrix-free consensus projector bound to fixed dimensions."""

    dims: Dimensions

    def __call__(self, psi):
        blocks, wrapped = _as_blocks(psi)
        if blocks.shape != (self.dims.n_agents, self.dims.param_dim):
            raise ValueError("state shape does not match projector dims")
        return project_consensus(psi)


@dataclass
class StepSchedules:
    """Iteration-indexed step sizes.

    beta
        Mixing weight in (0, 1].
    zeta
        Perturbation scale, summable over iterations.
    gamma
        Consensus normalization; kept as a schedule so callers can rebind
        it when the topology (and hence the admissible bound) changes.
    mu
        Relaxation of the local subgradient step, in (0, 2).
    """

    beta: Callable[[int], float]
    zeta: Callable[[int], float]
    gamma: Callable[[int], float] = field(default=lambda i: 1.0)
    mu: float = 0.5


def _beta_base(i):
    # (floor(i/50))^-0.51, clipped to 1 where the floor would be zero
    k = i // 50
    return 1.0 if k < 1 else k ** -0.51


def _beta_snr(i, snr_db):
    scale = 10.0 ** ((snr_db - 15.0) / 20.0)
    if snr_db <= -15.0:
        return min(scale, 1.0)
    k = i // 100
    return min(scale * (max(k, 1) ** -0.5), 1.0)


def _zeta_default(i):
    return 1e-7 / (i // 100 + 1)


def default_schedules(snr_db=0.0, family="base", mu=0.5, sparsity=False):
    """Build the standard step-size schedules.

    Parameters
    ----------
    snr_db : float
        Reference SNR; only used by the "snr" family, which keeps the
        mixing weight at 10^((snr-15)/20) for snr <= -15 dB and lets it
        decay as (floor(i/100))^-0.5 above that.
    family : {"base", "snr"}
        "base" is (floor(i/50))^-0.51 with the i<50 values clipped to 1.
    mu : float
        Local-step relaxation, must lie in (0, 2).
    sparsity : bool
        If False the perturbation scale is identically zero.
    """
    if family == "base":
        beta = _beta_base
    elif family == "snr":
        def beta(i, _s=float(snr_db)):
            return _beta_snr(i, _s)
    else:
        raise ValueError(f"unknown schedule family: {family!r}")
    if not 0.0 < mu < 2.0:
        raise ValueError("mu must lie in (0, 2)")
    zeta = _zeta_default if sparsity else (lambda i: 0.0)
    return StepSchedules(beta=beta, zeta=zeta, mu=mu)


def named_streams(master_seed, run_index=0, labels=STREAM_LABELS):
    """Independent counter-based generators for every named random source.

    Streams are keyed by (master seed, run index, label position), so a
    simulation run consumes randomness identically no matter how runs are
    scheduled across threads.
    """
    return {
        label: np.random.Generator(
            np.random.Philox(
                np.random.SeedSequence(
                    entropy=int(master_seed), spawn_key=(int(run_index), k)
                )
            )
        )
        for k, label in enumerate(labels)
    }
