"""Adaptive projected subgradient step and backend-agnostic mixing.

The local step moves the iterate against a subgradient of a nonnegative
convex cost, scaled so that a zero cost or a zero subgradient leaves the
point fixed, optionally adds a bounded perturbation, and maps the result
through a quasi-nonexpansive constraint operator.  The mixing step blends
the local output with whatever the communication backend delivered; a
missing payload degrades gracefully to the no-communication behavior.
"""

import logging
from dataclasses import dataclass
from typing import Optional, Protocol

import numpy as np

from .otac import consensus_update

log = logging.getLogger(__name__)


class CostOracle(Protocol):
    """Time-varying nonnegative convex cost with one subgradient."""

    def evaluate(self, agent, iteration, h):
        """Return (value, subgradient) at h; value must be >= 0."""
        ...


class ConstraintOperator(Protocol):
    """Quasi-nonexpansive mapping whose fixed points are the constraint."""

    def __call__(self, x):
        ...


class PerturbationSource(Protocol):
    """Yields the scaled perturbation zeta_i * z for a pre-image y."""

    def displacement(self, agent, iteration, y):
        ...


def subgradient_displacement(oracle, agent, iteration, h, mu):
    """Relaxed subgradient step length times direction.

    Returns mu * value / ||g||^2 * g when the subgradient g is nonzero,
    and the zero vector otherwise (also when the value is zero).
    """
    if not 0.0 < mu < 2.0:
        raise ValueError("mu must lie in (0, 2)")
    value, grad = oracle.evaluate(agent, iteration, h)
    if value < 0:
        raise ValueError("cost oracle returned a negative value")
    grad = np.asarray(grad, dtype=float)
    g2 = float(np.dot(grad, grad))
    if g2 == 0.0 or value == 0.0:
        return np.zeros_like(np.asarray(h, dtype=float))
    return (mu * value / g2) * grad


def local_step(h, oracle, constraint, perturb, mu, agent=0, iteration=0):
    """One local optimization step: T(h - alpha + zeta * z).

    ``perturb`` may be None for the unperturbed iteration.  The output
    lies in the range of the constraint operator.
    """
    h = np.asarray(h, dtype=float)
    alpha = subgradient_displacement(oracle, agent, iteration, h, mu)
    y = h - alpha
    if perturb is not None:
        y = y + perturb.displacement(agent, iteration, y)
    return constraint(y)


@dataclass
class AverageEstimate:
    """Ideal consensus payload: the exact network average."""

    vector: np.ndarray


@dataclass
class NeighborEstimate:
    """Decoded single-neighbor payload (digital or analog broadcast)."""

    vector: np.ndarray


@dataclass
class OtaEstimate:
    """Over-the-air aggregation payload for one receiver."""

    v_hat: np.ndarray
    v_prime_hat: np.ndarray
    gamma: float


def mix_step(lam, payload, beta_i):
    """Blend the local iterate with the backend's consensus information.

    A None payload (agent transmitted this slot, broadcast not decoded,
    or no-communication scheme) leaves the iterate unchanged.
    """
    lam = np.asarray(lam, dtype=float)
    if payload is None:
        log.debug("mix_step: missing payload, falling back to identity")
        return lam.copy()
    if isinstance(payload, (AverageEstimate, NeighborEstimate)):
        return (1.0 - beta_i) * lam + beta_i * payload.vector
    if isinstance(payload, OtaEstimate):
        return consensus_update(lam, payload.v_hat, payload.v_prime_hat,
                                beta_i, payload.gamma)
    raise TypeError(f"unknown payload type: {type(payload).__name__}")


@dataclass
class RoundContext:
    """Inputs a communication backend needs for one synchronized round."""

    lambdas: np.ndarray
    topology: object
    noise: object
    params: object
    streams: dict
    iteration: int


class CommunicationBackend(Protocol):
    """One communication scheme: produces one payload (or None) per agent."""

    def communicate(self, ctx: RoundContext):
        ...


_BACKENDS = {}


def register_backend(name, factory):
    """Register a backend factory under a scheme name."""
    _BACKENDS[name] = factory


def get_backend(name, **kwargs):
    """Instantiate a registered backend; raises KeyError for unknown names."""
    try:
        factory = _BACKENDS[name]
    except KeyError:
        raise KeyError(
            f"no communication backend registered under {name!r}; "
            f"known: {sorted(_BACKENDS)}"
        ) from None
    return factory(**kwargs)


def backend_names():
    return sorted(_BACKENDS)
