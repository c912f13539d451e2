"""Decentralized online learning over simulated fading wireless networks.

The package simulates a network of agents that jointly fit a spatial field
model while communicating over a shared wireless medium.  Communication is
either analog over-the-air aggregation (simultaneous transmissions whose
superposition computes a weighted sum at each receiver), one of several
baseline schemes (no communication, ideal centralized averaging, digital
broadcast, analog broadcast), or a sparsity-promoting variant of the
over-the-air scheme.

Modules
-------
core
    Stacked network state, consensus projector, step-size schedules, RNG.
channel
    Positions, path loss, block-fading draws, receiver noise, mobility.
otac
    The over-the-air aggregation protocol: encoding, superposition rounds,
    receiver post-processing, and the consensus update.
consensus_analysis
    Dense matrix form of the mixing step and its statistical verification.
apsm
    Adaptive projected subgradient local step and backend-agnostic mixing.
superiorize
    Bounded sparsity perturbations (reweighted soft thresholding).
kernel_model
    Random-Fourier-feature field model, hyperslab constraints, synthetic
    fields and dataset I/O.
baselines
    NOC / CEN / DBC / ANB communication schemes.
experiment
    End-to-end simulation loop, metrics, sweeps, energy accounting.
cli
    Command line entry points (run / verify / gen-dataset).
"""

__version__ = "0.1.0"

from . import baselines as _baselines   # noqa: E402,F401  (fills the backend registry)
