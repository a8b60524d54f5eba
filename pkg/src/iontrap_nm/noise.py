"""Finite-shot tomography emulation with quantum projection noise.

Each Bloch component ⟨σ_l⟩ at each time point is estimated from ``N``
independent projective measurements: ``k ~ Binomial(N, p)`` with
``p = (⟨σ_l⟩ + 1)/2`` and the estimate ``2k/N - 1``.  The generator is numpy's
PCG64 seeded per time point from ``SeedSequence([seed, stream, index])``, so a
point's draw does not depend on how many other points were sampled or in which
order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .dynamics import QubitTrajectory
from .nmeasure import qpn_error

SHOTS_DEFAULT = 600
# bit generator used for every draw; recorded in output metadata
RNG_ALGORITHM = "PCG64"


@dataclass(frozen=True)
class ShotConfig:
    n_cycles: int = SHOTS_DEFAULT
    seed: int = 0

    def __post_init__(self):
        if int(self.n_cycles) != self.n_cycles or self.n_cycles < 1:
            raise ValueError(f"n_cycles must be a positive integer, got {self.n_cycles}")
        if int(self.seed) != self.seed or not 0 <= self.seed < 2**64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {self.seed}")
        object.__setattr__(self, "n_cycles", int(self.n_cycles))
        object.__setattr__(self, "seed", int(self.seed))

    def to_dict(self) -> dict:
        return {"n_cycles": self.n_cycles, "seed": self.seed}


def point_rng(seed: int, stream: int, index: int) -> np.random.Generator:
    """Generator for one (stream, time index) cell."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence([seed, stream, index])))


def _probabilities(bloch) -> np.ndarray:
    s = np.asarray(bloch, dtype=float)
    if np.any(np.abs(s) > 1.0 + 1e-9):
        raise ValueError("Bloch components must lie in [-1, 1]")
    return np.clip(0.5 * (s + 1.0), 0.0, 1.0)


def sample_components(bloch, n_cycles: int, seed: int = 0, stream: int = 0, index: int = 0):
    """Noisy estimates and QPN errors for one Bloch vector."""
    p = _probabilities(bloch)
    k = point_rng(seed, stream, index).binomial(n_cycles, p)
    p_hat = k / n_cycles
    return 2.0 * p_hat - 1.0, qpn_error(p_hat, n_cycles)


def sample_trajectory(traj: QubitTrajectory, cfg: ShotConfig, stream: int = 0) -> QubitTrajectory:
    """Replace exact Bloch vectors by ``cfg.n_cycles``-shot estimates.

    Errors are the projection-noise formula evaluated at the measured
    frequency ``k/N``, as an experimentalist would quote them.  ``stream``
    separates the two branches of a state pair.
    """
    _probabilities(traj.bloch)
    noisy = np.empty_like(traj.bloch, dtype=float)
    err = np.empty_like(noisy)
    for i, s in enumerate(traj.bloch):
        noisy[i], err[i] = sample_components(s, cfg.n_cycles, cfg.seed, stream, i)
    return QubitTrajectory(np.array(traj.times, dtype=float), noisy, err)


def empirical_error_check(p: float, N: int, trials: int = 100_000, seed: int = 0):
    """Monte-Carlo std of the ``N``-shot estimate of ⟨σ⟩ versus ``2√(p(1-p)/N)``."""
    if trials < 1000:
        raise ValueError("trials must be at least 1000")
    rng = point_rng(seed, 0, 0)
    est = 2.0 * rng.binomial(N, p, size=trials) / N - 1.0
    return float(est.std(ddof=1)), qpn_error(p, N)
