"""Trace-distance non-Markovianity of the reduced qubit dynamics.

The discrete measure is ``N = Σ_{σ>0} σ(t_i) Δt`` with ``σ`` the central
difference of the trace distance ``D`` at interior grid points.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .dynamics import (
    InitialCondition,
    QubitTrajectory,
    TimeGrid,
    evolve_qubit,
    format_float,
    qubit_density,
)
from .hilbert import ModelParams

D_FLOOR = 1e-12


@dataclass
class NMResult:
    """Trace distance, its gradient and the NM sum (optionally with error bars).

    ``sigma`` has the same length as ``times``; the two endpoints, where the
    central difference is undefined, hold NaN and never enter ``nm``.
    """

    times: np.ndarray
    trace_distance: np.ndarray
    sigma: np.ndarray
    nm: float
    trace_distance_err: np.ndarray | None = None
    sigma_err: np.ndarray | None = None
    nm_err: float | None = None
    flagged: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    def to_csv(self, path) -> None:
        n = len(self.times)
        d_err = self.trace_distance_err if self.trace_distance_err is not None else np.zeros(n)
        s_err = self.sigma_err if self.sigma_err is not None else np.zeros(n)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t_us", "D", "D_err", "sigma", "sigma_err"])
            for i in range(n):
                w.writerow([format_float(v) for v in
                            (self.times[i], self.trace_distance[i], d_err[i], self.sigma[i], s_err[i])])

    def summary(self) -> dict:
        return {"nm": self.nm, "nm_err": self.nm_err, **self.meta}

    def to_json(self, path, **echo) -> None:
        with open(path, "w") as fh:
            json.dump({**self.summary(), **echo}, fh, indent=2, sort_keys=True)
            fh.write("\n")


# ---------------------------------------------------------------------------
# distances


def _check_qubit(rho):
    rho = np.asarray(rho)
    if rho.shape != (2, 2):
        raise ValueError(f"trace distance is implemented for qubits only, got shape {rho.shape}")
    return rho


def trace_distance_matrix(rho1, rho2) -> float:
    """``½ tr|ρ1 - ρ2|`` from the eigenvalues of the Hermitian difference."""
    diff = _check_qubit(rho1) - _check_qubit(rho2)
    return 0.5 * float(np.sum(np.abs(np.linalg.eigvalsh(0.5 * (diff + diff.conj().T)))))


def trace_distance_bloch(s1, s2) -> float:
    """Half the Euclidean distance of two Bloch vectors."""
    return 0.5 * float(np.linalg.norm(np.asarray(s1, float) - np.asarray(s2, float)))


def trace_distance(rho1, rho2) -> float:
    """Qubit trace distance; both routes are evaluated and must agree."""
    d = trace_distance_matrix(rho1, rho2)
    from .dynamics import pauli_expectations
    db = trace_distance_bloch(pauli_expectations(rho1), pauli_expectations(rho2))
    if abs(d - db) > 1e-9:
        raise ArithmeticError(f"trace-distance routes disagree: {d} vs {db}")
    return d


def trace_distance_series(traj1: QubitTrajectory, traj2: QubitTrajectory) -> np.ndarray:
    if len(traj1.times) != len(traj2.times) or not np.allclose(traj1.times, traj2.times):
        raise ValueError("trajectories must share a time grid")
    return 0.5 * np.linalg.norm(traj1.bloch - traj2.bloch, axis=1)


# ---------------------------------------------------------------------------
# gradient and integral


def _uniform_step(times) -> float:
    t = np.asarray(times, dtype=float)
    if len(t) < 3:
        raise ValueError("need at least 3 time points")
    steps = np.diff(t)
    dt = steps.mean()
    if not np.allclose(steps, dt, rtol=1e-9, atol=1e-12):
        raise ValueError("time grid must be uniform")
    return float(dt)


def sigma_series(times, D) -> tuple[np.ndarray, np.ndarray]:
    """Central-difference gradient at interior points: ``(t[1:-1], σ)``."""
    dt = _uniform_step(times)
    D = np.asarray(D, dtype=float)
    return np.asarray(times, float)[1:-1], (D[2:] - D[:-2]) / (2.0 * dt)


def nm_integral(times, sigma_values) -> float:
    """Rectangle-rule sum of the positive part, ``Σ_{σ>0} σ Δt``."""
    dt = _uniform_step(times) if len(times) >= 3 else float(np.diff(times)[0])
    s = np.asarray(sigma_values, dtype=float)
    s = s[np.isfinite(s)]
    return float(np.sum(s[s > 0]) * dt)


def nm_from_distance(times, D) -> NMResult:
    times = np.asarray(times, dtype=float)
    _, s = sigma_series(times, D)
    sigma = np.full(len(times), np.nan)
    sigma[1:-1] = s
    return NMResult(times, np.asarray(D, float), sigma, nm_integral(times, s))


# ---------------------------------------------------------------------------
# errors


def qpn_error(p, N):
    """Projection-noise standard error of ⟨σ⟩ estimated from N shots: ``2√(p(1-p)/N)``."""
    p = np.asarray(p, dtype=float)
    if np.any((p < 0) | (p > 1)) or N < 1:
        raise ValueError("need 0 <= p <= 1 and N >= 1")
    out = 2.0 * np.sqrt(p * (1.0 - p) / N)
    return float(out) if out.ndim == 0 else out


def trace_distance_error(traj1: QubitTrajectory, traj2: QubitTrajectory):
    """First-order propagation of Bloch-component errors through ``D = ½|ΔS|``.

    Returns ``(D, δD, flagged)``.  Where ``D`` vanishes the derivative is
    singular; there ``δD`` is bounded by ``½ max_l sqrt(δS1_l² + δS2_l²)`` and
    the point is flagged.
    """
    e1 = traj1.bloch_err if traj1.bloch_err is not None else np.zeros_like(traj1.bloch)
    e2 = traj2.bloch_err if traj2.bloch_err is not None else np.zeros_like(traj2.bloch)
    dS = traj1.bloch - traj2.bloch
    D = 0.5 * np.linalg.norm(dS, axis=1)
    var = e1**2 + e2**2
    flagged = D < D_FLOOR
    safe = np.where(flagged, 1.0, D)
    dD = np.sqrt(np.sum(dS**2 * var, axis=1)) / (2.0 * safe)
    bound = 0.5 * np.sqrt(var.max(axis=1))
    dD = np.where(flagged, bound, dD)
    flagged = flagged & (bound > 0)
    return D, dD, flagged


def sigma_error(dD, dt: float) -> np.ndarray:
    """``δσ(t) = √(δD(t+Δt)² + δD(t-Δt)²) / Δt`` at interior points (prefactor 1/Δt as used in the error budget)."""
    dD = np.asarray(dD, dtype=float)
    return np.sqrt(dD[2:] ** 2 + dD[:-2] ** 2) / dt


def nm_error(sigma, dsigma, dt: float) -> float:
    """``√(Σ_{σ>0} (δσ Δt)²)``."""
    sigma = np.asarray(sigma, float)
    dsigma = np.asarray(dsigma, float)
    mask = np.isfinite(sigma) & (sigma > 0)
    return float(math.sqrt(np.sum((dsigma[mask] * dt) ** 2)))


def error_chain(traj1: QubitTrajectory, traj2: QubitTrajectory) -> NMResult:
    """D, σ and NM together with δD, δσ and δNM from per-component shot errors."""
    D, dD, flagged = trace_distance_error(traj1, traj2)
    res = nm_from_distance(traj1.times, D)
    dt = res.dt
    ds = np.full(len(D), np.nan)
    ds[1:-1] = sigma_error(dD, dt)
    res.trace_distance_err = dD
    res.sigma_err = ds
    res.nm_err = nm_error(res.sigma[1:-1], ds[1:-1], dt)
    res.flagged = flagged
    return res


# ---------------------------------------------------------------------------
# pipelines


def evolve_pair(ic1: InitialCondition, ic2: InitialCondition, params: ModelParams, grid: TimeGrid,
                frame: str = "lab", **kw) -> tuple[QubitTrajectory, QubitTrajectory]:
    """Evolve both branches, the first with ``gamma_plus`` and the second with ``gamma_minus``."""
    t1 = evolve_qubit(ic1, params, grid, frame, params.gamma_plus, **kw)
    t2 = evolve_qubit(ic2, params, grid, frame, params.gamma_minus, **kw)
    return t1, t2


def nm_for_pair(ic1: InitialCondition, ic2: InitialCondition, params: ModelParams, grid: TimeGrid,
                shots=None, frame: str = "lab", lab_transform: bool = False, **kw) -> NMResult:
    """NM of an antipodal pair.

    ``shots`` (a :class:`~iontrap_nm.noise.ShotConfig`) replaces the exact
    Bloch vectors by finite-shot estimates and fills the error fields.
    ``lab_transform`` back-rotates interaction-frame trajectories before the
    distance is taken.
    """
    t1, t2 = evolve_pair(ic1, ic2, params, grid, frame, **kw)
    return nm_from_trajectories(t1, t2, shots, params.detuning_mhz if lab_transform else 0.0)


def nm_from_trajectories(t1: QubitTrajectory, t2: QubitTrajectory, shots=None,
                         delta_mhz: float = 0.0) -> NMResult:
    from .dynamics import to_lab_frame
    if delta_mhz:
        t1, t2 = to_lab_frame(t1, delta_mhz), to_lab_frame(t2, delta_mhz)
    if shots is not None:
        from .noise import sample_trajectory
        t1 = sample_trajectory(t1, shots, stream=0)
        t2 = sample_trajectory(t2, shots, stream=1)
        return error_chain(t1, t2)
    return nm_from_distance(t1.times, trace_distance_series(t1, t2))


def maximization_grid(theta_steps: int = 11, phi_steps: int = 12):
    """Bloch angles searched by :func:`nm_maximized`.

    ``theta_steps == 1`` pins θ = π/2; ``phi_steps`` samples ``[0, 2π)``.
    """
    thetas = [math.pi / 2] if theta_steps == 1 else list(np.linspace(0.0, math.pi, theta_steps))
    phis = [2 * math.pi * k / phi_steps for k in range(phi_steps)]
    pairs = []
    for th in thetas:
        # the poles are φ-independent
        for ph in (phis[:1] if th in (0.0, math.pi) else phis):
            pairs.append((float(th), float(ph)))
    return pairs


def _pair_nm(args):
    theta, phi, motional, params, grid, kw = args
    ic1 = InitialCondition((theta, phi), motional)
    return nm_for_pair(ic1, ic1.antipode(), params, grid, **kw)


def nm_maximized(params: ModelParams, grid: TimeGrid, theta_steps: int = 11, phi_steps: int = 12,
                 motional=None, workers: int = 1, **kw):
    """Largest NM over antipodal pure pairs on a (θ, φ) grid; returns ``(result, θ, φ)``."""
    pairs = maximization_grid(theta_steps, phi_steps)
    jobs = [(th, ph, motional, params, grid, kw) for th, ph in pairs]
    if workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            results = list(pool.map(_pair_nm, jobs))
    else:
        results = [_pair_nm(j) for j in jobs]
    best = max(range(len(results)), key=lambda i: results[i].nm)
    return results[best], pairs[best][0], pairs[best][1]


def trace_distance_from_bloch_pair(s1, s2) -> float:
    """Matrix-route distance for two Bloch vectors (used as a cross-check)."""
    return trace_distance_matrix(qubit_density(s1), qubit_density(s2))
