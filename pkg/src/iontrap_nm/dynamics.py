"""Master-equation integration, state preparation and qubit observables.

The dephasing master equation

    dρ/dt = -i[H, ρ] + γ(σ_z ρ σ_z - ρ)

is integrated with fixed-step classical RK4.  Between two output samples the
integrator takes ``n_sub`` equal substeps, the smallest number for which
``h · 2π·max(ν, Ω, |δ|) <= step_bound`` (default 0.05).

Sign convention: ``σ_z|e⟩ = +|e⟩``, ``σ_z|g⟩ = -|g⟩``.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from . import _backend
from .errors import IntegrationError, TruncationWarning
from .hilbert import (
    KET_E,
    KET_G,
    SIGMA_X,
    SIGMA_Y,
    SIGMA_Z,
    ModelParams,
    coherent_state,
    displacement_coupling,
    mode_populations,
    motional_energies,
    partial_trace_motion,
    tensor,
    thermal_state,
    fock_state,
)

STEP_BOUND = 0.05
TRACE_TOLERANCE = 1e-6
LEAK_THRESHOLD = 1e-4

QUBIT_STATES = ("g", "e", "plus_x", "minus_x", "plus_y", "minus_y")
FRAMES = ("lab", "interaction")


@dataclass(frozen=True)
class TimeGrid:
    """Output samples ``t_start, ..., t_end`` (μs), endpoints included."""

    t_start: float = 0.0
    t_end: float = 100.0
    n_points: int = 201

    def __post_init__(self):
        if not self.t_end > self.t_start:
            raise ValueError("t_end must exceed t_start")
        if int(self.n_points) != self.n_points or self.n_points < 2:
            raise ValueError("n_points must be an integer >= 2")

    @classmethod
    def from_step(cls, t_end: float, dt: float, t_start: float = 0.0) -> "TimeGrid":
        n = int(round((t_end - t_start) / dt))
        if not math.isclose(n * dt, t_end - t_start, rel_tol=1e-9, abs_tol=1e-12):
            raise ValueError(f"window {t_end - t_start} is not a multiple of dt={dt}")
        return cls(t_start, t_end, n + 1)

    @property
    def dt(self) -> float:
        return (self.t_end - self.t_start) / (self.n_points - 1)

    @property
    def times(self) -> np.ndarray:
        return self.t_start + self.dt * np.arange(self.n_points)


@dataclass(frozen=True)
class MotionalState:
    """Per-mode preparation: ``ground``, ``thermal`` (n̄ from ``value`` or the mode) or ``coherent`` (α)."""

    kind: str = "thermal"
    value: complex | float | None = None

    def __post_init__(self):
        if self.kind not in ("ground", "thermal", "coherent", "fock"):
            raise ValueError(f"unknown motional state {self.kind!r}")
        if self.kind in ("coherent", "fock") and self.value is None:
            raise ValueError(f"{self.kind} state needs a value")
        if isinstance(self.value, (list, tuple)):
            # JSON form of a complex amplitude: [re, im]
            object.__setattr__(self, "value", complex(*self.value))

    def to_dict(self) -> dict:
        v = self.value
        if isinstance(v, complex):
            v = [v.real, v.imag]
        return {"kind": self.kind, "value": v}

    def density(self, mode) -> np.ndarray:
        if self.kind == "ground":
            return fock_state(0, mode.fock_dim)
        if self.kind == "fock":
            return fock_state(int(self.value), mode.fock_dim)
        if self.kind == "coherent":
            return coherent_state(complex(self.value), mode.fock_dim)
        nbar = mode.nbar if self.value is None else float(self.value)
        return thermal_state(nbar, mode.fock_dim)


@dataclass(frozen=True)
class InitialCondition:
    """Product state ρ_qubit ⊗ ρ_mode1 ⊗ ρ_mode2.

    ``qubit`` is a name from :data:`QUBIT_STATES` or Bloch angles ``(θ, φ)``
    giving ``cos(θ/2)|e⟩ + e^{iφ} sin(θ/2)|g⟩``.  ``motional=None`` puts every
    mode in its thermal state with the configured n̄.
    """

    qubit: str | tuple[float, float] = "plus_x"
    motional: tuple[MotionalState, ...] | None = None
    preparation: str = "ideal"

    def __post_init__(self):
        if isinstance(self.qubit, str):
            if self.qubit not in QUBIT_STATES:
                raise ValueError(f"unknown qubit state {self.qubit!r}")
        else:
            theta, phi = self.qubit
            if not (0.0 <= theta <= math.pi) or not (0.0 <= phi < 2 * math.pi):
                raise ValueError("need 0 <= θ <= π and 0 <= φ < 2π")
            object.__setattr__(self, "qubit", (float(theta), float(phi)))
        if self.motional is not None:
            object.__setattr__(self, "motional", tuple(
                m if isinstance(m, MotionalState) else MotionalState(**m) for m in self.motional))
        if self.preparation not in ("ideal", "pulse"):
            raise ValueError("preparation must be 'ideal' or 'pulse'")

    def qubit_ket(self) -> np.ndarray:
        if isinstance(self.qubit, str):
            return prepare_qubit(self.qubit, self.preparation)
        return bloch_ket(*self.qubit)

    def antipode(self) -> "InitialCondition":
        """The orthogonal partner state with the same motional preparation."""
        if isinstance(self.qubit, str):
            partner = {"g": "e", "e": "g", "plus_x": "minus_x", "minus_x": "plus_x",
                       "plus_y": "minus_y", "minus_y": "plus_y"}[self.qubit]
            return InitialCondition(partner, self.motional, self.preparation)
        theta, phi = self.qubit
        return InitialCondition((math.pi - theta, (phi + math.pi) % (2 * math.pi)),
                                self.motional, self.preparation)

    def density(self, params: ModelParams) -> np.ndarray:
        psi = self.qubit_ket()
        motional = self.motional or tuple(MotionalState("thermal") for _ in params.modes)
        if len(motional) != len(params.modes):
            raise ValueError("one motional state per mode is required")
        parts = [np.outer(psi, psi.conj())] + [s.density(m) for s, m in zip(motional, params.modes)]
        return tensor(*parts)


@dataclass
class QubitTrajectory:
    times: np.ndarray
    bloch: np.ndarray
    bloch_err: np.ndarray | None = None

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.bloch = np.asarray(self.bloch, dtype=float)
        if self.bloch.shape != (len(self.times), 3):
            raise ValueError("bloch must have shape (n_times, 3)")
        if self.bloch_err is not None:
            self.bloch_err = np.asarray(self.bloch_err, dtype=float)
            if self.bloch_err.shape != self.bloch.shape:
                raise ValueError("bloch_err must match bloch")

    def to_csv(self, path, with_errors: bool | None = None) -> None:
        """Write ``t_us, sx, sy, sz[, sx_err, sy_err, sz_err]`` at 17 significant digits."""
        errs = self.bloch_err is not None if with_errors is None else with_errors
        header = ["t_us", "sx", "sy", "sz"] + (["sx_err", "sy_err", "sz_err"] if errs else [])
        err = self.bloch_err if self.bloch_err is not None else np.zeros_like(self.bloch)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for i, t in enumerate(self.times):
                row = [t, *self.bloch[i]] + (list(err[i]) if errs else [])
                w.writerow([format_float(v) for v in row])

    @classmethod
    def from_csv(cls, path) -> "QubitTrajectory":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        header, data = rows[0], np.array(rows[1:], dtype=float)
        err = data[:, 4:7] if "sx_err" in header else None
        return cls(data[:, 0], data[:, 1:4], err)


def format_float(x: float) -> str:
    # full double precision; -0.0 is written as 0
    return format(float(x) + 0.0, ".17g")


# ---------------------------------------------------------------------------
# qubit states


def bloch_ket(theta: float, phi: float) -> np.ndarray:
    return math.cos(theta / 2) * KET_E + np.exp(1j * phi) * math.sin(theta / 2) * KET_G


def pulse_operator(area: float, phase: float) -> np.ndarray:
    """Carrier pulse ``cos(A/2) I - i sin(A/2)(cosφ σ_x + sinφ σ_y)`` with ``A = Ωτ``."""
    axis = math.cos(phase) * SIGMA_X + math.sin(phase) * SIGMA_Y
    return math.cos(area / 2) * np.eye(2) - 1j * math.sin(area / 2) * axis


# (start state, pulse phase) for each target reached by a π/2 pulse
_PULSES = {
    "plus_x": (KET_G, -math.pi / 2),
    "minus_x": (KET_E, -math.pi / 2),
    "plus_y": (KET_G, 0.0),
    "minus_y": (KET_E, 0.0),
}


def prepare_qubit(target: str, mode: str = "ideal") -> np.ndarray:
    """Ket for ``target``; ``mode="pulse"`` builds it with a carrier π/2 pulse on |g⟩ or |e⟩."""
    if target not in QUBIT_STATES:
        raise ValueError(f"unknown qubit state {target!r}")
    if target == "e":
        return KET_E.copy()
    if target == "g":
        return KET_G.copy()
    if mode == "pulse":
        start, phase = _PULSES[target]
        return pulse_operator(math.pi / 2, phase) @ start
    if mode != "ideal":
        raise ValueError("mode must be 'ideal' or 'pulse'")
    s = 1 / math.sqrt(2)
    return {
        "plus_x": s * (KET_E + KET_G),
        "minus_x": s * (KET_E - KET_G),
        "plus_y": s * (KET_E + 1j * KET_G),
        "minus_y": s * (KET_E - 1j * KET_G),
    }[target]


def pauli_expectations(rho_qubit: np.ndarray) -> np.ndarray:
    """``(tr ρσ_x, tr ρσ_y, tr ρσ_z)`` of a 2×2 density matrix."""
    r = np.asarray(rho_qubit)
    return np.array([
        2.0 * r[0, 1].real,
        -2.0 * r[0, 1].imag,
        (r[0, 0] - r[1, 1]).real,
    ])


def qubit_density(bloch: Sequence[float]) -> np.ndarray:
    x, y, z = bloch
    return 0.5 * (np.eye(2) + x * SIGMA_X + y * SIGMA_Y + z * SIGMA_Z)


# ---------------------------------------------------------------------------
# integration


def lindblad_rhs(rho: np.ndarray, H: np.ndarray, gamma: float) -> np.ndarray:
    """``-i[H, ρ] + γ(σ_z ρ σ_z - ρ)`` with σ_z acting on the qubit factor (dense reference)."""
    rho = np.asarray(rho)
    H = np.asarray(H)
    if rho.shape != H.shape or rho.shape[0] % 2:
        raise ValueError(f"shape mismatch: rho {rho.shape}, H {H.shape}")
    M = rho.shape[0] // 2
    z = np.concatenate([np.ones(M), -np.ones(M)])
    zrz = z[:, None] * rho * z[None, :]
    return -1j * (H @ rho - rho @ H) + gamma * (zrz - rho)


@dataclass(frozen=True)
class _KernelArgs:
    diag_e: np.ndarray
    diag_g: np.ndarray
    factors: list = field(default_factory=list)
    factors_dag: list = field(default_factory=list)
    product: bool = True
    amp: complex = 0j
    drive_rate: float = 0.0


def kernel_args(params: ModelParams, frame: str = "lab") -> _KernelArgs:
    """Block data of the Hamiltonian consumed by the RK4 core."""
    if frame not in FRAMES:
        raise ValueError(f"frame must be one of {FRAMES}")
    E = motional_energies(params)
    factors = [displacement_coupling(m.lamb_dicke, m.fock_dim) for m in params.modes]
    amp = 0.5 * params.rabi * np.exp(1j * params.laser_phase)
    if frame == "lab":
        half = 0.5 * params.detuning
        return _KernelArgs(E + half, E - half, factors, [f.conj().T.copy() for f in factors],
                           params.coupling == "product", amp, 0.0)
    rate = params.detuning if params.rabi != 0 else 0.0
    return _KernelArgs(E, E.copy(), factors, [f.conj().T.copy() for f in factors],
                       params.coupling == "product", amp, rate)


def substeps(params: ModelParams, dt: float, step_bound: float = STEP_BOUND) -> int:
    """Number of RK4 substeps per output interval ``dt``."""
    return max(1, math.ceil(dt * params.spectral_scale() / step_bound - 1e-9))


def iter_evolve(ic: InitialCondition, params: ModelParams, grid: TimeGrid, frame: str = "lab",
                gamma: float | None = None, *, backend: str | None = None,
                step_bound: float = STEP_BOUND) -> Iterator[tuple[float, np.ndarray]]:
    """Yield ``(t, ρ(t))`` at every grid time.

    ``gamma`` is the dephasing rate in 1/μs; ``None`` takes ``params.gamma_plus``.
    Raises :class:`IntegrationError` when the trace drifts by more than 1e-6
    and warns with :class:`TruncationWarning` when the top two Fock levels of a
    mode hold more than 1e-4 population.
    """
    rate = params.gamma_plus if gamma is None else float(gamma)
    rk4 = _backend.get_rk4(backend)
    k = kernel_args(params, frame)
    n_sub = substeps(params, grid.dt, step_bound)
    h = grid.dt / n_sub
    times = grid.times
    rho = ic.density(params)
    warned = False
    yield times[0], rho
    for i in range(1, len(times)):
        rho = rk4(rho, k.diag_e, k.diag_g, k.factors, k.factors_dag, k.product, k.amp,
                  k.drive_rate, rate, times[i - 1], h, n_sub)
        drift = abs(np.trace(rho) - 1.0)
        if not drift <= TRACE_TOLERANCE:
            raise IntegrationError(f"trace drift {drift:.3e} at t={times[i]:.4g} μs "
                                   f"(rabi={params.rabi_mhz}, detuning={params.detuning_mhz})")
        if not warned:
            # decoupled (η = 0) modes cannot leak
            leak = max((p[-2:].sum() for p, m in zip(mode_populations(rho, params), params.modes)
                        if m.lamb_dicke > 0), default=0.0)
            if leak > LEAK_THRESHOLD:
                warnings.warn(f"top Fock levels hold {leak:.2e} population at t={times[i]:.4g} μs; "
                              "increase fock_dim", TruncationWarning, stacklevel=2)
                warned = True
        yield times[i], rho


def evolve(ic: InitialCondition, params: ModelParams, grid: TimeGrid, frame: str = "lab",
           gamma: float | None = None, **kw) -> np.ndarray:
    """Full density matrices at the grid times, shape ``(n_points, dim, dim)``."""
    return np.array([rho for _, rho in iter_evolve(ic, params, grid, frame, gamma, **kw)])


def evolve_qubit(ic: InitialCondition, params: ModelParams, grid: TimeGrid, frame: str = "lab",
                 gamma: float | None = None, **kw) -> QubitTrajectory:
    """Bloch-vector trajectory of the reduced qubit (memory-light variant of :func:`evolve`)."""
    bloch = [pauli_expectations(partial_trace_motion(rho, params))
             for _, rho in iter_evolve(ic, params, grid, frame, gamma, **kw)]
    return QubitTrajectory(grid.times, np.array(bloch))


def to_lab_frame(traj: QubitTrajectory, delta_mhz: float, angle_factor: float = 1.0) -> QubitTrajectory:
    """Undo the detuning frame: ``⟨σ_i⟩_lab = tr(U σ_i U† ρ)`` with ``U = exp(i·f·δ t σ_z / 2)``.

    Equivalent to rotating ``(S_x, S_y)`` about z by ``+f·δ·t`` (counter-clockwise,
    f = ``angle_factor``); ``S_z`` is untouched.  Error bars rotate as vector
    components (absolute values of the rotated components).
    """
    theta = angle_factor * 2.0 * math.pi * delta_mhz * traj.times
    c, s = np.cos(theta), np.sin(theta)
    x, y, z = traj.bloch.T
    bloch = np.column_stack([c * x - s * y, s * x + c * y, z])
    err = None
    if traj.bloch_err is not None:
        ex, ey, ez = traj.bloch_err.T
        err = np.column_stack([np.hypot(c * ex, s * ey), np.hypot(s * ex, c * ey), ez])
    return QubitTrajectory(traj.times.copy(), bloch, err)
