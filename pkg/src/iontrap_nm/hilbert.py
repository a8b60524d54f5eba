"""Operators, states and Hamiltonians on the qubit ⊗ motional-modes space.

Conventions
-----------
* Frequencies in the configuration are ordinary frequencies in MHz; they are
  converted to angular frequencies (rad/μs) by multiplying with 2π.  Time is
  measured in μs everywhere.
* Tensor ordering is ``qubit ⊗ mode1 ⊗ mode2``.
* Qubit basis order is ``(|e⟩, |g⟩)`` with ``σ_z|e⟩ = +|e⟩`` and
  ``σ_z|g⟩ = -|g⟩``; ``σ_+ = |e⟩⟨g|``.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from functools import reduce

import numpy as np
from scipy.linalg import expm
from scipy.special import eval_genlaguerre, gammaln

from .errors import InvalidDimensionError

TWO_PI = 2.0 * math.pi

SIGMA_X = np.array([[0, 1], [1, 0]], dtype=complex)
SIGMA_Y = np.array([[0, -1j], [1j, 0]], dtype=complex)
SIGMA_Z = np.array([[1, 0], [0, -1]], dtype=complex)
SIGMA_PLUS = np.array([[0, 1], [0, 0]], dtype=complex)
SIGMA_MINUS = SIGMA_PLUS.T.copy()

KET_E = np.array([1, 0], dtype=complex)
KET_G = np.array([0, 1], dtype=complex)

GAMMA_UNITS = ("per_us", "mhz_angular")
COUPLINGS = ("product", "sum")


@dataclass(frozen=True)
class ModeSpec:
    """One motional mode: frequency ν/2π (MHz), Lamb-Dicke η, truncation, n̄."""

    frequency_mhz: float
    lamb_dicke: float
    fock_dim: int = 15
    nbar: float = 0.05

    def __post_init__(self):
        if not self.frequency_mhz > 0:
            raise ValueError(f"frequency_mhz must be > 0, got {self.frequency_mhz}")
        if self.lamb_dicke < 0:
            raise ValueError(f"lamb_dicke must be >= 0, got {self.lamb_dicke}")
        if int(self.fock_dim) != self.fock_dim or self.fock_dim < 2:
            raise InvalidDimensionError(f"fock_dim must be an integer >= 2, got {self.fock_dim}")
        if self.nbar < 0:
            raise ValueError(f"nbar must be >= 0, got {self.nbar}")

    @property
    def nu(self) -> float:
        """Angular frequency in rad/μs."""
        return TWO_PI * self.frequency_mhz

    def thermal_tail(self) -> float:
        """Thermal population that falls beyond the truncation."""
        r = self.nbar / (1.0 + self.nbar)
        return r**self.fock_dim


@dataclass(frozen=True)
class ModelParams:
    """Full physical configuration of the driven ion.

    ``gamma_plus_mhz`` / ``gamma_minus_mhz`` are the dephasing rates used for
    the first and second branch of a state pair.  With ``gamma_units="per_us"``
    the number enters the master equation directly as a rate in 1/μs; with
    ``"mhz_angular"`` it is multiplied by 2π first.

    ``coupling`` selects how the modes enter the spin-motion term:
    ``"product"`` uses ``σ_+ Π_i exp(iη_i(a_i + a_i†))`` (one beam pair
    projecting on every mode), ``"sum"`` uses ``σ_+ Σ_i exp(iη_i(a_i + a_i†))``
    with a common Ω/2 prefactor.  Both coincide for a single mode.
    """

    rabi_mhz: float
    detuning_mhz: float = 0.0
    modes: tuple[ModeSpec, ...] = field(default_factory=tuple)
    gamma_plus_mhz: float = 0.0
    gamma_minus_mhz: float = 0.0
    laser_phase: float = 0.0
    gamma_units: str = "per_us"
    coupling: str = "product"

    def __post_init__(self):
        modes = tuple(m if isinstance(m, ModeSpec) else ModeSpec(**m) for m in self.modes)
        object.__setattr__(self, "modes", modes)
        if len(modes) not in (1, 2):
            raise ValueError(f"need 1 or 2 modes, got {len(modes)}")
        if self.rabi_mhz < 0:
            raise ValueError(f"rabi_mhz must be >= 0, got {self.rabi_mhz}")
        if self.gamma_plus_mhz < 0 or self.gamma_minus_mhz < 0:
            raise ValueError("dephasing rates must be >= 0")
        if self.gamma_units not in GAMMA_UNITS:
            raise ValueError(f"gamma_units must be one of {GAMMA_UNITS}")
        if self.coupling not in COUPLINGS:
            raise ValueError(f"coupling must be one of {COUPLINGS}")

    @property
    def rabi(self) -> float:
        return TWO_PI * self.rabi_mhz

    @property
    def detuning(self) -> float:
        return TWO_PI * self.detuning_mhz

    @property
    def fock_dims(self) -> tuple[int, ...]:
        return tuple(m.fock_dim for m in self.modes)

    @property
    def motional_dim(self) -> int:
        return int(np.prod(self.fock_dims))

    @property
    def dim(self) -> int:
        return 2 * self.motional_dim

    def rate(self, gamma_mhz: float) -> float:
        """Convert a configured dephasing value to the rate used in the master equation."""
        return TWO_PI * gamma_mhz if self.gamma_units == "mhz_angular" else float(gamma_mhz)

    @property
    def gamma_plus(self) -> float:
        return self.rate(self.gamma_plus_mhz)

    @property
    def gamma_minus(self) -> float:
        return self.rate(self.gamma_minus_mhz)

    def spectral_scale(self) -> float:
        """Rough largest frequency of the problem, 2π·max(ν, Ω, |δ|) in rad/μs."""
        return TWO_PI * max(max(m.frequency_mhz for m in self.modes), self.rabi_mhz,
                            abs(self.detuning_mhz))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["modes"] = [asdict(m) for m in self.modes]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelParams":
        d = dict(d)
        d["modes"] = tuple(ModeSpec(**m) for m in d.get("modes", ()))
        return cls(**d)


# ---------------------------------------------------------------------------
# single-space building blocks


def _check_dim(dim) -> int:
    if int(dim) != dim or dim < 2:
        raise InvalidDimensionError(f"truncation dimension must be an integer >= 2, got {dim}")
    return int(dim)


def annihilation(dim: int) -> np.ndarray:
    """Truncated annihilation operator, ``a[n, n+1] = sqrt(n+1)``."""
    dim = _check_dim(dim)
    return np.diag(np.sqrt(np.arange(1, dim, dtype=float)), k=1).astype(complex)


def number_operator(dim: int) -> np.ndarray:
    dim = _check_dim(dim)
    return np.diag(np.arange(dim, dtype=float)).astype(complex)


def displacement_coupling(eta: float, dim: int) -> np.ndarray:
    """``exp(iη(a + a†))`` on the truncated space (scaling-and-squaring Padé)."""
    dim = _check_dim(dim)
    if eta < 0:
        raise ValueError(f"eta must be >= 0, got {eta}")
    a = annihilation(dim)
    return expm(1j * eta * (a + a.conj().T))


def displacement_coupling_analytic(eta: float, dim: int) -> np.ndarray:
    """Matrix elements of the untruncated ``exp(iη(a + a†))`` restricted to ``dim`` levels.

    Normal ordering gives ``e^{-η²/2} e^{iηa†} e^{iηa}``, whose elements are
    associated-Laguerre polynomials in η².  Agrees with
    :func:`displacement_coupling` away from the truncation edge only.
    """
    dim = _check_dim(dim)
    x = eta * eta
    out = np.empty((dim, dim), dtype=complex)
    for m in range(dim):
        for n in range(dim):
            lo, hi = min(m, n), max(m, n)
            k = hi - lo
            # sqrt(lo!/hi!) * eta^k, done in logs to stay finite
            mag = math.exp(0.5 * (gammaln(lo + 1) - gammaln(hi + 1)) - 0.5 * x) * eta**k
            out[m, n] = (1j) ** k * mag * eval_genlaguerre(lo, k, x)
    return out


def thermal_state(nbar: float, dim: int) -> np.ndarray:
    """Truncated thermal state, ``p(n) ∝ (n̄/(1+n̄))^n``, renormalized to trace 1."""
    dim = _check_dim(dim)
    if nbar < 0:
        raise ValueError(f"nbar must be >= 0, got {nbar}")
    if nbar == 0:
        p = np.zeros(dim)
        p[0] = 1.0
    else:
        p = (nbar / (1.0 + nbar)) ** np.arange(dim)
        p /= p.sum()
    return np.diag(p).astype(complex)


def fock_state(n: int, dim: int) -> np.ndarray:
    dim = _check_dim(dim)
    rho = np.zeros((dim, dim), dtype=complex)
    rho[n, n] = 1.0
    return rho


def coherent_state(alpha: complex, dim: int) -> np.ndarray:
    """Truncated coherent state |α⟩⟨α|, renormalized after truncation."""
    dim = _check_dim(dim)
    n = np.arange(dim)
    logc = -0.5 * abs(alpha) ** 2 - 0.5 * gammaln(n + 1)
    psi = np.exp(logc) * np.power(complex(alpha), n)
    psi /= np.linalg.norm(psi)
    return np.outer(psi, psi.conj())


# ---------------------------------------------------------------------------
# composite space


def tensor(*ops: np.ndarray) -> np.ndarray:
    return reduce(np.kron, ops)


def embed(op: np.ndarray, index: int, dims: tuple[int, ...]) -> np.ndarray:
    """Place ``op`` at tensor slot ``index`` with identities elsewhere."""
    return tensor(*[op if i == index else np.eye(d, dtype=complex) for i, d in enumerate(dims)])


def composite_dims(params: ModelParams) -> tuple[int, ...]:
    return (2,) + params.fock_dims


def motional_coupling(params: ModelParams) -> np.ndarray:
    """The motional operator multiplying σ_+ (without the Ω/2 prefactor)."""
    factors = [displacement_coupling(m.lamb_dicke, m.fock_dim) for m in params.modes]
    if params.coupling == "product" or len(factors) == 1:
        return tensor(*factors)
    dims = params.fock_dims
    return sum(embed(f, i, dims) for i, f in enumerate(factors))


def motional_energies(params: ModelParams) -> np.ndarray:
    """Diagonal of Σ ν_i a_i†a_i on the motional space (rad/μs)."""
    grids = np.meshgrid(*[np.arange(d) for d in params.fock_dims], indexing="ij")
    e = sum(m.nu * g for m, g in zip(params.modes, grids))
    return np.asarray(e, dtype=float).ravel()


def _assemble(params: ModelParams, qubit_diag: float, coupling_phase: complex) -> np.ndarray:
    M = params.motional_dim
    C = motional_coupling(params)
    K = 0.5 * params.rabi * coupling_phase * C
    E = np.diag(motional_energies(params))
    H = np.empty((2 * M, 2 * M), dtype=complex)
    H[:M, :M] = E + qubit_diag * np.eye(M)
    H[M:, M:] = E - qubit_diag * np.eye(M)
    H[:M, M:] = K
    H[M:, :M] = K.conj().T
    return H


def build_hamiltonian(params: ModelParams) -> np.ndarray:
    """H/ħ in rad/μs in the laser rotating frame.

    ``(δ/2)σ_z + Σ ν_i a_i†a_i + (Ω/2)[σ_+ e^{iφ} C + h.c.]`` where ``C`` is the
    motional coupling selected by ``params.coupling``.
    """
    return _assemble(params, 0.5 * params.detuning, np.exp(1j * params.laser_phase))


def interaction_hamiltonian(params: ModelParams, t: float) -> np.ndarray:
    """Time-dependent H/ħ with the detuning moved into the drive phase ``e^{i(δt + φ)}``."""
    return _assemble(params, 0.0, np.exp(1j * (params.detuning * t + params.laser_phase)))


def partial_trace_motion(rho: np.ndarray, params: ModelParams) -> np.ndarray:
    """Reduce a composite density matrix to the 2×2 qubit state."""
    M = params.motional_dim
    rho = np.asarray(rho)
    if rho.shape != (2 * M, 2 * M):
        raise InvalidDimensionError(f"expected shape {(2 * M, 2 * M)}, got {rho.shape}")
    r = rho.reshape(2, M, 2, M)
    return np.einsum("imjm->ij", r)


def partial_trace_qubit(rho: np.ndarray, params: ModelParams) -> np.ndarray:
    M = params.motional_dim
    r = np.asarray(rho).reshape(2, M, 2, M)
    return np.einsum("imin->mn", r)


def mode_populations(rho: np.ndarray, params: ModelParams) -> list[np.ndarray]:
    """Fock-level populations of each mode from a composite density matrix."""
    diag = np.real(np.diagonal(rho)).reshape(composite_dims(params))
    out = []
    for i in range(len(params.modes)):
        axes = tuple(j for j in range(diag.ndim) if j != i + 1)
        out.append(diag.sum(axis=axes))
    return out


def density_defects(rho: np.ndarray) -> dict:
    """Trace error, Hermiticity defect and smallest eigenvalue of ``rho``."""
    rho = np.asarray(rho)
    herm = float(np.max(np.abs(rho - rho.conj().T)))
    evals = np.linalg.eigvalsh(0.5 * (rho + rho.conj().T))
    return {
        "trace_error": float(abs(np.trace(rho) - 1.0)),
        "hermiticity": herm,
        "min_eigenvalue": float(evals[0]),
    }
