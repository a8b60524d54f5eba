import numpy as np
import pytest

from iontrap_nm import _backend, _kernels_py
from iontrap_nm import hilbert as hb
from iontrap_nm.dynamics import InitialCondition, TimeGrid, evolve_qubit, kernel_args, lindblad_rhs

from conftest import random_density, single_mode, two_mode

compiled = pytest.mark.skipif(_backend.compiled_rk4_advance is None, reason="extension not built")

CASES = [
    ("one mode", lambda: single_mode(6, detuning_mhz=0.4)),
    ("two modes product", lambda: two_mode(4, detuning_mhz=-0.3)),
    ("two modes sum", lambda: two_mode(3, coupling="sum", detuning_mhz=0.2)),
]


def _dense_rk4(rho, H_of_t, gamma, t0, h, n):
    t = t0
    for _ in range(n):
        k1 = lindblad_rhs(rho, H_of_t(t), gamma)
        k2 = lindblad_rhs(rho + 0.5 * h * k1, H_of_t(t + 0.5 * h), gamma)
        k3 = lindblad_rhs(rho + 0.5 * h * k2, H_of_t(t + 0.5 * h), gamma)
        k4 = lindblad_rhs(rho + h * k3, H_of_t(t + h), gamma)
        rho = rho + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        t += h
    return rho


@pytest.mark.parametrize("name,make", CASES)
@pytest.mark.parametrize("frame", ["lab", "interaction"])
def test_structured_rhs_matches_dense(name, make, frame, rng):
    p = make()
    k = kernel_args(p, frame)
    rho = random_density(p.dim, rng)
    t = 0.37
    H = hb.build_hamiltonian(p) if frame == "lab" else hb.interaction_hamiltonian(p, t)
    fast = _kernels_py.rhs(rho, t, k.diag_e, k.diag_g, k.factors, k.factors_dag, k.product,
                           k.amp, k.drive_rate, 0.02)
    assert np.max(np.abs(fast - lindblad_rhs(rho, H, 0.02))) < 1e-12


@pytest.mark.parametrize("backend", ["python", pytest.param("cython", marks=compiled)])
@pytest.mark.parametrize("name,make", CASES)
def test_backend_matches_dense_rk4(backend, name, make, rng):
    p = make()
    k = kernel_args(p, "interaction")
    rho = random_density(p.dim, rng)
    h, n = 0.002, 5
    got = _backend.get_rk4(backend)(rho, k.diag_e, k.diag_g, k.factors, k.factors_dag, k.product,
                                    k.amp, k.drive_rate, 0.01, 0.1, h, n)
    ref = _dense_rk4(rho, lambda t: hb.interaction_hamiltonian(p, t), 0.01, 0.1, h, n)
    assert np.max(np.abs(got - ref)) < 1e-12


@compiled
def test_compiled_and_python_trajectories_agree():
    p = two_mode(4)
    grid = TimeGrid(0, 2, 5)
    a = evolve_qubit(InitialCondition("plus_x"), p, grid, backend="python")
    b = evolve_qubit(InitialCondition("plus_x"), p, grid, backend="cython")
    assert np.max(np.abs(a.bloch - b.bloch)) < 1e-12


@compiled
def test_compiled_keeps_state_hermitian(rng):
    p = two_mode(4)
    k = kernel_args(p)
    rho = random_density(p.dim, rng)
    out = _backend.compiled_rk4_advance(rho, k.diag_e, k.diag_g, k.factors, k.factors_dag, k.product,
                                        k.amp, k.drive_rate, 0.005, 0.0, 0.001, 50)
    assert np.array_equal(out, out.conj().T)


def test_backend_selection():
    assert _backend.get_rk4("python") is _kernels_py.rk4_advance
    with pytest.raises(ValueError):
        _backend.get_rk4("fortran")
    assert _backend.BACKEND in ("python", "cython")


def test_rk4_does_not_modify_input(rng):
    p = single_mode(4)
    k = kernel_args(p)
    rho = random_density(p.dim, rng)
    keep = rho.copy()
    _backend.rk4_advance(rho, k.diag_e, k.diag_g, k.factors, k.factors_dag, k.product,
                         k.amp, k.drive_rate, 0.0, 0.0, 0.01, 3)
    assert np.array_equal(rho, keep)
