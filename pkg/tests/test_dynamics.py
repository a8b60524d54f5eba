import math

import numpy as np
import pytest

from iontrap_nm import hilbert as hb
from iontrap_nm.dynamics import (
    InitialCondition,
    MotionalState,
    QubitTrajectory,
    TimeGrid,
    evolve,
    evolve_qubit,
    lindblad_rhs,
    pauli_expectations,
    prepare_qubit,
    pulse_operator,
    qubit_density,
    substeps,
    to_lab_frame,
)
from iontrap_nm.errors import IntegrationError, TruncationWarning
from iontrap_nm.hilbert import ModelParams, ModeSpec

from conftest import NU1, random_density, random_hermitian, single_mode, two_mode

GROUND = (MotionalState("ground"),)


def bloch_of(ket):
    return pauli_expectations(np.outer(ket, ket.conj()))


# --- lindblad_rhs ------------------------------------------------------------


def test_rhs_stationary_thermal():
    p = two_mode(4, rabi_mhz=0.0)
    rho = InitialCondition("g").density(p)
    assert np.max(np.abs(lindblad_rhs(rho, hb.build_hamiltonian(p), 0.0))) < 1e-12


def test_rhs_dephasing_coherence():
    p = single_mode(3)
    rho = InitialCondition("plus_x", GROUND).density(p)
    gamma = 0.01
    out = lindblad_rhs(rho, np.zeros_like(rho), gamma)
    M = p.motional_dim
    assert np.allclose(out[:M, M:], -2 * gamma * rho[:M, M:])
    assert np.allclose(out[:M, :M], 0)


def test_rhs_traceless(rng):
    for _ in range(10):
        rho = random_density(8, rng)
        H = random_hermitian(8, rng)
        assert abs(np.trace(lindblad_rhs(rho, H, 0.3))) < 1e-12


def test_rhs_shape_mismatch():
    with pytest.raises(ValueError):
        lindblad_rhs(np.eye(4), np.eye(6), 0.1)


# --- states and observables --------------------------------------------------


def test_pauli_expectations_examples():
    assert np.allclose(pauli_expectations(np.outer(hb.KET_E, hb.KET_E)), [0, 0, 1])
    assert np.allclose(pauli_expectations(np.eye(2) / 2), [0, 0, 0])
    assert np.allclose(bloch_of(prepare_qubit("plus_y")), [0, 1, 0])
    assert np.allclose(bloch_of(prepare_qubit("plus_x")), [1, 0, 0])
    assert np.allclose(bloch_of(prepare_qubit("minus_x")), [-1, 0, 0])
    assert np.allclose(bloch_of(prepare_qubit("minus_y")), [0, -1, 0])
    assert np.allclose(bloch_of(prepare_qubit("g")), [0, 0, -1])


def test_pulse_preparation():
    # carrier π/2 pulse on |g⟩ at phase 0 gives (|g⟩ - i|e⟩)/√2
    k = pulse_operator(math.pi / 2, 0.0) @ hb.KET_G
    target = (hb.KET_G - 1j * hb.KET_E) / math.sqrt(2)
    assert abs(abs(np.vdot(target, k)) - 1) < 1e-12
    k = pulse_operator(math.pi / 2, -math.pi / 2) @ hb.KET_G
    assert abs(abs(np.vdot(prepare_qubit("plus_x"), k)) - 1) < 1e-12
    for name in ("plus_x", "minus_x", "plus_y", "minus_y"):
        a, b = prepare_qubit(name, "ideal"), prepare_qubit(name, "pulse")
        assert abs(abs(np.vdot(a, b)) - 1) < 1e-12, name


def test_initial_condition_antipode():
    for name in ("g", "plus_x", "plus_y"):
        ic = InitialCondition(name)
        a, b = ic.qubit_ket(), ic.antipode().qubit_ket()
        assert abs(np.vdot(a, b)) < 1e-12
    ic = InitialCondition((0.7, 5.9))
    assert abs(np.vdot(ic.qubit_ket(), ic.antipode().qubit_ket())) < 1e-12
    with pytest.raises(ValueError):
        InitialCondition((4.0, 0.0))
    with pytest.raises(ValueError):
        InitialCondition((1.0, 2 * math.pi))


def test_bloch_angles_match_named_states():
    assert np.allclose(bloch_of(InitialCondition((math.pi / 2, 0.0)).qubit_ket()), [1, 0, 0])
    assert np.allclose(bloch_of(InitialCondition((math.pi / 2, math.pi / 2)).qubit_ket()), [0, 1, 0])


def test_motional_states():
    m = ModeSpec(NU1, 0.069, 12, 0.05)
    assert np.allclose(MotionalState("ground").density(m), hb.fock_state(0, 12))
    assert np.allclose(MotionalState("thermal").density(m), hb.thermal_state(0.05, 12))
    c = MotionalState("coherent", [1.0, 0.0]).density(m)
    n = np.trace(c @ hb.number_operator(12)).real
    assert n == pytest.approx(1.0, abs=1e-4)
    assert MotionalState("coherent", 1j).to_dict() == {"kind": "coherent", "value": [0.0, 1.0]}


# --- evolution ---------------------------------------------------------------


def test_pure_dephasing_closed_form():
    gamma = 0.0049
    p = single_mode(4, rabi_mhz=0.0, gamma_plus_mhz=gamma)
    grid = TimeGrid(0, 100, 201)
    tr = evolve_qubit(InitialCondition("plus_x", GROUND), p, grid)
    assert np.max(np.abs(tr.bloch[:, 0] - np.exp(-2 * gamma * grid.times))) < 1e-6


def test_no_drive_no_dephasing_keeps_populations():
    p = two_mode(3, rabi_mhz=0.0, gamma_plus_mhz=0.0)
    rhos = evolve(InitialCondition("plus_x"), p, TimeGrid(0, 5, 6))
    assert np.max(np.abs(np.diag(rhos[-1]) - np.diag(rhos[0]))) < 1e-9


def test_carrier_rabi_flop():
    p = ModelParams(rabi_mhz=1.0, modes=(ModeSpec(NU1, 0.0, 2), ModeSpec(3.16, 0.0, 2)))
    grid = TimeGrid(0, 0.5, 51)
    tr = evolve_qubit(InitialCondition("g"), p, grid, gamma=0.0)
    assert abs(tr.bloch[-1, 2] - 1) < 1e-6
    assert np.max(np.abs(tr.bloch[:, 2] + np.cos(2 * math.pi * grid.times))) < 1e-6


def test_purity_decreases_under_pure_dephasing():
    p = single_mode(3, rabi_mhz=0.0, gamma_plus_mhz=0.02)
    rhos = evolve(InitialCondition("plus_y"), p, TimeGrid(0, 20, 21))
    purity = np.einsum("tij,tji->t", rhos, rhos).real
    assert np.all(np.diff(purity) <= 1e-15)


def test_density_invariants_short_two_mode(quiet):
    p = two_mode(5)
    for rho in evolve(InitialCondition("plus_x"), p, TimeGrid(0, 3, 7)):
        d = hb.density_defects(rho)
        assert d["trace_error"] < 1e-9
        assert d["hermiticity"] < 1e-9
        assert d["min_eigenvalue"] > -1e-8


def test_substep_rule():
    p = two_mode(3, rabi_mhz=1.0)
    n = substeps(p, 0.5)
    assert 0.5 / n * 2 * math.pi * 3.16 <= 0.05 + 1e-12
    assert 0.5 / (n - 1) * 2 * math.pi * 3.16 > 0.05


def test_substep_halving_changes_little():
    p = single_mode(10)
    grid = TimeGrid(0, 10, 21)
    a = evolve_qubit(InitialCondition("plus_x"), p, grid)
    b = evolve_qubit(InitialCondition("plus_x"), p, grid, step_bound=0.025)
    assert np.max(np.abs(a.bloch - b.bloch)) < 1e-6


def test_strong_field_departs_from_carrier(quiet):
    # the weak-field reference is the carrier slowed by the Debye-Waller
    # factor; against the bare cos(Ωt) the weak drive is off by ~0.06 at 20 μs
    grid = TimeGrid(0, 20, 401)
    dw = math.exp(-(0.069**2 + 0.072**2) / 2)
    dev = {}
    for rabi in (2.32, 0.1):
        p = two_mode(6, rabi_mhz=rabi)
        tr = evolve_qubit(InitialCondition("g"), p, grid, gamma=0.0)
        dev[rabi] = np.max(np.abs(tr.bloch[:, 2] + np.cos(2 * math.pi * rabi * dw * grid.times)))
    assert dev[2.32] > 0.05
    assert dev[0.1] < 0.02


def test_frame_consistency_short():
    p = single_mode(10, rabi_mhz=1.0, detuning_mhz=1.0)
    grid = TimeGrid(0, 10, 41)
    for state in ("plus_x", "g", "plus_y"):
        ic = InitialCondition(state)
        lab = evolve_qubit(ic, p, grid, "lab")
        rot = to_lab_frame(evolve_qubit(ic, p, grid, "interaction"), 1.0)
        assert np.max(np.abs(lab.bloch - rot.bloch)) < 1e-3
        # the opposite rotation sense does not agree
        wrong = to_lab_frame(evolve_qubit(ic, p, grid, "interaction"), 1.0, angle_factor=-1.0)
        if state != "g":
            assert np.max(np.abs(lab.bloch - wrong.bloch)) > 0.1


def test_integration_failure_is_reported():
    p = single_mode(4)
    with pytest.raises(IntegrationError):
        evolve_qubit(InitialCondition("plus_x"), p, TimeGrid(0, 100, 3), step_bound=500.0)


def test_truncation_warning():
    p = two_mode(3, rabi_mhz=3.0)
    with pytest.warns(TruncationWarning):
        evolve_qubit(InitialCondition("plus_x"), p, TimeGrid(0, 2, 3))


# --- frames and trajectories -------------------------------------------------


def _traj(rng, n=50, errors=True):
    t = np.linspace(0, 10, n)
    b = rng.normal(size=(n, 3))
    b /= np.linalg.norm(b, axis=1)[:, None] * 1.1
    e = np.abs(rng.normal(size=(n, 3))) * 0.01 if errors else None
    return QubitTrajectory(t, b, e)


def test_to_lab_frame_properties(rng):
    tr = _traj(rng)
    same = to_lab_frame(tr, 0.0)
    assert np.array_equal(same.bloch, tr.bloch)
    rot = to_lab_frame(tr, 0.83)
    assert np.array_equal(rot.bloch[:, 2], tr.bloch[:, 2])
    assert np.max(np.abs(np.linalg.norm(rot.bloch, axis=1) - np.linalg.norm(tr.bloch, axis=1))) < 1e-12
    # rotation by +δt: x axis turns towards y
    one = QubitTrajectory([0.0, 0.25], [[1, 0, 0], [1, 0, 0]])
    assert np.allclose(to_lab_frame(one, 1.0).bloch[1], [0, 1, 0], atol=1e-12)
    assert rot.bloch_err is not None and np.all(rot.bloch_err >= 0)


def test_trajectory_csv_roundtrip(tmp_path, rng):
    tr = _traj(rng)
    tr.to_csv(tmp_path / "a.csv")
    back = QubitTrajectory.from_csv(tmp_path / "a.csv")
    assert np.array_equal(back.bloch, tr.bloch)
    assert np.array_equal(back.bloch_err, tr.bloch_err)
    assert np.array_equal(back.times, tr.times)
    plain = _traj(rng, errors=False)
    plain.to_csv(tmp_path / "b.csv")
    assert open(tmp_path / "b.csv").readline().strip() == "t_us,sx,sy,sz"


def test_qubit_density_roundtrip():
    s = np.array([0.3, -0.2, 0.5])
    assert np.allclose(pauli_expectations(qubit_density(s)), s)


def test_time_grid():
    g = TimeGrid.from_step(100, 0.5)
    assert g.n_points == 201 and g.dt == 0.5
    with pytest.raises(ValueError):
        TimeGrid(1, 1, 5)
    with pytest.raises(ValueError):
        TimeGrid(0, 1, 1)
