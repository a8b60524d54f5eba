import warnings

import numpy as np
import pytest

from iontrap_nm.errors import TruncationWarning
from iontrap_nm.hilbert import ModelParams, ModeSpec

NU1, NU2 = 2.32, 3.16
ETA1, ETA2 = 0.069, 0.072


def two_mode(fock_dim=15, **kw):
    kw.setdefault("rabi_mhz", 2.245)
    kw.setdefault("gamma_plus_mhz", 0.0049)
    kw.setdefault("gamma_minus_mhz", 0.0008)
    return ModelParams(modes=(ModeSpec(NU1, ETA1, fock_dim), ModeSpec(NU2, ETA2, fock_dim)), **kw)


def single_mode(fock_dim=15, **kw):
    kw.setdefault("rabi_mhz", 2.2)
    kw.setdefault("gamma_plus_mhz", 0.004)
    kw.setdefault("gamma_minus_mhz", 0.004)
    return ModelParams(modes=(ModeSpec(NU1, ETA1, fock_dim),), **kw)


def random_density(dim, rng, rank=None):
    rank = rank or dim
    a = rng.normal(size=(dim, rank)) + 1j * rng.normal(size=(dim, rank))
    rho = a @ a.conj().T
    return rho / np.trace(rho)


def random_hermitian(dim, rng):
    a = rng.normal(size=(dim, dim)) + 1j * rng.normal(size=(dim, dim))
    return 0.5 * (a + a.conj().T)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def quiet():
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", TruncationWarning)
        yield


# acceptance criteria: one PASS/FAIL line each, printed after the run
CRITERIA = {
    1: "displacement oracle",
    2: "pure dephasing closed form",
    3: "carrier Rabi flop",
    4: "conservation and truncation",
    5: "frame consistency",
    6: "NM vs Omega shape",
    7: "circle locus",
    8: "points A-D ordering",
    9: "error chain",
    10: "motional-state ordering",
    11: "determinism of presets",
}
_ACCEPTANCE: dict = {}


@pytest.fixture
def criterion():
    def record(n, ok, detail):
        _ACCEPTANCE[n] = (bool(ok), detail)
        return bool(ok)
    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n, name in CRITERIA.items():
        ok, detail = _ACCEPTANCE.get(n, (False, "not evaluated"))
        terminalreporter.write_line(f"criterion {n:2d} [{'PASS' if ok else 'FAIL'}] {name}: {detail}")
