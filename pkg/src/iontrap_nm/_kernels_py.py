"""Pure-numpy RK4 propagation of the block-structured dephasing master equation.

The composite state is split into qubit blocks ``[[ρ_ee, ρ_eg], [ρ_ge, ρ_gg]]``
of motional size ``M``.  The Hamiltonian is
``[[diag_e, K C], [K* C†, diag_g]]`` with ``C`` either a single dense factor or
a two-mode Kronecker product/sum of factors, so ``Hρ`` never needs a dense
``2M × 2M`` product.
"""

from __future__ import annotations

import numpy as np


def apply_coupling(factors, product, Y, alpha=1.0):
    """``alpha * C @ Y`` for ``C = D1`` or ``D1 ⊗ D2`` (``product``) or ``D1⊗I + I⊗D2``."""
    if len(factors) == 1:
        return alpha * (factors[0] @ Y)
    D1, D2 = factors
    d1, d2 = D1.shape[0], D2.shape[0]
    N = Y.shape[1]
    Y3 = Y.reshape(d1, d2, N)
    if product:
        W = np.matmul(D2, Y3)
        Z = D1 @ W.reshape(d1, d2 * N)
    else:
        Z = (D1 @ Y.reshape(d1, d2 * N)) + np.matmul(D2, Y3).reshape(d1, d2 * N)
    return alpha * Z.reshape(d1 * d2, N)


def rhs(rho, t, diag_e, diag_g, factors, factors_dag, product, amp, drive_rate, gamma):
    M = diag_e.shape[0]
    ph = amp * np.exp(1j * drive_rate * t)
    top = rho[:M]
    bot = rho[M:]
    hr = np.empty_like(rho)
    hr[:M] = diag_e[:, None] * top + apply_coupling(factors, product, bot, ph)
    hr[M:] = diag_g[:, None] * bot + apply_coupling(factors_dag, product, top, np.conj(ph))
    out = -1j * (hr - hr.conj().T)
    if gamma:
        out[:M, M:] -= 2.0 * gamma * rho[:M, M:]
        out[M:, :M] -= 2.0 * gamma * rho[M:, :M]
    return out


def rk4_advance(rho, diag_e, diag_g, factors, factors_dag, product, amp, drive_rate,
                gamma, t0, h, n_steps):
    """Advance ``rho`` by ``n_steps`` classical RK4 steps of size ``h``; returns a new array."""
    rho = np.array(rho, dtype=complex, copy=True)
    args = (diag_e, diag_g, factors, factors_dag, product, amp, drive_rate, gamma)
    t = t0
    for _ in range(n_steps):
        k1 = rhs(rho, t, *args)
        k2 = rhs(rho + 0.5 * h * k1, t + 0.5 * h, *args)
        k3 = rhs(rho + 0.5 * h * k2, t + 0.5 * h, *args)
        k4 = rhs(rho + h * k3, t + h, *args)
        rho += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        t += h
    return rho
