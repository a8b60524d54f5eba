# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled RK4 core for the block-structured dephasing master equation.

Same contract as ``_kernels_py.rk4_advance``.  ``Hρ`` is formed with BLAS
``zgemm`` on the qubit row blocks; the rest of each RK4 stage (diagonal
energies, ``-i(Hρ - ρH)``, dephasing and the stage update) is one fused,
cache-tiled pass.  The state is kept exactly Hermitian, which lets the
diagonal part of the commutator be applied elementwise.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport cos, sin
from scipy.linalg.cython_blas cimport zgemm

cnp.import_array()

ctypedef double complex cplx

DEF TILE = 16


cdef inline void gemm_rm(int m, int n, int k, cplx alpha, cplx* A, cplx* B,
                         cplx beta, cplx* C) noexcept nogil:
    # row-major C(m x n) = alpha A(m x k) B(k x n) + beta C through the
    # column-major identity C^T = B^T A^T
    cdef char tr = b'N'
    zgemm(&tr, &tr, &n, &m, &k, &alpha, B, &n, A, &k, &beta, C, &n)


cdef void apply_coupling(int nf, bint product, cplx* D1, int d1, cplx* D2, int d2,
                         cplx* Y, int N, cplx alpha, cplx* Z, cplx* W) noexcept nogil:
    # Z (M x N) = alpha * C @ Y with M = d1 (one mode) or d1*d2
    cdef int k
    cdef int stride
    if nf == 1:
        gemm_rm(d1, N, d1, alpha, D1, Y, 0.0, Z)
        return
    stride = d2 * N
    if product:
        for k in range(d1):
            gemm_rm(d2, N, d2, 1.0, D2, Y + k * stride, 0.0, W + k * stride)
        gemm_rm(d1, stride, d1, alpha, D1, W, 0.0, Z)
    else:
        gemm_rm(d1, stride, d1, alpha, D1, Y, 0.0, Z)
        for k in range(d1):
            gemm_rm(d2, N, d2, alpha, D2, Y + k * stride, 1.0, Z + k * stride)


cdef struct Problem:
    int M
    int n
    double* diag          # length 2M: energies of the e rows then the g rows
    int nf
    bint product
    cplx* D1
    cplx* D1d
    int d1
    cplx* D2
    cplx* D2d
    int d2
    cplx amp
    double rate
    double gamma
    cplx* hr              # scratch for H rho
    cplx* W               # scratch for the two-mode contraction


cdef void h_rho(Problem* p, cplx* y, double t) noexcept nogil:
    # off-diagonal (coupling) part of H rho into p.hr
    cdef int M = p.M
    cdef int n = p.n
    cdef cplx ph = p.amp * (cos(p.rate * t) + 1j * sin(p.rate * t))
    apply_coupling(p.nf, p.product, p.D1, p.d1, p.D2, p.d2, y + M * n, n, ph, p.hr, p.W)
    apply_coupling(p.nf, p.product, p.D1d, p.d1, p.D2d, p.d2, y, n, ph.conjugate(),
                   p.hr + M * n, p.W)


cdef inline cplx deriv(cplx* hr, cplx* y, double* e, long ij, long ji, int i, int j,
                       int M, double g2) noexcept nogil:
    # -i[H, y]_ij - dephasing; hr holds the coupling part of H y and y is
    # exactly Hermitian, so the diagonal energies reduce to (e_i - e_j) y_ij
    cdef cplx k = -1j * (hr[ij] - hr[ji].conjugate() + (e[i] - e[j]) * y[ij])
    if (i < M) != (j < M):
        k = k - g2 * y[ij]
    return k


cdef void stage(Problem* p, cplx* y, cplx* R, cplx* A, cplx* Yout,
                double acc_w, double y_w, int mode) noexcept nogil:
    # stage derivative k consumed in place:
    #   mode 0: A = k,        Yout = R + y_w k
    #   mode 1: A += acc_w k, Yout = R + y_w k
    #   mode 2: R += y_w (A + k)
    # Yout may alias y: entry ij of y is read only in iteration ij.
    # k_ji is evaluated independently and equals conj(k_ij) bit for bit.
    cdef int n = p.n
    cdef int M = p.M
    cdef double* e = p.diag
    cdef cplx* hr = p.hr
    cdef double g2 = 2.0 * p.gamma
    cdef int bi, bj, i, j, iend, jend
    cdef long ij
    cdef cplx k
    for bi in range(0, n, TILE):
        iend = bi + TILE if bi + TILE < n else n
        for bj in range(0, n, TILE):
            jend = bj + TILE if bj + TILE < n else n
            for i in range(bi, iend):
                if mode == 0:
                    for j in range(bj, jend):
                        ij = <long>i * n + j
                        k = deriv(hr, y, e, ij, <long>j * n + i, i, j, M, g2)
                        A[ij] = k
                        Yout[ij] = R[ij] + y_w * k
                elif mode == 1:
                    for j in range(bj, jend):
                        ij = <long>i * n + j
                        k = deriv(hr, y, e, ij, <long>j * n + i, i, j, M, g2)
                        A[ij] = A[ij] + acc_w * k
                        Yout[ij] = R[ij] + y_w * k
                else:
                    for j in range(bj, jend):
                        ij = <long>i * n + j
                        k = deriv(hr, y, e, ij, <long>j * n + i, i, j, M, g2)
                        R[ij] = R[ij] + y_w * (A[ij] + k)


def rk4_advance(rho, diag_e, diag_g, factors, factors_dag, bint product, amp,
                double drive_rate, double gamma, double t0, double h, long n_steps):
    rho = np.asarray(rho, dtype=np.complex128)
    # exact Hermitian start: lower triangle mirrors the upper one
    cdef cnp.ndarray[cplx, ndim=2, mode="c"] r = np.ascontiguousarray(
        np.triu(rho) + np.triu(rho, 1).conj().T)
    cdef int n = r.shape[0]
    cdef int M = n // 2
    cdef int nf = len(factors)
    cdef cnp.ndarray[double, ndim=1, mode="c"] diag = np.ascontiguousarray(
        np.concatenate([np.asarray(diag_e, float), np.asarray(diag_g, float)]))
    cdef cnp.ndarray[cplx, ndim=2, mode="c"] f1 = np.ascontiguousarray(factors[0], dtype=np.complex128)
    cdef cnp.ndarray[cplx, ndim=2, mode="c"] f1d = np.ascontiguousarray(factors_dag[0], dtype=np.complex128)
    cdef cnp.ndarray[cplx, ndim=2, mode="c"] f2 = np.ascontiguousarray(factors[nf - 1], dtype=np.complex128)
    cdef cnp.ndarray[cplx, ndim=2, mode="c"] f2d = np.ascontiguousarray(factors_dag[nf - 1], dtype=np.complex128)
    cdef cnp.ndarray[cplx, ndim=1] acc = np.empty(n * n, dtype=np.complex128)
    cdef cnp.ndarray[cplx, ndim=1] ybuf = np.empty(n * n, dtype=np.complex128)
    cdef cnp.ndarray[cplx, ndim=1] hbuf = np.empty(n * n, dtype=np.complex128)
    cdef cnp.ndarray[cplx, ndim=1] wbuf = np.empty(M * n, dtype=np.complex128)
    cdef Problem p
    cdef cplx* R = &r[0, 0]
    cdef cplx* A = &acc[0]
    cdef cplx* Y = &ybuf[0]
    cdef long step
    cdef double t = t0
    cdef double hh = 0.5 * h

    if n != r.shape[1] or diag.shape[0] != n:
        raise ValueError("state shape does not match the Hamiltonian blocks")
    if nf not in (1, 2):
        raise ValueError("one or two motional factors are supported")

    p.M = M
    p.n = n
    p.diag = &diag[0]
    p.nf = nf
    p.product = product
    p.D1 = &f1[0, 0]
    p.D1d = &f1d[0, 0]
    p.d1 = f1.shape[0]
    p.D2 = &f2[0, 0]
    p.D2d = &f2d[0, 0]
    p.d2 = f2.shape[0] if nf == 2 else 1
    p.amp = amp
    p.rate = drive_rate
    p.gamma = gamma
    p.hr = &hbuf[0]
    p.W = &wbuf[0]

    with nogil:
        for step in range(n_steps):
            h_rho(&p, R, t)
            stage(&p, R, R, A, Y, 1.0, hh, 0)
            h_rho(&p, Y, t + hh)
            stage(&p, Y, R, A, Y, 2.0, hh, 1)
            h_rho(&p, Y, t + hh)
            stage(&p, Y, R, A, Y, 2.0, h, 1)
            h_rho(&p, Y, t + h)
            stage(&p, Y, R, A, Y, 0.0, h / 6.0, 2)
            t = t + h
    return r
