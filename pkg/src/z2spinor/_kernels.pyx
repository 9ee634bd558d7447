# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled versions of the hot kernels; see _kernels_py.py for the spec."""

import numpy as np

cimport numpy as cnp
from libc.math cimport cos, sin, tgamma

cnp.import_array()


def convolve(cnp.ndarray[cnp.complex128_t, ndim=1] f,
             cnp.ndarray[cnp.complex128_t, ndim=1] g):
    cdef Py_ssize_t nf = f.shape[0], ng = g.shape[0]
    cdef cnp.ndarray[cnp.complex128_t, ndim=1] out = np.zeros(nf + ng - 1, dtype=np.complex128)
    cdef Py_ssize_t i, j
    cdef double complex fi
    for i in range(nf):
        fi = f[i]
        if fi == 0:
            continue
        for j in range(ng):
            out[i + j] = out[i + j] + fi * g[j]
    return out


def bessel_i_grid(double p, cnp.ndarray[cnp.float64_t, ndim=1] x):
    cdef Py_ssize_t n = x.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out = np.empty(n, dtype=np.float64)
    cdef Py_ssize_t i
    cdef double xi, half, q, term, total
    cdef int m
    for i in range(n):
        xi = x[i]
        if xi > 700.0:
            raise ValueError("bessel_i_grid: x > 700 would overflow")
        if xi < 0.0:
            raise ValueError("bessel_i_grid: x must be nonnegative")
        half = xi / 2.0
        term = half ** p / tgamma(p + 1.0)
        total = term
        q = half * half
        m = 0
        while True:
            term = term * q / ((m + 1.0) * (m + 1.0 + p))
            total += term
            m += 1
            if m > 4000 or abs(term) <= 1e-16 * abs(total):
                break
        out[i] = total
    return out


def assemble_t_matrix(cnp.ndarray[cnp.complex128_t, ndim=1] a,
                      cnp.ndarray[cnp.complex128_t, ndim=1] b,
                      int L, int M):
    cdef int Lout = L + M
    cdef cnp.ndarray[cnp.float64_t, ndim=2] out = np.zeros(
        (2 * (2 * Lout + 1), 2 * (2 * L + 1)), dtype=np.float64)
    cdef int n, l, sl
    cdef Py_ssize_t r, c
    cdef double complex A, B, s, d
    for n in range(-Lout, Lout + 1):
        r = 2 * (n + Lout)
        for l in range(-L, L + 1):
            c = 2 * (l + L)
            A = 0
            B = 0
            if -M <= n - l <= M:
                A = a[n - l + M]
            if -M <= n + l <= M:
                sl = (l > 0) - (l < 0)
                B = sl * b[n + l + M]
            s = A + B
            d = A - B
            out[r, c] = s.real
            out[r + 1, c] = s.imag
            out[r, c + 1] = -d.imag
            out[r + 1, c + 1] = d.real
    return out


def eval_series(cnp.ndarray[cnp.complex128_t, ndim=1] coeffs, int L,
                cnp.ndarray[cnp.float64_t, ndim=1] t):
    cdef Py_ssize_t npts = t.shape[0]
    cdef cnp.ndarray[cnp.complex128_t, ndim=1] out = np.empty(npts, dtype=np.complex128)
    cdef Py_ssize_t i
    cdef int l
    cdef double complex phase, acc, step
    for i in range(npts):
        step = cos(t[i]) + 1j * sin(t[i])
        phase = cos(L * t[i]) - 1j * sin(L * t[i])
        acc = 0
        for l in range(2 * L + 1):
            acc = acc + coeffs[l] * phase
            phase = phase * step
        out[i] = acc
    return out
