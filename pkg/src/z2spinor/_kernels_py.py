"""Pure-numpy implementations of the hot kernels.

The compiled extension (``_kernels.pyx``) provides the same four entry
points; ``_backend`` picks whichever is available.  Keep the two in sync:
``tests/test_kernels.py`` checks them against each other on random data.
"""

import numpy as np


def convolve(f: np.ndarray, g: np.ndarray) -> np.ndarray:
    """Full complex coefficient convolution, out[n] = sum_j f[j] g[n-j]."""
    return np.convolve(f, g)


def bessel_i_grid(p: float, x: np.ndarray) -> np.ndarray:
    """Modified Bessel function of the first kind I_p on an array of x >= 0.

    Power series sum_m (x/2)^(2m+p) / (m! Gamma(m+p+1)), accumulated with the
    term recurrence t_{m+1} = t_m * (x/2)^2 / ((m+1)(m+p+1)) and truncated
    once the newest term drops below 1e-16 of the running sum everywhere.
    Requires p >= -1/2 and x <= 700 (e^700 is the overflow edge).
    """
    x = np.asarray(x, dtype=float)
    if np.any(x > 700.0):
        raise ValueError("bessel_i_grid: x > 700 would overflow")
    if np.any(x < 0.0):
        raise ValueError("bessel_i_grid: x must be nonnegative")
    from math import gamma

    half = x / 2.0
    with np.errstate(divide="ignore"):
        term = half**p / gamma(p + 1.0)
    total = term.copy()
    q = half * half
    m = 0
    while True:
        term = term * q / ((m + 1.0) * (m + 1.0 + p))
        total += term
        m += 1
        if m > 4000 or np.all(np.abs(term) <= 1e-16 * np.abs(total)):
            break
    return total


def assemble_t_matrix(a: np.ndarray, b: np.ndarray, L: int, M: int) -> np.ndarray:
    """Real matrix of the R-linear map c -> a * c + b * conj(aps(c)).

    ``*`` is the coefficient convolution and aps the mode-sign multiplier;
    ``a`` and ``b`` are coefficient arrays indexed m = -M..M.  Output rows
    cover n = -(L+M)..(L+M), columns the realified basis (Re c_l, Im c_l)
    for l = -L..L, interleaved (re, im).  Per (n, l), with A = a[n-l] and
    B = sign(l) b[n+l], the 2x2 block is
    [[Re(A+B), -Im(A-B)], [Im(A+B), Re(A-B)]].
    """
    Lout = L + M
    nrow = 2 * (2 * Lout + 1)
    ncol = 2 * (2 * L + 1)
    out = np.zeros((nrow, ncol))
    ls = np.arange(-L, L + 1)
    ns = np.arange(-Lout, Lout + 1)
    diff = ns[:, None] - ls[None, :]
    summ = ns[:, None] + ls[None, :]
    A = np.zeros((len(ns), len(ls)), dtype=complex)
    B = np.zeros_like(A)
    mask = np.abs(diff) <= M
    A[mask] = a[diff[mask] + M]
    mask = np.abs(summ) <= M
    B[mask] = b[summ[mask] + M]
    B *= np.sign(ls)[None, :]
    out[0::2, 0::2] = (A + B).real
    out[1::2, 0::2] = (A + B).imag
    out[0::2, 1::2] = -(A - B).imag
    out[1::2, 1::2] = (A - B).real
    return out


def eval_series(coeffs: np.ndarray, L: int, t: np.ndarray) -> np.ndarray:
    """Evaluate sum_l coeffs[l+L] e^{ilt} at the points t."""
    ls = np.arange(-L, L + 1)
    return np.exp(1j * np.outer(t, ls)) @ coeffs
