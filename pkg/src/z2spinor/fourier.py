"""Band-limited Fourier series on the circle, viewed over the reals.

A :class:`TruncatedFourierSeries` stores coefficients c_l for l = -L..L.
The scalar field of interest is real: several operators below involve
complex conjugation and are therefore only R-linear, so the module also
provides the real inner product, the sign multiplier ``aps``, and the
realified vector encoding used by the operator matrices.

Complex pairs and their "spouse" map (x, y) -> (conj(y), -conj(x)), plus the
double-bracket pairing on integer-indexed pair sequences, support the
squeezing elimination in :mod:`z2spinor.fredholm`.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterator, Mapping, NamedTuple, Sequence

import numpy as np

from ._backend import convolve as _convolve
from ._backend import eval_series as _eval_series

__all__ = [
    "TruncatedFourierSeries",
    "ComplexPair",
    "spouse",
    "spouse_tuple",
    "double_bracket",
    "aps",
    "convolve",
    "project_band",
    "real_inner",
    "realify",
    "unrealify",
]


@dataclass(frozen=True)
class TruncatedFourierSeries:
    """Coefficients of sum_{|l| <= L} c_l e^{ilt}; immutable after construction.

    Parameters
    ----------
    band_limit : int
        L >= 0.
    coeffs : array_like
        2L+1 complex numbers ordered l = -L..L.
    """

    band_limit: int
    coeffs: np.ndarray

    def __post_init__(self):
        if self.band_limit < 0:
            raise ValueError("band_limit must be nonnegative")
        arr = np.asarray(self.coeffs, dtype=complex)
        if arr.shape != (2 * self.band_limit + 1,):
            raise ValueError(
                f"expected {2 * self.band_limit + 1} coefficients, got {arr.shape}"
            )
        if not np.all(np.isfinite(arr)):
            raise ValueError("coefficients must be finite")
        arr = arr.copy()
        arr.flags.writeable = False
        object.__setattr__(self, "coeffs", arr)

    # -- construction helpers -------------------------------------------------

    @staticmethod
    def zero(band_limit: int = 0) -> "TruncatedFourierSeries":
        return TruncatedFourierSeries(band_limit, np.zeros(2 * band_limit + 1, complex))

    @staticmethod
    def basis(l: int, band_limit: int | None = None) -> "TruncatedFourierSeries":
        """The series e^{ilt}."""
        L = abs(l) if band_limit is None else band_limit
        c = np.zeros(2 * L + 1, complex)
        c[l + L] = 1.0
        return TruncatedFourierSeries(L, c)

    @staticmethod
    def from_dict(entries: Mapping[int, complex]) -> "TruncatedFourierSeries":
        L = max((abs(l) for l in entries), default=0)
        c = np.zeros(2 * L + 1, complex)
        for l, v in entries.items():
            c[l + L] = v
        return TruncatedFourierSeries(L, c)

    # -- coefficient access ---------------------------------------------------

    def coeff(self, l: int) -> complex:
        """c_l, zero outside the band."""
        if abs(l) > self.band_limit:
            return 0j
        return complex(self.coeffs[l + self.band_limit])

    def modes(self) -> Iterator[tuple[int, complex]]:
        L = self.band_limit
        for i, v in enumerate(self.coeffs):
            yield i - L, complex(v)

    # -- arithmetic (real-linear structure plus conjugation) ------------------

    def _binary(self, other, op):
        L = max(self.band_limit, other.band_limit)
        a = self.with_band(L).coeffs
        b = other.with_band(L).coeffs
        return TruncatedFourierSeries(L, op(a, b))

    def __add__(self, other):
        return self._binary(other, np.add)

    def __sub__(self, other):
        return self._binary(other, np.subtract)

    def __mul__(self, scalar):
        return TruncatedFourierSeries(self.band_limit, self.coeffs * complex(scalar))

    __rmul__ = __mul__

    def __neg__(self):
        return self * (-1.0)

    def conj(self) -> "TruncatedFourierSeries":
        """Coefficients of conj(f); (conj f)_l = conj(f_{-l})."""
        return TruncatedFourierSeries(self.band_limit, np.conj(self.coeffs[::-1]))

    def derivative(self) -> "TruncatedFourierSeries":
        """d/dt: c_l -> i l c_l."""
        L = self.band_limit
        ls = np.arange(-L, L + 1)
        return TruncatedFourierSeries(L, 1j * ls * self.coeffs)

    def with_band(self, L: int) -> "TruncatedFourierSeries":
        """Same function on a wider band, or truncated to a narrower one."""
        if L == self.band_limit:
            return self
        c = np.zeros(2 * L + 1, complex)
        lo = max(-L, -self.band_limit)
        hi = min(L, self.band_limit)
        c[lo + L : hi + L + 1] = self.coeffs[lo + self.band_limit : hi + self.band_limit + 1]
        return TruncatedFourierSeries(L, c)

    def trimmed(self, tol: float = 0.0) -> "TruncatedFourierSeries":
        """Drop an all-zero (or below-tol) outer band."""
        B = self.band_limit
        L = B
        while L > 0 and abs(self.coeffs[B + L]) <= tol and abs(self.coeffs[B - L]) <= tol:
            L -= 1
        return self.with_band(L)

    # -- analysis -------------------------------------------------------------

    def norm(self) -> float:
        """L2(S^1) norm, sqrt(2 pi sum |c_l|^2)."""
        return float(np.sqrt(2.0 * np.pi * np.sum(np.abs(self.coeffs) ** 2)))

    def evaluate(self, t: np.ndarray) -> np.ndarray:
        """Values sum c_l e^{ilt} at the sample points t."""
        t = np.asarray(t, dtype=float)
        return _eval_series(np.ascontiguousarray(self.coeffs), self.band_limit, t)

    @staticmethod
    def from_samples(values: np.ndarray, band_limit: int) -> "TruncatedFourierSeries":
        """Project uniform samples on [0, 2pi) onto the band.

        Exact for functions already band-limited below ``len(values)//2``.
        """
        values = np.asarray(values, dtype=complex)
        n = len(values)
        if n < 2 * band_limit + 1:
            raise ValueError("need at least 2L+1 samples")
        spec = np.fft.fft(values) / n
        c = np.zeros(2 * band_limit + 1, complex)
        for l in range(-band_limit, band_limit + 1):
            c[l + band_limit] = spec[l % n]
        return TruncatedFourierSeries(band_limit, c)

    # -- JSON wire format -----------------------------------------------------

    def to_json_dict(self) -> dict:
        return {
            "band_limit": self.band_limit,
            "coeffs": [[float(v.real), float(v.imag)] for v in self.coeffs],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True)

    @staticmethod
    def from_json_dict(d: Mapping) -> "TruncatedFourierSeries":
        L = int(d["band_limit"])
        pairs = d["coeffs"]
        if len(pairs) != 2 * L + 1:
            raise ValueError("coeffs length does not match band_limit")
        return TruncatedFourierSeries(L, np.array([complex(re, im) for re, im in pairs]))

    @staticmethod
    def from_json(s: str) -> "TruncatedFourierSeries":
        return TruncatedFourierSeries.from_json_dict(json.loads(s))


def aps(g: TruncatedFourierSeries) -> TruncatedFourierSeries:
    """Sign multiplier g_l -> sign(l) g_l, with sign(0) = 0.

    The zero-mode convention makes aps(aps(g)) = g minus its mean; see the
    project README for why sign(0) = 0 is the convention used throughout.
    """
    L = g.band_limit
    signs = np.sign(np.arange(-L, L + 1))
    return TruncatedFourierSeries(L, signs * g.coeffs)


def convolve(
    f: TruncatedFourierSeries, g: TruncatedFourierSeries
) -> TruncatedFourierSeries:
    """Coefficient convolution = pointwise product of the functions."""
    out = _convolve(
        np.ascontiguousarray(f.coeffs), np.ascontiguousarray(g.coeffs)
    )
    return TruncatedFourierSeries(f.band_limit + g.band_limit, out)


def project_band(g: TruncatedFourierSeries, k: int) -> TruncatedFourierSeries:
    """P_k g = sum_{|n| <= k} g_n e^{int}, returned on the original band."""
    if k < 0:
        raise ValueError("k must be nonnegative")
    L = g.band_limit
    c = np.array(g.coeffs)
    ls = np.abs(np.arange(-L, L + 1))
    c[ls > k] = 0.0
    return TruncatedFourierSeries(L, c)


def real_inner(f: TruncatedFourierSeries, g: TruncatedFourierSeries) -> float:
    """(f, g) = Re integral f conj(g) dt = 2 pi Re sum f_l conj(g_l).

    Symmetric and R-bilinear; (i f, g) differs from i (f, g) — the complex
    structure is deliberately forgotten.
    """
    L = min(f.band_limit, g.band_limit)
    a = f.coeffs[f.band_limit - L : f.band_limit + L + 1]
    b = g.coeffs[g.band_limit - L : g.band_limit + L + 1]
    return float(2.0 * np.pi * np.real(np.sum(a * np.conj(b))))


# -- complex pairs, spouse, double bracket ------------------------------------


class ComplexPair(NamedTuple):
    first: complex
    second: complex

    def conj(self) -> "ComplexPair":
        return ComplexPair(np.conj(self.first), np.conj(self.second))

    def herm(self, other: "ComplexPair") -> complex:
        """Standard Hermitian pairing on C^2, <a, b> = a1 conj(b1) + a2 conj(b2)."""
        return self.first * np.conj(other.first) + self.second * np.conj(other.second)

    def norm(self) -> float:
        return float(np.hypot(abs(self.first), abs(self.second)))


def spouse(x):
    """(x, y) -> (conj(y), -conj(x)); tuples map entrywise and reverse.

    Applying twice to a pair negates it.  On a tuple (a_1, ..., a_p) the
    result is (spouse(a_p), ..., spouse(a_1)).
    """
    if isinstance(x, ComplexPair):
        return ComplexPair(np.conj(x.second), -np.conj(x.first))
    return tuple(spouse(a) for a in reversed(x))


def spouse_tuple(entries: Sequence[ComplexPair]) -> tuple:
    return spouse(tuple(entries))


def double_bracket(
    u: Mapping[int, ComplexPair], w: Mapping[int, ComplexPair], n: int
) -> complex:
    """<<U, W>>_n = sum_i <u_i, w_{n-i}> over finitely supported sequences."""
    total = 0j
    for i, ui in u.items():
        wj = w.get(n - i)
        if wj is not None:
            total += ui.herm(wj)
    return total


# -- realification -------------------------------------------------------------


def realify(f: TruncatedFourierSeries, L: int | None = None) -> np.ndarray:
    """Real vector [Re c_{-L}, Im c_{-L}, Re c_{-L+1}, ...] of length 2(2L+1)."""
    if L is None:
        L = f.band_limit
    c = f.with_band(L).coeffs
    out = np.empty(2 * len(c))
    out[0::2] = c.real
    out[1::2] = c.imag
    return out


def unrealify(v: np.ndarray) -> TruncatedFourierSeries:
    """Inverse of :func:`realify`."""
    if len(v) % 4 != 2:
        raise ValueError("realified vectors have length 2(2L+1)")
    c = v[0::2] + 1j * v[1::2]
    return TruncatedFourierSeries((len(c) - 1) // 2, c)
