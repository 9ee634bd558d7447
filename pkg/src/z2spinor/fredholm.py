"""The real-linear symbol operator T, its adjoint, matrices and diagnostics.

Given a pair of band-limited symbols (d+, d-) with |d+|^2 + |d-|^2 bounded
away from zero, the operator

    T(c) = conj(d-) c - d+ conj(aps(c))

acts on circle series and is only R-linear because of the conjugations.
This module provides the operator and its adjoint, dense realified matrix
realizations, singular-value diagnostics (kernel/cokernel dimensions and
index with truncation-stability checks), the elimination ("squeeze") of a
pair tuple to a frontier-invertible form, the high-frequency solve that
inverts T outside the middle band, restricted smallest-singular-value
floors, and the recovery and pairing maps used by the deformation solver.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from ._backend import assemble_t_matrix
from .fourier import (
    ComplexPair,
    TruncatedFourierSeries,
    aps,
    convolve,
    project_band,
    realify,
    spouse,
    unrealify,
)

__all__ = [
    "SymbolPair",
    "RealLinearOperator",
    "SpectralDiagnostics",
    "apply_T",
    "apply_T_star",
    "build_T_matrix",
    "spectral_diagnostics",
    "index_diagnostics",
    "high_mode_injectivity",
    "squeeze",
    "high_mode_lower_bound",
    "apply_O",
    "apply_J",
    "cokernel_complement",
    "random_symbol_pair",
]

RANK_TOL = 1e-9
RANK_TOL_CLIFF = 1e-7
_TSAMPLES = 1024


@dataclass(frozen=True)
class SymbolPair:
    """Band-limited symbol pair with min_t sqrt(|d+|^2 + |d-|^2) = tau > 0."""

    d_plus: TruncatedFourierSeries
    d_minus: TruncatedFourierSeries
    tau: float = 0.0

    def __post_init__(self):
        M = max(self.d_plus.band_limit, self.d_minus.band_limit)
        object.__setattr__(self, "d_plus", self.d_plus.with_band(M))
        object.__setattr__(self, "d_minus", self.d_minus.with_band(M))
        t = np.linspace(0.0, 2 * np.pi, _TSAMPLES, endpoint=False)
        mag = np.sqrt(
            np.abs(self.d_plus.evaluate(t)) ** 2
            + np.abs(self.d_minus.evaluate(t)) ** 2
        )
        object.__setattr__(self, "tau", float(np.min(mag)))
        if self.tau <= 0.0:
            raise ValueError("symbol pair degenerates: |d+|^2 + |d-|^2 hits zero")

    @property
    def band(self) -> int:
        return self.d_plus.band_limit

    def c1_norm(self) -> float:
        return max(
            self.d_plus.norm() + self.d_plus.derivative().norm(),
            self.d_minus.norm() + self.d_minus.derivative().norm(),
        )


@dataclass(frozen=True)
class RealLinearOperator:
    """Dense real matrix acting on realified coefficient vectors.

    Realification orders modes l = -L..L with (re, im) interleaved, so the
    matrix shape is 2(2*target_band+1) x 2(2*source_band+1).
    """

    source_band: int
    target_band: int
    matrix: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        expected = (2 * (2 * self.target_band + 1), 2 * (2 * self.source_band + 1))
        if m.shape != expected:
            raise ValueError(f"matrix shape {m.shape} does not match bands {expected}")
        if not np.all(np.isfinite(m)):
            raise ValueError("matrix entries must be finite")
        m = m.copy()
        m.flags.writeable = False
        object.__setattr__(self, "matrix", m)

    def apply(self, c: TruncatedFourierSeries) -> TruncatedFourierSeries:
        return unrealify(self.matrix @ realify(c, self.source_band))


@dataclass(frozen=True)
class SpectralDiagnostics:
    singular_values: np.ndarray
    rank_tol: float
    dim_ker: int
    dim_coker: int
    index: int
    sigma_min_positive: float
    stable: bool = True


def apply_T(sym: SymbolPair, c: TruncatedFourierSeries) -> TruncatedFourierSeries:
    """T(c) = conj(d-) c - d+ conj(aps(c)); band grows by the symbol band."""
    first = convolve(sym.d_minus.conj(), c)
    second = convolve(sym.d_plus, aps(c).conj())
    return first - second


def apply_T_star(sym: SymbolPair, k: TruncatedFourierSeries) -> TruncatedFourierSeries:
    """Adjoint of T for the real inner product.

    T*(k) = d- * k - aps(d+ * conj(k)) in convolution notation; satisfies
    (T c, k) = (c, T* k) for the real pairing.
    """
    first = convolve(sym.d_minus, k)
    second = aps(convolve(sym.d_plus, k.conj()))
    return first - second


def build_T_matrix(sym: SymbolPair, L: int) -> RealLinearOperator:
    """Matrix of T from band-L inputs onto the full band-(L+M) target."""
    M = sym.band
    if L < 2 * M + 1:
        raise ValueError("band L must be at least 2M+1")
    a = np.ascontiguousarray(sym.d_minus.conj().coeffs)
    b = np.ascontiguousarray(-sym.d_plus.coeffs)
    return RealLinearOperator(L, L + M, assemble_t_matrix(a, b, L, M))


def _rank_from_singulars(s: np.ndarray, tol: float) -> int:
    if len(s) == 0 or s[0] == 0.0:
        return 0
    return int(np.sum(s > tol * s[0]))


def spectral_diagnostics(
    op: RealLinearOperator,
    rank_tol: float = RANK_TOL,
) -> SpectralDiagnostics:
    """Singular values and kernel/cokernel dimensions of one matrix.

    dim_ker = input dimension - rank and dim_coker = output dimension -
    rank, in real dimensions against the matrix as given.
    """
    m = op.matrix
    if not np.any(m):
        raise ValueError("matrix of zeros; symbol pair degenerate upstream")
    s = np.linalg.svd(m, compute_uv=False)
    rank = _rank_from_singulars(s, rank_tol)
    dim_ker = m.shape[1] - rank
    dim_coker = m.shape[0] - rank
    positive = s[s > rank_tol * s[0]]
    return SpectralDiagnostics(
        singular_values=s,
        rank_tol=rank_tol,
        dim_ker=dim_ker,
        dim_coker=dim_coker,
        index=dim_ker - dim_coker,
        sigma_min_positive=float(positive[-1]) if len(positive) else 0.0,
    )


def _square_dims(sym: SymbolPair, L: int, rank_tol: float) -> tuple[int, int, np.ndarray]:
    """(dim_ker, dim_coker) emulating T as an endomorphism of the circle space.

    The kernel dimension comes from the tall band-L -> band-(L+M) matrix:
    kernel elements of T have geometrically small tails, so their band-L
    truncations are near-null vectors, while spurious tails are excluded
    because the full target band is kept.  The cokernel dimension comes from
    the wide matrix with inputs up to band L+2M (inputs beyond that cannot
    reach the band-(L+M) target at all), whose left near-null vectors are
    target directions unreachable from any input.
    """
    M = sym.band
    tall = build_T_matrix(sym, L).matrix
    s_tall = np.linalg.svd(tall, compute_uv=False)
    dim_ker = tall.shape[1] - _rank_from_singulars(s_tall, rank_tol)
    row0 = 2 * (2 * M)  # first realified row of output mode -(L+M) inside band L+3M
    wide = build_T_matrix(sym, L + 2 * M).matrix[row0 : row0 + 2 * (2 * (L + M) + 1), :]
    s_wide = np.linalg.svd(wide, compute_uv=False)
    dim_coker = wide.shape[0] - _rank_from_singulars(s_wide, rank_tol)
    return dim_ker, dim_coker, s_tall


def index_diagnostics(
    sym: SymbolPair,
    L: int,
    rank_tol: float = RANK_TOL,
    check_bands: bool = True,
    cliff_tol: float = RANK_TOL_CLIFF,
) -> SpectralDiagnostics:
    """Kernel, cokernel and index of T at truncation band L.

    The stability flag records whether (dim_ker, dim_coker) are unchanged at
    band 2L and under loosening the rank tolerance to ``cliff_tol``.
    """
    dim_ker, dim_coker, s = _square_dims(sym, L, rank_tol)
    stable = True
    if check_bands:
        k2, c2, _ = _square_dims(sym, 2 * L, rank_tol)
        stable = (k2, c2) == (dim_ker, dim_coker)
        kc, cc, _ = _square_dims(sym, L, cliff_tol)
        stable = stable and (kc, cc) == (dim_ker, dim_coker)
    positive = s[s > rank_tol * s[0]]
    return SpectralDiagnostics(
        singular_values=s,
        rank_tol=rank_tol,
        dim_ker=dim_ker,
        dim_coker=dim_coker,
        index=dim_ker - dim_coker,
        sigma_min_positive=float(positive[-1]) if len(positive) else 0.0,
        stable=stable,
    )


# -- squeezing elimination ------------------------------------------------------


class DegenerateTupleError(ValueError):
    pass


def _pairs_array(entries: Sequence[ComplexPair]) -> np.ndarray:
    return np.array([[p.first, p.second] for p in entries], dtype=complex)


def _spouse_entry(e: np.ndarray) -> np.ndarray:
    return np.array([np.conj(e[1]), -np.conj(e[0])])


def _lstsq_scalar(target: np.ndarray, base: np.ndarray) -> complex:
    denom = float(np.sum(np.abs(base) ** 2))
    if denom == 0.0:
        return 0j
    return complex(np.vdot(base, target) / denom)


def _eliminate(rows: np.ndarray, par_tol: float = 1e-10):
    """Run the end-entry elimination until the frontier matrix is invertible.

    ``rows`` is the (q, 2) entry array of the first family; the second
    family is always its spouse-reflection.  Returns (rows, n_steps).
    Raises :class:`DegenerateTupleError` when the tuple empties out.
    """
    scale = float(np.max(np.abs(rows))) if rows.size else 0.0
    if scale == 0.0:
        raise DegenerateTupleError("zero tuple")
    steps = 0
    while True:
        # drop numerically dead end entries (over-declared band)
        while len(rows) > 1 and np.max(np.abs(rows[-1])) <= 1e-14 * scale:
            rows = rows[:-1]
        while len(rows) > 1 and np.max(np.abs(rows[0])) <= 1e-14 * scale:
            rows = rows[1:]
        top = rows[-1]
        mirrored = _spouse_entry(rows[0])
        alpha = _lstsq_scalar(mirrored, top)
        residual = np.linalg.norm(mirrored - alpha * top)
        if residual > par_tol * max(np.linalg.norm(mirrored), 1e-300):
            return rows, steps
        if len(rows) == 1:
            raise DegenerateTupleError("elimination exhausted the tuple")
        reflected = np.array([_spouse_entry(e) for e in rows[::-1]])
        new_rows = (reflected - alpha * rows)[:-1]
        if np.max(np.abs(new_rows)) <= 1e-14 * scale:
            raise DegenerateTupleError("elimination produced a zero tuple")
        rows = new_rows
        steps += 1


def squeeze(entries: Sequence[ComplexPair]) -> tuple[tuple, tuple]:
    """Reduce a pair tuple until its frontier 2x2 determinant is nonzero.

    Returns (B, B_star), both of the original length with zeros padded on
    the left: B = (0, ..., 0, b_1, ..., b_q) with det of the matrix with
    rows b_q and spouse(b_1) nonzero, and B_star = (0, ..., 0,
    spouse(b_q), ..., spouse(b_1)).  Whenever a sequence V kills the
    brackets of the original tuple and of its spouse-reflection on an
    alignment window, it kills those of B and B_star on the window shrunk
    by the tuple length; the elimination replaces rows by shifted linear
    combinations only.
    """
    pairs = list(entries)
    if not pairs:
        raise DegenerateTupleError("empty tuple")
    p = len(pairs)
    rows, _ = _eliminate(_pairs_array(pairs))
    q = len(rows)
    pad = [ComplexPair(0j, 0j)] * (p - q)
    b = [ComplexPair(complex(e[0]), complex(e[1])) for e in rows]
    b_star = [
        ComplexPair(complex(s[0]), complex(s[1]))
        for s in (_spouse_entry(e) for e in rows[::-1])
    ]
    return tuple(pad + b), tuple(pad + b_star)


def frontier_determinant(b: Sequence[ComplexPair]) -> complex:
    """det of the 2x2 matrix with rows b_q and spouse(b_1), skipping padding."""
    live = [e for e in b if e.first != 0 or e.second != 0]
    if not live:
        return 0j
    top = live[-1]
    mirr = spouse(live[0])
    return top.first * mirr.second - top.second * mirr.first


# -- high-frequency solve --------------------------------------------------------


def high_mode_injectivity(
    sym: SymbolPair,
    L: int,
    forward_data: TruncatedFourierSeries,
    det_tol: float = 1e-12,
) -> TruncatedFourierSeries:
    """Solve T(c) = f for c supported outside the double symbol band.

    ``forward_data`` must vanish on modes |n| <= M.  The solve walks the
    mode frontier upward: after the squeezing elimination the pair
    (p_m, conj(p_{-m})) at each new frontier index m > 2M satisfies an
    invertible 2x2 system whose right-hand side mixes the data with already
    solved pairs.  Raises on a degenerate symbol (frontier determinant
    below ``det_tol`` times the symbol scale).
    """
    M = sym.band
    if project_band(forward_data, M).norm() > 1e-12 * max(forward_data.norm(), 1e-300):
        raise ValueError("forward data must vanish on modes |n| <= M")
    Lf = forward_data.band_limit
    m_max = max(L, Lf + M)

    # first family: row1[l] = (conj(d-_{-l}), d+_l) on modes -M..M, with
    # bracket(row1)(n) = f_n for n > M; the spouse-reflected family has
    # bracket(n) = -conj(f_{-n}).  The bracket of a row against the pairs
    # v_j = (p_j, conj(p_{-j})) is sum_l row[l].(v_{n-l}) componentwise.
    ls = np.arange(-M, M + 1)
    row = np.empty((2 * M + 1, 2), dtype=complex)
    row[:, 0] = np.conj([sym.d_minus.coeff(-l) for l in ls])
    row[:, 1] = [sym.d_plus.coeff(l) for l in ls]
    lo, hi = -M, M

    def rho1(n: int) -> complex:
        return forward_data.coeff(n)

    def rho2(n: int) -> complex:
        return -np.conj(forward_data.coeff(-n))

    scale = float(np.max(np.abs(row)))
    rho_pairs = [(rho1, rho2)]

    # elimination with right-hand side tracking
    steps = 0
    while True:
        while len(row) > 1 and np.max(np.abs(row[-1])) <= 1e-14 * scale:
            row = row[:-1]
            hi -= 1
        while len(row) > 1 and np.max(np.abs(row[0])) <= 1e-14 * scale:
            row = row[1:]
            lo += 1
        top = row[-1]
        mirrored = _spouse_entry(row[0])
        alpha = _lstsq_scalar(mirrored, top)
        if np.linalg.norm(mirrored - alpha * top) > 1e-10 * max(
            np.linalg.norm(mirrored), 1e-300
        ):
            break
        if len(row) == 1:
            raise DegenerateTupleError("degenerate symbol")
        k = lo + hi
        reflected = np.array([_spouse_entry(e) for e in row[::-1]])
        r1_prev, r2_prev = rho_pairs[-1]

        def make_next(r1p, r2p, al, kk):
            def n1(n: int) -> complex:
                return r2p(n - kk) - al * r1p(n)

            def n2(n: int) -> complex:
                return -r1p(n + kk + 1) - np.conj(al) * r2p(n + 1)

            return n1, n2

        rho_pairs.append(make_next(r1_prev, r2_prev, alpha, k))
        row = (reflected - alpha * row)[:-1]
        hi -= 1
        steps += 1
        if steps > 4 * M + 4:
            raise DegenerateTupleError("degenerate symbol")

    r1_fn, r2_fn = rho_pairs[-1]
    bottom = row[0]
    mirrored_bottom = _spouse_entry(row[-1])
    det = bottom[0] * mirrored_bottom[1] - bottom[1] * mirrored_bottom[0]
    if abs(det) < det_tol * max(scale**2, 1e-300):
        raise DegenerateTupleError("degenerate symbol")

    # frontier recursion: v_m = (p_m, conj(p_{-m})), zero through 2M
    solved: dict[int, np.ndarray] = {}

    def v(j: int) -> np.ndarray:
        if j in solved:
            return solved[j]
        return np.zeros(2, dtype=complex)

    width = hi - lo
    mat = np.array([[bottom[0], bottom[1]], [mirrored_bottom[0], mirrored_bottom[1]]])
    for m in range(2 * M + 1, m_max + 1):
        n1 = m + lo
        n2 = m - hi
        acc1 = r1_fn(n1)
        acc2 = r2_fn(n2)
        for offset in range(1, width + 1):
            vk = v(m - offset)
            e1 = row[offset]  # row[l], l = lo + offset
            acc1 -= e1[0] * vk[0] + e1[1] * vk[1]
            e2 = _spouse_entry(row[width - offset])
            acc2 -= e2[0] * vk[0] + e2[1] * vk[1]
        solved[m] = np.linalg.solve(mat, np.array([acc1, acc2]))

    coeffs = np.zeros(2 * m_max + 1, dtype=complex)
    for m, vm in solved.items():
        coeffs[m + m_max] = vm[0]
        coeffs[-m + m_max] = np.conj(vm[1])
    return TruncatedFourierSeries(m_max, coeffs).trimmed(tol=0.0)


# -- restricted lower bound ------------------------------------------------------


def tail_band(series: TruncatedFourierSeries, mass_fraction: float = 0.125) -> int:
    """Smallest band whose complement carries < mass_fraction of the L2 mass."""
    power = np.abs(series.coeffs) ** 2
    total = float(np.sum(power))
    if total == 0.0:
        return 0
    L = series.band_limit
    for k in range(L + 1):
        ls = np.abs(np.arange(-L, L + 1))
        if float(np.sum(power[ls > k])) < mass_fraction * total:
            return k
    return L


def commutator_threshold(sym: SymbolPair) -> int:
    """2 N1 + 2 N2: the band beyond which cutoff commutators vanish.

    N1 approximates the quotient symbol d+ / conj(d-) (regularized by tau)
    and N2 a smooth near-equality-region cutoff built from |d+| and |d-|,
    both by the smallest band holding all but 1/8 of the L2 mass.
    """
    t = np.linspace(0.0, 2 * np.pi, _TSAMPLES, endpoint=False)
    dp = sym.d_plus.evaluate(t)
    dm = np.conj(sym.d_minus.evaluate(t))
    q = dp * np.conj(dm) / (np.abs(dm) ** 2 + (0.1 * sym.tau) ** 2)
    n1 = tail_band(TruncatedFourierSeries.from_samples(q, _TSAMPLES // 4))
    gap = np.abs(np.abs(dp) - np.abs(np.conj(dm)))
    eps = 1.0 / 6.0
    x = np.clip((eps * sym.tau - gap) / (0.5 * eps * sym.tau + 1e-300), 0.0, 1.0)
    chi = x * x * (3.0 - 2.0 * x)
    n2 = tail_band(TruncatedFourierSeries.from_samples(chi, _TSAMPLES // 4))
    return 2 * n1 + 2 * n2


def high_mode_lower_bound(
    sym: SymbolPair, L_cut: int, trials: int = 2
) -> tuple[float, list[float], bool]:
    """Smallest singular value of T restricted to modes beyond L_cut.

    Computed at ``trials`` successive truncation doublings; returns the
    smallest value, the per-truncation list, and a stability flag that the
    values agree within 25 percent across the doubling.
    """
    if sym.tau < 1e-6:
        raise ValueError("tau too small for a meaningful floor")
    if L_cut < commutator_threshold(sym):
        raise ValueError(
            "L_cut below the commutator threshold "
            f"{commutator_threshold(sym)} for this symbol"
        )
    M = sym.band
    values = []
    L = max(2 * L_cut, L_cut + 4 * M + 8)
    for _ in range(max(trials, 1)):
        op = build_T_matrix(sym, L)
        ls = np.repeat(np.arange(-L, L + 1), 2)
        cols = np.abs(ls) > L_cut
        sub = op.matrix[:, cols]
        s = np.linalg.svd(sub, compute_uv=False)
        values.append(float(s[-1]))
        L *= 2
    floor = min(values)
    stable = all(
        abs(values[i + 1] - values[i]) <= 0.25 * max(values[i], values[i + 1])
        for i in range(len(values) - 1)
    )
    return floor, values, stable


# -- recovery and pairing maps ----------------------------------------------------


def apply_O(
    sym: SymbolPair, c: TruncatedFourierSeries, guard: int | None = None
) -> tuple[TruncatedFourierSeries, float]:
    """O(c) = -(conj(d+) c + d- conj(aps(c))) / (|d+|^2 + |d-|^2).

    The quotient is evaluated on 1024 samples and projected back to band
    band(c) + band(symbol) + guard; returns (series, relative projection
    defect).  Applied to kernel elements of T this recovers the curve
    deformation direction.
    """
    if sym.tau <= 0:
        raise ValueError("tau must be positive")
    if guard is None:
        guard = 2 * sym.band + 8
    t = np.linspace(0.0, 2 * np.pi, _TSAMPLES, endpoint=False)
    dp = sym.d_plus.evaluate(t)
    dm = sym.d_minus.evaluate(t)
    cs = c.evaluate(t)
    ca = aps(c).evaluate(t)
    num = -(np.conj(dp) * cs + dm * np.conj(ca))
    vals = num / (np.abs(dp) ** 2 + np.abs(dm) ** 2)
    band = min(c.band_limit + sym.band + guard, _TSAMPLES // 2 - 1)
    series = TruncatedFourierSeries.from_samples(vals, band)
    total = float(np.sqrt(np.mean(np.abs(vals) ** 2) * 2 * np.pi))
    defect = abs(total**2 - series.norm() ** 2)
    defect = math.sqrt(defect) / total if total > 0 else 0.0
    return series, defect


def apply_J(
    sym: SymbolPair,
    h_plus: TruncatedFourierSeries,
    h_minus: TruncatedFourierSeries,
) -> TruncatedFourierSeries:
    """J(h+, h-) = -2 (conj(d-) h+ - d+ conj(h-)), by exact convolutions."""
    return -2.0 * (
        convolve(sym.d_minus.conj(), h_plus) - convolve(sym.d_plus, h_minus.conj())
    )


def kernel_basis(
    sym: SymbolPair, L: int, rank_tol: float = RANK_TOL
) -> list[TruncatedFourierSeries]:
    """Right singular vectors of the tall matrix with singular value under tol."""
    op = build_T_matrix(sym, L)
    u, s, vt = np.linalg.svd(op.matrix)
    if len(s) == 0 or s[0] == 0:
        return []
    out = []
    for i in range(len(s) - 1, -1, -1):
        if s[i] > rank_tol * s[0]:
            break
        out.append(unrealify(vt[i]))
    return out


def cokernel_complement(
    sym: SymbolPair, L: int, rank_tol: float = RANK_TOL
) -> list[tuple[TruncatedFourierSeries, tuple | None]]:
    """Basis of the orthogonal complement of range(T) at band L.

    Each entry is (w, preimage) where w is a left singular vector of the
    wide matrix with near-zero singular value (a target direction no input
    up to band L+2M reaches) and ``preimage`` is a pair (h+, h-) with
    J(h+, h-) = w when the pointwise division by the symbols is solvable to
    working precision, else None.  Raises when the band-L and band-2L
    dimensions disagree.
    """
    diag = index_diagnostics(sym, L)
    if not diag.stable:
        raise ValueError("diagnostics unstable: increase band")
    M = sym.band
    wide_full = build_T_matrix(sym, L + 2 * M).matrix
    wide = wide_full[2 * (2 * M) : 2 * (2 * M) + 2 * (2 * (L + M) + 1), :]
    u, s, vt = np.linalg.svd(wide)
    out = []
    if len(s) == 0 or s[0] == 0:
        return out
    for i in range(wide.shape[0] - 1, -1, -1):
        if i < len(s) and s[i] > rank_tol * s[0]:
            break
        w = unrealify(u[:, i])
        out.append((w, _j_preimage(sym, w)))
    return out


def _j_preimage(sym: SymbolPair, w: TruncatedFourierSeries):
    """Solve J(h+, h-) = w with h- = 0 by pointwise division, if clean."""
    t = np.linspace(0.0, 2 * np.pi, _TSAMPLES, endpoint=False)
    dm = np.conj(sym.d_minus.evaluate(t))
    if np.min(np.abs(dm)) < 1e-3 * sym.tau:
        return None
    vals = w.evaluate(t) / (-2.0 * dm)
    band = w.band_limit + 4 * sym.band + 16
    h_plus = TruncatedFourierSeries.from_samples(vals, min(band, _TSAMPLES // 2 - 1))
    h_minus = TruncatedFourierSeries.zero()
    residual = (apply_J(sym, h_plus, h_minus) - w).norm()
    if residual > 1e-8 * max(w.norm(), 1e-300):
        return None
    return (h_plus, h_minus)


def random_symbol_pair(
    rng: np.random.Generator, M: int, tau_min: float = 0.1
) -> SymbolPair:
    """Random band-M symbols, rejection-sampled until tau >= tau_min."""
    while True:
        shape = 2 * M + 1
        decay = 1.0 / (1.0 + np.abs(np.arange(-M, M + 1)))
        dp = (rng.normal(size=shape) + 1j * rng.normal(size=shape)) * decay
        dm = (rng.normal(size=shape) + 1j * rng.normal(size=shape)) * decay
        try:
            sym = SymbolPair(
                TruncatedFourierSeries(M, dp), TruncatedFourierSeries(M, dm)
            )
        except ValueError:
            continue
        if sym.tau >= tau_min:
            return sym
