"""Split wavelet design matrices for irregularly sampled series.

The regression basis is a periodized orthonormal wavelet family on a dyadic
interval, split into a low-frequency trend block and a mid-frequency detail
block, with the highest-frequency levels left out.  Basis functions are
tabulated once by the cascade algorithm (iterated upsample-and-filter of a
unit impulse, one table per dyadic level) and evaluated at arbitrary
observation times by linear interpolation of those tables.  On the complete
dyadic grid the columns coincide with inverse discrete-wavelet-transform
impulse responses, so they are orthonormal there to machine precision.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

__all__ = [
    "BasisError",
    "BasisSpec",
    "CascadeTables",
    "DesignMatrix",
    "FILTERS",
    "cascade_tabulate",
    "evaluate_basis",
    "rescale_times",
]


class BasisError(ValueError):
    """Invalid basis specification or evaluation input."""


# Orthonormal scaling filters in dilation-equation order, i.e. h such that
# phi(x) = sqrt(2) * sum_a h[a] * phi(2x - a).  Coefficients sum to sqrt(2).
FILTERS = {
    "haar": np.array([0.707106781186548, 0.707106781186548]),
    # Least-asymmetric Daubechies filter with 4 vanishing moments (8 taps).
    "symmlet4": np.array([
        0.032223100604043,
        -0.012603967262038,
        -0.099219543576847,
        0.297857795605277,
        0.803738751805916,
        0.497618667632015,
        -0.029635527645999,
        -0.075765714789273,
    ]),
}


def _highpass(h: np.ndarray) -> np.ndarray:
    """Quadrature-mirror counterpart of a scaling filter."""
    n = len(h)
    return np.array([(-1) ** a * h[n - 1 - a] for a in range(n)])


def _synthesis_step(coeffs: np.ndarray, filt: np.ndarray) -> np.ndarray:
    """One inverse-transform refinement: upsample by two, convolve."""
    up = np.zeros(2 * len(coeffs) - 1)
    up[::2] = coeffs
    return np.convolve(up, filt)


def _impulse_cascade(h: np.ndarray, depth: int, first: np.ndarray | None = None) -> np.ndarray:
    """`depth` synthesis steps applied to a unit impulse.

    The result has unit Euclidean norm (the filters are orthonormal) and,
    scaled by 2**(depth/2), approximates the scaling function sampled at
    spacing 2**-depth.  Passing the high-pass filter as `first` yields the
    wavelet branch instead.
    """
    c = np.array([1.0])
    for step in range(depth):
        f = first if (step == 0 and first is not None) else h
        c = _synthesis_step(c, f)
    return c


def _integer_point_values(h: np.ndarray) -> np.ndarray:
    """Scaling-function values at the integers inside its support.

    These solve the eigenproblem of the refinement matrix of the dilation
    equation (eigenvalue one), normalized so the values sum to one.
    """
    n = len(h)
    interior = n - 2
    a = np.zeros((interior, interior))
    for i in range(1, n - 1):
        for j in range(1, n - 1):
            k = 2 * i - j
            if 0 <= k < n:
                a[i - 1, j - 1] = np.sqrt(2.0) * h[k]
    eigvals, eigvecs = np.linalg.eig(a)
    pick = np.argmin(np.abs(eigvals - 1.0))
    v = np.real(eigvecs[:, pick])
    v = v / v.sum()
    out = np.zeros(n)
    out[1:-1] = v
    return out


@dataclass(frozen=True)
class CascadeTables:
    """Scaling and wavelet function tables on a dyadic grid.

    `phi[n]` and `psi[n]` hold function values at x = n * 2**-depth; both
    functions are supported on [0, len(filter) - 1].
    """

    phi: np.ndarray
    psi: np.ndarray
    depth: int
    filter: np.ndarray

    @property
    def grid(self) -> np.ndarray:
        return np.arange(len(self.phi)) * 2.0 ** -self.depth


def cascade_tabulate(filter_coeffs, depth: int) -> CascadeTables:
    """Tabulate scaling/wavelet functions at dyadic spacing 2**-depth.

    The filter must have even length >= 2 and coefficients summing to
    sqrt(2) (within 1e-12); anything else is rejected.  Starting from the
    exact integer-point values (the refinement-matrix eigenvector), each
    pass of the dilation equation doubles the grid, so the returned tables
    are exact samples of the limit functions and satisfy the two-scale
    refinement relation on every grid point.
    """
    h = np.asarray(filter_coeffs, dtype=float)
    if h.ndim != 1 or len(h) < 2 or len(h) % 2 != 0:
        raise BasisError("filter must be a flat sequence of even length >= 2")
    if abs(h.sum() - np.sqrt(2.0)) > 1e-12:
        raise BasisError(
            "filter coefficients must sum to sqrt(2); got sum %.17g" % h.sum())
    if depth < 1:
        raise BasisError("cascade depth must be >= 1")
    L = len(h)
    if L == 2:
        # the indicator function: the interior eigenproblem is empty
        tab = np.zeros(2 ** depth + 1)
        tab[: 2 ** depth] = 1.0
    else:
        tab = _integer_point_values(h)
        for d in range(1, depth + 1):
            prev = tab
            m = (L - 1) * 2 ** d + 1
            tab = np.zeros(m)
            tab[::2] = prev
            odd = np.arange(1, m, 2)
            half = 2 ** (d - 1)
            for a in range(L):
                idx = odd - a * half
                ok = (idx >= 0) & (idx < len(prev))
                tab[odd[ok]] += np.sqrt(2.0) * h[a] * prev[idx[ok]]
    g = _highpass(h)
    psi = np.zeros_like(tab)
    pos = np.arange(len(tab))
    for a in range(L):
        idx = 2 * pos - a * 2 ** depth
        ok = (idx >= 0) & (idx < len(tab))
        psi[pos[ok]] += np.sqrt(2.0) * g[a] * tab[idx[ok]]
    return CascadeTables(phi=tab, psi=psi, depth=depth, filter=h)


@dataclass(frozen=True)
class BasisSpec:
    """Geometry of the split incomplete wavelet basis.

    `n_components` basis functions cover the periodic interval
    [0, interval_length]: the `n_trend` lowest-frequency scaling functions
    form the trend block and periodized wavelets at the following dyadic
    levels form the detail block.  Counts must fit the dyadic layout:
    n_trend = 2**j0 and n_components - n_trend = 2**j0 * (2**m - 1) for the
    detail levels j0 .. j0+m-1.
    """

    interval_length: float = 2048.0
    n_components: int = 128
    n_trend: int = 8
    filter_name: str = "symmlet4"
    cascade_depth: int = 10

    def __post_init__(self):
        L = self.interval_length
        if L <= 0 or L != 2.0 ** round(np.log2(L)):
            raise BasisError("interval_length must be a positive power of two")
        if self.filter_name not in FILTERS:
            raise BasisError("unknown filter %r" % self.filter_name)
        if not (0 <= self.n_trend < self.n_components):
            raise BasisError("need 0 <= n_trend < n_components")
        if self.cascade_depth < 1:
            raise BasisError("cascade_depth must be >= 1")
        j0 = int(round(np.log2(self.n_trend))) if self.n_trend else 0
        if self.n_trend and 2 ** j0 != self.n_trend:
            raise BasisError("n_trend must be a power of two")
        detail = self.n_components - self.n_trend
        # detail levels j0..j1 contribute 2^j0 + ... + 2^j1 functions
        total, j1 = 0, j0
        while total < detail:
            total += 2 ** j1
            j1 += 1
        if total != detail:
            raise BasisError(
                "n_components - n_trend = %d does not fill whole dyadic levels"
                % detail)
        if 2 ** (j1 - 1) > self.grid_size // 2:
            raise BasisError("finest detail level does not fit the interval")

    @property
    def grid_size(self) -> int:
        """Number of unit-spaced points on the dyadic grid."""
        return int(round(self.interval_length))

    @property
    def trend_level(self) -> int:
        return int(round(np.log2(self.n_trend)))

    @property
    def detail_levels(self) -> tuple[int, ...]:
        j0 = self.trend_level
        levels, total = [], 0
        j = j0
        while total < self.n_components - self.n_trend:
            levels.append(j)
            total += 2 ** j
            j += 1
        return tuple(levels)

    @property
    def n_columns(self) -> int:
        """Design-matrix width: constant column plus all basis functions."""
        return 1 + self.n_components

    def tables(self) -> "_BasisTables":
        return _build_tables(self)


def _periodized_level_vector(seq: np.ndarray, shift: int, n: int) -> np.ndarray:
    """Wrap a synthesis impulse response onto the n-point circle."""
    v = np.zeros(n)
    idx = (np.arange(len(seq)) + shift) % n
    np.add.at(v, idx, seq)
    return v


class _BasisTables:
    """Precomputed grid columns shared read-only across fits.

    `grid_columns` has one row per dyadic grid point and one column per
    design column (constant first); `interp_columns` appends the wrap-around
    row so linear interpolation is periodic on [0, interval_length].
    """

    def __init__(self, spec: BasisSpec):
        self.spec = spec
        n = spec.grid_size
        p = int(round(np.log2(n)))
        h = FILTERS[spec.filter_name]
        g = _highpass(h)
        cols = [np.ones(n)]
        j0 = spec.trend_level
        step = 2 ** (p - j0)
        trend_tab = _impulse_cascade(h, p - j0)
        for k in range(spec.n_trend):
            cols.append(_periodized_level_vector(trend_tab, k * step, n))
        for j in spec.detail_levels:
            step = 2 ** (p - j)
            tab = _impulse_cascade(h, p - j, first=g)
            for k in range(2 ** j):
                cols.append(_periodized_level_vector(tab, k * step, n))
        self.grid_columns = np.column_stack(cols)
        self.interp_columns = np.vstack([self.grid_columns, self.grid_columns[:1]])
        self.grid_columns.setflags(write=False)
        self.interp_columns.setflags(write=False)


@lru_cache(maxsize=8)
def _build_tables(spec: BasisSpec) -> _BasisTables:
    return _BasisTables(spec)


def rescale_times(times, interval_length: float) -> np.ndarray:
    """Affinely map observation times onto [0, interval_length].

    The earliest time maps to 0 and the latest to interval_length; order is
    preserved.  Fewer than two times, duplicates, or unsorted input are
    rejected.
    """
    t = np.asarray(times, dtype=float)
    if t.ndim != 1 or len(t) < 2:
        raise BasisError("need at least two observation times")
    if not np.all(np.isfinite(t)):
        raise BasisError("observation times must be finite")
    dt = np.diff(t)
    if np.any(dt <= 0):
        kind = "duplicate" if np.any(dt == 0) else "unsorted"
        raise BasisError("observation times must be strictly increasing (%s)" % kind)
    return (t - t[0]) / (t[-1] - t[0]) * interval_length


@dataclass(frozen=True)
class DesignMatrix:
    """Basis functions evaluated at a curve's rescaled times.

    Column 0 is identically one, columns 1..n_trend are the trend block and
    the remainder the detail block.
    """

    values: np.ndarray
    rescaled_times: np.ndarray
    spec: BasisSpec = field(repr=False)

    @property
    def n_obs(self) -> int:
        return self.values.shape[0]

    @property
    def trend_columns(self) -> np.ndarray:
        """Constant plus trend block, the null-model design."""
        return self.values[:, : self.spec.n_trend + 1]

    @property
    def detail_block(self) -> np.ndarray:
        return self.values[:, self.spec.n_trend + 1:]


def evaluate_basis(spec: BasisSpec, rescaled_times) -> DesignMatrix:
    """Build the design matrix at the given rescaled times.

    Times must lie in [0, interval_length]; evaluation is periodic at the
    interval boundary and linear between dyadic grid points, so integer grid
    times reproduce the tabulated values exactly.
    """
    t = np.asarray(rescaled_times, dtype=float)
    if t.ndim != 1:
        raise BasisError("rescaled_times must be one-dimensional")
    if len(t) and (t.min() < 0 or t.max() > spec.interval_length):
        raise BasisError("rescaled times fall outside [0, interval_length]")
    tables = spec.tables()
    n = spec.grid_size
    i0 = np.minimum(np.floor(t).astype(np.intp), n - 1)
    frac = (t - i0)[:, None]
    grid = tables.interp_columns
    vals = (1.0 - frac) * grid[i0] + frac * grid[i0 + 1]
    vals[:, 0] = 1.0
    return DesignMatrix(values=vals, rescaled_times=t, spec=spec)
