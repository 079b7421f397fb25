"""
Orthonormal dyadic wavelets on [0,1]^d for d in {1, 2}.

Coefficient vectors use a single coarse-to-fine index: the 2^(j0*d) scaling
coefficients of the coarsest level come first, followed by the detail
coefficients of levels j0, j0+1, ..., J-1. Inside a level the ordering is
lexicographic in (orientation, position); in d=2 the orientations are
HL, LH, HH and positions are flattened row-major. A vector of length L thus
corresponds to a finest resolution of 2^J samples per axis with L = 2^(J*d).

The discrete transforms act on sample grids of size 2^J per axis. With
periodic boundaries each level is an orthogonal map. With symmetric
(half-sample) reflection the analysis filters are applied to the mirrored
signal and the synthesis is the exact inverse of that analysis, so perfect
reconstruction holds while orthogonality is only lost near the boundary.
"""

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import sparse

# Low-pass reconstruction filters h with phi(x) = sqrt(2) * sum_n h[n] phi(2x - n).
# Daubechies least-asymmetric filters ("symmlets"); sym8 has 16 taps and
# 8 vanishing moments.
FILTERS = {
    "haar": (0.7071067811865476, 0.7071067811865476),
    "sym4": (
        0.032223100604051466, -0.012603967262031304, -0.09921954357663353,
        0.29785779560530606, 0.8037387518051321, 0.497618667632775,
        -0.029635527646002493, -0.07576571478950221,
    ),
    "sym8": (
        0.001889950332767689, -0.0003029205147241331, -0.014952258337062199,
        0.0038087520138944896, 0.04913717967373029, -0.027219029917103486,
        -0.0519458381078818, 0.36444189483617895, 0.777185751699628,
        0.4813596512590534, -0.061273359067811076, -0.14329423835127267,
        0.007607487324976609, 0.03169508781152599, -0.0005421323318000107,
        -0.0033824159510050028,
    ),
}

BOUNDARIES = ("symmetric", "periodic")
ORIENTATIONS_2D = ("HL", "LH", "HH")


class WaveletFormatError(ValueError):
    """Raised for grids or coefficient vectors that are not dyadic."""


@dataclass(frozen=True)
class WaveletBasis:
    filter_coefficients: tuple
    order: int
    boundary: str = "symmetric"
    dimension: int = 1
    coarsest_level: int = 0
    name: str = field(default="custom", compare=False)

    def __post_init__(self):
        if self.dimension not in (1, 2):
            raise ValueError(f"dimension must be 1 or 2, got {self.dimension}")
        if self.boundary not in BOUNDARIES:
            raise ValueError(f"unknown boundary {self.boundary!r}")
        if self.coarsest_level < 0:
            raise ValueError("coarsest_level must be >= 0")
        object.__setattr__(self, "filter_coefficients",
                           tuple(float(v) for v in self.filter_coefficients))

    @classmethod
    def from_name(cls, name="sym8", boundary="symmetric", dimension=1, coarsest_level=0):
        if name not in FILTERS:
            raise KeyError(f"unknown wavelet {name!r}; available: {sorted(FILTERS)}")
        taps = FILTERS[name]
        return cls(taps, len(taps) // 2, boundary, dimension, coarsest_level, name)

    @property
    def lowpass(self):
        return np.asarray(self.filter_coefficients)

    @property
    def highpass(self):
        h = self.lowpass
        return np.array([(-1) ** k * h[len(h) - 1 - k] for k in range(len(h))])

    @property
    def shift(self):
        # centres the filter support so that both ends of the interval see it
        return len(self.filter_coefficients) // 2 - 1

    def check_filter(self, atol_sum=1e-12, atol_orth=1e-10):
        """Return True if the taps satisfy the orthonormality conditions."""
        h = self.lowpass
        if abs(h.sum() - np.sqrt(2.0)) > atol_sum:
            return False
        for m in range(len(h) // 2):
            s = np.dot(h[: len(h) - 2 * m], h[2 * m:])
            if abs(s - (m == 0)) > atol_orth:
                return False
        return True

    def level_of(self, L):
        """Finest level J such that a full basis up to J has L elements."""
        L = int(L)
        per_axis = L if self.dimension == 1 else int(round(np.sqrt(L)))
        if per_axis ** self.dimension != L or per_axis < 1 or per_axis & (per_axis - 1):
            raise WaveletFormatError(f"length {L} is not a full dyadic basis in d={self.dimension}")
        J = per_axis.bit_length() - 1
        if J < self.coarsest_level:
            raise WaveletFormatError(f"length {L} is below the coarsest level {self.coarsest_level}")
        return J

    def size(self, J):
        return 2 ** (J * self.dimension)


@dataclass(frozen=True)
class CoefficientVector:
    coeffs: np.ndarray
    basis: WaveletBasis

    def __post_init__(self):
        c = np.asarray(self.coeffs, dtype=float)
        self.basis.level_of(c.size)
        object.__setattr__(self, "coeffs", c)

    @property
    def truncation(self):
        return self.coeffs.size

    @property
    def level(self):
        return self.basis.level_of(self.coeffs.size)


# ----------------------------------------------------------------------------
# single-index ordering

def _level_offset(j, dimension):
    # everything up to level j forms a full basis of size 2^(j*d)
    return 2 ** (j * dimension)


def single_index_map(level, type_tag, position, dimension=1, coarsest_level=0, finest_level=None):
    """Map (level, type, position) to the 1-based single index l.

    ``type_tag`` is "scaling" for the scaling functions of the coarsest level,
    otherwise "D" (d=1) or one of HL, LH, HH (d=2). ``position`` is an int in
    d=1 and a pair (k1, k2) in d=2.
    """
    j, j0, d = int(level), int(coarsest_level), dimension
    if finest_level is not None and j >= finest_level + (type_tag == "scaling"):
        raise IndexError(f"level {j} beyond finest level {finest_level}")
    if d == 1:
        k = int(position)
        if not 0 <= k < 2 ** j:
            raise IndexError(f"position {k} out of range at level {j}")
        flat = k
    else:
        k1, k2 = (int(v) for v in position)
        if not (0 <= k1 < 2 ** j and 0 <= k2 < 2 ** j):
            raise IndexError(f"position {(k1, k2)} out of range at level {j}")
        flat = k1 * 2 ** j + k2
    if type_tag == "scaling":
        if j != j0:
            raise IndexError(f"scaling functions live at level {j0}, not {j}")
        return flat + 1
    if j < j0:
        raise IndexError(f"level {j} below coarsest level {j0}")
    if d == 1:
        if type_tag not in ("D", "detail", None):
            raise IndexError(f"unknown type tag {type_tag!r} for d=1")
        return _level_offset(j, d) + flat + 1
    if type_tag not in ORIENTATIONS_2D:
        raise IndexError(f"unknown type tag {type_tag!r} for d=2")
    o = ORIENTATIONS_2D.index(type_tag)
    return _level_offset(j, d) + o * 4 ** j + flat + 1


def index_to_triplet(ell, dimension=1, coarsest_level=0):
    """Inverse of :func:`single_index_map`."""
    i = int(ell) - 1
    if i < 0:
        raise IndexError("indices start at 1")
    d, j0 = dimension, coarsest_level
    n0 = 2 ** (j0 * d)
    if i < n0:
        pos = i if d == 1 else divmod(i, 2 ** j0)
        return j0, "scaling", pos
    j = j0
    while 2 ** ((j + 1) * d) <= i:
        j += 1
    r = i - 2 ** (j * d)
    if d == 1:
        return j, "D", r
    o, flat = divmod(r, 4 ** j)
    return j, ORIENTATIONS_2D[o], divmod(flat, 2 ** j)


# ----------------------------------------------------------------------------
# one-level operators

def _extend_index(i, N, boundary):
    if boundary == "periodic":
        return np.mod(i, N)
    i = np.mod(i, 2 * N)
    return np.where(i < N, i, 2 * N - 1 - i)


@lru_cache(maxsize=None)
def _analysis_matrix(basis, N):
    """One analysis step on N samples: rows 0..N/2-1 approx, N/2..N-1 detail."""
    h, g, s = basis.lowpass, basis.highpass, basis.shift
    half = N // 2
    A = np.zeros((N, N))
    k = np.arange(half)
    for n in range(len(h)):
        cols = _extend_index(2 * k + n - s, N, basis.boundary)
        np.add.at(A, (k, cols), h[n])
        np.add.at(A, (half + k, cols), g[n])
    A.setflags(write=False)
    return A


@lru_cache(maxsize=None)
def _synthesis_matrix(basis, N):
    A = _analysis_matrix(basis, N)
    S = A.T.copy() if basis.boundary == "periodic" else np.linalg.inv(A)
    S.setflags(write=False)
    return S


@lru_cache(maxsize=None)
def _sparse_synthesis(basis, N):
    # the symmetric-boundary inverse decays geometrically away from the band
    S = _synthesis_matrix(basis, N)
    return sparse.csr_matrix(np.where(np.abs(S) > 1e-18 * np.abs(S).max(), S, 0.0))


def _apply_along(M, x, axis):
    return np.moveaxis(np.tensordot(M, x, axes=([1], [axis])), 0, axis)


def _check_grid(samples, basis):
    v = np.asarray(samples, dtype=float)
    if v.ndim != basis.dimension:
        raise WaveletFormatError(f"expected a {basis.dimension}-d grid, got shape {v.shape}")
    N = v.shape[0]
    if any(s != N for s in v.shape) or N < 1 or N & (N - 1):
        raise WaveletFormatError(f"grid shape {v.shape} is not dyadic and square")
    J = N.bit_length() - 1
    if J < basis.coarsest_level:
        raise WaveletFormatError("grid coarser than the coarsest level")
    return v, J


def forward_dwt(samples, basis):
    """Discrete wavelet transform of a dyadic sample grid.

    Samples are treated as the finest-level scaling coefficients; the result
    is a :class:`CoefficientVector` in single-index order.
    """
    v, J = _check_grid(samples, basis)
    j0, d = basis.coarsest_level, basis.dimension
    details = []
    a = v
    for j in range(J - 1, j0 - 1, -1):
        N = 2 ** (j + 1)
        half = N // 2
        A = _analysis_matrix(basis, N)
        if d == 1:
            y = A @ a
            details.append([y[half:]])
            a = y[:half]
        else:
            y = _apply_along(A, _apply_along(A, a, 0), 1)
            details.append([y[half:, :half], y[:half, half:], y[half:, half:]])
            a = y[:half, :half]
    parts = [a.ravel()]
    for blocks in reversed(details):
        parts.extend(b.ravel() for b in blocks)
    return CoefficientVector(np.concatenate(parts), basis)


def _coeffs_to_finest(c, basis):
    """Run the synthesis pyramid up to the finest scaling coefficients."""
    c = np.asarray(c, dtype=float)
    J = basis.level_of(c.size)
    j0, d = basis.coarsest_level, basis.dimension
    n0 = 2 ** j0
    a = c[: n0 ** d].reshape((n0,) * d)
    pos = n0 ** d
    for j in range(j0, J):
        m = 2 ** j
        if d == 1:
            S = _sparse_synthesis(basis, 2 * m)
            y = np.concatenate([a, c[pos:pos + m]])
            pos += m
            a = S @ y
        else:
            S = _synthesis_matrix(basis, 2 * m)
            y = np.empty((2 * m, 2 * m))
            y[:m, :m] = a
            blk = m * m
            y[m:, :m] = c[pos:pos + blk].reshape(m, m)
            y[:m, m:] = c[pos + blk:pos + 2 * blk].reshape(m, m)
            y[m:, m:] = c[pos + 2 * blk:pos + 3 * blk].reshape(m, m)
            pos += 3 * blk
            a = S @ y @ S.T
    return a


def inverse_dwt(c, basis=None):
    """Inverse of :func:`forward_dwt`; returns the dyadic sample grid."""
    if isinstance(c, CoefficientVector):
        basis, c = c.basis, c.coeffs
    if basis is None:
        raise TypeError("a basis is required for raw coefficient arrays")
    return _coeffs_to_finest(c, basis)


# ----------------------------------------------------------------------------
# point evaluation of truncated series

@lru_cache(maxsize=None)
def scaling_function_table(basis, r):
    """Exact values phi(u + q / 2^r) for u = 0..len(h)-2 and q = 0..2^r-1.

    Integer values come from the eigenvector of the refinement equation, the
    remaining dyadic rationals from repeated refinement.
    """
    h = basis.lowpass
    Lf = len(h)
    if Lf == 2:
        vals = np.array([1.0, 0.0])
    else:
        M = np.zeros((Lf, Lf))
        for k in range(Lf):
            for m in range(Lf):
                if 0 <= 2 * k - m < Lf:
                    M[k, m] = np.sqrt(2.0) * h[2 * k - m]
        w, V = np.linalg.eig(M)
        v = np.real(V[:, np.argmin(np.abs(w - 1.0))])
        vals = v / v.sum()
    # vals[i] = phi(i / 2^level) on [0, Lf-1]
    level = 0
    while level < r:
        fine = np.zeros(2 * (len(vals) - 1) + 1)
        fine[::2] = vals
        step = 2 ** level
        for i in range(1, len(fine), 2):
            # x = i / 2^(level+1), so 2x - n sits at coarse index i - n * 2^level
            acc = 0.0
            for n in range(Lf):
                t = i - n * step
                if 0 <= t < len(vals):
                    acc += h[n] * vals[t]
            fine[i] = np.sqrt(2.0) * acc
        vals = fine
        level += 1
    per = 2 ** r
    table = np.zeros((Lf - 1, per))
    for u in range(Lf - 1):
        table[u] = vals[u * per:(u + 1) * per]
    return table


@lru_cache(maxsize=None)
def _fine_operator(basis, J, r):
    """Matrix mapping finest scaling coefficients (per axis) to the fine grid.

    Row i gives the value of the series at z = i / 2^(J+r), i = 0..2^(J+r).
    """
    N = 2 ** J
    per = 2 ** r
    table = scaling_function_table(basis, r)
    Lf1 = table.shape[0]
    G = N * per + 1
    E = np.zeros((G, N))
    scale = 2.0 ** (J / 2.0)
    for i in range(G):
        p, q = divmod(i, per)
        for u in range(Lf1):
            m = p + basis.shift - u
            E[i, _extend_index(m, N, basis.boundary)] += scale * table[u, q]
    return sparse.csr_matrix(E)


class SeriesEvaluator:
    """Evaluate truncated wavelet series on a fine grid and at points.

    The series is synthesised exactly at the dyadic points i / 2^(J + r),
    with 2^r = ``oversample``, and linearly (d=1) or bilinearly (d=2)
    interpolated in between.
    """

    def __init__(self, basis, truncation, oversample=4):
        self.basis = basis
        self.truncation = int(truncation)
        self.level = basis.level_of(self.truncation)
        r = int(round(np.log2(oversample)))
        if 2 ** r != oversample or r < 0:
            raise ValueError("oversample must be a power of two")
        self.r = r
        self._E = _fine_operator(basis, self.level, r)
        self.grid_size = self._E.shape[0]
        self.nodes = np.linspace(0.0, 1.0, self.grid_size)
        self.clamped_count = 0

    def grid(self, c):
        """Series values on the fine grid (shape (G,) or (G, G))."""
        c = c.coeffs if isinstance(c, CoefficientVector) else np.asarray(c, dtype=float)
        if c.size != self.truncation:
            raise WaveletFormatError(f"expected {self.truncation} coefficients, got {c.size}")
        a = _coeffs_to_finest(c, self.basis)
        E = self._E
        if self.basis.dimension == 1:
            return E @ a
        return (E @ (E @ a).T).T

    def interpolator(self, points):
        """Precompute interpolation weights for a fixed set of points."""
        return GridInterpolator(points, self.grid_size, self.basis.dimension, self)

    def __call__(self, c, points):
        return self.interpolator(points)(self.grid(c))


class GridInterpolator:
    """Linear/bilinear interpolation on the uniform grid of [0,1]^d."""

    def __init__(self, points, grid_size, dimension, owner=None):
        z = np.asarray(points, dtype=float)
        if dimension == 1:
            z = z.reshape(-1, 1)
        else:
            z = z.reshape(-1, dimension)
        outside = np.any((z < 0.0) | (z > 1.0), axis=1)
        self.n_clamped = int(outside.sum())
        if owner is not None:
            owner.clamped_count += self.n_clamped
        z = np.clip(z, 0.0, 1.0)
        u = z * (grid_size - 1)
        i = np.minimum(np.floor(u).astype(int), grid_size - 2)
        t = u - i
        self.dimension = dimension
        self._grid_size = grid_size
        self.n_points = z.shape[0]
        self._i, self._t = i, t

    def __call__(self, grid):
        i, t = self._i, self._t
        if self.dimension == 1:
            i0, t0 = i[:, 0], t[:, 0]
            return grid[i0] * (1.0 - t0) + grid[i0 + 1] * t0
        i0, i1 = i[:, 0], i[:, 1]
        t0, t1 = t[:, 0], t[:, 1]
        return ((1 - t0) * (1 - t1) * grid[i0, i1] + t0 * (1 - t1) * grid[i0 + 1, i1]
                + (1 - t0) * t1 * grid[i0, i1 + 1] + t0 * t1 * grid[i0 + 1, i1 + 1])


    def adjoint(self, weights):
        """Grid array g with <g, grid> == <weights, self(grid)> for every grid."""
        w = np.asarray(weights, dtype=float)
        i, t = self._i, self._t
        G = self._grid_size
        if self.dimension == 1:
            out = np.bincount(i[:, 0], w * (1 - t[:, 0]), G + 1)
            out += np.bincount(i[:, 0] + 1, w * t[:, 0], G + 1)
            return out[:G]
        flat = np.zeros(G * G)
        i0, i1, t0, t1 = i[:, 0], i[:, 1], t[:, 0], t[:, 1]
        for di, dj, wt in ((0, 0, (1 - t0) * (1 - t1)), (1, 0, t0 * (1 - t1)),
                           (0, 1, (1 - t0) * t1), (1, 1, t0 * t1)):
            flat += np.bincount((i0 + di) * G + (i1 + dj), w * wt, G * G)
        return flat.reshape(G, G)


def evaluate_series(c, points, basis=None, oversample=4):
    """Value of sum_l c_l psi_l at each point of [0,1]^d.

    Points outside the unit cube are clamped to it; the number of clamped
    points is available as ``evaluate_series.last_clamped``.
    """
    if isinstance(c, CoefficientVector):
        basis, c = c.basis, c.coeffs
    ev = SeriesEvaluator(basis, np.size(c), oversample)
    out = ev(c, points)
    evaluate_series.last_clamped = ev.clamped_count
    return out


evaluate_series.last_clamped = 0
