"""
Stationary covariate random fields on gridded observation windows.

Two constructions are provided: Gaussian fields with squared-exponential
covariance pushed through the standard normal CDF, and piecewise constant
fields on the Voronoi cells of a homogeneous Poisson process. Both produce a
:class:`CovariateField` whose values live in [0,1]^d.
"""

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import fft as sfft
from scipy.spatial import cKDTree
from scipy.special import ndtr


class DomainError(ValueError):
    """A location lies outside the observation window."""


def as_generator(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


@dataclass(frozen=True)
class Window:
    """Axis-aligned observation window; ``Window(n, D)`` is centred with volume n."""

    n: float
    D: int = 2
    lower: tuple = None
    upper: tuple = None

    def __post_init__(self):
        if self.D not in (1, 2):
            raise ValueError("spatial dimension D must be 1 or 2")
        if self.lower is None:
            if self.n <= 0:
                raise ValueError("window volume must be positive")
            half = 0.5 * float(self.n) ** (1.0 / self.D)
            object.__setattr__(self, "lower", (-half,) * self.D)
            object.__setattr__(self, "upper", (half,) * self.D)
        else:
            lo = tuple(float(v) for v in self.lower)
            hi = tuple(float(v) for v in self.upper)
            if len(lo) != self.D or len(hi) != self.D or any(a >= b for a, b in zip(lo, hi)):
                raise ValueError(f"invalid bounds {lo}, {hi}")
            object.__setattr__(self, "lower", lo)
            object.__setattr__(self, "upper", hi)
            object.__setattr__(self, "n", float(np.prod(np.subtract(hi, lo))))

    @classmethod
    def from_bounds(cls, lower, upper):
        return cls(0.0, len(lower), tuple(lower), tuple(upper))

    @property
    def bounds(self):
        return np.column_stack([self.lower, self.upper])

    @property
    def sides(self):
        return np.subtract(self.upper, self.lower)

    @property
    def volume(self):
        return float(np.prod(self.sides))

    def contains(self, x, tol=1e-9):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        slack = tol * np.maximum(1.0, self.sides)
        return np.all((x >= np.asarray(self.lower) - slack) & (x <= np.asarray(self.upper) + slack), axis=1)

    def to_dict(self):
        return {"n": self.volume, "D": self.D, "lower": list(self.lower), "upper": list(self.upper)}


def grid_axes(window, resolution=50, max_nodes=400):
    """Node coordinates per axis covering the window from bound to bound."""
    axes = []
    for lo, hi in zip(window.lower, window.upper):
        m = min(int(math.ceil((hi - lo) * resolution)) + 1, max_nodes)
        axes.append(np.linspace(lo, hi, max(m, 2)))
    return axes


@dataclass(frozen=True, eq=False)
class RawField:
    """Real-valued Gaussian field sampled on grid nodes."""

    window: Window
    axes: tuple
    values: np.ndarray
    metadata: dict = field(default_factory=dict)


@dataclass(frozen=True, eq=False)
class CovariateField:
    window: Window
    axes: tuple
    values: np.ndarray  # shape grid_shape + (d,)
    interpolation: str = "bilinear"
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        shape = tuple(len(a) for a in self.axes)
        if v.shape[:-1] != shape:
            v = v.reshape(shape + (-1,))
        if np.any(v < 0.0) or np.any(v > 1.0):
            raise ValueError("covariate values must lie in [0,1]")
        if self.interpolation not in ("nearest", "bilinear"):
            raise ValueError(f"unknown interpolation {self.interpolation!r}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "axes", tuple(np.asarray(a, dtype=float) for a in self.axes))

    @property
    def d(self):
        return self.values.shape[-1]

    @property
    def grid_shape(self):
        return self.values.shape[:-1]

    @property
    def spacing(self):
        return tuple(float(a[1] - a[0]) for a in self.axes)

    def nodes(self):
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([m.ravel() for m in mesh], axis=1)

    def node_values(self):
        """Covariates at all nodes, shape (m,) for d=1 and (m, d) otherwise."""
        flat = self.values.reshape(-1, self.d)
        return flat[:, 0] if self.d == 1 else flat

    def __call__(self, x):
        return eval_covariate(self, x)


# ----------------------------------------------------------------------------
# Gaussian fields

def squared_exponential(r, lengthscale):
    return np.exp(-0.5 * (r / lengthscale) ** 2)


def _circulant_eigenvalues(m, h, lengthscale, M):
    lags = []
    for mi, hi, Mi in zip(m, h, M):
        k = np.arange(Mi)
        lags.append(np.minimum(k, Mi - k) * hi)
    mesh = np.meshgrid(*lags, indexing="ij")
    r = np.sqrt(sum(g ** 2 for g in mesh))
    return np.real(sfft.fftn(squared_exponential(r, lengthscale)))


def _cholesky_sample(axes, lengthscale, rng, jitter=1e-10):
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([g.ravel() for g in mesh], axis=1)
    diff = pts[:, None, :] - pts[None, :, :]
    C = squared_exponential(np.sqrt((diff ** 2).sum(-1)), lengthscale)
    Lc = np.linalg.cholesky(C + jitter * np.eye(len(C)))
    return (Lc @ rng.standard_normal(len(C))).reshape(mesh[0].shape)


def simulate_gp_field(window, resolution=50, lengthscale=0.5, seed=None, max_nodes=400,
                      max_padding_rounds=4, neg_tol=1e-8):
    """Zero-mean, unit-variance squared-exponential Gaussian field on the window grid.

    Uses circulant embedding of the covariance on a padded periodic grid.
    Small negative eigenvalues (relative size below ``neg_tol``) are clipped;
    otherwise the padding is doubled, and as a last resort a dense Cholesky
    factorisation with jitter 1e-10 is used and flagged in the metadata.
    """
    if lengthscale <= 0:
        raise ValueError("lengthscale must be positive")
    rng = as_generator(seed)
    axes = grid_axes(window, resolution, max_nodes)
    m = [len(a) for a in axes]
    h = [a[1] - a[0] for a in axes]
    if lengthscale / max(h) < 2.0:
        warnings.warn(f"grid spacing {max(h):.3g} gives fewer than 2 nodes per lengthscale",
                      RuntimeWarning, stacklevel=2)
    M = [sfft.next_fast_len(2 * (mi - 1)) for mi in m]
    meta = {"method": "circulant", "lengthscale": lengthscale, "fallback": False}
    for _ in range(max_padding_rounds):
        lam = _circulant_eigenvalues(m, h, lengthscale, M)
        if lam.min() >= -neg_tol * lam.max():
            break
        M = [sfft.next_fast_len(2 * Mi) for Mi in M]
    else:
        meta.update(method="cholesky", fallback=True)
        return RawField(window, tuple(axes), _cholesky_sample(axes, lengthscale, rng), meta)
    lam = np.clip(lam, 0.0, None)
    total = lam.size
    eps = rng.standard_normal(lam.shape) + 1j * rng.standard_normal(lam.shape)
    y = sfft.fftn(np.sqrt(lam / total) * eps)
    sl = tuple(slice(0, mi) for mi in m)
    meta["embedding"] = tuple(M)
    return RawField(window, tuple(axes), np.real(y)[sl].copy(), meta)


def gaussian_cdf_transform(raw, interpolation="bilinear"):
    """Map one or several raw Gaussian fields to a covariate field via the normal CDF."""
    raws = raw if isinstance(raw, (list, tuple)) else [raw]
    first = raws[0]
    vals = np.stack([ndtr(r.values) for r in raws], axis=-1)
    meta = {"components": [r.metadata for r in raws], "kind": "gaussian"}
    return CovariateField(first.window, first.axes, vals, interpolation, meta)


def simulate_gaussian_covariates(window, lengthscales=(0.5,), resolution=50, seed=None,
                                 max_nodes=400):
    """Independent CDF-transformed Gaussian components, one per lengthscale.

    ``seed`` may be an int, a SeedSequence or a Generator; a Generator is
    consumed for a single 63-bit entropy draw.
    """
    if isinstance(seed, np.random.Generator):
        seed = int(seed.integers(2 ** 63))
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    children = ss.spawn(len(lengthscales))
    raws = [simulate_gp_field(window, resolution, ls, np.random.default_rng(c), max_nodes)
            for ls, c in zip(lengthscales, children)]
    return gaussian_cdf_transform(raws)


# ----------------------------------------------------------------------------
# Voronoi fields

def uniform_marginal(d=1):
    def sampler(rng, size):
        return rng.uniform(size=(size, d))
    return sampler


def simulate_voronoi_field(window, seed_intensity, marginal_sampler=None, seed=None,
                           resolution=50, max_nodes=400, max_retries=100, n_seeds=None):
    """Piecewise constant field on the Voronoi cells of Poisson seeds.

    Seeds are simulated on the window padded by 3 * intensity^(-1/D). If no
    seed appears after ``max_retries`` attempts a single uniform seed is used.
    Passing ``n_seeds`` fixes the number of seeds instead of drawing it.
    """
    if seed_intensity <= 0:
        raise ValueError("seed intensity must be positive")
    rng = as_generator(seed)
    sampler = marginal_sampler or uniform_marginal(1)
    D = window.D
    pad = 3.0 * seed_intensity ** (-1.0 / D)
    lo = np.asarray(window.lower) - pad
    hi = np.asarray(window.upper) + pad
    vol = float(np.prod(hi - lo))
    count, retries = (0, 0) if n_seeds is None else (int(n_seeds), 0)
    while count == 0 and retries < max_retries:
        count = rng.poisson(seed_intensity * vol)
        retries += 1
    forced = count == 0
    count = max(count, 1)
    seeds = lo + (hi - lo) * rng.uniform(size=(count, D))
    marks = np.asarray(sampler(rng, count), dtype=float).reshape(count, -1)
    axes = grid_axes(window, resolution, max_nodes)
    mesh = np.meshgrid(*axes, indexing="ij")
    nodes = np.stack([g.ravel() for g in mesh], axis=1)
    _, owner = cKDTree(seeds).query(nodes)
    vals = marks[owner].reshape(mesh[0].shape + (marks.shape[1],))
    meta = {"kind": "voronoi", "n_seeds": int(count), "retries": retries, "forced_seed": forced,
            "seeds": seeds, "marks": marks}
    return CovariateField(window, tuple(axes), vals, "nearest", meta)


# ----------------------------------------------------------------------------
# evaluation

def eval_covariate(field, x):
    """Covariate value(s) at location(s) x inside the window.

    ``x`` has shape (D,) or (m, D) (a scalar or (m,) array is accepted when
    D = 1). Returns shape (d,) / (m, d); values are clamped to [0,1].
    """
    D = field.window.D
    x = np.asarray(x, dtype=float)
    single = x.ndim == 0 or (x.ndim == 1 and (D > 1 or x.size == 1) and x.size == D)
    pts = x.reshape(-1, D)
    if not np.all(field.window.contains(pts)):
        raise DomainError("location outside the observation window")
    vals = field.values
    idx, frac = [], []
    for k, ax in enumerate(field.axes):
        u = (pts[:, k] - ax[0]) / (ax[1] - ax[0])
        u = np.clip(u, 0.0, len(ax) - 1)
        if field.interpolation == "nearest":
            idx.append(np.rint(u).astype(int))
        else:
            i = np.minimum(np.floor(u).astype(int), len(ax) - 2)
            idx.append(i)
            frac.append(u - i)
    if field.interpolation == "nearest":
        out = vals[tuple(idx)]
    elif D == 1:
        (i,), (t,) = idx, frac
        out = vals[i] * (1 - t)[:, None] + vals[i + 1] * t[:, None]
    else:
        (i, j), (s, t) = idx, frac
        s, t = s[:, None], t[:, None]
        out = ((1 - s) * (1 - t) * vals[i, j] + s * (1 - t) * vals[i + 1, j]
               + (1 - s) * t * vals[i, j + 1] + s * t * vals[i + 1, j + 1])
    out = np.clip(out, 0.0, 1.0)
    return out[0] if single else out


def cell_midpoints(field):
    mids = [(a[:-1] + a[1:]) / 2 for a in field.axes]
    mesh = np.meshgrid(*mids, indexing="ij")
    return np.stack([g.ravel() for g in mesh], axis=1)


def ergodicity_diagnostic(field, f, reference):
    """Spatial average of f(Z(x)) over the window against its stationary mean.

    ``f`` receives covariates with shape (m,) for d=1 or (m, d) otherwise.
    """
    z = eval_covariate(field, cell_midpoints(field))
    if field.d == 1:
        z = z[:, 0]
    avg = float(np.mean(f(z)))
    return {"spatial_average": avg, "deviation": abs(avg - reference)}


# ----------------------------------------------------------------------------
# raster text format

def write_raster(field, path):
    D, d = field.window.D, field.d
    shape = ",".join(str(s) for s in field.grid_shape)
    origin = ",".join(repr(float(a[0])) for a in field.axes)
    spacing = ",".join(repr(s) for s in field.spacing)
    lines = [f"# raster D={D} d={d} shape={shape} origin={origin} spacing={spacing}"]
    for row in field.values.reshape(-1, d):
        lines.append(",".join(f"{v:.17g}" for v in row))
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")


def read_raster_array(path):
    """Parse a raster file into (D, d, axes, values) without range checks."""
    with open(path) as fh:
        header = fh.readline().strip()
        if not header.startswith("# raster"):
            raise ValueError(f"{path}: missing raster header")
        fields = dict(tok.split("=", 1) for tok in header[len("# raster"):].split())
        D, d = int(fields["D"]), int(fields["d"])
        shape = tuple(int(s) for s in fields["shape"].split(","))
        origin = [float(s) for s in fields["origin"].split(",")]
        spacing = [float(s) for s in fields["spacing"].split(",")]
        if len(shape) != D or len(origin) != D or len(spacing) != D:
            raise ValueError(f"{path}: header dimensions disagree with D={D}")
        data = np.loadtxt(fh, delimiter=",", ndmin=2)
    if data.shape != (int(np.prod(shape)), d):
        raise ValueError(f"{path}: expected {np.prod(shape)} rows of {d} values, got {data.shape}")
    axes = tuple(o + s * np.arange(m) for o, s, m in zip(origin, spacing, shape))
    return D, d, axes, data.reshape(shape + (d,))


def read_raster(path, interpolation="bilinear", window=None):
    D, d, axes, vals = read_raster_array(path)
    if window is None:
        window = Window.from_bounds([a[0] for a in axes], [a[-1] for a in axes])
    return CovariateField(window, axes, vals, interpolation)
