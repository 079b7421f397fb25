"""
Posterior summaries, plug-in spatial intensities, relative L1 errors and a
covariate-space kernel estimator.
"""

import json
from dataclasses import dataclass

import numpy as np

from .pointproc import covariates_at, make_quadrature
from .priors import function_coefficients, get_evaluator


def default_grid(d, size=None):
    """Regular evaluation grid on [0,1]^d: 512 points in 1-D, 128^2 in 2-D."""
    if d == 1:
        return np.linspace(0.0, 1.0, size or 512)
    x = np.linspace(0.0, 1.0, size or 128)
    X1, X2 = np.meshgrid(x, x, indexing="ij")
    return np.column_stack([X1.ravel(), X2.ravel()])


@dataclass(frozen=True, eq=False)
class PosteriorSummary:
    grid: np.ndarray
    mean: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    level: float = 0.95


class GridMean:
    """Intensity evaluator interpolating values given on the fine wavelet grid."""

    def __init__(self, values, evaluator):
        self.values = values
        self.evaluator = evaluator

    def __call__(self, z):
        return self.evaluator.interpolator(z)(self.values)


def _intensity_grids(samples, spec, alphas=None):
    if len(samples) == 0:
        raise ValueError("no samples to summarise")
    ev = get_evaluator(spec.basis, spec.truncation)
    alphas = [None] * len(samples) if alphas is None else list(alphas)
    for s, a in zip(samples, alphas):
        yield ev, spec.link(ev.grid(function_coefficients(spec, s, a)))


def posterior_mean(samples, spec, alphas=None):
    """Posterior-mean intensity, averaged on the fine grid of the series evaluator."""
    total, count, ev = None, 0, None
    for ev, g in _intensity_grids(samples, spec, alphas):
        total = g if total is None else total + g
        count += 1
    return GridMean(total / count, ev)


def summarize(samples, spec, grid=None, level=0.95, alphas=None):
    """Pointwise posterior mean and equal-tailed credible band on a grid."""
    if len(samples) < 2:
        raise ValueError("at least two samples are needed")
    grid = default_grid(spec.d) if grid is None else np.asarray(grid, dtype=float)
    vals = []
    interp = None
    for ev, g in _intensity_grids(samples, spec, alphas):
        if interp is None:
            interp = ev.interpolator(grid)
        vals.append(interp(g))
    vals = np.array(vals)
    q = (1 - level) / 2
    lower, upper = np.quantile(vals, [q, 1 - q], axis=0)
    return PosteriorSummary(grid, vals.mean(axis=0), lower, upper, level)


def plug_in_spatial(mean_rho, field):
    """Estimated spatial intensity rho(Z(x)) at every node of the field grid."""
    return np.asarray(mean_rho(field.node_values()), dtype=float).reshape(field.grid_shape)


def l1_nodes(d, m=None):
    m = m or (10_000 if d == 1 else 400)
    x = (np.arange(m) + 0.5) / m
    if d == 1:
        return x
    X1, X2 = np.meshgrid(x, x, indexing="ij")
    return np.column_stack([X1.ravel(), X2.ravel()])


def relative_l1_error(est, truth, d=1, measure="lebesgue", density=None, nodes=None):
    """||est - truth||_1 / ||truth||_1 by midpoint quadrature on [0,1]^d.

    With ``measure="nu_Z"`` both integrals are weighted by ``density``, the
    density of the stationary covariate law (uniform if omitted).
    """
    z = l1_nodes(d) if nodes is None else nodes
    e = np.asarray(est(z), dtype=float).ravel()
    t = np.asarray(truth(z), dtype=float).ravel()
    if measure == "nu_Z":
        wgt = np.ones_like(t) if density is None else np.asarray(density(z), float).ravel()
    elif measure == "lebesgue":
        wgt = np.ones_like(t)
    else:
        raise ValueError(f"unknown measure {measure!r}")
    denom = np.sum(wgt * np.abs(t))
    if not denom > 0:
        raise ValueError("truth has zero L1 norm")
    return float(np.sum(wgt * np.abs(e - t)) / denom)


def silverman_bandwidth(z):
    """Per-axis Silverman rule-of-thumb bandwidths for covariate samples."""
    z = np.asarray(z, dtype=float).reshape(len(z), -1)
    K, d = z.shape
    factor = (K * (d + 2) / 4.0) ** (-1.0 / (d + 4))
    sd = z.std(axis=0, ddof=1) if K > 1 else np.zeros(d)
    sd = np.where(sd > 0, sd, 0.1)
    return factor * sd


class KernelEstimate:
    def __init__(self, z_points, z_quad, weights, bandwidth, d):
        self.z_points = z_points.reshape(len(z_points), d)
        self.z_quad = z_quad.reshape(len(z_quad), d)
        self.weights = weights
        self.h = np.broadcast_to(np.asarray(bandwidth, dtype=float), (d,))
        self.d = d

    def _kernel_sum(self, z, centres, w=None, chunk=2048):
        out = np.empty(len(z))
        norm = np.prod(self.h) * (2 * np.pi) ** (self.d / 2)
        for s in range(0, len(z), chunk):
            diff = (z[s:s + chunk, None, :] - centres[None, :, :]) / self.h
            k = np.exp(-0.5 * np.sum(diff * diff, axis=-1)) / norm
            out[s:s + chunk] = k.sum(axis=1) if w is None else k @ w
        return out

    def __call__(self, z):
        z = np.asarray(z, dtype=float).reshape(-1, self.d)
        if len(self.z_points) == 0:
            return np.zeros(len(z))
        num = self._kernel_sum(z, self.z_points)
        den = self._kernel_sum(z, self.z_quad, self.weights)
        out = np.zeros(len(z))
        ok = den > 1e-12
        out[ok] = num[ok] / den[ok]
        return out


def kernel_baseline(pattern, field, bandwidth="auto", quad=None):
    """Ratio-of-kernels estimate of the covariate intensity with a Gaussian kernel."""
    quad = quad or make_quadrature(pattern.window, 2500)
    d = field.d
    zp = np.asarray(covariates_at(field, pattern.points)).reshape(-1, d)
    zq = np.asarray(covariates_at(field, quad.nodes)).reshape(-1, d)
    if isinstance(bandwidth, str):
        if bandwidth != "auto":
            raise ValueError("bandwidth must be a positive number or 'auto'")
        h = silverman_bandwidth(zp) if len(zp) else np.full(d, 0.1)
    else:
        h = float(bandwidth)
        if not h > 0:
            raise ValueError("bandwidth must be positive")
    return KernelEstimate(zp, zq, quad.weights, h, d)


# ----------------------------------------------------------------------------
# files

def write_summary(summary, path):
    g = np.asarray(summary.grid)
    cols = ["z1"] if g.ndim == 1 else ["z1", "z2"]
    g = g.reshape(len(g), -1)
    with open(path, "w") as fh:
        fh.write(",".join(cols + ["mean", "lower", "upper"]) + "\n")
        for row in np.column_stack([g, summary.mean, summary.lower, summary.upper]):
            fh.write(",".join(f"{v:.17g}" for v in row) + "\n")


METRIC_KEYS = ("scenario", "n", "prior", "alpha", "rel_l1", "acc_rate", "runtime_s", "seed")


def write_metrics(metrics, path):
    missing = set(METRIC_KEYS) - set(metrics)
    if missing:
        raise ValueError(f"metrics missing keys {sorted(missing)}")
    with open(path, "w") as fh:
        json.dump({k: metrics[k] for k in METRIC_KEYS} | {k: v for k, v in metrics.items()
                                                         if k not in METRIC_KEYS},
                  fh, indent=1, sort_keys=False)
        fh.write("\n")
