"""
Covariate-driven Poisson point patterns: simulation by thinning, midpoint
quadrature over the window, and the Poisson log-likelihood.

Intensity functions ``rho`` act on covariate arrays: shape (m,) when the
covariate is scalar (d = 1) and (m, d) otherwise.
"""

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .covfield import Window, as_generator, eval_covariate


class PatternValidationError(ValueError):
    """Raised when an ingested point pattern violates its window."""

    def __init__(self, message, offending=None):
        super().__init__(message)
        self.offending = offending if offending is not None else []


@dataclass(frozen=True, eq=False)
class PointPattern:
    points: np.ndarray  # (K, D)
    window: Window

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, self.window.D)
        inside = self.window.contains(pts) if len(pts) else np.ones(0, bool)
        if not np.all(inside):
            bad = np.flatnonzero(~inside)
            raise PatternValidationError(f"{bad.size} point(s) outside the window", bad.tolist())
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def count(self):
        return self.points.shape[0]

    K = count

    def __len__(self):
        return self.count


@dataclass(frozen=True, eq=False)
class QuadratureRule:
    nodes: np.ndarray
    weights: np.ndarray
    shape: tuple = ()

    @property
    def total_weight(self):
        return float(self.weights.sum())


def _squeeze_covariate(z, d):
    return z[:, 0] if d == 1 else z


def covariates_at(field, x):
    """Covariates at locations x in the (m,) / (m, d) intensity convention."""
    x = np.asarray(x, dtype=float).reshape(-1, field.window.D)
    if x.shape[0] == 0:
        return np.zeros((0,) if field.d == 1 else (0, field.d))
    return _squeeze_covariate(eval_covariate(field, x), field.d)


def _grid_counts(window, max_nodes):
    """Largest per-axis node counts, roughly proportional to the sides, within the cap."""
    D = window.D
    sides = window.sides
    scale = (max_nodes / np.prod(sides)) ** (1.0 / D)
    m = np.maximum(np.floor(sides * scale + 1e-9).astype(int), 1)
    # greedily add nodes along the coarsest axis while the cap allows
    while True:
        order = np.argsort(-(sides / m))
        grown = False
        for k in order:
            trial = m.copy()
            trial[k] += 1
            if np.prod(trial) <= max_nodes:
                m = trial
                grown = True
                break
        if not grown:
            return tuple(int(v) for v in m)


def make_quadrature(window, max_nodes=2500):
    """Midpoint rule on the largest regular grid with at most ``max_nodes`` nodes."""
    if max_nodes < 4 ** window.D:
        raise ValueError(f"max_nodes must be at least {4 ** window.D}")
    m = _grid_counts(window, int(max_nodes))
    mids = []
    for lo, hi, mk in zip(window.lower, window.upper, m):
        h = (hi - lo) / mk
        mids.append(lo + h * (np.arange(mk) + 0.5))
    mesh = np.meshgrid(*mids, indexing="ij")
    nodes = np.stack([g.ravel() for g in mesh], axis=1)
    w = np.full(nodes.shape[0], window.volume / nodes.shape[0])
    return QuadratureRule(nodes, w, m)


def simulate_cox_thinning(rho, field, window=None, seed=None, safety=1.05):
    """Inhomogeneous Poisson pattern with intensity rho(Z(x)), by thinning.

    The dominating rate is ``safety`` times the largest value of rho over the
    field grid nodes. Retention probabilities above one (possible because of
    interpolation between nodes) are clamped and counted in
    ``simulate_cox_thinning.violations``.
    """
    window = window or field.window
    rng = as_generator(seed)
    lam_max = safety * float(np.max(rho(field.node_values())))
    simulate_cox_thinning.violations = 0
    if not lam_max > 0.0:
        return PointPattern(np.zeros((0, window.D)), window)
    count = rng.poisson(lam_max * window.volume)
    lo, hi = np.asarray(window.lower), np.asarray(window.upper)
    cand = lo + (hi - lo) * rng.uniform(size=(count, window.D))
    u = rng.uniform(size=count)
    if count == 0:
        return PointPattern(cand, window)
    p = np.asarray(rho(covariates_at(field, cand)), dtype=float) / lam_max
    over = p > 1.0
    simulate_cox_thinning.violations = int(over.sum())
    p = np.minimum(p, 1.0)
    return PointPattern(cand[u < p], window)


simulate_cox_thinning.violations = 0


def _loglik_from_values(rho_data, rho_quad, weights, include_constant=True):
    if np.isnan(rho_data).any() or np.isnan(rho_quad).any():
        raise FloatingPointError("intensity evaluated to NaN")
    if rho_data.size and rho_data.min() <= 0.0:
        return -math.inf
    # the unit-rate constant is integrated with the same rule, so rho == 1 gives exactly 0
    out = float(np.sum(np.log(rho_data))) - float(np.dot(weights, rho_quad - 1.0))
    if not include_constant:
        out -= float(weights.sum())
    return out if np.isfinite(out) else -math.inf


def log_likelihood(rho, pattern, field, quad, include_constant=True):
    """Poisson log-likelihood relative to the unit-rate process.

    Returns sum_k log rho(Z(X_k)) - Q[rho(Z) - 1], where Q is the quadrature
    rule (Q[1] equals vol(W)); the "+ vol(W)" part is omitted when
    ``include_constant`` is False. A non-positive intensity at a
    data point gives -inf; NaN intensities raise FloatingPointError.
    """
    rd = np.asarray(rho(covariates_at(field, pattern.points)), dtype=float).ravel()
    rq = np.asarray(rho(covariates_at(field, quad.nodes)), dtype=float).ravel()
    return _loglik_from_values(rd, rq, quad.weights, include_constant)


class LikelihoodModel:
    """Dataset-level cache: covariates at data points and quadrature nodes.

    The covariates are computed once and are read-only afterwards.
    ``loglik_values`` evaluates the likelihood from intensity values at the
    concatenated points ``self.covariates`` (data first, then quadrature
    nodes).
    """

    def __init__(self, pattern, field, quad=None, max_nodes=2500):
        self.pattern = pattern
        self.field = field
        self.quad = quad if quad is not None else make_quadrature(pattern.window, max_nodes)
        self.d = field.d
        self.z_data = covariates_at(field, pattern.points)
        self.z_quad = covariates_at(field, self.quad.nodes)
        for arr in (self.z_data, self.z_quad):
            arr.setflags(write=False)
        self.K = pattern.count
        self.volume = pattern.window.volume
        self.weights = self.quad.weights

    @property
    def covariates(self):
        return np.concatenate([self.z_data, self.z_quad], axis=0)

    def loglik_values(self, values, include_constant=True):
        values = np.asarray(values, dtype=float)
        return _loglik_from_values(values[: self.K], values[self.K:], self.weights,
                                   include_constant)

    def __call__(self, rho, include_constant=True):
        return _loglik_from_values(np.asarray(rho(self.z_data), float).ravel(),
                                   np.asarray(rho(self.z_quad), float).ravel(),
                                   self.weights, include_constant)


# ----------------------------------------------------------------------------
# pattern files

def _meta_path(path):
    return Path(path).with_suffix(".json")


def write_pattern(pattern, path):
    path = Path(path)
    header = "x" if pattern.window.D == 1 else "x,y"
    lines = [header] + [",".join(f"{v:.17g}" for v in row) for row in pattern.points]
    path.write_text("\n".join(lines) + "\n")
    meta = {"n": pattern.window.volume, "D": pattern.window.D,
            "lower": list(pattern.window.lower), "upper": list(pattern.window.upper)}
    _meta_path(path).write_text(json.dumps(meta) + "\n")


def read_pattern(path, window=None, drop_outside=False):
    """Read a pattern CSV; the window comes from the sibling JSON unless given.

    Points outside the window raise PatternValidationError (listing their
    row indices) unless ``drop_outside`` is set.
    """
    path = Path(path)
    if window is None:
        meta = json.loads(_meta_path(path).read_text())
        D = int(meta["D"])
        if "lower" in meta:
            window = Window.from_bounds(meta["lower"], meta["upper"])
        else:
            window = Window(float(meta["n"]), D)
    with open(path) as fh:
        header = fh.readline().strip().split(",")
        expected = ["x"] if window.D == 1 else ["x", "y"]
        if [h.strip() for h in header] != expected:
            raise PatternValidationError(f"{path}: header {header} does not match {expected}")
        pts = np.loadtxt(fh, delimiter=",", ndmin=2).reshape(-1, window.D)
    if np.isnan(pts).any():
        raise PatternValidationError(f"{path}: NaN coordinates")
    inside = window.contains(pts) if len(pts) else np.ones(0, bool)
    if not inside.all():
        bad = np.flatnonzero(~inside).tolist()
        if not drop_outside:
            raise PatternValidationError(f"{path}: {len(bad)} point(s) outside the window", bad)
        pts = pts[inside]
    return PointPattern(pts, window)
