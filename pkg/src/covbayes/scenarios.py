"""
Closed-form ground-truth covariate intensities used in the simulation studies.

Evaluators accept covariate arrays of shape (m,) for the univariate truths and
(m, 2) (or a single pair) for the bivariate ones.
"""

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import ndtr

SCENARIOS = ("sn1d", "blocks1d", "sn2d", "blockspike2d")

# Reference L1 norms of the ground truths and the tolerance accepted for each.
REPORTED_L1_NORMS = {"sn1d": 99.23, "blocks1d": 100.96, "sn2d": 100.0, "blockspike2d": 100.0}
REPORTED_TOLERANCE = {"sn1d": 0.05, "blocks1d": 0.01, "sn2d": 0.5, "blockspike2d": 2.0}


def skew_normal_pdf(z, loc, scale, shape):
    t = (np.asarray(z, dtype=float) - loc) / scale
    return 2.0 / scale * np.exp(-0.5 * t * t) / np.sqrt(2 * np.pi) * ndtr(shape * t)


def skew_normal_pdf_2d(z, loc=(0.4, 0.6), var=0.05, shape=(3.0, -2.0)):
    """Azzalini bivariate skew-normal density with isotropic covariance var * I."""
    z = np.asarray(z, dtype=float)
    u = (z - np.asarray(loc)) / np.sqrt(var)
    phi2 = np.exp(-0.5 * np.sum(u * u, axis=-1)) / (2 * np.pi * var)
    return 2.0 * phi2 * ndtr(u @ np.asarray(shape, dtype=float))


def eval_sn1d(z):
    return 100.0 * skew_normal_pdf(z, 0.8, 0.3, -5.0)


BLOCK_HEIGHTS = np.array([3.0, -4.0, 3.1, -2.2, 3.1, -3.0])
BLOCK_LOCATIONS = np.array([0.1, 0.15, 0.25, 0.40, 0.71, 0.81])


def eval_blocks1d(z):
    z = np.asarray(z, dtype=float)
    steps = (1.0 + np.sign(z[..., None] - BLOCK_LOCATIONS)) / 2.0
    return 100.0 / 1.64 * (1.01 + steps @ BLOCK_HEIGHTS)


@lru_cache(maxsize=None)
def _unit_square_mass(loc=(0.4, 0.6), var=0.05, shape=(3.0, -2.0), order=200):
    """Mass of the bivariate skew-normal inside [0,1]^2 (Gauss-Legendre)."""
    x, w = leggauss(order)
    x, w = (x + 1) / 2, w / 2
    X1, X2 = np.meshgrid(x, x, indexing="ij")
    vals = skew_normal_pdf_2d(np.stack([X1, X2], axis=-1), loc, var, shape)
    return float(w @ vals @ w)


def eval_sn2d(z):
    """Bivariate skew-normal truth, scaled to mass 100 over [0,1]^2."""
    return 100.0 * skew_normal_pdf_2d(z) / _unit_square_mass()


BS_BLOCK_LOW = np.array([0.1, 0.2])
BS_BLOCK_HIGH = np.array([0.3, 0.5])
BS_SPIKE_CENTRE = np.array([0.7, 0.8])
BS_SPIKE_WIDTH = 0.1
BS_SPIKE_HEIGHT = 20.0
BS_BLOCK_HEIGHT = 4.0


def block_indicator(z, low=BS_BLOCK_LOW, high=BS_BLOCK_HIGH):
    """Product over axes of (1+sgn(z-b))(1-sgn(z-c))/4; equal to 1 inside the block."""
    z = np.asarray(z, dtype=float)
    f = (1 + np.sign(z - low)) * (1 - np.sign(z - high)) / 4.0
    return np.prod(f, axis=-1)


def spike(z, centre=BS_SPIKE_CENTRE, width=BS_SPIKE_WIDTH):
    r = np.linalg.norm((np.asarray(z, dtype=float) - centre) / width, axis=-1)
    return (1.0 + r) ** -4


def eval_blockspike2d(z):
    return 100.0 / 0.42 * (BS_BLOCK_HEIGHT * block_indicator(z) + BS_SPIKE_HEIGHT * spike(z))


EVALUATORS = {"sn1d": eval_sn1d, "blocks1d": eval_blocks1d, "sn2d": eval_sn2d,
              "blockspike2d": eval_blockspike2d}
DIMENSIONS = {"sn1d": 1, "blocks1d": 1, "sn2d": 2, "blockspike2d": 2}


def blocks1d_exact_l1():
    """Exact integral of the blocks truth over [0,1] (piecewise constant)."""
    edges = np.concatenate([[0.0], BLOCK_LOCATIONS, [1.0]])
    mids = (edges[:-1] + edges[1:]) / 2
    return float(np.sum(eval_blocks1d(mids) * np.diff(edges)))


def l1_norm(scenario, nodes=None):
    """Midpoint-rule L1 norm on [0,1]^d (10^4 nodes in 1-D, 400^2 in 2-D by default)."""
    f = EVALUATORS[scenario]
    d = DIMENSIONS[scenario]
    m = nodes or (10_000 if d == 1 else 400)
    x = (np.arange(m) + 0.5) / m
    if d == 1:
        return float(np.mean(np.abs(f(x))))
    X1, X2 = np.meshgrid(x, x, indexing="ij")
    return float(np.mean(np.abs(f(np.stack([X1, X2], axis=-1)))))


@dataclass(frozen=True)
class GroundTruth:
    id: str
    d: int
    params: dict = field(default_factory=dict)

    def __call__(self, z):
        return EVALUATORS[self.id](z)

    @property
    def l1_norm_reference(self):
        return l1_norm(self.id)


_PARAMS = {
    "sn1d": {"loc": 0.8, "scale": 0.3, "shape": -5.0, "amplitude": 100.0},
    "blocks1d": {"heights": BLOCK_HEIGHTS.tolist(), "locations": BLOCK_LOCATIONS.tolist(),
                 "prefactor": 100 / 1.64, "offset": 1.01},
    "sn2d": {"loc": (0.4, 0.6), "cov": 0.05, "shape": (3.0, -2.0), "mass": 100.0},
    "blockspike2d": {"b": BS_BLOCK_LOW.tolist(), "c": BS_BLOCK_HIGH.tolist(),
                     "u": BS_SPIKE_CENTRE.tolist(), "w": BS_SPIKE_WIDTH, "h": BS_SPIKE_HEIGHT,
                     "a": BS_BLOCK_HEIGHT, "prefactor": 100 / 0.42},
}


def get_truth(scenario):
    if scenario not in EVALUATORS:
        raise KeyError(f"unknown scenario {scenario!r}; expected one of {SCENARIOS}")
    return GroundTruth(scenario, DIMENSIONS[scenario], _PARAMS[scenario])
