"""
Wavelet-series priors on covariate intensities.

Two priors are supported. The Gaussian prior has coefficients
l^(-alpha/d) w_l with w_l iid N(0,1). The Besov-Laplace prior has
coefficients l^(-(alpha/d - 1/2)) w_l with w_l iid standard Laplace.
Both are rescaled by a power of the window volume n and pushed through a
positive link function.

Coefficient vectors follow one storage convention throughout. Gaussian
draws store the unrescaled coefficients l^(-alpha/d) w_l. Laplace draws
store the whitened-and-transformed coefficients, which already include the
rescaling.
"""

from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np
from scipy.special import expit, log_ndtr

from .covfield import as_generator
from .wavelet import CoefficientVector, SeriesEvaluator, WaveletBasis

PRIOR_KINDS = ("gaussian", "besov_laplace")
LINK_KINDS = ("exponential", "sigmoid_scaled", "softplus_scaled")
EXP_CAP = 1e12
_LOG_CAP = float(np.log(EXP_CAP))


@dataclass(frozen=True)
class LinkFunction:
    kind: str = "exponential"
    scale: float = 1.0

    def __post_init__(self):
        if self.kind not in LINK_KINDS:
            raise ValueError(f"unknown link {self.kind!r}; expected one of {LINK_KINDS}")
        if not self.scale > 0:
            raise ValueError("link scale must be positive")

    def apply(self, t):
        """Link values and a flag telling whether the exponential cap was hit."""
        t = np.asarray(t, dtype=float)
        if self.kind == "exponential":
            capped = bool(np.any(t > _LOG_CAP))
            return self.scale * np.where(t > _LOG_CAP, EXP_CAP, np.exp(np.minimum(t, _LOG_CAP))), capped
        if self.kind == "sigmoid_scaled":
            return self.scale * expit(t), False
        return self.scale * np.logaddexp(0.0, t), False

    def __call__(self, t):
        return self.apply(t)[0]


@dataclass(frozen=True)
class PriorSpec:
    kind: str = "gaussian"
    alpha: float = 1.5
    truncation: int = 1024
    link: LinkFunction = field(default_factory=LinkFunction)
    d: int = 1
    n: float = 1.0
    laplace_scale: float = 1.0
    wavelet: str = "sym8"
    boundary: str = "symmetric"

    def __post_init__(self):
        if self.kind not in PRIOR_KINDS:
            raise ValueError(f"unknown prior kind {self.kind!r}; expected one of {PRIOR_KINDS}")
        if not self.alpha > 0:
            raise ValueError("alpha must be positive")
        if self.truncation < 1 or not self.n > 0:
            raise ValueError("truncation must be >= 1 and n > 0")
        self.basis.level_of(self.truncation)

    @property
    def basis(self):
        return WaveletBasis.from_name(self.wavelet, self.boundary, self.d)

    def with_n(self, n):
        return replace(self, n=float(n))

    def to_dict(self):
        return {"kind": self.kind, "alpha": self.alpha, "truncation": self.truncation,
                "link": self.link.kind, "link_scale": self.link.scale, "d": self.d, "n": self.n,
                "laplace_scale": self.laplace_scale, "wavelet": self.wavelet,
                "boundary": self.boundary}

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        link = LinkFunction(data.pop("link", "exponential"), float(data.pop("link_scale", 1.0)))
        known = {"kind", "alpha", "truncation", "d", "n", "laplace_scale", "wavelet", "boundary"}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown prior keys: {sorted(unknown)}")
        if "truncation" in data:
            data["truncation"] = int(data["truncation"])
        return cls(link=link, **data)


def rescale_factor(spec, alpha=None):
    a = spec.alpha if alpha is None else alpha
    d = spec.d
    if spec.kind == "gaussian":
        return float(spec.n) ** (-d / (4 * a + 2 * d))
    return float(spec.n) ** (-d / (2 * a + d))


def coefficient_weight(spec, ell, alpha=None):
    a = spec.alpha if alpha is None else alpha
    ell = np.asarray(ell, dtype=float)
    if np.any(ell < 1):
        raise ValueError("indices start at 1")
    expo = a / spec.d if spec.kind == "gaussian" else a / spec.d - 0.5
    return ell ** (-expo)


def weights(spec, alpha=None):
    return coefficient_weight(spec, np.arange(1, spec.truncation + 1), alpha)


def laplace_from_normal(w):
    """sgn(w) * (-log(2 - 2 Phi(|w|))): maps N(0,1) to the standard Laplace law.

    Evaluated as -(log 2 + log Phi(-|w|)) so that large |w| stay finite.
    """
    w = np.asarray(w, dtype=float)
    return np.sign(w) * -(np.log(2.0) + log_ndtr(-np.abs(w)))


def whiten_transform(spec, ell, w, alpha=None):
    """Laplace prior coefficient obtained from whitened coordinate w at index ell."""
    spec_l = replace(spec, kind="besov_laplace") if spec.kind != "besov_laplace" else spec
    return (rescale_factor(spec_l, alpha) * spec.laplace_scale
            * coefficient_weight(spec_l, ell, alpha) * laplace_from_normal(w))


def transform(spec, w, alpha=None):
    """Stored coefficients for whitened coordinates w (see module docstring)."""
    w = np.asarray(w, dtype=float)
    if spec.kind == "gaussian":
        return weights(spec, alpha) * w
    return whiten_transform(spec, np.arange(1, w.size + 1), w, alpha)


def function_coefficients(spec, coeffs, alpha=None):
    """Coefficients of the series inside the link (rescaling applied)."""
    c = coeffs.coeffs if isinstance(coeffs, CoefficientVector) else np.asarray(coeffs, float)
    if spec.kind == "gaussian":
        return rescale_factor(spec, alpha) * c
    return c


@dataclass(frozen=True, eq=False)
class PriorDraw:
    coeffs: CoefficientVector
    whitened: np.ndarray


def sample_prior(spec, seed=None):
    rng = as_generator(seed)
    w = rng.standard_normal(spec.truncation)
    return PriorDraw(CoefficientVector(transform(spec, w), spec.basis), w)


@lru_cache(maxsize=32)
def get_evaluator(basis, truncation, oversample=4):
    return SeriesEvaluator(basis, truncation, oversample)


class Intensity:
    """Covariate intensity backed by a fine-grid realisation.

    The link is applied at the grid nodes and the result is interpolated
    linearly (bilinearly for d = 2) in between, which keeps the intensity
    positive and makes quadrature sums linear in the grid values.
    """

    def __init__(self, link, series_grid, evaluator):
        self.link = link
        self.series_grid = series_grid
        self.evaluator = evaluator
        self.values, self.capped = link.apply(series_grid)

    @property
    def d(self):
        return self.evaluator.basis.dimension

    def series(self, z):
        return self.evaluator.interpolator(z)(self.series_grid)

    def __call__(self, z):
        z = np.asarray(z, dtype=float)
        out = self.evaluator.interpolator(z)(self.values)
        if (self.d == 1 and z.ndim == 0) or (self.d == 2 and z.ndim == 1):
            return float(out[0])
        return out

    def grid_values(self):
        return self.values


def realize_intensity(spec, coeffs, alpha=None, oversample=4):
    c = function_coefficients(spec, coeffs, alpha)
    ev = get_evaluator(spec.basis, spec.truncation, oversample)
    return Intensity(spec.link, ev.grid(c), ev)
