"""
Dimension-robust MCMC for wavelet-series intensity priors.

All kernels operate on whitened coordinates w (iid N(0,1) under the prior)
and map them to coefficients through the prior transform. For the Gaussian
prior this is exactly the pCN proposal on the rescaled coefficients; for the
Besov-Laplace prior it is the whitened pCN scheme. The hierarchical model
adds a random-walk Metropolis update for the regularity alpha.
"""

import csv
import math
from dataclasses import dataclass, field, replace

import numpy as np

from .priors import function_coefficients, get_evaluator, transform
from .wavelet import CoefficientVector

ALPHA_FLOOR = 1e-6


def replicate_rng(seed, index=0):
    """Independent stream for replicate ``index`` of a run seeded with ``seed``.

    The stream is ``SeedSequence(seed, spawn_key=(index,))``, which is the
    ``index``-th child of ``SeedSequence(seed)``; streams for different
    indices are statistically independent.
    """
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(index),)))


@dataclass
class HyperConfig:
    hyperprior_rate: float = 1.0
    alpha_step: float = 0.15
    alpha_init: float = 1.0

    def log_prior(self, alpha):
        return math.log(self.hyperprior_rate) - self.hyperprior_rate * alpha if alpha >= 0 else -math.inf


@dataclass
class SamplerConfig:
    step_size: float = 0.05
    iterations: int = 5000
    burn_in: int = 2000
    thin: int = 10
    adapt: bool = True
    adapt_target: tuple = (0.20, 0.30)
    adapt_window: int = 100
    hyper: HyperConfig = None

    def __post_init__(self):
        if not 0.0 < self.step_size < 0.5:
            raise ValueError("step size b must lie in (0, 1/2)")
        if not 0 <= self.burn_in < self.iterations:
            raise ValueError("burn_in must be smaller than iterations")
        if self.thin < 1:
            raise ValueError("thin must be >= 1")
        if isinstance(self.hyper, dict):
            self.hyper = HyperConfig(**self.hyper)

    def to_dict(self):
        out = {"step_size": self.step_size, "iterations": self.iterations,
               "burn_in": self.burn_in, "thin": self.thin, "adapt": self.adapt,
               "adapt_target": list(self.adapt_target), "adapt_window": self.adapt_window}
        if self.hyper is not None:
            out["hyper"] = vars(self.hyper).copy()
        return out

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        if "adapt_target" in data:
            data["adapt_target"] = tuple(data["adapt_target"])
        return cls(**data)


class ChainModel:
    """Prior plus (optional) cached likelihood; ``likelihood=None`` means flat.

    The intensity is the link applied on the fine wavelet grid followed by
    linear interpolation, so the quadrature term collapses to one dot
    product: the quadrature weights are pushed onto the grid once, through
    the adjoint of the interpolation, and the number of quadrature nodes
    does not affect the per-iteration cost.
    """

    def __init__(self, spec, likelihood=None, oversample=4):
        self.spec = spec
        self.likelihood = likelihood
        self.basis = spec.basis
        self.evaluator = get_evaluator(self.basis, spec.truncation, oversample)
        self._interp = None
        if likelihood is not None:
            self._interp = self.evaluator.interpolator(likelihood.z_data)
            quad_interp = self.evaluator.interpolator(likelihood.z_quad)
            self.grid_mass = quad_interp.adjoint(likelihood.weights)
            self.grid_mass.setflags(write=False)
            self._total_weight = float(likelihood.weights.sum())

    def coefficients(self, w, alpha=None):
        return transform(self.spec, w, alpha)

    def series_grid(self, coeffs, alpha=None):
        return self.evaluator.grid(function_coefficients(self.spec, coeffs, alpha))

    def loglik_from_grid(self, grid):
        if self.likelihood is None:
            return 0.0
        rho_grid, _ = self.spec.link.apply(grid)
        rho_data = self._interp(rho_grid)
        if np.isnan(rho_data).any():
            raise FloatingPointError("intensity evaluated to NaN")
        if rho_data.size and rho_data.min() <= 0.0:
            return -math.inf
        return float(np.sum(np.log(rho_data)) - np.sum(self.grid_mass * rho_grid)
                     + self._total_weight)

    def evaluate(self, w, alpha=None):
        """(coefficients, series grid, log-likelihood) for whitened coordinates w."""
        c = self.coefficients(w, alpha)
        if self.likelihood is None:
            return c, None, 0.0
        grid = self.series_grid(c, alpha)
        ll = self.loglik_from_grid(grid)
        if not np.isfinite(ll):
            ll = -math.inf
        return c, grid, ll


@dataclass
class ChainState:
    whitened: np.ndarray
    coeffs: np.ndarray
    log_lik: float
    alpha: float = None
    grid_cache: np.ndarray = None
    floored: bool = False

    def transformed(self, model):
        return CoefficientVector(self.coeffs, model.basis)

    def revalidate(self, model, tol=1e-9):
        c, _, ll = model.evaluate(self.whitened, self.alpha)
        same_c = np.allclose(c, self.coeffs, rtol=0, atol=1e-12)
        same_ll = (ll == self.log_lik) or abs(ll - self.log_lik) <= tol * max(1.0, abs(ll))
        return bool(same_c and same_ll)


def initial_state(model, alpha=None, whitened=None):
    w = np.zeros(model.spec.truncation) if whitened is None else np.asarray(whitened, float)
    c, grid, ll = model.evaluate(w, alpha)
    return ChainState(w, c, ll, alpha, grid)


def _crank_nicolson(state, model, rng, b):
    zeta = rng.standard_normal(state.whitened.size)
    w_new = math.sqrt(1.0 - 2.0 * b) * state.whitened + math.sqrt(2.0 * b) * zeta
    c, grid, ll = model.evaluate(w_new, state.alpha)
    log_u = math.log(rng.uniform())
    if ll > -math.inf and log_u < ll - state.log_lik:
        return ChainState(w_new, c, ll, state.alpha, grid, state.floored), True
    return state, False


def pcn_step(state, model, rng, b):
    """pCN update for the Gaussian prior (fresh prior draw blended with the current state)."""
    if model.spec.kind != "gaussian":
        raise ValueError("pCN requires a gaussian prior; use wpcn_step for besov_laplace")
    return _crank_nicolson(state, model, rng, b)


def wpcn_step(state, model, rng, b):
    """Whitened pCN update for the Besov-Laplace prior."""
    if model.spec.kind != "besov_laplace":
        raise ValueError("wpCN requires a besov_laplace prior; use pcn_step for gaussian")
    return _crank_nicolson(state, model, rng, b)


def mwg_step(state, model, rng, b, hyper):
    """One Metropolis-within-Gibbs sweep: coefficients at fixed alpha, then alpha.

    The alpha proposal is max(alpha + c Z, 0) and is accepted with the
    likelihood ratio times the hyperprior ratio; no correction is made for
    the asymmetry introduced by the truncation at zero. A proposal of
    exactly zero is evaluated at ``ALPHA_FLOOR`` and flagged on the state.
    """
    state, acc_xi = _crank_nicolson(state, model, rng, b)
    prop = max(state.alpha + hyper.alpha_step * rng.standard_normal(), 0.0)
    floored = prop == 0.0
    if floored:
        prop = ALPHA_FLOOR
    if prop == state.alpha:
        return state, acc_xi, True
    c, grid, ll = model.evaluate(state.whitened, prop)
    log_ratio = ll - state.log_lik + hyper.log_prior(prop) - hyper.log_prior(state.alpha)
    if ll > -math.inf and math.log(rng.uniform()) < log_ratio:
        return ChainState(state.whitened, c, ll, prop, grid, floored), acc_xi, True
    return state, acc_xi, False


def adapt_step_size(history, b, target=(0.20, 0.30), up=1.25, down=0.8, bounds=(1e-6, 0.499)):
    """Multiplicative step-size update from a window of acceptance indicators.

    Inside the target band b is unchanged; above it b grows by ``up`` and
    below it shrinks by ``down``. When the windowed rate is far outside the
    band (below half its lower edge, or above twice its upper edge) the
    factor is squared, so that cold starts from a poor step size settle
    within the burn-in.
    """
    rate = float(np.mean(history)) if len(history) else target[0]
    if rate > target[1]:
        b = b * (up * up if rate > min(2 * target[1], 0.95) else up)
    elif rate < target[0]:
        b = b * (down * down if rate < target[0] / 2 else down)
    return float(min(max(b, bounds[0]), bounds[1]))


@dataclass
class ChainResult:
    samples: list
    alphas: np.ndarray
    trace: dict
    acceptance_rate: float
    post_burn_acceptance: float
    alpha_acceptance_rate: float = float("nan")
    final_step_size: float = float("nan")
    runtime_s: float = 0.0

    def sample_matrix(self):
        return np.array([s.coeffs for s in self.samples])


def run_chain(config, model, seed=None, initial=None):
    """Run a cold-started chain and return thinned post-burn-in samples with a full trace."""
    import time

    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    t0 = time.perf_counter()
    hyper = config.hyper
    alpha0 = hyper.alpha_init if hyper is not None else model.spec.alpha
    state = initial if initial is not None else initial_state(model, alpha0 if hyper else None)
    if hyper is not None and state.alpha is None:
        state = initial_state(model, alpha0, state.whitened)
    step = pcn_step if model.spec.kind == "gaussian" else wpcn_step
    b = config.step_size
    N = config.iterations
    trace = {"iter": np.arange(1, N + 1), "loglik": np.empty(N), "alpha": np.empty(N),
             "accepted": np.zeros(N, dtype=bool), "b": np.empty(N)}
    alpha_acc = 0
    samples, alphas = [], []
    window = []
    for i in range(1, N + 1):
        trace["b"][i - 1] = b
        if hyper is not None:
            state, acc, acc_a = mwg_step(state, model, rng, b, hyper)
            alpha_acc += acc_a
        else:
            state, acc = step(state, model, rng, b)
        trace["loglik"][i - 1] = state.log_lik
        trace["alpha"][i - 1] = state.alpha if state.alpha is not None else model.spec.alpha
        trace["accepted"][i - 1] = acc
        if config.adapt and i <= config.burn_in:
            window.append(acc)
            if len(window) == config.adapt_window:
                b = adapt_step_size(window, b, config.adapt_target)
                window = []
        if i > config.burn_in and (i - config.burn_in) % config.thin == 0:
            samples.append(CoefficientVector(state.coeffs.copy(), model.basis))
            alphas.append(trace["alpha"][i - 1])
    acc_all = trace["accepted"]
    post = acc_all[config.burn_in:]
    return ChainResult(samples, np.asarray(alphas), trace, float(acc_all.mean()),
                       float(post.mean()) if post.size else float("nan"),
                       alpha_acc / N if hyper is not None else float("nan"), b,
                       time.perf_counter() - t0)


def windowed_acceptance(trace, start, window=200):
    """Acceptance rates over consecutive windows from ``start`` on."""
    acc = np.asarray(trace["accepted"][start:], dtype=float)
    m = acc.size // window
    return acc[: m * window].reshape(m, window).mean(axis=1) if m else acc.mean(keepdims=True)


# ----------------------------------------------------------------------------
# files

def write_trace(result, path):
    tr = result.trace
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(["iter", "loglik", "alpha", "accepted", "b"])
        for row in zip(tr["iter"], tr["loglik"], tr["alpha"], tr["accepted"], tr["b"]):
            wr.writerow([int(row[0]), f"{row[1]:.17g}", f"{row[2]:.17g}", int(row[3]),
                         f"{row[4]:.17g}"])


def write_samples(result, path, include_alpha=False):
    with open(path, "w") as fh:
        for s, a in zip(result.samples, result.alphas):
            vals = list(s.coeffs) + ([a] if include_alpha else [])
            fh.write(",".join(f"{v:.17g}" for v in vals) + "\n")


def read_samples(path, basis, include_alpha=False):
    data = np.loadtxt(path, delimiter=",", ndmin=2)
    alphas = data[:, -1] if include_alpha else None
    coeffs = data[:, :-1] if include_alpha else data
    return [CoefficientVector(row, basis) for row in coeffs], alphas
