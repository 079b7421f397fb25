"""
Simulate-fit-evaluate pipeline for a single experimental cell.

Covariate-based scenarios with a scalar covariate are observed on a planar
window of volume n carrying one Gaussian covariate field (lengthscale 0.5);
bivariate scenarios add a second, independent component with lengthscale 1.5.
"""

import time
from dataclasses import dataclass

import numpy as np

from .covfield import Window, simulate_gaussian_covariates
from .estimate import posterior_mean, relative_l1_error
from .pointproc import LikelihoodModel, simulate_cox_thinning
from .priors import PriorSpec
from .samplers import ChainModel, SamplerConfig, replicate_rng, run_chain
from .scenarios import get_truth

FIELD_LENGTHSCALES = {1: (0.5,), 2: (0.5, 1.5)}

# The likelihood integral is collapsed onto the wavelet grid, so a dense
# quadrature costs nothing per MCMC iteration; it must resolve the covariate
# distribution finely enough that isolated spikes of the intensity at the
# observed covariate values are penalised by the integral term.
FIT_QUAD_NODES = 160_000


@dataclass
class Dataset:
    scenario: str
    n: float
    field: object
    pattern: object


def simulate_dataset(scenario, n, seed, D=2, resolution=50, max_nodes=400):
    """Covariate field and Cox pattern for one replicate (deterministic in ``seed``)."""
    truth = get_truth(scenario)
    ss = np.random.SeedSequence(seed) if not isinstance(seed, np.random.SeedSequence) else seed
    field_ss, points_ss = ss.spawn(2)
    field = simulate_gaussian_covariates(Window(n, D), FIELD_LENGTHSCALES[truth.d], resolution,
                                         field_ss, max_nodes)
    pattern = simulate_cox_thinning(truth, field, seed=np.random.default_rng(points_ss))
    return Dataset(scenario, n, field, pattern)


def fit_dataset(dataset, spec, config, seed, max_quad_nodes=FIT_QUAD_NODES):
    spec = spec.with_n(dataset.pattern.window.volume)
    lik = LikelihoodModel(dataset.pattern, dataset.field, max_nodes=max_quad_nodes)
    model = ChainModel(spec, lik)
    result = run_chain(config, model, seed)
    return spec, result


def run_cell(scenario, n, kind, alpha, seed, replicate=0, config=None, truncation=1024,
             hierarchical=False):
    """Simulate one dataset, fit it and return a metrics record."""
    t0 = time.perf_counter()
    truth = get_truth(scenario)
    data_seed = np.random.SeedSequence(int(seed), spawn_key=(int(replicate), 0))
    data = simulate_dataset(scenario, n, data_seed)
    config = config or SamplerConfig()
    spec = PriorSpec(kind, alpha, truncation, d=truth.d)
    spec, result = fit_dataset(data, spec, config, replicate_rng(seed, replicate))
    est = posterior_mean(result.samples, spec, result.alphas if config.hyper else None)
    err = relative_l1_error(est, truth, truth.d)
    return {"scenario": scenario, "n": n, "prior": kind, "alpha": alpha,
            "rel_l1": err, "acc_rate": result.post_burn_acceptance,
            "runtime_s": time.perf_counter() - t0, "seed": int(seed), "replicate": replicate,
            "K": data.pattern.count, "final_b": result.final_step_size,
            "alpha_mean": float(np.mean(result.alphas)) if len(result.alphas) else alpha,
            "_result": result, "_estimate": est}
