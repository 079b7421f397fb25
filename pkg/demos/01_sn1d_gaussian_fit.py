"""
Estimating a smooth covariate intensity from one simulated point pattern.

The story: a planar window of area n = 4 carries a random covariate
surface Z(x) in [0,1]. Points fall with intensity rho0(Z(x)), where rho0 is
the skewed bump ``sn1d``. We only see the points and the covariate surface
and want rho0 back as a function of the covariate value.

Run with ``python demos/01_sn1d_gaussian_fit.py``; takes a few seconds.
"""

import numpy as np

from covbayes.covfield import Window, simulate_gaussian_covariates
from covbayes.estimate import (kernel_baseline, posterior_mean, relative_l1_error,
                               summarize)
from covbayes.pointproc import LikelihoodModel, simulate_cox_thinning
from covbayes.priors import PriorSpec
from covbayes.samplers import ChainModel, SamplerConfig, run_chain
from covbayes.scenarios import get_truth

rng = np.random.default_rng(2024)
truth = get_truth("sn1d")

# 1. the observed world: covariate field plus Cox pattern
field = simulate_gaussian_covariates(Window(4, 2), lengthscales=(0.5,), seed=rng)
pattern = simulate_cox_thinning(truth, field, seed=rng)
print(f"observed {pattern.count} points on a window of area {field.window.volume:g}")

# 2. the prior: a Gaussian wavelet series, rescaled for the window size
spec = PriorSpec("gaussian", alpha=1.5, truncation=1024, n=field.window.volume)

# 3. the posterior, explored with preconditioned Crank-Nicolson
lik = LikelihoodModel(pattern, field, max_nodes=160_000)
result = run_chain(SamplerConfig(iterations=5000, burn_in=2000), ChainModel(spec, lik), seed=rng)
print(f"post-burn-in acceptance {result.post_burn_acceptance:.2f}, "
      f"final step size {result.final_step_size:.3f}, {len(result.samples)} stored samples")

# 4. what did we learn?
mean = posterior_mean(result.samples, spec)
kde = kernel_baseline(pattern, field)
print(f"relative L1 error, posterior mean: {relative_l1_error(mean, truth):.3f}")
print(f"relative L1 error, kernel baseline: {relative_l1_error(kde, truth):.3f}")

band = summarize(result.samples, spec, grid=np.linspace(0, 1, 11))
print("\n   z    truth   mean   95% band")
for z, m, lo, hi in zip(band.grid, band.mean, band.lower, band.upper):
    print(f"{z:5.2f} {float(truth(z)):7.1f} {m:7.1f}  [{lo:6.1f}, {hi:6.1f}]")
