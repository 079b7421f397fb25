import json
import math

import numpy as np
import pytest
from scipy import stats

from covbayes.covfield import Window, simulate_gaussian_covariates
from covbayes.pointproc import (
    LikelihoodModel, PatternValidationError, PointPattern, log_likelihood, make_quadrature,
    read_pattern, simulate_cox_thinning, write_pattern,
)
from covbayes.scenarios import eval_sn1d


@pytest.fixture(scope="module")
def field4():
    return simulate_gaussian_covariates(Window(4, 2), seed=11)


def const(c):
    return lambda z: np.full(len(z), float(c))


def test_quadrature_unit_window():
    q = make_quadrature(Window(1, 2), 2500)
    assert q.shape == (50, 50)
    assert np.allclose(q.weights, 1 / 2500)


@pytest.mark.parametrize("n,D,cap", [(1, 1, 16), (4, 2, 2500), (16, 2, 1000), (7.3, 2, 300)])
def test_quadrature_weights_sum(n, D, cap):
    q = make_quadrature(Window(n, D), cap)
    assert abs(q.weights.sum() - n) < 1e-9
    assert len(q.weights) <= cap
    assert abs(np.sum(q.weights * 1.0) - n) < 1e-12 * max(1, n) * 10


def test_quadrature_rejects_tiny_cap():
    with pytest.raises(ValueError):
        make_quadrature(Window(1, 2), 15)


def test_thinning_zero_intensity(field4):
    p = simulate_cox_thinning(const(0), field4, seed=0)
    assert p.count == 0


def test_thinning_constant_mean_and_variance(field4):
    counts = [simulate_cox_thinning(const(100), field4, seed=s).count for s in range(200)]
    mean = np.mean(counts)
    assert 395.8 <= mean <= 404.2 or abs(mean - 400) <= 3 * math.sqrt(400 / 200)
    var = np.var(counts, ddof=1)
    # sampling sd of the variance of 200 Poisson(400) draws is about 400*sqrt(2/199)
    assert abs(var - 400) < 3 * 400 * math.sqrt(2 / 199)


def test_thinning_sn1d_count():
    counts = []
    for s in range(100):
        f = simulate_gaussian_covariates(Window(1, 2), seed=1000 + s)
        counts.append(simulate_cox_thinning(eval_sn1d, f, seed=s).count)
    assert 90 <= np.mean(counts) <= 110


def test_thinning_points_inside(field4):
    p = simulate_cox_thinning(const(50), field4, seed=3)
    assert field4.window.contains(p.points).all()
    assert simulate_cox_thinning.violations == 0


def test_thinning_conditional_histogram():
    """Covariates at retained points follow rho * (covariate occupation density)."""
    rho = lambda z: 40.0 + 160.0 * z
    bins = np.linspace(0, 1, 11)
    observed = np.zeros(10)
    expected = np.zeros(10)
    for s in range(100):
        f = simulate_gaussian_covariates(Window(4, 2), seed=500 + s, resolution=20)
        p = simulate_cox_thinning(rho, f, seed=s)
        z = f(p.points)[:, 0]
        observed += np.histogram(z, bins)[0]
        q = make_quadrature(f.window, 40000)
        zq = f(q.nodes)[:, 0]
        expected += np.histogram(zq, bins, weights=rho(zq) * q.weights)[0]
    expected *= observed.sum() / expected.sum()
    keep = expected > 5
    stat = np.sum((observed[keep] - expected[keep]) ** 2 / expected[keep])
    assert stat < stats.chi2.ppf(0.99, keep.sum() - 1)


def _pattern(K, n, seed=0):
    w = Window(n, 2)
    rng = np.random.default_rng(seed)
    pts = np.asarray(w.lower) + w.sides * rng.uniform(size=(K, 2))
    return PointPattern(pts, w)


def test_loglik_closed_forms():
    f = simulate_gaussian_covariates(Window(4, 2), seed=1)
    q = make_quadrature(f.window, 400)
    assert log_likelihood(const(1), _pattern(5, 4), f, q) == 0.0
    assert abs(log_likelihood(const(2), _pattern(3, 4), f, q) - (3 * math.log(2) - 4)) < 1e-12
    f2 = simulate_gaussian_covariates(Window(2, 2), seed=1)
    q2 = make_quadrature(f2.window, 400)
    assert abs(log_likelihood(const(0.5), _pattern(0, 2), f2, q2) - 1.0) < 1e-12


def test_loglik_nonpositive_and_nan(field4):
    q = make_quadrature(field4.window, 400)
    p = _pattern(4, 4)
    assert log_likelihood(const(0), p, field4, q) == -math.inf
    assert log_likelihood(lambda z: z - 2.0, p, field4, q) == -math.inf
    with pytest.raises(FloatingPointError):
        log_likelihood(const(np.nan), p, field4, q)


def test_loglik_ratio_independent_of_constant(field4):
    q = make_quadrature(field4.window, 900)
    p = simulate_cox_thinning(lambda z: 50 + 50 * z, field4, seed=2)
    r1, r2 = (lambda z: 30 + 80 * z), (lambda z: 60 * np.exp(z))
    a = log_likelihood(r1, p, field4, q) - log_likelihood(r2, p, field4, q)
    b = (log_likelihood(r1, p, field4, q, include_constant=False)
         - log_likelihood(r2, p, field4, q, include_constant=False))
    assert abs(a - b) < 1e-9 * max(1, abs(a))


def test_quadrature_refinement_stable(field4):
    p = simulate_cox_thinning(lambda z: 100 * np.exp(-z), field4, seed=5)
    rho = lambda z: 90 * np.exp(-0.8 * z)
    l1 = log_likelihood(rho, p, field4, make_quadrature(field4.window, 2500))
    l2 = log_likelihood(rho, p, field4, make_quadrature(field4.window, 5000))
    assert abs(l1 - l2) / abs(l1) < 1e-3


def test_likelihood_model_matches_function(field4):
    p = simulate_cox_thinning(lambda z: 80 + 20 * z, field4, seed=6)
    q = make_quadrature(field4.window, 900)
    model = LikelihoodModel(p, field4, q)
    rho = lambda z: 70 + 10 * z
    assert abs(model(rho) - log_likelihood(rho, p, field4, q)) < 1e-9
    vals = rho(model.covariates)
    assert abs(model.loglik_values(vals) - model(rho)) < 1e-9


def test_pattern_rejects_outside_points():
    with pytest.raises(PatternValidationError):
        PointPattern(np.array([[0.0, 0.0], [3.0, 0.0]]), Window(1, 2))


def test_pattern_file_roundtrip(tmp_path):
    p = _pattern(25, 4, seed=3)
    path = tmp_path / "pts.csv"
    write_pattern(p, path)
    meta = json.loads(path.with_suffix(".json").read_text())
    assert meta["n"] == 4 and meta["D"] == 2
    assert path.read_text().splitlines()[0] == "x,y"
    q = read_pattern(path)
    assert np.array_equal(p.points, q.points) and q.count == 25


def test_pattern_file_outside_listed(tmp_path):
    path = tmp_path / "pts.csv"
    path.write_text("x,y\n0.1,0.1\n5,5\n")
    path.with_suffix(".json").write_text('{"n": 1, "D": 2}')
    with pytest.raises(PatternValidationError) as err:
        read_pattern(path)
    assert err.value.offending == [1]
    assert read_pattern(path, drop_outside=True).count == 1
