"""End-to-end acceptance checks, one test group per criterion.

The conftest hooks print one PASS/FAIL line per criterion at the end of the
run. Criteria 1, 2, 3, 7 and 10 share one full command-line pipeline run
(simulate, tune, train, predict), repeated once to check byte identity.
"""
import math
import time

import numpy as np
import pytest

from lssboost import families as F
from lssboost.cli import _load_config, main
from lssboost.data import hetero_scale, read_csv, simulate_train_test
from lssboost.diagnostics import feature_importance, partial_dependence, quantile_residuals
from lssboost.scoring import (
    PredictiveDistribution, crps_normal, crps_numeric, crps_sample, empirical_coverage, log_score,
    predict_params,
)
from lssboost.serialize import load_model, save_model
from lssboost.trainer import BoostConfig, Step2Config, TrainConfig, global_deviance, train, train_step2
from lssboost.tree import TreeParams, boost, leaf_weight, split_gain

from oracles import fd_grad_hess, minimize_quadratic_brute, node_objective, random_family_point

SEED = 1
TRIALS = 20

# reference coverage table: pair -> (total, upper bound, lower bound)
TABLE1 = {
    (5, 95): (89.3, 94.7, 5.4),
    (10, 90): (79.3, 89.6, 10.3),
    (20, 80): (60.1, 79.2, 19.1),
    (30, 70): (39.5, 68.7, 29.2),
    (40, 60): (19.7, 59.4, 39.7),
}
FILES = ("train.csv", "test.csv", "tuned.json", "trials.csv", "model.json", "pred.csv")


def pipeline(workdir):
    """simulate -> tune -> train -> predict through the CLI; returns seconds taken."""
    start = time.monotonic()
    w = lambda name: str(workdir / name)
    steps = [
        ["simulate", "--n", "7000", "--test-n", "3000", "--seed", str(SEED),
         "--out", w("train.csv"), "--test-out", w("test.csv")],
        ["tune", "--data", w("train.csv"), "--response", "y", "--family", "normal",
         "--trials", str(TRIALS), "--folds", "3", "--seed", str(SEED),
         "--out", w("tuned.json"), "--log", w("trials.csv")],
        ["train", "--data", w("train.csv"), "--response", "y", "--family", "normal",
         "--config", w("tuned.json"), "--seed", str(SEED), "--out", w("model.json")],
        ["predict", "--model", w("model.json"), "--data", w("test.csv"),
         "--quantiles", "0.05,0.95", "--out", w("pred.csv")],
    ]
    for argv in steps:
        assert main(argv) == 0, argv
    return time.monotonic() - start


@pytest.fixture(scope="module")
def run1(tmp_path_factory):
    d = tmp_path_factory.mktemp("run1")
    elapsed = pipeline(d)
    return {
        "dir": d,
        "elapsed": elapsed,
        "model": load_model(d / "model.json"),
        "train": read_csv(d / "train.csv", "y"),
        "test": read_csv(d / "test.csv", "y"),
        "config": _load_config(d / "tuned.json"),
    }


@pytest.fixture(scope="module")
def run2(tmp_path_factory):
    d = tmp_path_factory.mktemp("run2")
    pipeline(d)
    return d


# -- 1 -------------------------------------------------------------------------

@pytest.mark.criterion(1, "coverage reproduction within 3 points, (50,50) exactly 0")
def test_coverage_reproduction(run1):
    model, test = run1["model"], run1["test"]
    pairs = [(lo / 100, hi / 100) for lo, hi in TABLE1] + [(0.5, 0.5)]
    rows = empirical_coverage(model, test, test.y, pairs)
    report = []
    for row, (pair, ref) in zip(rows, TABLE1.items()):
        got = (row.total, row.upper, row.lower)
        report.append(f"{pair}: {got} vs {ref}")
        for g, p in zip(got, ref):
            assert abs(g - p) <= 3.0, "\n".join(report)
    assert rows[-1].total == 0.0
    assert run1["elapsed"] < 600.0


# -- 2 -------------------------------------------------------------------------

@pytest.mark.criterion(2, "x dominates sigma importance by >= 2x in 10 of 10 seeds")
def test_noise_rejection(run1):
    cfg = run1["config"]
    margins = []
    for seed in range(SEED, SEED + 10):
        if seed == SEED:
            model = run1["model"]
        else:
            data, _ = simulate_train_test(seed)
            model = train(F.Normal(), data, cfg, np.random.default_rng(seed))
        shares = feature_importance(model)["sigma"]
        assert next(iter(shares)) == "x"
        noise = max((v for k, v in shares.items() if k != "x"), default=0.0)
        margins.append(shares["x"] / noise if noise > 0 else math.inf)
    assert all(m >= 2.0 for m in margins), margins


# -- 3 -------------------------------------------------------------------------

@pytest.mark.criterion(3, "partial dependence of the variance recovers 25 and 1")
def test_heteroskedasticity_recovery(run1):
    model, test = run1["model"], run1["test"]
    band = np.linspace(0.3, 0.5, 41)[1:-1]
    base = np.linspace(0.0, 0.3, 61)[1:-1]
    hi = np.mean([v for _, v in partial_dependence(model, test.X, "x", band, "variance")])
    lo = np.mean([v for _, v in partial_dependence(model, test.X, "x", base, "variance")])
    assert 15.0 <= hi <= 35.0, hi
    assert 0.5 <= lo <= 2.0, lo


# -- 4 -------------------------------------------------------------------------

@pytest.mark.criterion(4, "analytic derivatives match finite differences for every family")
@pytest.mark.parametrize("family", [F.Normal(), F.Gamma(), F.LogNormal(), F.StudentT(), F.Expectile(0.7)],
                         ids=repr)
def test_derivative_correctness(family):
    rng = np.random.default_rng(45)
    for _ in range(200):
        theta, y = random_family_point(family, rng)
        for k in range(family.n_params):
            d1, d2 = family.link_derivatives(y, theta, k)
            fg, fh = fd_grad_hess(family, y, theta, k)
            assert abs(-d1 - fg) <= 1e-5 * abs(fg)
            assert abs(-d2 - fh) <= 1e-4 * abs(fh)
        # the booster's signal is the floored version of the same derivatives
        g, h = family.grad_hess(y, theta, 0)
        assert g == -family.link_derivatives(y, theta, 0)[0]
        assert h >= F.HESS_FLOOR


# -- 5 -------------------------------------------------------------------------

@pytest.mark.criterion(5, "leaf weight and split gain match brute-force oracles")
def test_newton_core():
    rng = np.random.default_rng(5)
    for _ in range(100):
        G, H, lam = rng.normal(scale=5), rng.uniform(0.01, 20), rng.uniform(0, 5)
        w, _, _ = minimize_quadratic_brute(G, H, lam)
        assert abs(leaf_weight(G, H, lam) - w) <= 1e-10
    for _ in range(100):
        n = int(rng.integers(2, 21))
        g, h = rng.normal(size=n), rng.uniform(0.05, 3, size=n)
        cut = int(rng.integers(1, n))
        lam, gamma = rng.uniform(0, 3), rng.uniform(0, 2)
        oracle = (node_objective(g, h, lam) - node_objective(g[:cut], h[:cut], lam)
                  - node_objective(g[cut:], h[cut:], lam) - gamma)
        got = split_gain(g[:cut].sum(), h[:cut].sum(), g[cut:].sum(), h[cut:].sum(), lam, gamma)
        assert abs(got - oracle) <= 1e-10


# -- 6 -------------------------------------------------------------------------

@pytest.mark.criterion(6, "tau = 0.5 expectile equals squared-error boosting bitwise")
def test_expectile_equivalence():
    data, test = simulate_train_test(SEED)
    tree = TreeParams(max_depth=4, min_child_weight=5.0, gamma=0.5, subsample=0.8, colsample_bytree=0.7)
    cfg = TrainConfig(boost=BoostConfig(n_rounds=60, eta=0.1, tree=tree))
    model = train(F.Expectile(0.5), data, cfg, np.random.default_rng(SEED))
    # train() hands Step 1 the first of two child streams, which spawns one
    # stream per parameter
    stream = np.random.default_rng(SEED).spawn(2)[0].spawn(1)[0]
    y = data.y
    ref = boost(data.X, lambda f: (f - y, np.ones_like(y)), 60, eta=0.1, params=tree, rng=stream,
                base_offset=float(np.mean(y)))
    for X in (data.X, test.X):
        assert np.array_equal(model.predict_params(X)[:, 0], ref.predict(X))


# -- 7 -------------------------------------------------------------------------

@pytest.mark.criterion(7, "step-2 deviance, max_iter and stopping-rule contract")
def test_step2_contract(run1):
    model, data = run1["model"], run1["train"]
    eps = model.config.step2.epsilon
    trace = model.deviance_trace
    assert trace[-1] <= trace[0]
    assert model.step2_rounds_used <= model.config.step2.max_iter
    if model.step2_rounds_used < model.config.step2.max_iter:
        assert model.metadata["step2_final_diff"] < eps
    assert global_deviance(model, data) == pytest.approx(trace[-1], rel=1e-12)

    step1 = load_model(run1["dir"] / "model.json")
    for ens, n in zip(step1.ensembles, step1.metadata["step1_rounds"]):
        ens.truncate(n)
    step1.deviance_trace = step1.deviance_trace[:1]
    for cfg in (Step2Config(epsilon=1e-4, max_iter=50), Step2Config(epsilon=1e-300, max_iter=4)):
        refit = train_step2(step1, data, cfg, np.random.default_rng(0))
        assert refit.step2_rounds_used <= cfg.max_iter
        assert refit.deviance_trace[-1] <= refit.deviance_trace[0]
        if refit.step2_rounds_used < cfg.max_iter:
            assert refit.metadata["step2_final_diff"] < cfg.epsilon
    assert refit.step2_rounds_used == 4


# -- 8 -------------------------------------------------------------------------

@pytest.mark.criterion(8, "CRPS closed form vs quadrature and sampling; log score vs deviance")
def test_scoring_cross_checks(run1):
    rng = np.random.default_rng(8)
    fam = F.Normal()
    for _ in range(100):
        mu, sigma = rng.uniform(-10, 10), math.exp(rng.uniform(-2, 2))
        y = mu + sigma * rng.standard_t(4)
        cf = float(crps_normal(y, mu, sigma))
        assert abs(cf - float(crps_numeric(fam, y, [mu, sigma])[0])) <= 1e-5
    for _ in range(10):
        mu, sigma = rng.uniform(-10, 10), math.exp(rng.uniform(-2, 2))
        y = mu + sigma * rng.normal()
        draws = rng.normal(mu, sigma, size=(1, 10**5))
        est = crps_sample(draws, np.array([y]))[0]
        assert abs(est / float(crps_normal(y, mu, sigma)) - 1.0) < 0.01
    model, test = run1["model"], run1["test"]
    pred = predict_params(model, test)
    assert log_score(pred, test.y) == global_deviance(model, test) / (2 * test.n_rows)


# -- 9 -------------------------------------------------------------------------

@pytest.mark.criterion(9, "true-parameter quantile residuals pass KS in >= 95 of 100 seeds")
def test_calibration():
    passed = 0
    for seed in range(100):
        rng = np.random.default_rng(10_000 + seed)
        x = rng.uniform(size=3000)
        sd = hetero_scale(x)
        y = rng.normal(10.0, sd)
        pred = PredictiveDistribution(F.Normal(), np.column_stack([np.full(x.size, 10.0), sd]))
        passed += quantile_residuals(pred, None, y).ks_pvalue > 0.01
    assert passed >= 95, passed


# -- 10 ------------------------------------------------------------------------

@pytest.mark.criterion(10, "pipeline byte-identical across runs; save/load is bitwise")
def test_determinism_and_persistence(run1, run2, tmp_path):
    for name in FILES:
        assert (run1["dir"] / name).read_bytes() == (run2 / name).read_bytes(), name
    model, test = run1["model"], run1["test"]
    save_model(model, tmp_path / "again.json")
    back = load_model(tmp_path / "again.json")
    X = test.X[:1000]
    assert np.array_equal(back.predict_params(X), model.predict_params(X))
    assert (tmp_path / "again.json").read_bytes() == (run1["dir"] / "model.json").read_bytes()
