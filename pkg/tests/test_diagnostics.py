import math

import numpy as np
import pytest
from scipy import stats

from lssboost import families as F
from lssboost.data import Dataset, hetero_scale, simulate_hetero
from lssboost.diagnostics import feature_importance, partial_dependence, qq_points, quantile_residuals
from lssboost.errors import ColumnMismatchError, UnsupportedFamilyError
from lssboost.scoring import PredictiveDistribution, predict_params
from lssboost.trainer import BoostConfig, Step2Config, TrainConfig, train
from lssboost.tree import TreeParams


def oracle_pred(x):
    return PredictiveDistribution(F.Normal(), np.column_stack([np.full(x.size, 10.0), hetero_scale(x)]))


def test_residual_at_upper_quantile():
    pred = PredictiveDistribution(F.Normal(), [[2.0, 3.0]])
    y = F.Normal().quantile(0.975, [2.0, 3.0])
    rep = quantile_residuals(pred, None, [y])
    assert rep.residuals[0] == pytest.approx(1.959964, abs=1e-6)


def test_residuals_clamped_in_tails():
    pred = PredictiveDistribution(F.Normal(), [[0.0, 1.0], [0.0, 1.0]])
    rep = quantile_residuals(pred, None, [1e3, -1e3])
    assert np.all(np.isfinite(rep.residuals))
    assert rep.residuals[0] == pytest.approx(-rep.residuals[1])


def test_oracle_pit_values_are_uniform():
    passed = 0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        x = rng.uniform(size=3000)
        pred = oracle_pred(x)
        y = rng.normal(10.0, hetero_scale(x))
        u = pred.cdf(y)
        passed += stats.kstest(u, "uniform").pvalue > 0.01
    assert passed >= 95


def test_self_consistency_of_fitted_model(hetero_model):
    model, _, test_set = hetero_model
    pred = predict_params(model, test_set)
    n = len(pred)
    ok = 0
    for seed in range(20):
        y = pred.sample(np.random.default_rng(seed), 1)[:, 0]
        ok += quantile_residuals(pred, None, y).ks_statistic < 1.63 / math.sqrt(n)
    assert ok >= 19


def test_qq_points_sorted():
    r = np.array([0.3, -1.0, 2.0, 0.0])
    theo, emp = qq_points(r)
    assert emp.tolist() == sorted(r.tolist())
    assert np.all(np.diff(theo) > 0)
    assert theo[0] == pytest.approx(-theo[-1])


def test_importance_shares(hetero_model):
    model, _, _ = hetero_model
    imp = feature_importance(model)
    for shares in imp.values():
        if shares:
            assert abs(sum(shares.values()) - 1.0) <= 1e-12
            assert all(v > 0 for v in shares.values())
    assert next(iter(imp["sigma"])) == "x"


def test_importance_empty_without_splits():
    data = simulate_hetero(200, 0)
    model = train(F.Normal(), data, TrainConfig(boost=BoostConfig(n_rounds=0), step2=Step2Config(max_iter=0)),
                  np.random.default_rng(0))
    assert feature_importance(model) == {"mu": {}, "sigma": {}}


def test_duplicated_feature_shares_importance(regularized_config):
    for seed in range(20):
        data = simulate_hetero(3000, 500 + seed)
        dup = Dataset(np.column_stack([data.X, data.X[:, 0]]), data.y, data.feature_names + ["x_copy"])
        base = feature_importance(train(F.Normal(), data, regularized_config, np.random.default_rng(seed)))
        twin = feature_importance(train(F.Normal(), dup, regularized_config, np.random.default_rng(seed)))
        orig = base["sigma"]["x"]
        both = twin["sigma"].get("x", 0.0) + twin["sigma"].get("x_copy", 0.0)
        assert abs(both - orig) <= 0.1 * orig


def test_pd_exact_for_single_feature_model():
    rng = np.random.default_rng(0)
    x = rng.uniform(size=(600, 1))
    y = rng.normal(3 * x[:, 0], 0.5 + x[:, 0])
    model = train(F.Normal(), Dataset(x, y, ["x"]),
                  TrainConfig(boost=BoostConfig(n_rounds=30, tree=TreeParams(max_depth=2))),
                  np.random.default_rng(0))
    grid = np.linspace(0, 1, 11)
    for param, col in (("mu", 0), ("sigma", 1), (1, 1)):
        curve = partial_dependence(model, x, "x", grid, param)
        direct = model.predict_params(grid[:, None])[:, col]
        assert [v for _, v in curve] == pytest.approx(direct.tolist(), rel=1e-12)
    var = partial_dependence(model, x, "x", grid, "variance")
    assert [v for _, v in var] == pytest.approx((model.predict_params(grid[:, None])[:, 1] ** 2).tolist(),
                                                rel=1e-12)


def test_pd_tracks_variance_regimes(hetero_model):
    model, _, test_set = hetero_model
    X = test_set.X[:500]
    grid = [0.15, 0.4, 0.6, 0.85]
    v = dict(partial_dependence(model, X, "x", grid, "variance"))
    assert v[0.4] > 5 * v[0.15]
    assert v[0.85] > 3 * v[0.6]
    assert 0.5 < v[0.15] < 2.0


def test_pd_unknown_feature(hetero_model):
    model, _, test_set = hetero_model
    with pytest.raises(ColumnMismatchError):
        partial_dependence(model, test_set.X, "nope", [0.0], "mu")


def test_expectile_has_no_residuals():
    pred = PredictiveDistribution(F.Expectile(0.5), [[0.0]])
    with pytest.raises(UnsupportedFamilyError):
        quantile_residuals(pred, None, [0.0])
