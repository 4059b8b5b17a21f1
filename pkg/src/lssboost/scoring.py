"""Predictive distributions, quantiles, coverage and scoring rules."""
import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, special

from .errors import DataError, UnsupportedFamilyError
from .families import Normal, _as_probability

_INV_SQRT_PI = 1.0 / math.sqrt(math.pi)


@dataclass
class PredictiveDistribution:
    """Per-row natural-scale parameters of one family, shape ``(n, K)``."""

    family: object
    params: np.ndarray

    def __post_init__(self):
        self.params = np.atleast_2d(np.asarray(self.params, dtype=float))

    def __len__(self):
        return self.params.shape[0]

    def param(self, name):
        return self.params[:, self.family.param_names.index(name)]

    def logpdf(self, y):
        return self.family.loglik(y, self.params)

    def cdf(self, y):
        return self.family.cdf(y, self.params)

    def quantile(self, p):
        """Row-wise quantiles at a scalar level or one level per row."""
        return self.family.quantile(p, self.params)

    def sample(self, rng, n):
        return self.family.sample(self.params, rng, n)

    def mean(self):
        return self.family.mean(self.params)

    def variance(self):
        return self.family.variance(self.params)


def _matrix(model, X):
    if hasattr(X, "feature_names") and hasattr(X, "columns"):
        return X.columns(model.feature_names)
    return X


def predict_params(model, X):
    """Predictive distribution of ``model`` at the rows of ``X`` (array or
    Dataset; a Dataset is aligned to the training columns by name)."""
    return PredictiveDistribution(model.family, model.predict_params(_matrix(model, X)))


def _as_pred(model_or_pred, X):
    if isinstance(model_or_pred, PredictiveDistribution):
        return model_or_pred
    return predict_params(model_or_pred, X)


def predict_quantiles(model_or_pred, X, probs):
    """``(n, len(probs))`` matrix of quantiles, columns in the order given."""
    pred = _as_pred(model_or_pred, X)
    if not pred.family.has_distribution:
        raise UnsupportedFamilyError(f"{pred.family.name} has no quantile function")
    probs = _as_probability(np.atleast_1d(probs))
    return np.column_stack([pred.quantile(p) for p in probs])


@dataclass
class CoverageRow:
    lo: float
    hi: float
    total: float
    upper: float
    lower: float


def empirical_coverage(model_or_pred, X, y, pairs):
    """Percentage of observations inside ``[q_lo, q_hi]`` (total), at or below
    ``q_hi`` (upper bound) and at or below ``q_lo`` (lower bound), per pair of
    probability levels."""
    y = np.asarray(y, dtype=float)
    if y.size == 0:
        raise DataError("empty test set")
    pred = _as_pred(model_or_pred, X)
    rows = []
    for lo, hi in pairs:
        if lo > hi:
            raise ValueError(f"lower level {lo} exceeds upper level {hi}")
        ql = pred.quantile(lo)
        qh = pred.quantile(hi)
        rows.append(CoverageRow(
            lo=float(lo), hi=float(hi),
            total=100.0 * float(np.mean((y >= ql) & (y <= qh))),
            upper=100.0 * float(np.mean(y <= qh)),
            lower=100.0 * float(np.mean(y <= ql)),
        ))
    return rows


def crps_normal(y, mu, sigma):
    """Closed-form CRPS of ``N(mu, sigma**2)`` at ``y``, elementwise."""
    z = (np.asarray(y, dtype=float) - mu) / sigma
    pdf = np.exp(-0.5 * z * z) / math.sqrt(2.0 * math.pi)
    return sigma * (z * (2.0 * special.ndtr(z) - 1.0) + 2.0 * pdf - _INV_SQRT_PI)


def crps_numeric(family, y, theta, tol=1e-6):
    """CRPS by quadrature of ``(F(t) - 1{t >= y})**2``, one row at a time."""
    y = np.atleast_1d(np.asarray(y, dtype=float))
    theta = np.atleast_2d(np.asarray(theta, dtype=float))
    theta = np.broadcast_to(theta, (y.size, theta.shape[-1]))
    lower = 0.0 if family.support == "positive_real" else -np.inf
    out = np.empty(y.size)
    for i, (yi, th) in enumerate(zip(y, theta)):
        below = integrate.quad(lambda t: family.cdf(t, th) ** 2, lower, yi,
                               epsabs=tol, epsrel=tol, limit=200)[0] if yi > lower else 0.0
        above = integrate.quad(lambda t: (1.0 - family.cdf(t, th)) ** 2, yi, np.inf,
                               epsabs=tol, epsrel=tol, limit=200)[0]
        out[i] = below + above
    return out


def crps_sample(draws, y):
    """Energy-form CRPS estimate ``E|X - y| - E|X - X'| / 2`` from draws.

    ``draws`` has one row of samples per observation; the pair term uses the
    unbiased all-distinct-pairs average computed from sorted samples.
    """
    draws = np.atleast_2d(np.asarray(draws, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    m = draws.shape[1]
    if m < 2:
        raise ValueError("need at least two draws per observation")
    first = np.mean(np.abs(draws - y[:, None]), axis=1)
    xs = np.sort(draws, axis=1)
    weights = 2.0 * np.arange(m) - m + 1.0
    pair_mean = 2.0 * (xs @ weights) / (m * (m - 1.0))
    return first - 0.5 * pair_mean


def crps(pred, y):
    """Average CRPS over rows; closed form for Normal, quadrature otherwise."""
    y = np.asarray(y, dtype=float)
    if not pred.family.has_distribution:
        raise UnsupportedFamilyError(f"{pred.family.name} has no CDF for CRPS")
    if isinstance(pred.family, Normal):
        vals = crps_normal(y, pred.params[:, 0], pred.params[:, 1])
    else:
        vals = crps_numeric(pred.family, y, pred.params)
    return float(np.mean(vals))


def log_score(pred, y):
    """Average negative log-density, lower is better."""
    return float(-np.mean(pred.logpdf(y)))


METRICS = ("mape", "mse", "rmse", "mae", "median_ae", "rae", "rmspe", "rmsle", "rrse", "r_squared")


class MetricMap(dict):
    """Metric name -> value; metrics whose domain check failed are NaN and
    the reason is kept in ``errors``."""

    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self.errors = {}


def point_metrics(y_true, y_pred):
    y = np.asarray(y_true, dtype=float)
    f = np.asarray(y_pred, dtype=float)
    if y.shape != f.shape:
        raise ValueError("y_true and y_pred must have equal lengths")
    if y.size == 0:
        raise DataError("no observations to score")
    err = f - y
    out = MetricMap()
    dev = y - np.mean(y)
    sst = float(np.sum(dev * dev))
    sse = float(np.sum(err * err))
    out["mse"] = sse / y.size
    out["rmse"] = math.sqrt(out["mse"])
    out["mae"] = float(np.mean(np.abs(err)))
    out["median_ae"] = float(np.median(np.abs(err)))

    if np.any(y == 0):
        msg = "undefined when any observed value is zero"
        for k in ("mape", "rmspe"):
            out[k] = math.nan
            out.errors[k] = msg
    else:
        rel = err / y
        out["mape"] = float(np.mean(np.abs(rel)))
        out["rmspe"] = math.sqrt(float(np.mean(rel * rel)))

    if np.any(y <= -1) or np.any(f <= -1):
        out["rmsle"] = math.nan
        out.errors["rmsle"] = "requires observed and predicted values above -1"
    else:
        d = np.log1p(f) - np.log1p(y)
        out["rmsle"] = math.sqrt(float(np.mean(d * d)))

    sad = float(np.sum(np.abs(dev)))
    if sst == 0.0:
        msg = "undefined for a constant response"
        for k in ("rae", "rrse", "r_squared"):
            out[k] = math.nan
            out.errors[k] = msg
    else:
        out["rae"] = float(np.sum(np.abs(err))) / sad
        out["rrse"] = math.sqrt(sse / sst)
        out["r_squared"] = 1.0 - sse / sst
    res = MetricMap({k: out[k] for k in METRICS})
    res.errors = out.errors
    return res


@dataclass
class ScoreReport:
    crps: float
    log_score: float
    metrics: dict = field(default_factory=dict)

    def rows(self):
        yield "crps", self.crps
        yield "log_score", self.log_score
        for k in METRICS:
            yield k, self.metrics[k]


def score(model_or_pred, X, y):
    """CRPS, log score and the point-metric battery (point forecast = mean)."""
    y = np.asarray(y, dtype=float)
    pred = _as_pred(model_or_pred, X)
    pred.family.check_support(y)
    return ScoreReport(
        crps=crps(pred, y), log_score=log_score(pred, y),
        metrics=point_metrics(y, pred.mean()),
    )
