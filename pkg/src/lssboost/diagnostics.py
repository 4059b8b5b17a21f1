"""Model criticism: quantile residuals, gain importance, partial dependence."""
from dataclasses import dataclass, field

import numpy as np
from scipy import special, stats

from .errors import ColumnMismatchError, UnsupportedFamilyError
from .scoring import _as_pred

U_CLAMP = 1e-10


@dataclass
class ResidualReport:
    residuals: np.ndarray
    ks_statistic: float
    ks_pvalue: float
    summary: dict = field(default_factory=dict)


def quantile_residuals(model_or_pred, X, y):
    """``Phi^-1(F(y_i | theta_i))``, with ``u`` clamped away from 0 and 1, and
    the Kolmogorov-Smirnov distance of the residuals to N(0, 1)."""
    pred = _as_pred(model_or_pred, X)
    if not pred.family.has_distribution:
        raise UnsupportedFamilyError(f"{pred.family.name} has no CDF for residuals")
    u = np.clip(pred.cdf(np.asarray(y, dtype=float)), U_CLAMP, 1.0 - U_CLAMP)
    r = special.ndtri(u)
    ks = stats.kstest(r, "norm")
    levels = (0.01, 0.05, 0.25, 0.5, 0.75, 0.95, 0.99)
    summary = dict(zip(levels, np.quantile(r, levels).tolist()))
    return ResidualReport(r, float(ks.statistic), float(ks.pvalue), summary)


def qq_points(residuals):
    """Sorted residuals against standard-Normal plotting positions."""
    r = np.sort(np.asarray(residuals, dtype=float))
    n = r.size
    theo = special.ndtri((np.arange(1, n + 1) - 0.5) / n)
    return theo, r


def feature_importance(model):
    """Per-parameter share of total split gain by feature name.

    Parameters whose ensemble holds no split map to an empty dict.
    """
    table = {}
    for name, ens in zip(model.family.param_names, model.ensembles):
        totals = np.zeros(len(model.feature_names))
        for tree in ens.trees:
            for f, g in zip(tree.feature, tree.gain):
                if f >= 0:
                    totals[f] += g
        s = totals.sum()
        if s > 0:
            order = np.argsort(-totals, kind="stable")
            table[name] = {model.feature_names[j]: float(totals[j] / s) for j in order if totals[j] > 0}
        else:
            table[name] = {}
    return table


def _param_values(model, X, param):
    theta = model.predict_params(X)
    if param == "variance":
        return model.family.variance(theta)
    if param == "mean":
        return model.family.mean(theta)
    if isinstance(param, str):
        return theta[:, model.family.param_names.index(param)]
    return theta[:, int(param)]


def partial_dependence(model, X_background, feature, grid, param):
    """Average prediction of ``param`` with ``feature`` forced to each grid value.

    ``param`` is a parameter name or index, or ``"variance"`` / ``"mean"`` for
    the predictive variance / mean of the family.
    """
    if feature not in model.feature_names:
        raise ColumnMismatchError(f"unknown feature {feature!r}")
    j = model.feature_names.index(feature)
    X = np.array(X_background, dtype=float, copy=True)
    out = []
    for v in grid:
        X[:, j] = v
        out.append((float(v), float(np.mean(_param_values(model, X, param)))))
    return out
