"""Two-step distributional boosting.

Step 1 fits one ensemble per distribution parameter while every other
parameter is frozen at its unconditional maximum-likelihood value. Step 2
then cycles over the parameters, adding trees fitted at the current
estimates of all parameters, until the relative change in global deviance
drops below ``epsilon`` or ``max_iter`` cycles have run.
"""
import copy
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import ColumnMismatchError, NonFiniteError
from .tree import Ensemble, TreeParams, add_tree, presort


@dataclass
class BoostConfig:
    """Boosting settings for one distribution parameter."""

    n_rounds: int = 100
    eta: float = 0.1
    tree: TreeParams = field(default_factory=TreeParams)
    early_stopping_rounds: int | None = None
    validation_fraction: float = 0.2

    def __post_init__(self):
        if isinstance(self.tree, dict):
            self.tree = TreeParams(**self.tree)
        if self.n_rounds < 0:
            raise ValueError("n_rounds must be >= 0")
        if not 0 < self.eta <= 1:
            raise ValueError("eta must lie in (0, 1]")


@dataclass
class Step2Config:
    epsilon: float = 1e-4
    max_iter: int = 100
    rounds_per_update: int = 1

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValueError("epsilon must be > 0")
        if self.max_iter < 0 or self.rounds_per_update < 1:
            raise ValueError("max_iter must be >= 0 and rounds_per_update >= 1")


@dataclass
class TrainConfig:
    """Full training recipe; ``boost`` is shared by all parameters unless a
    list with one entry per parameter is given."""

    boost: BoostConfig | list = field(default_factory=BoostConfig)
    step2: Step2Config = field(default_factory=Step2Config)

    def __post_init__(self):
        if isinstance(self.boost, dict):
            self.boost = BoostConfig(**self.boost)
        elif isinstance(self.boost, list):
            self.boost = [BoostConfig(**b) if isinstance(b, dict) else b for b in self.boost]
        if isinstance(self.step2, dict):
            self.step2 = Step2Config(**self.step2)

    def for_param(self, k):
        if isinstance(self.boost, list):
            return self.boost[k]
        return self.boost

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, doc):
        return cls(**doc)


@dataclass
class LssModel:
    """One link-scale ensemble per distribution parameter."""

    family: object
    ensembles: list
    offsets: np.ndarray
    feature_names: list
    config: TrainConfig = field(default_factory=TrainConfig)
    step2_rounds_used: int = 0
    deviance_trace: list = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    @property
    def n_params(self):
        return len(self.ensembles)

    def _check(self, X):
        X = np.asarray(X, dtype=float)
        if X.ndim != 2 or X.shape[1] != len(self.feature_names):
            raise ColumnMismatchError(
                f"model expects {len(self.feature_names)} columns "
                f"({', '.join(self.feature_names)}), got {X.shape[-1]}"
            )
        return X

    def predict_link(self, X):
        X = self._check(X)
        return np.column_stack([e.predict(X) for e in self.ensembles])

    def predict_params(self, X):
        return self.family.from_link(self.predict_link(X))


def _features(data, model=None):
    if model is None:
        return data.X
    return data.columns(model.feature_names)


def _deviance(family, y, theta):
    return -2.0 * float(np.sum(family.loglik(y, theta)))


def global_deviance(model, data):
    """``-2 * sum(ln f(y_i | theta(x_i)))`` over the rows of ``data``."""
    X = _features(data, model)
    return _deviance(model.family, data.y, model.predict_params(X))


def _param_signal(family, y, theta, k):
    link = family.links[k]

    def signal(pred):
        theta[:, k] = link.inverse(pred)
        return family.grad_hess(y, theta, k)

    return signal


def _fit_param_step1(family, X, y, theta0, k, cfg, rng, order):
    n = X.shape[0]
    offset = float(family.links[k].forward(theta0[k]))
    ens = Ensemble(eta=cfg.eta, base_offset=offset, n_features=X.shape[1])
    if cfg.n_rounds == 0:
        return ens
    if cfg.early_stopping_rounds and n >= 2:
        n_val = max(1, int(round(cfg.validation_fraction * n)))
        perm = rng.permutation(n)
        val, fit = np.sort(perm[:n_val]), np.sort(perm[n_val:])
    else:
        val, fit = None, np.arange(n)
    Xf, yf = X[fit], y[fit]
    if val is not None:
        order = presort(Xf)
    theta = np.tile(theta0, (fit.size, 1))
    signal = _param_signal(family, yf, theta, k)
    pred = np.full(fit.size, offset)

    if val is None:
        for _ in range(cfg.n_rounds):
            add_tree(ens, Xf, pred, signal, cfg.tree, rng, order)
        return ens

    Xv, yv = X[val], y[val]
    theta_v = np.tile(theta0, (val.size, 1))
    pred_v = np.full(val.size, offset)
    best, best_round = math.inf, 0
    for m in range(1, cfg.n_rounds + 1):
        tree = add_tree(ens, Xf, pred, signal, cfg.tree, rng, order)
        pred_v += ens.eta * tree.predict(Xv)
        theta_v[:, k] = family.links[k].inverse(pred_v)
        dev = _deviance(family, yv, theta_v)
        if dev < best:
            best, best_round = dev, m
        elif m - best_round >= cfg.early_stopping_rounds:
            break
    ens.truncate(best_round)
    return ens


def train_step1(family, data, config=None, rng=None):
    """Independent per-parameter boosting around unconditional ML offsets."""
    config = config or TrainConfig()
    rng = rng if rng is not None else np.random.default_rng()
    X = data.X
    y = family.check_support(data.y)
    theta0 = family.fit_unconditional(y)
    offsets = family.to_link(theta0)
    streams = rng.spawn(family.n_params)
    order = presort(X)
    ensembles = [
        _fit_param_step1(family, X, y, theta0, k, config.for_param(k), streams[k], order)
        for k in range(family.n_params)
    ]
    model = LssModel(
        family=family, ensembles=ensembles, offsets=np.asarray(offsets, dtype=float),
        feature_names=list(data.feature_names), config=config,
    )
    dev = global_deviance(model, data)
    model.deviance_trace = [dev]
    model.metadata["step1_deviance"] = dev
    model.metadata["step1_rounds"] = [len(e.trees) for e in ensembles]
    return model


def train_step2(model, data, cfg=None, rng=None):
    """Cyclic refresh of every parameter given current estimates of the others.

    Returns a new model; ``model`` is left untouched. Families with a single
    parameter have nothing to refresh and come back unchanged.
    """
    cfg = cfg or model.config.step2
    rng = rng if rng is not None else np.random.default_rng()
    model = copy.deepcopy(model)
    family = model.family
    if cfg.max_iter == 0 or family.n_params < 2:
        return model
    X = _features(data, model)
    y = family.check_support(data.y)
    order = presort(X)
    streams = rng.spawn(family.n_params)
    preds = [e.predict(X) for e in model.ensembles]
    dev_prev = _deviance(family, y, family.from_link(np.column_stack(preds)))
    trace = list(model.deviance_trace) or [dev_prev]
    q = 0
    diff = math.inf
    while q < cfg.max_iter:
        for k, ens in enumerate(model.ensembles):
            theta = family.from_link(np.column_stack(preds))
            signal = _param_signal(family, y, theta, k)
            tree_params = model.config.for_param(k).tree
            for _ in range(cfg.rounds_per_update):
                add_tree(ens, X, preds[k], signal, tree_params, streams[k], order)
        q += 1
        dev = _deviance(family, y, family.from_link(np.column_stack(preds)))
        if not math.isfinite(dev):
            raise NonFiniteError(f"non-finite deviance after step-2 cycle {q}")
        trace.append(dev)
        diff = abs(dev - dev_prev) / abs(dev_prev)
        dev_prev = dev
        if not diff >= cfg.epsilon:
            break
    model.step2_rounds_used = q
    model.deviance_trace = trace
    model.metadata["step2_final_diff"] = diff
    model.metadata["final_deviance"] = trace[-1]
    return model


def train(family, data, config=None, rng=None):
    """Step 1 followed by Step 2."""
    config = config or TrainConfig()
    rng = rng if rng is not None else np.random.default_rng()
    step1_rng, step2_rng = rng.spawn(2)
    model = train_step1(family, data, config, step1_rng)
    model = train_step2(model, data, config.step2, step2_rng)
    model.metadata.setdefault("final_deviance", model.deviance_trace[-1])
    return model
