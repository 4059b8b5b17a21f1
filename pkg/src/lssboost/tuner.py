"""Seeded random search over boosting hyper-parameters.

Every trial is scored by K-fold cross-validated held-out global deviance of
the Step-1 model. The number of boosting rounds is chosen inside each trial
from the fold-averaged deviance curve (all folds advance in lockstep), and
the search stops after ``n_trials`` trials or once the time budget is spent.
"""
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import LssError
from .tree import Ensemble, TreeParams, add_tree, presort
from .trainer import BoostConfig, TrainConfig, _deviance, _param_signal

log = logging.getLogger(__name__)

HYPERPARAMETERS = ("eta", "gamma", "max_depth", "min_child_weight", "subsample", "colsample_bytree")


@dataclass
class SearchSpace:
    eta: tuple = (0.01, 0.3)
    gamma: tuple = (0.0, 5.0)
    max_depth: tuple = (1, 10)
    min_child_weight: tuple = (0.1, 20.0)
    subsample: tuple = (0.5, 1.0)
    colsample_bytree: tuple = (0.5, 1.0)

    def __post_init__(self):
        for name in HYPERPARAMETERS:
            lo, hi = getattr(self, name)
            if lo > hi:
                raise ValueError(f"empty range for {name}")
        if self.eta[0] <= 0 or self.min_child_weight[0] <= 0:
            raise ValueError("log-uniform ranges need positive bounds")

    def sample(self, rng):
        """One configuration; eta and min_child_weight are log-uniform."""
        return {
            "eta": float(math.exp(rng.uniform(math.log(self.eta[0]), math.log(self.eta[1])))),
            "gamma": float(rng.uniform(*self.gamma)),
            "max_depth": int(rng.integers(self.max_depth[0], self.max_depth[1] + 1)),
            "min_child_weight": float(
                math.exp(rng.uniform(math.log(self.min_child_weight[0]),
                                     math.log(self.min_child_weight[1])))
            ),
            "subsample": float(rng.uniform(*self.subsample)),
            "colsample_bytree": float(rng.uniform(*self.colsample_bytree)),
        }


def params_to_config(params, n_rounds):
    tree = TreeParams(
        max_depth=int(params["max_depth"]),
        min_child_weight=float(params["min_child_weight"]),
        gamma=float(params["gamma"]),
        subsample=float(params["subsample"]),
        colsample_bytree=float(params["colsample_bytree"]),
    )
    return BoostConfig(n_rounds=int(n_rounds), eta=float(params["eta"]), tree=tree)


def kfold_indices(n, folds, seed):
    """Deterministic partition of ``range(n)`` into ``folds`` held-out sets."""
    if folds < 2:
        raise ValueError("folds must be >= 2")
    if n < folds:
        raise ValueError("need at least one row per fold")
    perm = np.random.default_rng(seed).permutation(n)
    return [np.sort(part) for part in np.array_split(perm, folds)]


class _FoldState:
    def __init__(self, family, data, val_rows, cfg, rng):
        n = data.n_rows
        mask = np.ones(n, dtype=bool)
        mask[val_rows] = False
        self.family = family
        self.cfg = cfg
        self.X = data.X[mask]
        self.y = family.check_support(data.y[mask])
        self.Xv = data.X[val_rows]
        self.yv = family.check_support(data.y[val_rows])
        self.order = presort(self.X)
        theta0 = family.fit_unconditional(self.y)
        offsets = family.to_link(theta0)
        K = family.n_params
        self.streams = rng.spawn(K)
        self.ensembles = [
            Ensemble(eta=cfg.eta, base_offset=float(offsets[k]), n_features=self.X.shape[1])
            for k in range(K)
        ]
        self.preds = [np.full(self.X.shape[0], float(offsets[k])) for k in range(K)]
        self.signals = [
            _param_signal(family, self.y, np.tile(theta0, (self.X.shape[0], 1)), k)
            for k in range(K)
        ]
        self.eta_v = np.tile(offsets, (self.Xv.shape[0], 1))

    def heldout_deviance(self):
        return _deviance(self.family, self.yv, self.family.from_link(self.eta_v))

    def step(self):
        for k, ens in enumerate(self.ensembles):
            tree = add_tree(ens, self.X, self.preds[k], self.signals[k], self.cfg.tree,
                            self.streams[k], self.order)
            self.eta_v[:, k] += ens.eta * tree.predict(self.Xv)


def cv_curve(family, data, cfg, folds, fold_seed, train_seed, early_stopping_rounds=None):
    """Mean held-out Step-1 deviance after 0, 1, ... ``cfg.n_rounds`` rounds.

    With ``early_stopping_rounds`` the curve ends once that many rounds pass
    without a new minimum.
    """
    parts = kfold_indices(data.n_rows, folds, fold_seed)
    fold_rngs = np.random.default_rng(train_seed).spawn(folds)
    states = [_FoldState(family, data, part, cfg, r) for part, r in zip(parts, fold_rngs)]
    curve = [float(np.mean([s.heldout_deviance() for s in states]))]
    best, best_round = curve[0], 0
    for m in range(1, cfg.n_rounds + 1):
        for s in states:
            s.step()
        dev = float(np.mean([s.heldout_deviance() for s in states]))
        if not math.isfinite(dev):
            raise LssError(f"non-finite held-out deviance at round {m}")
        curve.append(dev)
        if dev < best:
            best, best_round = dev, m
        elif early_stopping_rounds and m - best_round >= early_stopping_rounds:
            break
    return np.asarray(curve)


def cross_validate(family, data, cfg, folds, fold_seed, train_seed):
    """Mean held-out deviance of ``cfg`` at exactly ``cfg.n_rounds`` rounds."""
    return float(cv_curve(family, data, cfg, folds, fold_seed, train_seed)[-1])


@dataclass
class Trial:
    index: int
    params: dict
    seed: int
    status: str = "ok"
    cv_deviance: float = math.nan
    n_rounds: int = 0
    message: str = ""


@dataclass
class TuneResult:
    best_params: dict | None
    best_n_rounds: int
    best_score: float
    trials: list = field(default_factory=list)
    budget_exhausted: bool = False
    fold_seed: int = 0

    @property
    def best_trial(self):
        ok = [t for t in self.trials if t.status == "ok"]
        return min(ok, key=lambda t: (t.cv_deviance, t.index)) if ok else None

    def best_config(self, step2=None):
        """Training recipe of the winning trial."""
        if self.best_params is None:
            raise LssError("no successful trial")
        cfg = TrainConfig(boost=params_to_config(self.best_params, self.best_n_rounds))
        if step2 is not None:
            cfg.step2 = step2
        return cfg

    def log_rows(self):
        header = ["trial", "status", "cv_deviance", "n_rounds", *HYPERPARAMETERS, "seed", "message"]
        rows = [
            [t.index, t.status, t.cv_deviance, t.n_rounds,
             *(t.params[h] for h in HYPERPARAMETERS), t.seed, t.message]
            for t in self.trials
        ]
        return header, rows


def default_params():
    tp = TreeParams()
    return {
        "eta": 0.1, "gamma": tp.gamma, "max_depth": tp.max_depth,
        "min_child_weight": tp.min_child_weight, "subsample": tp.subsample,
        "colsample_bytree": tp.colsample_bytree,
    }


def random_search(family, data, space=None, n_trials=20, folds=3, time_budget_minutes=None,
                  seed=0, max_rounds=500, early_stopping_rounds=20, initial_params=()):
    """Random search; ``initial_params`` are evaluated first, in order, and
    count towards ``n_trials``."""
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    space = space or SearchSpace()
    ss = np.random.SeedSequence(seed)
    fold_ss, sample_ss, train_ss = ss.spawn(3)
    fold_seed = int(fold_ss.generate_state(1)[0])
    sampler = np.random.default_rng(sample_ss)
    trial_seeds = train_ss.generate_state(n_trials, dtype=np.uint64)
    initial = list(initial_params)
    start = time.monotonic()
    trials = []
    exhausted = False
    for i in range(n_trials):
        if time_budget_minutes is not None and time.monotonic() - start > 60.0 * time_budget_minutes:
            exhausted = True
            log.info("time budget exhausted after %d trials", i)
            break
        params = dict(initial[i]) if i < len(initial) else space.sample(sampler)
        trial = Trial(index=i, params=params, seed=int(trial_seeds[i]))
        try:
            curve = cv_curve(family, data, params_to_config(params, max_rounds), folds,
                             fold_seed, trial.seed, early_stopping_rounds)
            best = int(np.argmin(curve))
            trial.cv_deviance = float(curve[best])
            trial.n_rounds = best
        except (LssError, ValueError, FloatingPointError) as exc:
            trial.status = "failed"
            trial.message = str(exc)
            log.warning("trial %d failed: %s", i, exc)
        log.info("trial %d: %s deviance=%.4f rounds=%d", i, trial.status,
                 trial.cv_deviance, trial.n_rounds)
        trials.append(trial)
    result = TuneResult(None, 0, math.nan, trials, exhausted, fold_seed)
    best = result.best_trial
    if best is not None:
        result.best_params = dict(best.params)
        result.best_n_rounds = best.n_rounds
        result.best_score = best.cv_deviance
    return result
