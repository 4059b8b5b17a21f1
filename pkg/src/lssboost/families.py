"""Parametric response families.

Each family supplies what the booster needs from a distribution: the
log-likelihood, link functions, per-parameter derivatives on the link scale,
the CDF / quantile function / sampler, and an unconditional ML fit.

Parameters are passed as an array ``theta`` whose last axis holds the K
natural-scale parameter values in ``param_names`` order, so the same call
works for a single observation (shape ``(K,)``) and for a batch
(shape ``(n, K)``).
"""
import math
from dataclasses import dataclass

import numpy as np
from scipy import optimize, special

from .errors import (
    DegenerateDataError,
    DomainError,
    InvalidProbabilityError,
    UnsupportedFamilyError,
)

HESS_FLOOR = 1e-6
_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


@dataclass(frozen=True)
class Link:
    """Monotone map between a parameter's natural domain and the real line."""

    kind: str

    def __post_init__(self):
        if self.kind not in ("identity", "log"):
            raise ValueError(f"unknown link {self.kind!r}")

    def forward(self, x):
        """Natural scale -> link scale."""
        x = np.asarray(x, dtype=float)
        if self.kind == "log":
            return np.log(x)
        return x

    def inverse(self, eta):
        """Link scale -> natural scale."""
        eta = np.asarray(eta, dtype=float)
        if self.kind == "log":
            return np.exp(eta)
        return eta


IDENTITY = Link("identity")
LOG = Link("log")


def _as_probability(p):
    p = np.asarray(p, dtype=float)
    if not np.all((p > 0.0) & (p < 1.0)):
        raise InvalidProbabilityError("probabilities must lie strictly inside (0, 1)")
    return p


class Family:
    """Base class for a response distribution with K parameters.

    Subclasses implement ``_loglik``, ``_link_derivatives`` and, when they
    describe a proper distribution, ``_cdf``, ``_quantile``, ``_sample`` and
    ``mean``. Instances are immutable.
    """

    name = "family"
    param_names = ()
    links = ()
    support = "real_line"
    has_distribution = True

    @property
    def n_params(self):
        return len(self.param_names)

    def __repr__(self):
        return f"{type(self).__name__}()"

    def __eq__(self, other):
        return type(self) is type(other) and self.to_dict() == other.to_dict()

    def __hash__(self):
        return hash((type(self).__name__, tuple(sorted(self.to_dict().items()))))

    def to_dict(self):
        return {"name": self.name}

    # -- helpers -----------------------------------------------------------

    def check_support(self, y):
        y = np.asarray(y, dtype=float)
        if not np.all(np.isfinite(y)):
            raise DomainError(f"{self.name}: response contains non-finite values")
        if self.support == "positive_real" and np.any(y <= 0):
            raise DomainError(f"{self.name}: response must be strictly positive")
        return y

    def _params(self, theta):
        theta = np.asarray(theta, dtype=float)
        if theta.shape[-1] != self.n_params:
            raise ValueError(
                f"{self.name} expects {self.n_params} parameters, got {theta.shape[-1]}"
            )
        return [theta[..., k] for k in range(self.n_params)]

    def to_link(self, theta):
        """Natural-scale parameters -> link scale, column by column."""
        cols = self._params(theta)
        return np.stack([lk.forward(c) for lk, c in zip(self.links, cols)], axis=-1)

    def from_link(self, eta):
        cols = self._params(eta)
        return np.stack([lk.inverse(c) for lk, c in zip(self.links, cols)], axis=-1)

    # -- likelihood --------------------------------------------------------

    def loglik(self, y, theta):
        """Elementwise ln f(y | theta)."""
        y = self.check_support(y)
        return self._loglik(y, *self._params(theta))

    def link_derivatives(self, y, theta, k):
        """First and second derivative of ln f w.r.t. the link-scale value of
        parameter ``k``, other parameters held fixed. No flooring."""
        y = self.check_support(y)
        return self._link_derivatives(y, self._params(theta), k)

    def grad_hess(self, y, theta, k, h_floor=HESS_FLOOR):
        """Negative gradient / Hessian of ln f on the link scale of parameter
        ``k``, in the sign convention the booster minimizes.

        Returns ``g = -d ln f / d eta_k`` and ``h = max(-d^2 ln f / d eta_k^2,
        h_floor)``.
        """
        d1, d2 = self.link_derivatives(y, theta, k)
        g = -d1
        h = np.maximum(-d2, h_floor)
        return g, h

    def _loglik(self, y, *params):
        raise NotImplementedError

    def _link_derivatives(self, y, params, k):
        raise NotImplementedError

    # -- distribution functions -------------------------------------------

    def _require_distribution(self):
        if not self.has_distribution:
            raise UnsupportedFamilyError(
                f"{self.name} does not define a predictive distribution"
            )

    def pdf(self, y, theta):
        return np.exp(self.loglik(y, theta))

    def cdf(self, y, theta):
        self._require_distribution()
        y = np.asarray(y, dtype=float)
        return self._cdf(y, *self._params(theta))

    def quantile(self, p, theta):
        self._require_distribution()
        p = _as_probability(p)
        return self._quantile(p, *self._params(theta))

    def sample(self, theta, rng, n):
        """Draw ``n`` values per parameter row; shape ``theta.shape[:-1] + (n,)``."""
        self._require_distribution()
        params = [np.asarray(c)[..., None] for c in self._params(theta)]
        shape = np.broadcast_shapes(*(c.shape for c in params))[:-1] + (int(n),)
        return self._sample(rng, shape, *params)

    def mean(self, theta):
        self._require_distribution()
        return self._mean(*self._params(theta))

    def variance(self, theta):
        self._require_distribution()
        return self._variance(*self._params(theta))

    # -- unconditional fit -------------------------------------------------

    def fit_unconditional(self, y):
        """Maximum-likelihood parameters for an intercept-only model."""
        y = self.check_support(y)
        if y.size == 0:
            raise DegenerateDataError(f"{self.name}: empty response")
        return np.asarray(self._fit(y), dtype=float)

    def _fit(self, y):
        raise NotImplementedError


def _need_spread(name, y):
    if y.size < 2 or np.all(y == y.flat[0]):
        raise DegenerateDataError(f"{name}: response has zero variance")


class Normal(Family):
    name = "normal"
    param_names = ("mu", "sigma")
    links = (IDENTITY, LOG)
    support = "real_line"

    def _loglik(self, y, mu, sigma):
        z = (y - mu) / sigma
        return -_HALF_LOG_2PI - np.log(sigma) - 0.5 * z * z

    def _link_derivatives(self, y, params, k):
        mu, sigma = params
        r = y - mu
        s2 = sigma * sigma
        if k == 0:
            shape = np.broadcast_shapes(np.shape(r), np.shape(s2))
            return r / s2, np.broadcast_to(-1.0 / s2, shape).astype(float)
        q = r * r / s2
        return q - 1.0, -2.0 * q

    def _cdf(self, y, mu, sigma):
        return special.ndtr((y - mu) / sigma)

    def _quantile(self, p, mu, sigma):
        return mu + sigma * special.ndtri(p)

    def _sample(self, rng, shape, mu, sigma):
        return rng.normal(mu, sigma, size=shape)

    def _mean(self, mu, sigma):
        return np.asarray(mu, dtype=float)

    def _variance(self, mu, sigma):
        return sigma * sigma

    def _fit(self, y):
        _need_spread(self.name, y)
        mu = np.mean(y)
        sigma = math.sqrt(np.mean((y - mu) ** 2))
        if not sigma > 0:
            raise DegenerateDataError(f"{self.name}: response has zero variance")
        return [mu, sigma]


class LogNormal(Family):
    """Log-normal: ``ln y ~ N(mu, sigma)``."""

    name = "lognormal"
    param_names = ("mu", "sigma")
    links = (IDENTITY, LOG)
    support = "positive_real"

    def _loglik(self, y, mu, sigma):
        ly = np.log(y)
        z = (ly - mu) / sigma
        return -_HALF_LOG_2PI - np.log(sigma) - 0.5 * z * z - ly

    def _link_derivatives(self, y, params, k):
        return Normal._link_derivatives(self, np.log(y), params, k)

    def _cdf(self, y, mu, sigma):
        with np.errstate(divide="ignore", invalid="ignore"):
            ly = np.log(np.where(y > 0, y, 1.0))
        return np.where(y > 0, special.ndtr((ly - mu) / sigma), 0.0)

    def _quantile(self, p, mu, sigma):
        return np.exp(mu + sigma * special.ndtri(p))

    def _sample(self, rng, shape, mu, sigma):
        return rng.lognormal(mu, sigma, size=shape)

    def _mean(self, mu, sigma):
        return np.exp(mu + 0.5 * sigma * sigma)

    def _variance(self, mu, sigma):
        s2 = sigma * sigma
        return np.expm1(s2) * np.exp(2.0 * mu + s2)

    def _fit(self, y):
        _need_spread(self.name, y)
        return Normal._fit(self, np.log(y))


class Gamma(Family):
    """Gamma with mean ``mu`` and coefficient of variation ``sigma``.

    Shape is ``1 / sigma**2`` and scale ``mu * sigma**2``.
    """

    name = "gamma"
    param_names = ("mu", "sigma")
    links = (LOG, LOG)
    support = "positive_real"

    def _loglik(self, y, mu, sigma):
        a = 1.0 / (sigma * sigma)
        return (
            a * np.log(a) - a * np.log(mu) + (a - 1.0) * np.log(y) - a * y / mu
            - special.gammaln(a)
        )

    def _link_derivatives(self, y, params, k):
        mu, sigma = params
        a = 1.0 / (sigma * sigma)
        if k == 0:
            ratio = y / mu
            return a * (ratio - 1.0), -a * ratio
        score = np.log(a) + 1.0 - np.log(mu) + np.log(y) - y / mu - special.digamma(a)
        d1 = -2.0 * a * score
        d2 = 4.0 * a * score + 4.0 * a - 4.0 * a * a * special.polygamma(1, a)
        return d1, d2

    def _cdf(self, y, mu, sigma):
        a = 1.0 / (sigma * sigma)
        return special.gammainc(a, np.maximum(y, 0.0) / (mu * sigma * sigma))

    def _quantile(self, p, mu, sigma):
        a = 1.0 / (sigma * sigma)
        return special.gammaincinv(a, p) * mu * sigma * sigma

    def _sample(self, rng, shape, mu, sigma):
        a = 1.0 / (sigma * sigma)
        return rng.gamma(a, mu * sigma * sigma, size=shape)

    def _mean(self, mu, sigma):
        return np.asarray(mu, dtype=float)

    def _variance(self, mu, sigma):
        return (mu * sigma) ** 2

    def _fit(self, y):
        _need_spread(self.name, y)
        mu = np.mean(y)
        s = math.log(mu) - np.mean(np.log(y))
        if not s > 0:
            raise DegenerateDataError(f"{self.name}: response has zero variance")

        def score(log_a):
            a = math.exp(log_a)
            return math.log(a) - special.digamma(a) - s

        # ln a - digamma(a) is decreasing from +inf to 0
        log_a = optimize.brentq(score, -30.0, 40.0, xtol=1e-14, rtol=1e-15)
        return [mu, math.exp(-0.5 * log_a)]


class StudentT(Family):
    """Location-scale Student-t with degrees of freedom ``nu``."""

    name = "studentt"
    param_names = ("mu", "sigma", "nu")
    links = (IDENTITY, LOG, LOG)
    support = "real_line"

    def _loglik(self, y, mu, sigma, nu):
        z = (y - mu) / sigma
        return (
            special.gammaln(0.5 * (nu + 1.0)) - special.gammaln(0.5 * nu)
            - 0.5 * np.log(np.pi * nu) - np.log(sigma)
            - 0.5 * (nu + 1.0) * np.log1p(z * z / nu)
        )

    def _link_derivatives(self, y, params, k):
        mu, sigma, nu = params
        r = y - mu
        s2 = sigma * sigma
        r2 = r * r
        d = nu * s2 + r2
        if k == 0:
            return (nu + 1.0) * r / d, (nu + 1.0) * (r2 - nu * s2) / (d * d)
        if k == 1:
            return nu * (r2 - s2) / d, -2.0 * nu * (nu + 1.0) * s2 * r2 / (d * d)
        q = r2 / s2
        nq = nu + q
        a1 = (
            0.5 * special.digamma(0.5 * (nu + 1.0)) - 0.5 * special.digamma(0.5 * nu)
            - 0.5 / nu - 0.5 * np.log1p(q / nu) + (nu + 1.0) * q / (2.0 * nu * nq)
        )
        a2 = (
            0.25 * special.polygamma(1, 0.5 * (nu + 1.0))
            - 0.25 * special.polygamma(1, 0.5 * nu)
            + 0.5 / (nu * nu) + q / (2.0 * nu * nq)
            - q * (nu * nu + 2.0 * nu + q) / (2.0 * nu * nu * nq * nq)
        )
        return nu * a1, nu * a1 + nu * nu * a2

    def _cdf(self, y, mu, sigma, nu):
        return special.stdtr(nu, (y - mu) / sigma)

    def _quantile(self, p, mu, sigma, nu):
        return mu + sigma * special.stdtrit(nu, p)

    def _sample(self, rng, shape, mu, sigma, nu):
        return mu + sigma * rng.standard_t(nu, size=shape)

    def _mean(self, mu, sigma, nu):
        return np.where(nu > 1, mu, np.nan)

    def _variance(self, mu, sigma, nu):
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.where(nu > 2, sigma * sigma * nu / (nu - 2.0), np.inf)

    def _fit(self, y):
        _need_spread(self.name, y)
        med = float(np.median(y))
        mad = float(np.median(np.abs(y - med))) * 1.4826
        if not mad > 0:
            mad = float(np.std(y))
        x0 = np.array([med, math.log(mad), math.log(10.0)])

        def objective(eta):
            theta = self.from_link(eta)
            val = -np.mean(self._loglik(y, *theta))
            grad = np.array(
                [-np.mean(self._link_derivatives(y, list(theta), k)[0]) for k in range(3)]
            )
            return val, grad

        bounds = [(None, None), (None, None), (math.log(0.05), math.log(1e6))]
        res = optimize.minimize(
            objective, x0, jac=True, method="L-BFGS-B", bounds=bounds,
            options={"gtol": 1e-12, "ftol": 1e-15, "maxiter": 2000},
        )
        return self.from_link(res.x)


class Expectile(Family):
    """Asymmetric-least-squares pseudo-family for the ``tau`` expectile.

    The "log-likelihood" is the negated loss ``|tau - 1(y < f)| (y - f)**2``.
    There is no predictive distribution: only the expectile curve.
    """

    name = "expectile"
    param_names = ("expectile",)
    links = (IDENTITY,)
    support = "real_line"
    has_distribution = False

    def __init__(self, tau=0.5):
        if not 0.0 < tau < 1.0:
            raise ValueError("tau must lie strictly inside (0, 1)")
        self.tau = float(tau)

    def __repr__(self):
        return f"Expectile(tau={self.tau})"

    def to_dict(self):
        return {"name": self.name, "tau": self.tau}

    def _weights(self, y, f):
        return np.where(y >= f, self.tau, 1.0 - self.tau)

    def _loglik(self, y, f):
        r = y - f
        return -self._weights(y, f) * r * r

    def _link_derivatives(self, y, params, k):
        (f,) = params
        w = self._weights(y, f)
        return 2.0 * w * (y - f), -2.0 * w

    def _fit(self, y):
        e = np.mean(y)
        for _ in range(1000):
            w = self._weights(y, e)
            new = np.sum(w * y) / np.sum(w)
            if new == e:
                break
            e = new
        return [e]


def expectile_grad_hess(tau, y, f):
    """Newton signal for the ``tau`` expectile loss at current fit ``f``."""
    return Expectile(tau).grad_hess(y, np.asarray(f, dtype=float)[..., None], 0)


FAMILIES = {cls.name: cls for cls in (Normal, Gamma, LogNormal, StudentT)}


def get_family(name, **options):
    """Look up a family by name; ``expectile`` takes a ``tau`` option.

    ``"expectile:0.9"`` is accepted as shorthand for ``tau=0.9``.
    """
    key = name.strip().lower()
    if key.startswith("expectile"):
        _, _, tau = key.partition(":")
        if tau:
            options.setdefault("tau", float(tau))
        return Expectile(**options)
    try:
        return FAMILIES[key]()
    except KeyError:
        raise UnsupportedFamilyError(f"unknown family {name!r}") from None


def family_from_dict(doc):
    doc = dict(doc)
    name = doc.pop("name")
    return get_family(name, **doc)


def gaic(family, y, penalty=2.0):
    """Generalised AIC of the unconditional fit: ``-2 max loglik + penalty * K``."""
    y = family.check_support(y)
    theta = family.fit_unconditional(y)
    return -2.0 * float(np.sum(family.loglik(y, theta))) + penalty * family.n_params


def rank_families(families, y, penalty=2.0):
    """Rank families by GAIC, best (lowest) first.

    Returns ``(name, gaic, error)`` triples; families whose unconditional fit
    fails get ``gaic = nan`` plus the error message and sort last.
    """
    rows = []
    for fam in families:
        try:
            rows.append((fam.name, gaic(fam, y, penalty), None))
        except (DomainError, DegenerateDataError) as exc:
            rows.append((fam.name, float("nan"), str(exc)))
    return sorted(rows, key=lambda r: (r[2] is not None, r[1] if r[2] is None else 0.0))
