"""Closed-form checks of the hierarchical-Bayes identities behind the prior update.

Substrate: a scalar Gaussian hierarchy where every quantity is exact,

    theta ~ N(prior_mu, prior_var),   x_j | theta ~ N(theta, noise_var).

Three identities are checked numerically:

* the gradient of the log marginal likelihood w.r.t. the prior parameters
  equals the posterior expectation of the gradient of the log prior density;
* the log predictive likelihood of a validation set given a training set is
  the difference of two log marginals;
* combining both, the gradient of that predictive likelihood is a difference
  of two posterior expectations.

Each ``check_*`` returns an absolute residual between a finite-difference
(or directly computed) side and a closed-form side.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import PreconditionError, ValidationError

LOG_2PI = math.log(2.0 * math.pi)
FD_STEP = 1e-5


@dataclass(frozen=True)
class ConjugateModel:
    prior_mu: float
    prior_var: float
    noise_var: float
    datasets: tuple = field(default=())

    def __post_init__(self):
        if not (self.prior_var > 0 and self.noise_var > 0):
            raise ValidationError("variances must be positive")


def _data(task_data) -> np.ndarray:
    x = np.asarray(task_data, dtype=float).ravel()
    if x.size == 0:
        raise PreconditionError("need at least one observation")
    return x


def conjugate_posterior(model: ConjugateModel, task_data) -> tuple[float, float]:
    x = _data(task_data)
    post_var = 1.0 / (1.0 / model.prior_var + x.size / model.noise_var)
    post_mu = post_var * (model.prior_mu / model.prior_var + x.sum() / model.noise_var)
    return float(post_mu), float(post_var)


def log_marginal(model: ConjugateModel, task_data) -> float:
    """log N(x; prior_mu 1, noise_var I + prior_var 1 1^T), via the rank-one structure."""
    x = _data(task_data)
    n, s2, v = x.size, model.noise_var, model.prior_var
    d = x - model.prior_mu
    denom = s2 + n * v
    quad = (d @ d - v * d.sum() ** 2 / denom) / s2
    logdet = (n - 1) * math.log(s2) + math.log(denom)
    return float(-0.5 * (n * LOG_2PI + logdet + quad))


def log_predictive(model: ConjugateModel, d_tr, d_val) -> float:
    """log P(d_val | prior, d_tr): the marginal of d_val under the posterior from d_tr."""
    post_mu, post_var = conjugate_posterior(model, d_tr)
    return log_marginal(replace(model, prior_mu=post_mu, prior_var=post_var), d_val)


def expected_prior_score(model: ConjugateModel, post_mu: float, post_var: float) -> tuple[float, float]:
    """E_{theta ~ N(post_mu, post_var)} of d/d(prior_mu, prior_var) log N(theta; prior_mu, prior_var)."""
    m, v = model.prior_mu, model.prior_var
    d_mu = (post_mu - m) / v
    d_var = -0.5 / v + 0.5 * (post_var + (post_mu - m) ** 2) / v ** 2
    return d_mu, d_var


def _fd(f, model: ConjugateModel, wrt: str, h: float) -> float:
    x0 = getattr(model, wrt)
    return (f(replace(model, **{wrt: x0 + h})) - f(replace(model, **{wrt: x0 - h}))) / (2 * h)


_WRT = ("prior_mu", "prior_var")


def check_lemma1(model: ConjugateModel, task_data, h: float = FD_STEP, wrt=_WRT) -> float:
    """|d log P(D | prior) - E_posterior[d log p(theta | prior)]|, max over ``wrt``.

    The log marginal is exactly quadratic in ``prior_mu``, so that component
    is finite-difference exact; ``prior_var`` carries the O(h^2) truncation.
    """
    closed = dict(zip(_WRT, expected_prior_score(model, *conjugate_posterior(model, task_data))))
    return max(abs(_fd(lambda m: log_marginal(m, task_data), model, w, h) - closed[w]) for w in wrt)


def check_lemma2(model: ConjugateModel, d_tr, d_val) -> float:
    """|log P(D_val | prior, D_tr) - [log P(D_tr + D_val | prior) - log P(D_tr | prior)]|."""
    direct = log_predictive(model, d_tr, d_val)
    both = np.concatenate([_data(d_tr), _data(d_val)])
    return abs(direct - (log_marginal(model, both) - log_marginal(model, d_tr)))


def predictive_gradient(model: ConjugateModel, d_tr, d_val) -> tuple[float, float]:
    """Closed form: E_{post(tr+val)} score - E_{post(tr)} score, per prior parameter."""
    both = np.concatenate([_data(d_tr), _data(d_val)])
    g_all = expected_prior_score(model, *conjugate_posterior(model, both))
    g_tr = expected_prior_score(model, *conjugate_posterior(model, d_tr))
    return g_all[0] - g_tr[0], g_all[1] - g_tr[1]


def check_posterior_gradient_identity(model: ConjugateModel, d_tr, d_val,
                                      h: float = FD_STEP, wrt=_WRT) -> float:
    closed = dict(zip(_WRT, predictive_gradient(model, d_tr, d_val)))
    f = lambda m: log_predictive(m, d_tr, d_val)  # noqa: E731
    return max(abs(_fd(f, model, w, h) - closed[w]) for w in wrt)


def random_instance(rng: np.random.Generator, split: bool = True):
    """Random model plus data drawn from it: (model, d_tr, d_val) or (model, data)."""
    model = ConjugateModel(
        prior_mu=float(rng.uniform(-2, 2)),
        prior_var=float(rng.uniform(0.1, 4)),
        noise_var=float(rng.uniform(0.1, 4)),
    )
    theta = rng.normal(model.prior_mu, math.sqrt(model.prior_var))
    draw = lambda: rng.normal(theta, math.sqrt(model.noise_var), size=int(rng.integers(1, 21)))  # noqa: E731
    if split:
        return model, draw(), draw()
    return model, draw()
