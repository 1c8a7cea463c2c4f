"""Diagonal Gaussians over flat weight vectors.

``sigma = exp(log_sigma)`` throughout; every gradient is taken with respect to
``(mu, log_sigma)``.  Gradients are returned as ``GaussianParams`` so they can
be combined with the parameters they belong to by ordinary arithmetic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError

LOG_SIGMA_INIT = -3.0


@dataclass(frozen=True, eq=False)
class GaussianParams:
    mu: np.ndarray
    log_sigma: np.ndarray
    spec_hash: str = ""

    def __post_init__(self):
        mu = np.array(self.mu, dtype=float).ravel()
        ls = np.array(self.log_sigma, dtype=float).ravel()
        if mu.shape != ls.shape:
            raise ValidationError(f"mu {mu.shape} and log_sigma {ls.shape} differ in length")
        mu.flags.writeable = False
        ls.flags.writeable = False
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "log_sigma", ls)

    def __len__(self):
        return self.mu.shape[0]

    @property
    def sigma(self) -> np.ndarray:
        return np.exp(self.log_sigma)

    def _like(self, mu, log_sigma):
        return GaussianParams(mu, log_sigma, self.spec_hash)

    def __add__(self, other: "GaussianParams"):
        _same_length(self, other)
        return self._like(self.mu + other.mu, self.log_sigma + other.log_sigma)

    def __sub__(self, other: "GaussianParams"):
        _same_length(self, other)
        return self._like(self.mu - other.mu, self.log_sigma - other.log_sigma)

    def __mul__(self, k: float):
        return self._like(self.mu * k, self.log_sigma * k)

    __rmul__ = __mul__

    def flat(self) -> np.ndarray:
        return np.concatenate([self.mu, self.log_sigma])

    def norm(self) -> float:
        return float(np.sqrt(self.mu @ self.mu + self.log_sigma @ self.log_sigma))

    def equals(self, other: "GaussianParams") -> bool:
        return (np.array_equal(self.mu, other.mu)
                and np.array_equal(self.log_sigma, other.log_sigma))

    @classmethod
    def from_flat(cls, v, spec_hash: str = "") -> "GaussianParams":
        v = np.asarray(v, dtype=float)
        n = v.shape[0] // 2
        return cls(v[:n], v[n:], spec_hash)

    @classmethod
    def zeros(cls, n: int, spec_hash: str = "") -> "GaussianParams":
        return cls(np.zeros(n), np.zeros(n), spec_hash)


def _same_length(*gs: GaussianParams):
    n = len(gs[0])
    if any(len(g) != n for g in gs):
        raise ValidationError(f"length mismatch: {[len(g) for g in gs]}")


def init_gaussian(spec, rng: np.random.Generator, log_sigma: float = LOG_SIGMA_INIT) -> GaussianParams:
    from .netcore import init_weights, param_count

    mu = init_weights(spec, rng)
    return GaussianParams(mu, np.full(param_count(spec), float(log_sigma)), spec.spec_hash)


def sample_theta(lam: GaussianParams, eps) -> np.ndarray:
    eps = np.asarray(eps, dtype=float)
    if eps.shape != lam.mu.shape:
        raise ValidationError(f"noise has shape {eps.shape}, parameters have {lam.mu.shape}")
    return lam.mu + eps * lam.sigma


def kl_diag(q: GaussianParams, p: GaussianParams) -> float:
    """KL(q || p), summed over coordinates."""
    _same_length(q, p)
    var_ratio = np.exp(2.0 * (q.log_sigma - p.log_sigma))
    maha = (q.mu - p.mu) ** 2 * np.exp(-2.0 * p.log_sigma)
    return float(np.sum(p.log_sigma - q.log_sigma + 0.5 * (var_ratio + maha) - 0.5))


def kl_grad_wrt_q(q: GaussianParams, p: GaussianParams) -> GaussianParams:
    _same_length(q, p)
    prec_p = np.exp(-2.0 * p.log_sigma)
    return q._like((q.mu - p.mu) * prec_p, np.exp(2.0 * q.log_sigma) * prec_p - 1.0)


def kl_diff_grad_wrt_prior(q_trval: GaussianParams, q_tr: GaussianParams,
                           prior: GaussianParams) -> GaussianParams:
    """Gradient of KL(q_trval || prior) - KL(q_tr || prior) w.r.t. the prior's (mu, log_sigma)."""
    _same_length(q_trval, q_tr, prior)
    prec = np.exp(-2.0 * prior.log_sigma)
    d_mu = (q_tr.mu - q_trval.mu) * prec
    spread_tr = np.exp(2.0 * q_tr.log_sigma) + (q_tr.mu - prior.mu) ** 2
    spread_trval = np.exp(2.0 * q_trval.log_sigma) + (q_trval.mu - prior.mu) ** 2
    return prior._like(d_mu, (spread_tr - spread_trval) * prec)


def elbo_grad(lam: GaussianParams, prior: GaussianParams, loss_grad_at_theta,
              eps, kl_weight: float = 1.0) -> GaussianParams:
    """Reparameterised gradient of ``L(mu + eps*sigma) + kl_weight * KL(lam || prior)``."""
    _same_length(lam, prior)
    g = np.asarray(loss_grad_at_theta, dtype=float)
    eps = np.asarray(eps, dtype=float)
    if g.shape != lam.mu.shape or eps.shape != lam.mu.shape:
        raise ValidationError("loss gradient and noise must match the parameter length")
    kl = kl_grad_wrt_q(lam, prior)
    return lam._like(g + kl_weight * kl.mu, g * eps * lam.sigma + kl_weight * kl.log_sigma)
