"""Numerical verification suites: each compares an implementation against an independent route.

Suites and their checks:

lemma      lemma2 (direct predictive vs difference of marginals),
           lemma1 / posterior_gradient (finite differences vs closed forms)
kl         kl_grad_wrt_q, kl_diff_grad_wrt_prior vs central differences of kl_diag
backprop   netcore.backward vs numeric_grad on random small networks
td         double_dqn_targets vs a per-row loop; td_loss_and_grad vs numeric_grad

Functions under test are looked up on their modules at call time, so a
monkeypatched implementation is what gets checked.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from . import dqn, lemma_lab, netcore, variational
from .rng import stream
from .variational import GaussianParams

N_INSTANCES = 100
TOL = {
    "lemma2": 1e-9,
    "lemma1": 1e-6,
    "posterior_gradient": 1e-6,
    "kl_grad_wrt_q": 1e-6,
    "kl_diff_grad_wrt_prior": 1e-6,
    "backward": 1e-5,
    "double_dqn_targets": 1e-12,
    "td_loss_grad": 1e-5,
}
SUITES = ("lemma", "kl", "backprop", "td")


@dataclass(frozen=True)
class CheckResult:
    suite: str
    check: str
    n: int
    max_residual: float
    tol: float

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.max_residual) and self.max_residual < self.tol)

    def to_dict(self) -> dict:
        return {**asdict(self), "passed": self.passed}


def rel_err(a, b) -> float:
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    scale = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / scale)


def central_diff(f, x, h: float = 1e-5) -> np.ndarray:
    return netcore.numeric_grad(f, x, h)


# ------------------------------------------------------------------- lemma

def lemma_suite(seed: int = 0, n: int = N_INSTANCES) -> list[CheckResult]:
    r2, r1, rg = [], [], []
    for i in range(n):
        model, d_tr, d_val = lemma_lab.random_instance(stream(seed, "lemma", i))
        r2.append(lemma_lab.check_lemma2(model, d_tr, d_val))
        r1.append(lemma_lab.check_lemma1(model, d_tr))
        rg.append(lemma_lab.check_posterior_gradient_identity(model, d_tr, d_val))
    return [CheckResult("lemma", "lemma2", n, max(r2), TOL["lemma2"]),
            CheckResult("lemma", "lemma1", n, max(r1), TOL["lemma1"]),
            CheckResult("lemma", "posterior_gradient", n, max(rg), TOL["posterior_gradient"])]


# ---------------------------------------------------------------------- kl

def random_gaussian(rng, dim: int) -> GaussianParams:
    return GaussianParams(rng.uniform(-1, 1, dim), rng.uniform(-1.0, 0.5, dim))


def kl_q_residual(q: GaussianParams, p: GaussianParams) -> float:
    f = lambda v: variational.kl_diag(GaussianParams.from_flat(v), p)  # noqa: E731
    return rel_err(variational.kl_grad_wrt_q(q, p).flat(), central_diff(f, q.flat()))


def kl_diff_residual(q_trval: GaussianParams, q_tr: GaussianParams, p: GaussianParams) -> float:
    def f(v):
        prior = GaussianParams.from_flat(v)
        return variational.kl_diag(q_trval, prior) - variational.kl_diag(q_tr, prior)
    got = variational.kl_diff_grad_wrt_prior(q_trval, q_tr, p)
    return rel_err(got.flat(), central_diff(f, p.flat()))


def kl_suite(seed: int = 0, n: int = N_INSTANCES, max_dim: int = 100) -> list[CheckResult]:
    rq, rd = [], []
    for i in range(n):
        rng = stream(seed, "kl", i)
        dim = int(rng.integers(1, max_dim + 1))
        q, q2, p = (random_gaussian(rng, dim) for _ in range(3))
        rq.append(kl_q_residual(q, p))
        rd.append(kl_diff_residual(q, q2, p))
    return [CheckResult("kl", "kl_grad_wrt_q", n, max(rq), TOL["kl_grad_wrt_q"]),
            CheckResult("kl", "kl_diff_grad_wrt_prior", n, max(rd), TOL["kl_diff_grad_wrt_prior"])]


# ---------------------------------------------------------------- backprop

def random_spec(rng) -> netcore.NetSpec:
    act = ("relu", "tanh")[int(rng.integers(2))]
    if rng.random() < 0.5:
        depth = int(rng.integers(0, 3))
        sizes = [int(rng.integers(1, 6)) for _ in range(depth + 2)]
        return netcore.NetSpec(tuple(sizes), act)
    embed = (1, *(int(rng.integers(1, 5)) for _ in range(int(rng.integers(1, 3)))))
    score = (embed[-1], *(int(rng.integers(1, 5)) for _ in range(int(rng.integers(0, 2)))), 1)
    return netcore.NetSpec(embed, act, "phase_shared", score_sizes=score,
                           value_head=bool(rng.random() < 0.5))


def backward_residual(spec: netcore.NetSpec, rng, h: float = 1e-5) -> float:
    """Relative error of (weight, input) gradients of <forward, G>, kink coordinates dropped.

    A coordinate sits on a relu kink when its one-sided differences disagree
    by more than the smooth curvature allows; those coordinates are excluded.
    """
    w = netcore.init_weights(spec, rng) * 2.0
    x = rng.uniform(-1, 1, size=(3, spec.n_inputs))
    G = rng.standard_normal((3, spec.n_outputs))
    gw, gx = netcore.backward(spec, w, x, G)
    analytic = np.concatenate([gw, gx.ravel()])
    nw = w.size

    def f(v):
        return float(np.sum(netcore.forward(spec, v[:nw], v[nw:].reshape(x.shape)) * G))

    v0 = np.concatenate([w, x.ravel()])
    numeric = central_diff(f, v0, h)
    keep = ~_kinks(f, v0, h) if spec.activation == "relu" else np.ones(v0.size, bool)
    return rel_err(analytic[keep], numeric[keep]) if keep.any() else 0.0


def _kinks(f, v0, h):
    f0 = f(v0)
    out = np.zeros(v0.size, dtype=bool)
    v = v0.copy()
    for i in range(v0.size):
        v[i] = v0[i] + h
        fp = f(v)
        v[i] = v0[i] - h
        fm = f(v)
        v[i] = v0[i]
        fwd, bwd = (fp - f0) / h, (f0 - fm) / h
        out[i] = abs(fwd - bwd) > 1e-6 * (1.0 + abs(fwd) + abs(bwd))
    return out


def backprop_suite(seed: int = 0, n: int = N_INSTANCES) -> list[CheckResult]:
    res = [backward_residual(random_spec(stream(seed, "spec", i)), stream(seed, "net", i))
           for i in range(n)]
    return [CheckResult("backprop", "backward", n, max(res), TOL["backward"])]


# ---------------------------------------------------------------------- td

def random_batch(rng, spec: netcore.NetSpec, size: int) -> list[dqn.Transition]:
    return [dqn.Transition(rng.uniform(-1, 1, spec.n_inputs), int(rng.integers(spec.n_outputs)),
                           float(rng.normal()), rng.uniform(-1, 1, spec.n_inputs),
                           bool(rng.random() < 0.2)) for _ in range(size)]


def targets_by_loop(batch, online, target, spec, gamma, mask=None) -> np.ndarray:
    out = []
    for t in batch:
        if t.done:
            out.append(t.r)
            continue
        q_on = netcore.forward(spec, online, t.s_next)
        allowed = range(len(q_on)) if mask is None else np.flatnonzero(mask)
        best = max(allowed, key=lambda a: (q_on[a], -a))
        out.append(t.r + gamma * netcore.forward(spec, target, t.s_next)[best])
    return np.array(out)


def td_suite(seed: int = 0, n: int = N_INSTANCES) -> list[CheckResult]:
    rt, rg = [], []
    for i in range(n):
        rng = stream(seed, "td", i)
        spec = netcore.NetSpec((3, int(rng.integers(2, 6)), 4), ("relu", "tanh")[i % 2])
        online, target = netcore.init_weights(spec, rng), netcore.init_weights(spec, rng)
        batch = random_batch(rng, spec, int(rng.integers(1, 9)))
        mask = rng.random(4) < 0.7
        mask[int(rng.integers(4))] = True
        y = dqn.double_dqn_targets(batch, online, target, spec, 0.9, mask)
        rt.append(float(np.max(np.abs(y - targets_by_loop(batch, online, target, spec, 0.9, mask)))))
        _, g = dqn.td_loss_and_grad(batch, y, online, spec)
        f = lambda v: dqn.td_loss_and_grad(batch, y, v, spec)[0]  # noqa: E731
        keep = slice(None)
        if spec.activation == "relu":
            # kinks are a property of the network, so find them on a linear readout
            s_b, a_b = np.stack([t.s for t in batch]), [t.a for t in batch]
            lin = lambda v: float(netcore.forward(spec, v, s_b)[np.arange(len(a_b)), a_b].sum())  # noqa: E731
            keep = ~_kinks(lin, online, 1e-5)
        rg.append(rel_err(g[keep], central_diff(f, online)[keep]))
    return [CheckResult("td", "double_dqn_targets", n, max(rt), TOL["double_dqn_targets"]),
            CheckResult("td", "td_loss_grad", n, max(rg), TOL["td_loss_grad"])]


_RUNNERS = {"lemma": lemma_suite, "kl": kl_suite, "backprop": backprop_suite, "td": td_suite}


def run_suites(seed: int = 0, suites=SUITES, n: int = N_INSTANCES) -> list[CheckResult]:
    out = []
    for name in suites:
        out.extend(_RUNNERS[name](seed=seed, n=n))
    return out


def format_table(results) -> str:
    lines = [f"{'suite':<10} {'check':<24} {'n':>4} {'max_residual':>13} {'tol':>8}  result"]
    for r in results:
        lines.append(f"{r.suite:<10} {r.check:<24} {r.n:>4} {r.max_residual:>13.3e} "
                     f"{r.tol:>8.0e}  {'PASS' if r.passed else 'FAIL'}")
    return "\n".join(lines)
