"""Acceptance criteria AC1-AC9, one test each.

AC7 and AC8 run the full multi-seed experiments and take several minutes.
"""

import time

import numpy as np

from bmdqn import dqn, experiments, lemma_lab, meta, netcore, variational, verify
from bmdqn.cli import main
from bmdqn.config import parse_config
from bmdqn.dqn import ReplayBuffer
from bmdqn.meta import MetaConfig, MetaState
from bmdqn.rng import stream
from bmdqn.variational import GaussianParams

SEEDS = (0, 1, 2, 3, 4)


def timed(fn):
    t0 = time.perf_counter()
    out = fn()
    return out, time.perf_counter() - t0


def test_ac1_lemma2(acceptance):
    res, dt = timed(lambda: verify.lemma_suite(seed=0, n=100)[0])
    ok = res.passed and dt < 1.0
    assert acceptance("AC1 lemma2 identity", ok, f"max residual {res.max_residual:.2e} (<1e-9), {dt:.2f}s (<1s)")


def test_ac2_lemma1_and_combined_gradient(acceptance):
    def run():
        rows = []
        for i in range(100):
            model, d_tr, d_val = lemma_lab.random_instance(stream(0, "lemma", i))
            rows.append([lemma_lab.check_lemma1(model, d_tr),
                         lemma_lab.check_posterior_gradient_identity(model, d_tr, d_val)])
        return np.array(rows)
    r, dt = timed(run)
    # decay: the prior_var component carries the truncation error (prior_mu is FD-exact)
    hs = np.array([1e-3, 1e-4, 1e-5])
    instances = [lemma_lab.random_instance(stream(0, "lemma", i)) for i in range(100)]
    checks = (lambda m, a, b, h: lemma_lab.check_lemma1(m, a, h, wrt=("prior_var",)),
              lambda m, a, b, h: lemma_lab.check_posterior_gradient_identity(m, a, b, h, wrt=("prior_var",)))
    slopes = []
    for check in checks:
        worst = [max(check(*inst, h) for inst in instances) for h in hs]
        slopes.append(np.polyfit(np.log10(hs), np.log10(worst), 1)[0])
    ok = r.max() < 1e-6 and all(1.8 < s < 2.2 for s in slopes) and dt < 5.0
    assert acceptance("AC2 lemma1 + combined gradient", ok,
                      f"max residual {r[:, 0].max():.2e} / {r[:, 1].max():.2e} (<1e-6), "
                      f"log-log slopes {slopes[0]:.2f} / {slopes[1]:.2f} (~2), {dt:.2f}s (<5s)")


def test_ac3_kl_gradients(acceptance):
    res, dt = timed(lambda: verify.kl_suite(seed=0, n=100, max_dim=100))
    ok = all(r.passed for r in res) and dt < 5.0
    assert acceptance("AC3 KL gradients vs central differences", ok,
                      ", ".join(f"{r.check} {r.max_residual:.2e}" for r in res) + f" (<1e-6), {dt:.2f}s (<5s)")


def test_ac4_backprop(acceptance):
    res, dt = timed(lambda: verify.backprop_suite(seed=0, n=100)[0])
    ok = res.passed and dt < 30.0
    assert acceptance("AC4 backprop vs numeric_grad", ok, f"max rel err {res.max_residual:.2e} (<1e-5), {dt:.2f}s (<30s)")


def test_ac5_reparameterization_unbiased(acceptance):
    def run():
        rng = stream(0, "ac5")
        dim, n = 10, 100_000
        a = rng.uniform(0.5, 2.0, dim)
        c = rng.uniform(-1, 1, dim)
        lam = GaussianParams(rng.uniform(-2, 2, dim), rng.uniform(-1.5, 0.0, dim))
        prior = GaussianParams(np.zeros(dim), np.zeros(dim))
        eps = stream(0, "ac5-noise").standard_normal((n, dim))
        acc_mu, acc_ls = np.zeros(dim), np.zeros(dim)
        for e in eps:
            theta = variational.sample_theta(lam, e)
            g = variational.elbo_grad(lam, prior, a * (theta - c), e, kl_weight=1.0)
            acc_mu += g.mu
            acc_ls += g.log_sigma
        # E over theta ~ N(mu, sigma^2) of 0.5 * sum a (theta - c)^2, plus the KL term
        kl = variational.kl_grad_wrt_q(lam, prior)
        exact_mu = a * (lam.mu - c) + kl.mu
        exact_ls = a * lam.sigma ** 2 + kl.log_sigma
        return verify.rel_err(acc_mu / n, exact_mu), verify.rel_err(acc_ls / n, exact_ls)
    (e_mu, e_ls), dt = timed(run)
    ok = e_mu < 0.01 and dt < 10.0
    assert acceptance("AC5 reparameterization unbiasedness", ok,
                      f"mu-gradient rel err {e_mu:.2e} (<1e-2; log_sigma {e_ls:.2e}), {dt:.2f}s (<10s)")


def test_ac6_update_arithmetic(acceptance):
    spec1 = netcore.NetSpec((1, 1))
    one = lambda mu, ls: GaussianParams([mu, 0.0], [ls, 0.0])  # noqa: E731
    prior, tr, trval = one(0.0, 0.0), one(1.0, 0.0), one(2.0, 0.0)
    st = MetaState(prior, prior, spec1)
    hand = meta.global_update(st, [(tr, trval)], MetaConfig(beta=0.1))
    c1 = hand.theta_prior.mu[0] == 0.1 and hand.theta_prior.log_sigma[0] == 0.0 - 0.1 * -3.0
    jump = meta.global_update(MetaState(prior, tr, spec1), [(tr, trval)], MetaConfig(lambda_step=1.0))
    c2 = jump.lambda_init.equals(trval)
    fixed = meta.global_update(MetaState(prior, tr, spec1), [(tr, tr)], MetaConfig())
    c3 = fixed.lambda_init.equals(tr) and fixed.theta_prior.equals(prior)

    spec = netcore.NetSpec((2, 8, 16))
    cfg = MetaConfig(variant="point_reptile", kl_weight=0.0, batch_size=16)
    lam = meta.init_state(spec, cfg, stream(0, "ac6")).lambda_init
    data = verify.random_batch(stream(1, "ac6"), spec, 40)
    buf, twin = ReplayBuffer(100, stream(2, "ac6")), ReplayBuffer(100, stream(2, "ac6"))
    buf.extend(data)
    twin.extend(data)
    step = meta.individual_update(lam, lam, buf, 1, cfg, spec, noise=np.zeros)
    plain = dqn.sgd_step(lam.mu, twin.sample(16), lam.mu, spec, cfg.alpha, cfg.discount)
    c4 = np.array_equal(step.mu, plain) and np.array_equal(step.log_sigma, lam.log_sigma)
    ok = c1 and c2 and c3 and c4
    assert acceptance("AC6 update arithmetic", ok,
                      f"prior hand case {c1}, reptile jump {c2}, fixed point {c3}, point_reptile == SGD bitwise {c4}")


def test_ac7_navigation_ordering(acceptance):
    base = parse_config(overrides={"experiment": "nav2d"})
    assert base.meta_iterations >= 200 and base.n_test_tasks == 40 and base.inner_steps_test == 3
    res, dt = timed(lambda: experiments.sweep(base, ("bm_dqn", "random_init", "gem_bml_direct"), SEEDS))
    after1 = {v: experiments.pooled(res, v, lambda r: r.by_step[1])[0]
              for v in ("bm_dqn", "random_init", "gem_bml_direct")}
    gap, se = experiments.pooled_gap(res, "bm_dqn", "random_init", 1)
    ok = (after1["bm_dqn"] > after1["random_init"] and after1["bm_dqn"] >= after1["gem_bml_direct"]
          and gap > se)
    assert acceptance("AC7 navigation ordering", ok,
                      f"return after episode 1: bm_dqn {after1['bm_dqn']:.1f}, random_init "
                      f"{after1['random_init']:.1f}, gem_bml_direct {after1['gem_bml_direct']:.1f}; "
                      f"gap {gap:.1f} vs pooled se {se:.1f}; {dt:.0f}s")


def test_ac8_traffic_heterogeneous_adaptation(acceptance):
    base = parse_config(overrides={"experiment": "traffic"})
    assert base.train_settings == ("8", "6a", "6e") and base.test_settings == ("LA-2", "Jinan-1")
    assert base.inner_steps_test == 3 and base.fixed_period == 5
    res, dt = timed(lambda: experiments.sweep(base, ("bm_dqn", "random_init", "fixed_time"), SEEDS, "avg_queue"))
    window = {v: experiments.pooled(res, v, lambda r: r.window)[0] for v in ("bm_dqn", "random_init")}
    final = {v: experiments.pooled(res, v, lambda r: r.final)[0] for v in ("bm_dqn", "fixed_time")}
    ok = window["bm_dqn"] < window["random_init"] and final["bm_dqn"] < final["fixed_time"]
    assert acceptance("AC8 traffic adaptation", ok,
                      f"window avg queue bm_dqn {window['bm_dqn']:.2f} < random_init {window['random_init']:.2f}; "
                      f"post-adaptation bm_dqn {final['bm_dqn']:.2f} < fixed_time {final['fixed_time']:.2f}; {dt:.0f}s")


def test_ac9_determinism(acceptance, tmp_path):
    small = ["--meta-iterations", "3", "--n-test-tasks", "3", "--seed", "5"]
    runs = {
        "nav meta-train": (["meta-train", "--experiment", "nav2d", *small], "train_metrics.csv"),
        "traffic meta-train": (["meta-train", "--experiment", "traffic", *small, "--set", "horizon=40"],
                               "train_metrics.csv"),
        "traffic baseline": (["baseline", "--experiment", "traffic", "--variant", "random_init", *small,
                              "--set", "horizon=40"], "test_metrics.csv"),
    }
    same = {}
    for name, (argv, csv_name) in runs.items():
        blobs = []
        for k in range(2):
            out = tmp_path / f"{name.replace(' ', '_')}_{k}"
            assert main([*argv, "--output-dir", str(out)]) == 0
            blobs.append((out / csv_name).read_bytes())
        same[name] = blobs[0] == blobs[1]
    ckpt = tmp_path / "nav_meta-train_0" / "checkpoint.json"
    blobs = []
    for k in range(2):
        out = tmp_path / f"test_{k}"
        assert main(["meta-test", "--experiment", "nav2d", *small, "--checkpoint", str(ckpt),
                     "--output-dir", str(out)]) == 0
        blobs.append((out / "test_metrics.csv").read_bytes())
    same["nav meta-test"] = blobs[0] == blobs[1]
    ok = all(same.values())
    assert acceptance("AC9 determinism", ok, ", ".join(f"{k} {'identical' if v else 'DIFFERS'}" for k, v in same.items()))
