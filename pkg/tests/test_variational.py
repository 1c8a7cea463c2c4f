import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bmdqn import netcore, variational as V, verify
from bmdqn.errors import ValidationError
from bmdqn.rng import stream
from bmdqn.variational import GaussianParams as G


def g1(mu, sigma):
    return G([mu], [math.log(sigma)])


class TestSampleTheta:
    def test_zero_noise(self, rng):
        lam = verify.random_gaussian(rng, 6)
        assert np.array_equal(V.sample_theta(lam, np.zeros(6)), lam.mu)

    def test_standard_normal(self, rng):
        e = rng.normal(size=4)
        assert np.array_equal(V.sample_theta(G.zeros(4), e), e)

    def test_hand_case(self):
        lam = G([1.0, 2.0], [math.log(2), math.log(3)])
        np.testing.assert_allclose(V.sample_theta(lam, [1.0, -1.0]), [3.0, -1.0], rtol=1e-15)

    def test_length_mismatch(self):
        with pytest.raises(ValidationError):
            V.sample_theta(G.zeros(3), np.zeros(2))


class TestKL:
    def test_identity(self, rng):
        q = verify.random_gaussian(rng, 10)
        assert V.kl_diag(q, q) == 0.0

    def test_mean_shift(self):
        assert V.kl_diag(g1(1, 1), g1(0, 1)) == 0.5

    def test_scale(self):
        assert V.kl_diag(g1(0, 2), g1(0, 1)) == pytest.approx(math.log(0.5) + 2 - 0.5, rel=1e-14)
        assert V.kl_diag(g1(0, 2), g1(0, 1)) == pytest.approx(0.806853, abs=1e-6)

    def test_against_quadrature(self):
        # independent route: integrate q log(q/p) on a fine grid
        q, p = (0.3, 0.7), (-0.4, 1.3)
        x = np.linspace(-12, 12, 200001)
        lq = -0.5 * ((x - q[0]) / q[1]) ** 2 - math.log(q[1] * math.sqrt(2 * math.pi))
        lp = -0.5 * ((x - p[0]) / p[1]) ** 2 - math.log(p[1] * math.sqrt(2 * math.pi))
        ref = np.trapezoid(np.exp(lq) * (lq - lp), x)
        assert V.kl_diag(g1(*q), g1(*p)) == pytest.approx(ref, abs=1e-9)

    @given(st.integers(0, 10**6), st.integers(1, 30))
    def test_non_negative(self, seed, dim):
        rng = stream(seed, "kl-nonneg")
        q, p = verify.random_gaussian(rng, dim), verify.random_gaussian(rng, dim)
        assert V.kl_diag(q, p) > 0.0

    def test_length_mismatch(self):
        with pytest.raises(ValidationError):
            V.kl_diag(G.zeros(2), G.zeros(3))


class TestKLGrads:
    def test_grad_q_hand(self):
        g = V.kl_grad_wrt_q(g1(1, 1), g1(0, 1))
        assert g.mu.tolist() == [1.0] and g.log_sigma.tolist() == [0.0]

    def test_grad_q_zero_at_p(self, rng):
        p = verify.random_gaussian(rng, 5)
        assert np.abs(V.kl_grad_wrt_q(p, p).flat()).max() < 1e-15

    def test_grad_q_fd_20(self):
        rng = stream(0, "kl20")
        assert verify.kl_q_residual(verify.random_gaussian(rng, 20), verify.random_gaussian(rng, 20)) < 1e-6

    def test_diff_grad_hand(self):
        g = V.kl_diff_grad_wrt_prior(g1(2, 1), g1(1, 1), g1(0, 1))
        assert g.mu.tolist() == [-1.0] and g.log_sigma.tolist() == [-3.0]

    def test_diff_grad_vanishes(self, rng):
        q, p = verify.random_gaussian(rng, 7), verify.random_gaussian(rng, 7)
        assert not V.kl_diff_grad_wrt_prior(q, q, p).flat().any()

    def test_diff_grad_fd_50(self):
        rng = stream(0, "kl50")
        a, b, p = (verify.random_gaussian(rng, 50) for _ in range(3))
        assert verify.kl_diff_residual(a, b, p) < 1e-6

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 10**6))
    def test_diff_grad_direction(self, seed):
        # negated and rescaled by the prior variance, the mean gradient is mu_trval - mu_tr
        rng = stream(seed, "dir")
        a, b, p = (verify.random_gaussian(rng, 8) for _ in range(3))
        g = V.kl_diff_grad_wrt_prior(a, b, p)
        np.testing.assert_allclose(-g.mu * p.sigma ** 2, a.mu - b.mu, rtol=1e-12, atol=1e-15)


class TestElbo:
    def test_zero(self, rng):
        p = verify.random_gaussian(rng, 5)
        assert np.abs(V.elbo_grad(p, p, np.zeros(5), rng.normal(size=5)).flat()).max() < 1e-15

    def test_zero_noise_sigma_only_from_kl(self, rng):
        lam, p = verify.random_gaussian(rng, 5), verify.random_gaussian(rng, 5)
        g = V.elbo_grad(lam, p, rng.normal(size=5), np.zeros(5), kl_weight=0.7)
        np.testing.assert_allclose(g.log_sigma, 0.7 * V.kl_grad_wrt_q(lam, p).log_sigma, rtol=1e-15)

    def test_reparam_chain_rule_by_fd(self, rng):
        # d/d(mu, log_sigma) of L(mu + eps*sigma) for L = sum(sin theta)
        lam, p, eps = verify.random_gaussian(rng, 6), verify.random_gaussian(rng, 6), rng.normal(size=6)
        theta = V.sample_theta(lam, eps)
        g = V.elbo_grad(lam, p, np.cos(theta), eps, kl_weight=0.3)
        f = lambda v: (np.sin(V.sample_theta(G.from_flat(v), eps)).sum()  # noqa: E731
                       + 0.3 * V.kl_diag(G.from_flat(v), p))
        assert verify.rel_err(g.flat(), netcore.numeric_grad(f, lam.flat())) < 1e-8

    def test_length_mismatch(self, rng):
        with pytest.raises(ValidationError):
            V.elbo_grad(G.zeros(3), G.zeros(3), np.zeros(2), np.zeros(3))


class TestGaussianParams:
    def test_read_only(self):
        g = G.zeros(3)
        with pytest.raises(ValueError):
            g.mu[0] = 1.0

    def test_arithmetic(self, rng):
        a, b = verify.random_gaussian(rng, 4), verify.random_gaussian(rng, 4)
        np.testing.assert_array_equal((a + b - b).flat(), (a + b).flat() - b.flat())
        np.testing.assert_array_equal((a * 2.0).flat(), 2.0 * a.flat())
        assert G.from_flat(a.flat()).equals(a)

    def test_mismatched_lengths(self):
        with pytest.raises(ValidationError):
            G([0.0, 1.0], [0.0])

    def test_init(self, rng):
        spec = netcore.NetSpec((2, 3, 4))
        g = V.init_gaussian(spec, rng)
        assert len(g) == netcore.param_count(spec)
        assert (g.log_sigma == -3.0).all() and g.spec_hash == spec.spec_hash
