import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gecsr.denoisers import (
    V_MAX,
    V_MIN,
    DegenerateBinError,
    GaussianMessage,
    PosteriorMoments,
    extrinsic,
    prior_denoise,
    prior_moments,
    quantized_denoise,
    quantized_moments,
    truncated_moments,
)
from gecsr.model import BernoulliGaussianPrior, Quantizer
from oracles import prior_posterior, truncated_posterior


class TestPriorDenoiser:
    def test_zero_input_gives_zero_mean(self):
        m, _ = prior_moments(np.array([0j, 1 + 1j]), 0.3, 0.4)
        assert m[0] == 0

    @pytest.mark.parametrize("r,v", [(0.3 - 1.2j, 0.5), (2 + 0j, 0.01), (-1j, 4.0)])
    def test_gaussian_prior(self, r, v):
        m, var = prior_moments(np.array([r]), v, 1.0)
        assert m[0] == pytest.approx(r / (v + 1), rel=1e-14)
        assert var[0] == pytest.approx(v / (v + 1), rel=1e-14)

    def test_oracle_example(self):
        # adaptive quadrature over the spike/slab posterior (tests/oracles.py)
        m, v = prior_moments(np.array([0.5 + 0.5j]), 0.25, 0.4)
        assert m[0] == pytest.approx(0.12357520589819958 + 0.12357520589819958j, rel=1e-8)
        assert v[0] == pytest.approx(0.14358703619462546, rel=1e-8)

    def test_random_inputs_against_oracle(self):
        rng = np.random.default_rng(21)
        for _ in range(25):
            rho = rng.uniform(0.05, 1.0)
            v = 10 ** rng.uniform(-3, 1)
            r = complex(*rng.normal(0, 1.5, 2))
            m, var = prior_moments(np.array([r]), v, rho)
            mo, vo = prior_posterior(r, v, rho)
            assert abs(m[0] - mo) <= 1e-8 * abs(mo) + 1e-15
            assert var[0] == pytest.approx(vo, rel=1e-6)

    def test_matches_literal_formula(self):
        """C-weighted second moment minus |x_hat|^2, evaluated directly."""
        rng = np.random.default_rng(0)
        r = rng.standard_normal(50) + 1j * rng.standard_normal(50)
        v, rho = 0.3, 0.4
        cn = lambda var: np.exp(-np.abs(r) ** 2 / var) / (np.pi * var)
        c = rho * cn(v + 1 / rho) / ((1 - rho) * cn(v) + rho * cn(v + 1 / rho))
        g = (1 / rho) / (v + 1 / rho)
        mean = c * r * g
        var = c * (v * g + np.abs(r * g) ** 2) - np.abs(mean) ** 2
        m2, v2 = prior_moments(r, v, rho)
        np.testing.assert_allclose(m2, mean, rtol=1e-12)
        np.testing.assert_allclose(v2, var, rtol=1e-10)

    def test_no_underflow_at_tiny_variance(self):
        m, v = prior_moments(np.array([3.0 + 0j, 1e-7 + 0j]), 1e-12, 0.4)
        assert np.all(np.isfinite(m)) and np.all(np.isfinite(v))
        assert m[0] == pytest.approx(3.0, rel=1e-9)
        assert abs(m[1]) < 1e-15

    @settings(max_examples=200, deadline=None)
    @given(re=st.floats(-5, 5), im=st.floats(-5, 5), v=st.floats(1e-4, 20), rho=st.floats(0.05, 1.0))
    def test_posterior_variance_bounded(self, re, im, v, rho):
        _, var = prior_moments(np.array([re + 1j * im]), v, rho)
        assert 0 < var[0] <= max(v, 1.0 / rho)

    def test_average_posterior_variance_below_message_variance(self):
        rng = np.random.default_rng(3)
        prior = BernoulliGaussianPrior(0.4)
        for v in (0.01, 0.3, 2.0):
            x = prior.sample(20000, rng)
            r = x + np.sqrt(v / 2) * (rng.standard_normal(20000) + 1j * rng.standard_normal(20000))
            post = prior_denoise(GaussianMessage(r, v), prior)
            assert post.avg_var <= v

    @settings(max_examples=100, deadline=None)
    @given(re=st.floats(-3, 3), im=st.floats(-3, 3), v=st.floats(0.01, 3.0), rho=st.floats(0.1, 1.0))
    def test_prior_variance_is_mean_sensitivity(self, re, im, v, rho):
        # per real axis dE[x_R|r]/dr_R = Var[x_R|r] / (v/2); summed over both axes
        h = 1e-6
        r = re + 1j * im
        m_pr, _ = prior_moments(np.array([r + h]), v, rho)
        m_mr, _ = prior_moments(np.array([r - h]), v, rho)
        m_pi, _ = prior_moments(np.array([r + 1j * h]), v, rho)
        m_mi, _ = prior_moments(np.array([r - 1j * h]), v, rho)
        d_rr = (m_pr[0].real - m_mr[0].real) / (2 * h)
        d_ii = (m_pi[0].imag - m_mi[0].imag) / (2 * h)
        _, var = prior_moments(np.array([r]), v, rho)
        assert var[0] / (v / 2) == pytest.approx(d_rr + d_ii, rel=1e-5, abs=1e-7)

    def test_rejects_bad_variance(self):
        with pytest.raises(ValueError):
            prior_moments(np.array([1j]), 0.0, 0.4)


class TestQuantizedDenoiser:
    def test_uninformative_bin(self):
        m, v = truncated_moments(0.3, 0.7, -np.inf, np.inf, 0.01)
        assert m == pytest.approx(0.3, abs=1e-15) and v == pytest.approx(0.7, rel=1e-14)

    def test_symmetric_bin_zero_mean(self):
        m, _ = truncated_moments(0.0, 0.4, -0.2, 0.2, 0.01)
        assert abs(m) < 1e-16

    def test_oracle_example(self):
        q = Quantizer(3, 0.25)
        m, v = quantized_moments(np.array([0.1 + 0.2j]), 0.5, np.array([0.125 - 0.125j]), q, 1e-2)
        assert m[0] == pytest.approx(0.1240132780361527 - 0.11218328230533134j, rel=1e-8)
        assert v[0] == pytest.approx(0.01970966462042001, rel=1e-8)

    def test_truncated_variance_of_symmetric_bin(self):
        # N(0,1) truncated to [-a, a]: 1 - 2 a phi(a) / (2 Phi(a) - 1)
        from scipy.stats import norm
        a = 0.8
        _, v = truncated_moments(0.0, 1.0, -a, a, 0.0)
        assert v == pytest.approx(1 - 2 * a * norm.pdf(a) / (2 * norm.cdf(a) - 1), rel=1e-13)

    @pytest.mark.parametrize("r,u,low,up,c2", [
        (0.3, 0.2, 0.0, 0.25, 1e-3),
        (-1.0, 0.5, 0.75, np.inf, 5e-6),
        (2.0, 0.05, -np.inf, -0.75, 1e-2),
        (0.0, 1e-4, -0.25, 0.0, 1e-6),
    ])
    def test_against_oracle(self, r, u, low, up, c2):
        m, v = truncated_moments(r, u, low, up, c2)
        mo, vo = truncated_posterior(r, u, low, up, c2)
        assert m == pytest.approx(mo, rel=1e-8, abs=1e-14)
        assert v == pytest.approx(vo, rel=1e-6)

    def test_far_tail_is_finite(self):
        # observed bin 40 prior standard deviations away
        m, v = truncated_moments(-4.0, 0.01, 0.0, 0.25, 1e-6)
        assert np.isfinite(m) and np.isfinite(v) and 0 < v < 0.01
        assert 0.0 < m < 0.25

    def test_degenerate_bin(self):
        with pytest.raises(DegenerateBinError):
            truncated_moments(0.0, 1.0, 0.5, 0.5, 0.0)

    def test_fine_bins_approach_linear_awgn(self):
        rng = np.random.default_rng(8)
        q = Quantizer(24, 1e-4)
        sigma2, v = 0.05, 0.7
        z = rng.standard_normal(200) + 1j * rng.standard_normal(200)
        r = z + np.sqrt(v / 2) * (rng.standard_normal(200) + 1j * rng.standard_normal(200))
        y_cont = z + np.sqrt(sigma2 / 2) * (rng.standard_normal(200) + 1j * rng.standard_normal(200))
        y = q.quantize(y_cont)
        m, _ = quantized_moments(r, v, y, q, sigma2)
        lin = r + v / (v + sigma2) * (y - r)
        np.testing.assert_allclose(m, lin, atol=1e-3)

    @settings(max_examples=150, deadline=None)
    @given(r=st.floats(-2, 2), u=st.floats(0.01, 2.0), b=st.integers(-3, 4), c2=st.floats(1e-4, 0.5))
    def test_variance_is_mean_sensitivity(self, r, u, b, c2):
        q = Quantizer(3, 0.25)
        low, up = q.lower_edges[b + 3], q.upper_edges[b + 3]
        h = 1e-5
        mp, _ = truncated_moments(r + h, u, low, up, c2)
        mm, _ = truncated_moments(r - h, u, low, up, c2)
        _, v = truncated_moments(r, u, low, up, c2)
        assert v / u == pytest.approx((mp - mm) / (2 * h), rel=1e-5, abs=1e-7)

    def test_denoise_wraps_moments(self):
        q = Quantizer(2)
        y = np.array([0.25 + 0.25j, -0.75 + 0.25j])
        post = quantized_denoise(GaussianMessage(np.zeros(2, complex), 1.0), y, q, 1e-3)
        _, v = quantized_moments(np.zeros(2, complex), 1.0, y, q, 1e-3)
        assert post.avg_var == pytest.approx(v.mean())


class TestExtrinsic:
    def test_gaussian_division_inverts_product(self):
        out = extrinsic(PosteriorMoments(np.array([1.0 + 0j]), 0.5), GaussianMessage(np.array([0j]), 1.0))
        assert out.mean[0] == pytest.approx(2.0) and out.var == pytest.approx(1.0)
        assert not out.clamped

    def test_hand_example(self):
        out = extrinsic(PosteriorMoments(np.array([0.8 + 0j]), 0.2), GaussianMessage(np.array([0.5 + 0j]), 0.6))
        assert out.var == pytest.approx(0.3, rel=1e-14)
        assert out.mean[0] == pytest.approx(0.95, rel=1e-14)

    def test_zero_information_is_clamped(self):
        r = np.array([0.3 - 0.1j])
        out = extrinsic(PosteriorMoments(r, 0.7), GaussianMessage(r, 0.7))
        assert out.clamped and out.var == V_MAX
        np.testing.assert_array_equal(out.mean, r)

    def test_negative_precision_is_clamped(self):
        out = extrinsic(PosteriorMoments(np.array([1j]), 0.9), GaussianMessage(np.array([0j]), 0.5))
        assert out.clamped and out.var == V_MAX

    def test_tiny_variance_is_clamped(self):
        out = extrinsic(PosteriorMoments(np.array([1.0 + 0j]), 1e-13), GaussianMessage(np.array([0j]), 1.0))
        assert out.clamped and out.var == V_MIN
        assert out.mean[0] == pytest.approx(1.0, rel=1e-9)

    @settings(max_examples=200, deadline=None)
    @given(m=st.floats(-5, 5), vp=st.floats(1e-3, 1.0), r=st.floats(-5, 5), extra=st.floats(1e-3, 10.0))
    def test_moment_matching_consistency(self, m, vp, r, extra):
        v = vp * (1.0 + extra)
        post = PosteriorMoments(np.array([m + 0j]), vp)
        msg = GaussianMessage(np.array([r + 0j]), v)
        ext = extrinsic(post, msg)
        assert not ext.clamped
        prec = 1 / ext.var + 1 / msg.var
        mean = (ext.mean / ext.var + msg.mean / msg.var) / prec
        assert 1 / prec == pytest.approx(vp, rel=1e-10)
        assert mean[0].real == pytest.approx(m, rel=1e-8, abs=1e-8)
