"""Special functions: oracle checks against quadrature, Monte Carlo moments
and library implementations."""

import math

import numpy as np
import pytest
import scipy.integrate
import scipy.special
from hypothesis import given, settings
from hypothesis import strategies as st

from fbmruin.special import (
    SeriesTolerance,
    beta_fn,
    c_p,
    gamma_fn,
    gamma_p,
    mu_p,
    rho_H,
    v1_squared,
)


class TestGamma:
    def test_integer_and_half_values(self):
        assert gamma_fn(1.0) == pytest.approx(1.0, rel=1e-14)
        assert gamma_fn(0.5) == pytest.approx(math.sqrt(math.pi), rel=1e-13)

    def test_gamma_2p5_vs_quadrature(self):
        # direct numerical quadrature of the defining integral
        val, err = scipy.integrate.quad(lambda t: t**1.5 * math.exp(-t), 0, 80)
        assert err < 1e-10
        assert gamma_fn(2.5) == pytest.approx(val, rel=1e-9)
        assert gamma_fn(2.5) == pytest.approx(3 * math.sqrt(math.pi) / 4, rel=1e-13)

    def test_accuracy_against_scipy(self):
        xs = np.concatenate([np.geomspace(1e-3, 0.5, 60), np.linspace(0.5, 170, 500)])
        rel = [abs(gamma_fn(x) - scipy.special.gamma(x)) / scipy.special.gamma(x) for x in xs]
        assert max(rel) < 1e-12

    @settings(max_examples=200, deadline=None)
    @given(st.floats(min_value=0.1, max_value=50.0))
    def test_recurrence(self, x):
        assert gamma_fn(x + 1.0) == pytest.approx(x * gamma_fn(x), rel=1e-12)

    @pytest.mark.parametrize("bad", [0.0, -1.0, float("nan"), float("inf")])
    def test_domain(self, bad):
        with pytest.raises(ValueError):
            gamma_fn(bad)


class TestBeta:
    def test_known_values(self):
        assert beta_fn(1.0, 1.0) == pytest.approx(1.0, rel=1e-14)
        assert beta_fn(0.5, 0.5) == pytest.approx(math.pi, rel=1e-13)

    def test_vs_quadrature(self):
        val, err = scipy.integrate.quad(lambda t: t**-0.8 * (1 - t) ** 0.3, 0, 1)
        assert beta_fn(0.2, 1.3) == pytest.approx(val, rel=1e-7)

    def test_domain(self):
        with pytest.raises(ValueError):
            beta_fn(-0.1, 1.0)
        with pytest.raises(ValueError):
            beta_fn(1.0, 0.0)


class TestCp:
    def test_exact_values(self):
        assert c_p(2.0) == pytest.approx(1.0, rel=1e-13)
        assert c_p(4.0) == pytest.approx(3.0, rel=1e-13)

    def test_vs_mc_moment(self, rng):
        z = rng.standard_normal(10_000_000)
        mc = np.mean(np.abs(z) ** 3)
        se = np.std(np.abs(z) ** 3) / math.sqrt(len(z))
        assert abs(c_p(3.0) - mc) < 4 * se
        assert c_p(3.0) == pytest.approx(2 * math.sqrt(2 / math.pi), rel=1e-13)

    def test_domain(self):
        with pytest.raises(ValueError):
            c_p(1.0)
        with pytest.raises(ValueError):
            c_p(0.5)


class TestMuP:
    def test_p2_exact(self):
        assert mu_p(2.0) == pytest.approx(2.0, rel=1e-13)

    def test_vs_mc_variance(self, rng):
        z = rng.standard_normal(5_000_000)
        for p in (2.0, 3.0):
            sample = np.abs(z) ** p
            mc = float(np.var(sample))
            # var-of-variance standard error
            se = math.sqrt(np.var((sample - sample.mean()) ** 2) / len(z))
            assert abs(mu_p(p) - mc) < 5 * se

    def test_domain(self):
        with pytest.raises(ValueError):
            mu_p(0.9)


class TestGammaP:
    def test_at_zero_only_k0_survives(self):
        for p in (1.5, 2.0, 3.3):
            expected = 2.0**p * gamma_fn((p + 1) / 2) ** 2 / math.pi
            assert gamma_p(p, 0.0).value == pytest.approx(expected, rel=1e-13)
        assert gamma_p(2.0, 0.0).value == pytest.approx(1.0, rel=1e-13)

    def test_p2_closed_form(self):
        # the implemented series sums to (1+2x^2)/(1-x^2) at p=2
        # (Euler transform of the hypergeometric with the printed prefactor)
        for x in (0.1, 0.3, 0.5, 0.8):
            assert gamma_p(2.0, x).value == pytest.approx(
                (1 + 2 * x**2) / (1 - x**2), rel=1e-10
            )

    def test_differs_from_product_moment(self, rng):
        """The implemented prefactor (1-x^2)^{(p+1)/2} does NOT reproduce
        E[|Z1|^p |Z2|^p]: at p=2, x=0.5 the moment is 1.5 (Isserlis) while the
        series gives 2.0.  Recorded on purpose; see the module docstring."""
        x = 0.5
        z1 = rng.standard_normal(2_000_000)
        z2 = x * z1 + math.sqrt(1 - x**2) * rng.standard_normal(2_000_000)
        mc = float(np.mean(z1**2 * z2**2))
        se = float(np.std(z1**2 * z2**2) / math.sqrt(len(z1)))
        assert abs(mc - 1.5) < 5 * se  # the moment really is 1.5
        assert gamma_p(2.0, x).value == pytest.approx(2.0, rel=1e-10)  # series is not

    @settings(max_examples=100, deadline=None)
    @given(
        st.floats(min_value=1.1, max_value=5.0),
        st.floats(min_value=0.0, max_value=0.95),
    )
    def test_even_and_positive(self, p, x):
        a = gamma_p(p, x).value
        assert a > 0.0
        assert gamma_p(p, -x).value == pytest.approx(a, rel=1e-14)

    def test_domain_and_truncation_flag(self):
        with pytest.raises(ValueError):
            gamma_p(2.0, 1.0)
        with pytest.raises(ValueError):
            gamma_p(2.0, -1.2)
        res = gamma_p(2.0, 0.9, SeriesTolerance(abs_tol=1e-15, max_terms=5))
        assert not res.converged
        assert res.terms_used == 5
        res2 = gamma_p(2.0, 0.5, SeriesTolerance(abs_tol=1e-12, max_terms=100_000))
        assert res2.converged


class TestRhoH:
    def test_lag_zero_is_one(self):
        for H in (0.1, 0.5, 0.6, 0.9):
            assert rho_H(0, H) == 1.0

    def test_brownian_increments_uncorrelated(self):
        assert all(rho_H(j, 0.5) == 0.0 for j in range(1, 50))

    def test_lag1_H075(self):
        assert rho_H(1, 0.75) == pytest.approx(0.5 * (2**1.5 - 2), rel=1e-14)
        assert rho_H(1, 0.75) == pytest.approx(math.sqrt(2) - 1, rel=1e-14)

    def test_decays_to_zero(self):
        vals = np.abs(np.asarray(rho_H(np.arange(1, 2000), 0.7)))
        assert vals[-1] < 1e-3
        assert np.all(np.diff(vals) < 1e-15)  # |rho| nonincreasing

    def test_domain(self):
        with pytest.raises(ValueError):
            rho_H(-1, 0.6)
        with pytest.raises(ValueError):
            rho_H(1, 1.2)


class TestV1Squared:
    def test_reduces_to_mu_p_at_half_exactly(self):
        for p in (1.5, 2.0, 3.0):
            res = v1_squared(p, 0.5)
            assert res.value == mu_p(p)
            assert res.converged

    def test_stable_under_max_terms_doubling(self):
        a = v1_squared(2.0, 0.6, SeriesTolerance(1e-12, 10_000)).value
        b = v1_squared(2.0, 0.6, SeriesTolerance(1e-12, 20_000)).value
        assert abs(a - b) / b < 1e-3

    def test_monotone_in_max_terms(self):
        # partial sums increase with the truncation horizon (positive terms)
        vals = [
            v1_squared(2.0, 0.65, SeriesTolerance(1e-12, mt)).value
            for mt in (100, 1_000, 10_000)
        ]
        assert vals[0] < vals[1] < vals[2]

    def test_positive(self):
        for p, H in ((1.5, 0.55), (2.0, 0.6), (3.0, 0.7)):
            assert v1_squared(p, H).value > 0.0

    def test_domain(self):
        with pytest.raises(ValueError):
            v1_squared(2.0, 0.75)
        with pytest.raises(ValueError):
            v1_squared(2.0, 0.8)

    @pytest.mark.slow
    def test_vs_simulated_quadratic_variation(self):
        """v1^2 should match the variance of the normalised quadratic
        variation of simulated fBm.  The implemented series (printed
        prefactor) overshoots the product-moment version by ~4% at H=0.6,
        which is inside this oracle's resolution at 500 paths."""
        from fbmruin.estimation import power_variation
        from fbmruin.fbm import GridFunction, TimeGrid, sample_fbm
        from fbmruin.special import c_p as cp_fn

        H, p, n, m = 0.6, 2.0, 4096, 500
        grid = TimeGrid(1.0, n)
        stats = np.empty(m)
        for k in range(m):
            path = sample_fbm(grid, H, 31415, index=k)
            V = power_variation(GridFunction(grid, path.w), p).V
            stats[k] = math.sqrt(n) * (V / (cp_fn(p) * n ** (1 - p * H)) - 1.0)
        sim = float(np.var(stats, ddof=1))
        ref = v1_squared(p, H).value / cp_fn(p) ** 2
        # relative sampling error of a variance at m=500 is ~ sqrt(2/m) ~ 6.3%
        assert abs(sim - ref) / ref < 0.25
