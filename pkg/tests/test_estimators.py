import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from vaultcredit import estimators as est
from vaultcredit import simkit
from vaultcredit.errors import DataError, DomainError, InsufficientData, Undefined


class TestImpact:
    def test_noiseless_recovery(self):
        fit = est.fit_impact(simkit.impact_sample(0.02, 200, 1))
        assert fit.lam["A"] == pytest.approx(0.02, abs=1e-10)

    def test_all_zero_deviations(self):
        obs = [est.ImpactObservation(i, "A", 0.1 + 0.01 * i, 0.0) for i in range(20)]
        assert est.fit_impact(obs).lam["A"] == 0.0

    def test_clr_term(self):
        fit = est.fit_impact(simkit.impact_sample(0.03, 4000, 2, beta_clr=0.5, noise=0.002), include_clr=True)
        assert 0.029 <= fit.lam["A"] <= 0.031
        assert 0.45 <= fit.beta_clr <= 0.55

    def test_too_few(self):
        with pytest.raises(InsufficientData):
            est.fit_impact(simkit.impact_sample(0.02, 7, 1))

    def test_thin_assets_pooled(self):
        obs = simkit.impact_sample(0.02, 40, 1, asset="A") + simkit.impact_sample(0.05, 3, 2, asset="B")
        fit = est.fit_impact(obs)
        assert fit.pooled == ("B",)
        assert fit.lam["A"] == pytest.approx(0.02, abs=1e-10)
        assert fit.lam["B"] == pytest.approx(0.05, abs=1e-10)

    def test_hac_matches_statsmodels(self):
        sm = pytest.importorskip("statsmodels.api")
        obs = simkit.impact_sample(0.03, 300, 5, beta_clr=0.4, noise=0.01)
        x = np.array([[o.x, o.clr] for o in obs])
        y = np.array([o.eps for o in obs])
        ours = est.fit_through_origin(x, y)
        ref = sm.OLS(y, x).fit(cov_type="HAC", cov_kwds={"maxlags": est.nw_lags(len(y)), "use_correction": False})
        assert np.allclose(ours.coef, ref.params, rtol=1e-10)
        assert np.allclose(ours.std_errors, ref.bse, rtol=1e-8)

    def test_nw_lags(self):
        assert [est.nw_lags(n) for n in (0, 1, 8, 9, 1000)] == [0, 1, 2, 3, 10]


class TestVolatility:
    def test_constant(self):
        assert est.hourly_vol(np.full(50, 3.0)) == 0.0

    def test_alternating(self):
        p = np.exp(np.cumsum([0.0] + [0.01, -0.01] * 50))
        assert est.hourly_vol(p) == pytest.approx(0.01, rel=1e-12)

    def test_gbm(self):
        assert 0.018 <= est.hourly_vol(simkit.gbm_prices(100.0, 0.02, 721, 3)) <= 0.022

    def test_single_price(self):
        with pytest.raises(InsufficientData):
            est.hourly_vol(np.array([1.0]))


class TestFalseSolvency:
    def test_one_sided_five_percent(self):
        assert est.false_solvency_prob(1.6449 * 0.01 * 2, 0.01, 4.0) == pytest.approx(0.05, abs=1e-5)

    def test_fresh_mark(self):
        assert est.false_solvency_prob(0.05, 0.01, 0.0) == 0.0

    def test_domain(self):
        with pytest.raises(DomainError):
            est.false_solvency_prob(0.0, 0.01, 1.0)

    @given(st.floats(1e-3, 0.2), st.floats(1e-4, 0.05), st.floats(0.1, 100), st.floats(1.01, 3))
    def test_monotone(self, eta, sigma, delta, k):
        p = est.false_solvency_prob(eta, sigma, delta)
        assert est.false_solvency_prob(eta, sigma, delta * k) >= p
        assert est.false_solvency_prob(eta, sigma * k, delta) >= p
        assert est.false_solvency_prob(eta * k, sigma, delta) <= p


class TestGasCorrelation:
    def test_identical(self):
        g, _ = simkit.independent_pair(500, 1)
        rho, _ = est.stress_conditional_corr(g, g)
        assert rho == pytest.approx(1.0)

    def test_independent(self):
        g, s = simkit.independent_pair(5000, 2)
        rho, n = est.stress_conditional_corr(g, s)
        assert abs(rho) < 3 / math.sqrt(n)

    def test_constant_gas(self):
        _, s = simkit.independent_pair(500, 3)
        with pytest.raises(Undefined):
            est.stress_conditional_corr(np.ones(500), s)

    def test_short(self):
        with pytest.raises(InsufficientData):
            est.stress_conditional_corr(np.ones(10), np.ones(10))


class TestUtilization:
    t = np.arange(2000)

    def test_constant(self):
        fit = est.fit_utilization_path(self.t, np.full(2000, 0.6))
        assert (fit.drift_per_hour, fit.sigma_per_sqrt_hour, fit.jump_sizes) == (0.0, 0.0, ())

    def test_linear(self):
        fit = est.fit_utilization_path(self.t, 0.1 + 0.001 * self.t)
        assert fit.drift_per_hour == pytest.approx(0.001, abs=1e-12)
        assert fit.sigma_per_sqrt_hour == pytest.approx(0.0, abs=1e-12)

    def test_planted_jumps(self):
        u = simkit.utilization_path(5000, 4, sigma=0.005, jump_rate=0.01, jump_size=-0.05)
        fit = est.fit_utilization_path(np.arange(5000), u)
        assert 0.005 <= fit.jump_rate_per_hour <= 0.02
        assert -0.07 <= float(np.mean(fit.jump_sizes)) <= -0.03
        assert fit.sigma_per_sqrt_hour <= fit.sigma_all

    def test_short(self):
        with pytest.raises(InsufficientData):
            est.fit_utilization_path(np.arange(10), np.zeros(10))


class TestDrawdowns:
    def test_monotone_decline(self):
        p = np.linspace(100.0, 90.0, 25)
        assert est.window_drawdowns(p, 24) == pytest.approx([0.10])

    def test_flat(self):
        assert np.all(est.window_drawdowns(np.full(100, 5.0), 24) == 0.0)

    def test_too_short(self):
        assert len(est.window_drawdowns(np.ones(10), 24)) == 0

    def test_world_tables(self, small_world):
        si = est.scenario_inputs(small_world.bundle, horizons=(24,))
        for a in ("BTC", "ETH"):
            q = si.drawdown[a][24]
            assert q[0.5] <= q[0.9] <= q[0.99]
        assert si.gas is not None and si.worst_case == ()


class TestClr:
    def test_identical_returns(self):
        a, _ = simkit.return_pair(1000, 1, 1.0)
        assert est.clr_from_returns([(1.0, a, a)]) == 0.0

    def test_independent(self):
        a, b = simkit.return_pair(20000, 2, 0.0)
        assert est.clr_from_returns([(1.0, a, b)]) == pytest.approx(2.0, abs=0.1)

    def test_anti_correlated(self):
        a, b = simkit.return_pair(1000, 3, -1.0)
        assert est.clr_from_returns([(1.0, a, b)]) == pytest.approx(4.0, rel=1e-9)

    def test_zero_variance(self):
        with pytest.raises(Undefined):
            est.clr_from_returns([(1.0, np.zeros(10), np.zeros(10))])


class TestYield:
    def test_pure_rate(self):
        assert est.decompose_yield({"rate": 0.05}).organic_ratio == 1.0

    def test_mixture(self):
        y = est.decompose_yield({"rate": 0.02, "emission": 0.08})
        assert y.organic_ratio == pytest.approx(0.2)
        assert y.total == pytest.approx(0.1)

    def test_basis_on_protocol_vault(self):
        with pytest.raises(DataError):
            est.decompose_yield({"rate": 0.02, "basis": 0.01})
        assert est.decompose_yield({"rate": 0.02, "basis": 0.02}, protocol_bound=False).organic_ratio == pytest.approx(0.5)

    def test_period_streams(self):
        y = est.decompose_yield({"rate": [0.01] * 10, "emission": [0.0] * 10}, horizon_days=73.0)
        assert y.organic == pytest.approx(0.5)

    def test_misaligned(self):
        with pytest.raises(DomainError):
            est.decompose_yield({"rate": [0.01] * 3, "arb": [0.0] * 4})


def test_world_lambda_near_truth(small_world):
    fit = est.estimate_lambda(small_world.bundle, window_days=60)
    truth = {a.symbol: a.impact_lambda for a in small_world.config.assets}
    assert fit.lam and fit.n_obs >= 8
    for a, lam in fit.lam.items():
        assert lam == pytest.approx(truth[a], rel=0.1)


def test_world_latency(small_world):
    lat = est.estimate_oracle_latency(small_world.bundle, "ETH")
    assert 0 <= lat.staleness_hours <= small_world.config.oracle_heartbeat_hours
    assert lat.sigma > 0
