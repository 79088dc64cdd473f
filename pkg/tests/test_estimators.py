import math

import numpy as np
import pytest

from mmdcop.copulas import TAU_BOUNDS, CopulaModel, Family
from mmdcop.errors import ConvergenceError, EstimationError, UnsupportedFamilyError
from mmdcop.estimators import (
    EstimatorConfig,
    Method,
    _stochastic_gradient,
    estimate,
    fit_cml,
    fit_itau,
    fit_mmd,
    fit_mmd_gaussian_closed,
)
from mmdcop.kernels import KernelSpec
from mmdcop.mmd import gaussian_closed_criterion
from mmdcop.pseudo import pseudo_observations

FAST = EstimatorConfig(n_iter=300, batch_size=100, seed=3)
PROBIT = KernelSpec("gaussian", "probit", 0.95)


def sample(family, tau, n, seed):
    return pseudo_observations(CopulaModel.from_tau(family, tau).sample(n, seed))


@pytest.fixture(scope="module")
def gauss1000():
    return sample("gaussian", 0.5, 1000, 21)


class TestConfig:
    def test_batch_of_one_rejected(self):
        with pytest.raises(ValueError):
            EstimatorConfig(batch_size=1)

    @pytest.mark.parametrize(
        "kw", [{"n_iter": 0}, {"averaging_window": 0.0}, {"averaging_window": 1.5}, {"eta0": 0.0}, {"init_tau": "zero"}]
    )
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            EstimatorConfig(**kw)


class TestFitMmd:
    def test_gaussian_default_settings(self, gauss1000):
        res = fit_mmd(gauss1000, "gaussian", PROBIT, EstimatorConfig(seed=1))
        assert abs(res.tau_hat - 0.5) < 0.05
        assert res.method is Method.MMD
        assert res.n_iter_used == 500

    def test_independence(self):
        res = fit_mmd(sample("gaussian", 0.0, 1000, 4), "gaussian", PROBIT, FAST)
        assert abs(res.tau_hat) < 0.05

    def test_agrees_with_closed_form(self, gauss1000):
        closed = fit_mmd_gaussian_closed(gauss1000, 0.95)
        cfg = EstimatorConfig(n_iter=1000, batch_size=200, seed=5)
        sgd = fit_mmd(gauss1000, "gaussian", PROBIT, cfg)
        assert abs(sgd.param_hat - closed.param_hat) < 0.02

    def test_seed_determinism(self, gauss1000):
        a = fit_mmd(gauss1000, "gaussian", PROBIT, FAST)
        b = fit_mmd(gauss1000, "gaussian", PROBIT, FAST)
        assert a.tau_hat == b.tau_hat

    def test_trajectory(self, gauss1000):
        from dataclasses import replace

        res = fit_mmd(gauss1000, "clayton", KernelSpec.default("id"), replace(FAST, keep_trajectory=True, n_iter=20))
        assert [t for t, _ in res.trajectory] == list(range(21))
        lo, hi = TAU_BOUNDS[Family.CLAYTON]
        assert all(lo <= tau <= hi for _, tau in res.trajectory)

    def test_fixed_start(self, gauss1000):
        from dataclasses import replace

        res = fit_mmd(gauss1000, "gaussian", PROBIT, replace(FAST, init_tau=0.0, keep_trajectory=True))
        assert res.trajectory[0] == (0, 0.0)
        assert abs(res.tau_hat - 0.5) < 0.05

    def test_marshall_olkin(self):
        s = sample("mo", 0.5, 1000, 8)
        res = fit_mmd(s, "mo", PROBIT, FAST)
        assert abs(res.tau_hat - 0.5) < 0.1

    def test_non_finite_gradient(self, gauss1000, monkeypatch):
        monkeypatch.setattr(CopulaModel, "score", lambda self, u, atoms=None: np.full(len(u), np.nan))
        with pytest.raises(ConvergenceError) as info:
            fit_mmd(gauss1000, "gaussian", PROBIT, FAST)
        assert info.value.trajectory[0][0] == 0

    def test_gradient_matches_criterion_derivative(self):
        # stochastic gradient in tau, averaged over 10^4 batches, against the
        # central difference of the exact criterion
        s = sample("gaussian", 0.4, 200, 9).data
        tau, m, reps = 0.3, 50, 10**4
        model = CopulaModel.from_tau("gaussian", tau)
        feat = PROBIT.features(s)
        rng = np.random.default_rng(0)
        g = np.array([_stochastic_gradient(model, PROBIT, feat, m, rng, None) for _ in range(reps)])
        h = 1e-5

        def crit(t):
            return gaussian_closed_criterion(math.sin(math.pi * t / 2), s, 0.95)

        fd = (crit(tau + h) - crit(tau - h)) / (2 * h)
        se = g.std() / math.sqrt(reps)
        assert abs(g.mean() - fd) < 3 * se


class TestFitClosed:
    def test_consistency(self):
        s = pseudo_observations(CopulaModel.from_param("gaussian", 0.7).sample(10**4, 2))
        assert abs(fit_mmd_gaussian_closed(s, 0.95).param_hat - 0.7) < 0.05

    def test_reflection(self, gauss1000):
        r = gauss1000.data.copy()
        r[:, 1] = 1 - r[:, 1]
        a = fit_mmd_gaussian_closed(gauss1000, 0.95).param_hat
        b = fit_mmd_gaussian_closed(r, 0.95).param_hat
        assert b == pytest.approx(-a, abs=1e-6)

    def test_is_grid_minimum(self, gauss1000):
        res = fit_mmd_gaussian_closed(gauss1000, 0.95)
        grid = np.linspace(-0.999, 0.999, 401)
        vals = [gaussian_closed_criterion(r, gauss1000, 0.95) for r in grid]
        assert res.criterion_value <= min(vals) + 1e-12


class TestFitCml:
    def test_consistency(self):
        res = fit_cml(sample("gaussian", 0.5, 10**4, 6), "gaussian")
        assert abs(res.tau_hat - 0.5) < 0.03

    def test_frank_independence(self):
        assert abs(fit_cml(sample("gaussian", 0.0, 1000, 7), "frank").tau_hat) < 0.05

    @pytest.mark.parametrize("family", list(Family))
    def test_beats_random_grid(self, family, rng):
        s = sample(family, 0.5, 500, 10)
        res = fit_cml(s, family)
        best = np.sum(res.model.log_density(s.data, s.atoms))
        assert best == pytest.approx(res.criterion_value, rel=1e-12)
        lo, hi = TAU_BOUNDS[family]
        for tau in rng.uniform(lo, hi, 100):
            m = CopulaModel.from_tau(family, tau)
            assert np.sum(m.log_density(s.data, s.atoms)) <= best + 1e-9

    def test_nowhere_finite(self, monkeypatch):
        monkeypatch.setattr(CopulaModel, "log_density", lambda self, u, atoms=None: np.full(len(u), -np.inf))
        with pytest.raises(EstimationError):
            fit_cml(sample("gaussian", 0.5, 50, 1), "gaussian")


class TestFitItau:
    def test_clipped(self):
        x = np.arange(50.0)
        for family in Family:
            res = fit_itau(pseudo_observations(np.column_stack([x, x])), family)
            assert res.tau_hat == TAU_BOUNDS[family][1]

    def test_concentration(self):
        s = pseudo_observations(CopulaModel.from_param("gaussian", math.sin(math.pi / 4)).sample(10**5, 3))
        assert abs(fit_itau(s, "gaussian").tau_hat - 0.5) < 0.01

    def test_independence(self):
        n = 2000
        res = fit_itau(sample("gaussian", 0.0, n, 12), "gaussian")
        assert abs(res.tau_hat) < 4 * math.sqrt(2 * (2 * n + 5) / (9 * n * (n - 1)))

    def test_param_consistent(self, gauss1000):
        res = fit_itau(gauss1000, "clayton")
        assert res.param_hat == pytest.approx(2 * res.tau_hat / (1 - res.tau_hat), rel=1e-14)


class TestInvariants:
    @pytest.mark.parametrize("method", list(Method))
    def test_rank_invariance(self, method, rng):
        raw = CopulaModel.from_tau("gaussian", 0.4).sample(400, 13).data
        moved = np.column_stack([np.log(raw[:, 0]) * 7.0 + 3.0, np.tan(raw[:, 1] - 0.5)])
        a = estimate(pseudo_observations(raw), "gaussian", method, PROBIT, FAST)
        b = estimate(pseudo_observations(moved), "gaussian", method, PROBIT, FAST)
        assert a.tau_hat == b.tau_hat

    @pytest.mark.parametrize("family", list(Family))
    @pytest.mark.parametrize("method", [Method.MMD, Method.CML, Method.ITAU])
    def test_sanity_at_half(self, family, method):
        s = sample(family, 0.5, 1000, 17)
        assert abs(estimate(s, family, method, PROBIT, FAST).tau_hat - 0.5) < 0.1

    def test_closed_sanity(self, gauss1000):
        assert abs(estimate(gauss1000, "gaussian", "mmd-closed").tau_hat - 0.5) < 0.1

    def test_closed_needs_gaussian(self, gauss1000):
        with pytest.raises(UnsupportedFamilyError):
            estimate(gauss1000, "clayton", "mmd-closed")
        with pytest.raises(UnsupportedFamilyError):
            estimate(gauss1000, "gaussian", "mmd-closed", KernelSpec.default("id"))

    def test_boundary_data_rejected(self):
        with pytest.raises(ValueError):
            fit_mmd(np.array([[0.0, 0.5], [0.5, 0.5]]), "gaussian")
