import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tvggm import (DataError, EdgeSet, MetricsReport, compute_metrics,
                   sample_observations, simulate_time_invariant,
                   simulate_time_varying)
from tvggm.simulate import _soft_threshold_map


class TestThresholdMap:
    def test_below_threshold_zero(self):
        assert _soft_threshold_map(np.array([0.1]))[0] == 0.0
        assert _soft_threshold_map(np.array([-0.13]))[0] == 0.0
        assert _soft_threshold_map(np.array([0.0]))[0] == 0.0

    def test_value_above(self):
        # 0.5: sign(1 - 0.56) = +1, hinge (1 - 0.28) = 0.72, 0.72 * 0.5.
        out = _soft_threshold_map(np.array([0.5]))[0]
        assert abs(out - 0.36) < 1e-12

    def test_sign_flip_band(self):
        # Between 0.14 and 0.28 the printed sign factor is negative.
        out = _soft_threshold_map(np.array([0.2]))[0]
        assert out < 0.0
        assert abs(out - (-(1 - 0.14 / 0.2) * 0.2)) < 1e-12

    def test_odd(self):
        v = np.array([0.5, -0.5])
        out = _soft_threshold_map(v)
        assert out[0] == -out[1]


class TestTimeVaryingGenerator:
    def test_edge_count_calibration_p100(self):
        counts = []
        for seed in range(1, 13):
            model = simulate_time_varying(100, seed)
            per_t = [len(model.edges(t)) for t in np.linspace(0.05, 0.95, 10)]
            counts.append(np.mean(per_t))
        mean = np.mean(counts)
        assert 0.8 * 51.6 <= mean <= 1.2 * 51.6, mean

    def test_support_varies_in_time(self):
        model = simulate_time_varying(40, seed=1)
        sets = {model.edges(t).pairs for t in np.linspace(0.0, 1.0, 9)}
        assert len(sets) > 1

    def test_omega_pd_and_symmetric(self):
        model = simulate_time_varying(20, seed=3)
        for t in (0.0, 0.3, 0.8, 1.0):
            om = model.omega(t)
            assert np.allclose(om, om.T)
            assert np.linalg.eigvalsh(om)[0] > 0

    def test_rejects_tiny_p(self):
        with pytest.raises(DataError):
            simulate_time_varying(1, seed=0)


class TestTimeInvariantGenerator:
    def test_edge_count_near_p(self):
        counts = [len(simulate_time_invariant(p=50, seed=s).edges(0.3))
                  for s in range(1, 13)]
        assert 0.7 * 50 <= np.mean(counts) <= 1.3 * 50

    def test_support_constant(self):
        model = simulate_time_invariant(15, seed=4)
        ref = model.edges(0.0).pairs
        for t in np.linspace(0.0, 1.0, 7):
            assert model.edges(t).pairs == ref

    def test_offdiagonal_entries_bounded(self):
        model = simulate_time_invariant(15, seed=4)
        for t in (0.1, 0.6):
            om = model.omega(t)
            off = om - np.diag(np.diag(om))
            assert np.max(np.abs(off)) <= 1.0 + 1e-12


class TestSampling:
    def test_row_count_and_grid(self):
        model = simulate_time_invariant(6, seed=4)
        data = sample_observations(model, 10)
        assert data.n_obs == 11
        assert np.allclose(data.grid.times, np.arange(11) / 10)

    def test_bit_identical_reproduction(self):
        model = simulate_time_varying(8, seed=5)
        a = sample_observations(model, 20)
        b = sample_observations(model, 20)
        assert np.array_equal(a.values, b.values)
        c = sample_observations(model, 20, seed=99)
        assert not np.array_equal(a.values, c.values)

    def test_monte_carlo_covariance(self):
        # Many draws at a single time: the sample covariance approaches
        # omega(t)^-1 within three standard errors entrywise.
        model = simulate_time_invariant(4, seed=4)
        t = 0.4
        cov = np.linalg.inv(model.omega(t))
        rng = np.random.default_rng(7)
        L = np.linalg.cholesky(cov)
        n = 100_000
        draws = (L @ rng.standard_normal((4, n))).T
        emp = draws.T @ draws / n
        se = np.sqrt((np.outer(np.diag(cov), np.diag(cov)) + cov ** 2) / n)
        assert np.all(np.abs(emp - cov) <= 3.5 * se)


class TestMetrics:
    def test_fdr_and_power_example(self):
        # Truth {01, 12, 23, 34}; estimate finds 3 of them plus 2 wrong:
        # precision 3/5, recall 3/4.
        truth_set = EdgeSet.from_pairs([(0, 1), (1, 2), (2, 3), (3, 4)])

        class Fake:
            p = 6
            kind = "time_invariant"

            def edges(self, t):
                return truth_set

            def omega(self, t):
                return np.eye(6)

        found = EdgeSet.from_pairs([(0, 1), (1, 2), (2, 3), (0, 5), (1, 4)])
        rep = compute_metrics(Fake(), [(found, np.eye(6))], [0.5])
        assert abs(rep.fdr - 0.4) < 1e-12
        assert abs(rep.power - 0.75) < 1e-12

    def test_perfect_estimate(self):
        model = simulate_time_invariant(8, seed=4)
        t = 0.3
        rep = compute_metrics(model, [(model.edges(t), model.omega(t))], [t])
        assert rep.fdr == 0.0 and rep.power == 1.0
        assert rep.f1 == 1.0
        assert rep.kl <= 1e-10
        assert rep.n_empty_estimates == 0

    def test_empty_estimate_flagged(self):
        model = simulate_time_invariant(8, seed=4)
        t = 0.3
        om = np.diag(np.diag(model.omega(t)))
        rep = compute_metrics(model, [(EdgeSet.empty(), om)], [t])
        assert rep.fdr == 0.0
        assert rep.power == 0.0
        assert rep.f1 == 0.0
        assert rep.n_empty_estimates == 1

    def test_disjoint_estimate_zero_f1(self):
        truth_set = EdgeSet.from_pairs([(0, 1)])

        class Fake:
            p = 4
            kind = "time_invariant"

            def edges(self, t):
                return truth_set

            def omega(self, t):
                return np.eye(4)

        rep = compute_metrics(Fake(), [(EdgeSet.from_pairs([(2, 3)]),
                                        np.eye(4))], [0.5])
        assert rep.fdr == 1.0 and rep.power == 0.0 and rep.f1 == 0.0

    def test_kl_nonnegative_property(self):
        model = simulate_time_invariant(6, seed=4)
        rng = np.random.default_rng(11)
        for _ in range(10):
            A = rng.normal(size=(6, 12))
            om_hat = A @ A.T / 12 + 0.5 * np.eye(6)
            rep = compute_metrics(model, [(EdgeSet.empty(), om_hat)], [0.4])
            assert rep.kl >= 0.0

    def test_time_permutation_invariance(self):
        model = simulate_time_invariant(8, seed=4)
        ts = [0.2, 0.5, 0.8]
        ests = [(model.edges(t), model.omega(t) * 1.1) for t in ts]
        a = compute_metrics(model, ests, ts)
        b = compute_metrics(model, list(reversed(ests)), list(reversed(ts)))
        assert abs(a.kl - b.kl) < 1e-12
        assert a.fdr == b.fdr and a.power == b.power

    def test_report_validation(self):
        with pytest.raises(DataError):
            MetricsReport(fdr=1.5, power=0.5, f1=0.5, kl=0.0)
        with pytest.raises(DataError):
            MetricsReport(fdr=0.1, power=0.5, f1=0.5, kl=-1.0)
