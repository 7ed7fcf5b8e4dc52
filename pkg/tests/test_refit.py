import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tvggm import DataError, EdgeSet, refit_mle
from tvggm.oracle import objective_likelihood

from conftest import random_psd_stack


def random_spd(rng, p):
    A = rng.normal(size=(p, 2 * p))
    return A @ A.T / (2 * p) + 0.1 * np.eye(p)


class TestEdgeSet:
    def test_normalizes_orientation(self):
        es = EdgeSet.from_pairs([(3, 1), (1, 3), (0, 2)])
        assert es.pairs == frozenset({(1, 3), (0, 2)})
        assert (3, 1) in es and (1, 3) in es
        assert len(es) == 2

    def test_rejects_self_pair(self):
        with pytest.raises(DataError):
            EdgeSet.from_pairs([(2, 2)])

    def test_rejects_negative(self):
        with pytest.raises(DataError):
            EdgeSet.from_pairs([(-1, 0)])

    def test_complete_and_empty(self):
        assert len(EdgeSet.complete(4)) == 6
        assert len(EdgeSet.empty()) == 0

    def test_sorted_iteration(self):
        es = EdgeSet.from_pairs([(2, 4), (0, 1), (1, 3)])
        assert list(es) == [(0, 1), (1, 3), (2, 4)]


class TestRefitMle:
    def test_full_support_is_inverse(self, rng):
        S = random_spd(rng, 5)
        om = refit_mle(S, EdgeSet.complete(5))
        assert np.max(np.abs(om - np.linalg.inv(S))) <= 1e-8

    def test_empty_support_is_diagonal(self, rng):
        S = random_spd(rng, 4)
        om = refit_mle(S, EdgeSet.empty())
        assert np.allclose(om, np.diag(1.0 / np.diag(S)))

    def test_chain_recovery(self, rng):
        # Build a precision matrix supported on a chain, take its exact
        # covariance, and check the refit recovers the precision matrix.
        p = 5
        omega = np.eye(p) * 2.0
        for i in range(p - 1):
            omega[i, i + 1] = omega[i + 1, i] = 0.6
        S = np.linalg.inv(omega)
        edges = EdgeSet.from_pairs([(i, i + 1) for i in range(p - 1)])
        om = refit_mle(S, edges, tol=1e-10)
        assert np.max(np.abs(om - omega)) <= 1e-6

    def test_stationarity_conditions(self, rng):
        S = random_spd(rng, 6)
        edges = EdgeSet.from_pairs([(0, 1), (1, 2), (3, 4), (0, 5)])
        tol = 1e-9
        om = refit_mle(S, edges, tol=tol)
        W = np.linalg.inv(om)
        assert np.max(np.abs(np.diag(W) - np.diag(S))) <= 1e-6
        for u, v in edges:
            assert abs(W[u, v] - S[u, v]) <= 1e-6
        # Structural zeros off the support are exact.
        mask = np.zeros((6, 6), dtype=bool)
        for u, v in edges:
            mask[u, v] = mask[v, u] = True
        np.fill_diagonal(mask, True)
        assert np.all(om[~mask] == 0.0)

    def test_out_of_range_edge(self, rng):
        with pytest.raises(DataError):
            refit_mle(random_spd(rng, 3), EdgeSet.from_pairs([(0, 7)]))

    def test_improves_on_penalized_objective(self, rng):
        # On its own support the constrained MLE has an unpenalized
        # likelihood at least as good as any other matrix with that
        # support, in particular the shrunk one.
        S = random_spd(rng, 4)[None]
        edges = EdgeSet.from_pairs([(0, 1), (2, 3)])
        om = refit_mle(S[0], edges, tol=1e-10)[None]
        shrunk = om * 0.8
        assert objective_likelihood(om, S, 0.0) <= \
            objective_likelihood(shrunk, S, 0.0) + 1e-10


@given(st.integers(0, 10_000), st.integers(2, 7), st.floats(0.1, 0.9))
@settings(max_examples=30)
def test_refit_stationarity_property(seed, p, density):
    rng = np.random.default_rng(seed)
    S = random_spd(rng, p)
    iu, ju = np.triu_indices(p, 1)
    keep = rng.random(iu.size) < density
    edges = EdgeSet.from_pairs(list(zip(iu[keep].tolist(), ju[keep].tolist())))
    om = refit_mle(S, edges, tol=1e-9)
    W = np.linalg.inv(om)
    assert np.max(np.abs(np.diag(W) - np.diag(S))) <= 1e-6
    for u, v in edges:
        assert abs(W[u, v] - S[u, v]) <= 1e-6
    assert np.linalg.eigvalsh(om)[0] > 0
