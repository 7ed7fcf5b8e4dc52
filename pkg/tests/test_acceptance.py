"""End-to-end acceptance checks, one test per contract item.

These run the full protocol at reduced scale and are slower than the unit
tests; the benchmark ordering checks use four worker processes.
"""

import csv
import json
import time

import numpy as np
import pytest

from tvggm import (AdmmSettings, EdgeSet, FitConfig, KernelSpec,
                   admm_likelihood, admm_pseudo, build_neighborhood,
                   cholesky_delete, connected_components, cv_vote,
                   fit_path, kkt_residual, make_folds, refit_mle,
                   sample_observations, screen_adjacency,
                   simulate_time_invariant, simulate_time_varying,
                   smoothed_covariances, solve_blockwise,
                   validation_bandwidth)
from tvggm.cli import _sha256, main, run_bench
from tvggm.oracle import (objective_likelihood, objective_pseudo,
                          oracle_solve)

import scipy.linalg

TIGHT = AdmmSettings(eps_abs=1e-10, eps_rel=1e-9, max_iter=100_000)


def random_instance(rng):
    p = int(rng.integers(2, 6))
    T = int(rng.integers(1, 4))
    out = np.empty((T, p, p))
    for t in range(T):
        A = rng.normal(size=(p, 2 * p))
        out[t] = A @ A.T / (2 * p)
    return out


def test_criterion_1_likelihood_oracle_equivalence():
    rng = np.random.default_rng(101)
    t0 = time.perf_counter()
    for trial in range(20):
        S = random_instance(rng)
        lam = (0.1, 0.3)[trial % 2]
        sol = admm_likelihood(S, lam, settings=TIGHT)
        admm_obj = objective_likelihood(sol.matrices, S, lam)
        _, oracle_obj = oracle_solve(S, lam, "likelihood")
        assert abs(admm_obj - oracle_obj) <= 1e-6 * max(1.0, abs(oracle_obj))
        assert kkt_residual(sol, S, lam) <= 1e-4
    assert time.perf_counter() - t0 < 30.0


def _pseudo_kkt(beta, S, lam):
    """Subgradient residual of the paired-group objective at beta."""
    T, p, _ = S.shape
    G = (beta @ S - S) / np.sqrt(T)
    sq = (beta ** 2).sum(axis=0)
    gnorm = np.sqrt(sq + sq.T)
    gsq = (G ** 2).sum(axis=0)
    gG = np.sqrt(gsq + gsq.T)
    worst = 0.0
    for u in range(p):
        for v in range(u + 1, p):
            if gnorm[u, v] > 0:
                r = np.sqrt(sum(
                    (G[t, a, b] + lam * beta[t, a, b] / gnorm[u, v]) ** 2
                    for t in range(T) for a, b in ((u, v), (v, u))))
            else:
                r = max(0.0, gG[u, v] - lam)
            worst = max(worst, r)
    return worst


def test_criterion_2_pseudo_oracle_equivalence():
    rng = np.random.default_rng(202)
    t0 = time.perf_counter()
    for trial in range(20):
        S = random_instance(rng)
        lam = (0.1, 0.3)[trial % 2]
        coeffs, edges = admm_pseudo(S, lam, settings=TIGHT)
        admm_obj = objective_pseudo(coeffs.beta, S, lam)
        _, oracle_obj = oracle_solve(S, lam, "pseudo")
        assert abs(admm_obj - oracle_obj) <= 1e-6 * max(1.0, abs(oracle_obj))
        assert _pseudo_kkt(coeffs.beta, S, lam) <= 1e-4
        # Paired symmetry: both orientations vanish together, exactly.
        sq = (coeffs.beta ** 2).sum(axis=0)
        p = S.shape[1]
        for u in range(p):
            for v in range(u + 1, p):
                assert (sq[u, v] == 0.0) == (sq[v, u] == 0.0)
                assert ((u, v) in edges) == (sq[u, v] + sq[v, u] > 0.0)
    assert time.perf_counter() - t0 < 30.0


def test_criterion_3_screening_exactness():
    rng = np.random.default_rng(303)
    t0 = time.perf_counter()
    done = 0
    while done < 20:
        p = int(rng.integers(8, 11))
        T = int(rng.integers(1, 3))
        # Two planted diagonal blocks with weak cross-terms give a
        # screening split at moderate lam.
        half = p // 2
        S = np.zeros((T, p, p))
        for t in range(T):
            A = rng.normal(size=(half, 2 * p))
            B = rng.normal(size=(p - half, 2 * p))
            S[t, :half, :half] = A @ A.T / (2 * p)
            S[t, half:, half:] = B @ B.T / (2 * p)
            cross = rng.normal(size=(half, p - half)) * 0.02
            S[t, :half, half:] = cross
            S[t, half:, :half] = cross.T
        lam = 0.15
        parts = connected_components(screen_adjacency(S, lam))
        if len(parts.blocks) < 2:
            continue
        done += 1
        block = solve_blockwise(S, lam, settings=TIGHT)
        full = admm_likelihood(S, lam, settings=TIGHT)
        assert np.max(np.abs(block.matrices - full.matrices)) <= 1e-6
        # Above the global screening bound the solution is diagonal.
        bound = np.sqrt(np.max(
            [(S ** 2).mean(axis=0)[np.triu_indices(p, 1)]]))
        sol = solve_blockwise(S, bound * 1.0001, settings=TIGHT)
        offdiag = sol.matrices.copy()
        for t in range(offdiag.shape[0]):
            np.fill_diagonal(offdiag[t], 0.0)
        assert np.all(offdiag == 0.0)
    assert time.perf_counter() - t0 < 60.0


def test_criterion_4_degenerate_special_cases():
    model = simulate_time_invariant(6, seed=4)
    data = sample_observations(model, 80)
    spec = KernelSpec(bandwidth=0.3)

    # d=0: the fit at one time equals the single-time solve.
    tk, lam = 0.5, 0.25
    cfg = FitConfig(method="kernel", solver="likelihood", kernel=spec,
                    lam=lam, fit_times=(tk,), admm=TIGHT)
    path = fit_path(data, cfg)
    nbhd = build_neighborhood(tk, 0.0, data.grid)
    assert nbhd.size == 1
    covs = smoothed_covariances(data, nbhd, spec)
    sol = admm_likelihood(covs.matrices, lam, TIGHT)
    om_direct = refit_mle(covs.matrices[0], EdgeSet(sol.support))
    assert path.edge_sets[0].pairs == set(sol.support)
    assert np.max(np.abs(path.precisions[0] - om_direct)) <= 1e-8

    # Full window: one edge set shared by every fit time.
    varying = simulate_time_varying(8, seed=1)
    vdata = sample_observations(varying, 120)
    cfg = FitConfig(method="invar", kernel=spec, lam=0.25,
                    fit_times=(0.1, 0.3, 0.5, 0.7, 0.9))
    path = fit_path(vdata, cfg)
    ref = path.edge_sets[0].pairs
    for es in path.edge_sets[1:]:
        assert es.pairs == ref


def test_criterion_5_cholesky_deletion():
    rng = np.random.default_rng(505)
    for _ in range(100):
        p = int(rng.integers(2, 51))
        A = rng.normal(size=(p, p))
        A = A @ A.T + p * np.eye(p)
        U = scipy.linalg.cholesky(A)
        j = int(rng.integers(0, p))
        keep = np.delete(np.arange(p), j)
        direct = scipy.linalg.cholesky(A[np.ix_(keep, keep)])
        out = cholesky_delete(U, j)
        assert np.max(np.abs(np.abs(out) - np.abs(direct))) <= 1e-10


def test_criterion_6_refit_contract():
    rng = np.random.default_rng(606)
    A = rng.normal(size=(7, 14))
    S = A @ A.T / 14 + 0.1 * np.eye(7)

    om_full = refit_mle(S, EdgeSet.complete(7))
    assert np.max(np.abs(om_full - np.linalg.inv(S))) <= 1e-8

    edges = EdgeSet.from_pairs([(0, 1), (1, 2), (2, 5), (3, 6)])
    om = refit_mle(S, edges, tol=1e-9)
    W = np.linalg.inv(om)
    assert np.max(np.abs(np.diag(W) - np.diag(S))) <= 1e-6
    for u, v in edges:
        assert abs(W[u, v] - S[u, v]) <= 1e-6


def _median(rows, method, field):
    return float(np.median([r[field] for r in rows
                            if r["method"] == method]))


def test_criterion_7_benchmark_ordering():
    seeds = list(range(1, 11))
    t0 = time.perf_counter()
    tv = run_bench("time_varying", 30, 300, seeds,
                   ["loggle", "kernel", "invar"], threads=4)
    ti = run_bench("time_invariant", 30, 300, seeds,
                   ["loggle", "kernel", "invar"], threads=4)
    elapsed = time.perf_counter() - t0

    # (a) time-varying: loggle beats the shared-support method and at
    # least matches the width-0 method.
    assert _median(tv, "loggle", "f1") > _median(tv, "invar", "f1")
    assert _median(tv, "loggle", "f1") >= _median(tv, "kernel", "f1")
    # (b) time-invariant: loggle within 10% of the shared-support method
    # and ahead of the width-0 method.
    assert _median(ti, "loggle", "f1") >= 0.9 * _median(ti, "invar", "f1")
    assert _median(ti, "loggle", "f1") > _median(ti, "kernel", "f1")
    # (c) divergence on the time-varying models.
    assert _median(tv, "loggle", "kl") <= _median(tv, "kernel", "kl")
    assert elapsed < 15 * 60.0


def test_criterion_8_generator_fidelity():
    counts = []
    for seed in range(1, 13):
        model = simulate_time_varying(100, seed)
        per_t = [len(model.edges(t)) for t in np.linspace(0.05, 0.95, 10)]
        counts.append(float(np.mean(per_t)))
    mean = float(np.mean(counts))
    assert 0.8 * 51.6 <= mean <= 1.2 * 51.6, mean

    ti_counts = [len(simulate_time_invariant(100, s).edges(0.5))
                 for s in range(1, 13)]
    ti_mean = float(np.mean(ti_counts))
    assert 0.7 * 100 <= ti_mean <= 1.3 * 100, ti_mean


def test_criterion_9_cv_mechanics():
    folds = make_folds(12, 5)
    assert folds[0][0].tolist() == [0, 5, 10]
    assert folds[0][1].tolist() == [1, 2, 3, 4, 6, 7, 8, 9, 11]

    assert abs(validation_bandwidth(0.1, 5) - 0.13195079107728942) < 1e-12

    rng = np.random.default_rng(909)
    for _ in range(1000):
        V = int(rng.integers(2, 7))
        sets = []
        iu, ju = np.triu_indices(6, 1)
        for _ in range(V):
            keep = rng.random(iu.size) < 0.35
            sets.append(EdgeSet.from_pairs(
                list(zip(iu[keep].tolist(), ju[keep].tolist()))))
        lo, hi = sorted(rng.uniform(0.0, 1.0, size=2))
        assert cv_vote(sets, hi).pairs <= cv_vote(sets, lo).pairs


def test_criterion_10_bench_determinism(tmp_path, monkeypatch):
    monkeypatch.setenv("TVGGM_DETERMINISTIC", "1")
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({
        "bench": {"kind": "time_invariant", "p": 10, "N": 80,
                  "seeds": [3, 4], "methods": ["kernel", "invar"]},
        "tune": {"h_grid": [0.3], "d_grid": [0.0, 1.0],
                 "lambda_grid": [0.4, 0.25], "V": 3},
    }))
    digests = []
    for name in ("run1", "run2"):
        out = tmp_path / name
        assert main(["bench", "--config", str(cfg),
                     "--output-dir", str(out)]) == 0
        digests.append(_sha256(out / "metrics.csv"))
    assert digests[0] == digests[1]
