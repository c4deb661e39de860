"""Acceptance suite: one test per release criterion.

Each test prints a single PASS line with its measured quantities so the
suite output doubles as a release report. Tolerances are pinned here and
only here.
"""

import json
import math
import time

import numpy as np
import pytest

from mwclust.clusters import ClusterScheme, WeightedSample, build_index
from mwclust.dgp import DgpSpec, structure, true_bias_term
from mwclust.diagnostics import assumption_ratios, leverage_L
from mwclust.harness import run_consistency, run_coverage
from mwclust.regression import RegressionData, stochastic_design_inference, theta_inference
from mwclust.stein import wasserstein_bound
from mwclust.variance import cgm_raw


def report(name, elapsed, detail):
    print(f"PASS {name}: {detail} [{elapsed:.2f}s]")


def naive_cgm(W, omega, g, h):
    n, K = W.shape
    Q = np.zeros((K, K))
    V = omega[:, None] * W
    A = (g[:, None] == g[None, :]) | (h[:, None] == h[None, :])
    for i in range(n):
        Q += np.outer(V[i], V[A[i]].sum(axis=0))
    return Q


def test_criterion_1_alternating_triple_bias_exact():
    t0 = time.time()
    _, two_way = structure(DgpSpec(variant="nonzero-mean-triple", M=1))
    _, one_way = structure(
        DgpSpec(variant="nonzero-mean-triple", M=1, triple_one_way=True)
    )
    bias_two = true_bias_term(two_way)
    bias_one = true_bias_term(one_way)
    assert bias_two == -1.0
    assert bias_one == 1.0
    elapsed = time.time() - t0
    assert elapsed < 1.0
    report("criterion-1 triple bias", elapsed, f"two-way={bias_two}, one-way={bias_one}")


def test_criterion_2_three_way_estimator_agreement():
    t0 = time.time()
    rng = np.random.default_rng(20)
    worst = 0.0
    for _ in range(500):
        n = int(rng.integers(2, 301))
        K = int(rng.integers(1, 5))
        g = rng.integers(0, max(2, n // 5), n)
        h = rng.integers(0, max(2, n // 4), n)
        W = rng.normal(size=(n, K)) * rng.uniform(0.1, 10)
        omega = rng.uniform(0.1, 3.0, n)
        sample = WeightedSample(W=W, omega=omega)
        index = build_index(ClusterScheme.from_labels(g, h))
        q_pair = cgm_raw(sample, index, method="pair-enum").Q_hat
        q_ie = cgm_raw(sample, index, method="inclusion-exclusion").Q_hat
        q_naive = naive_cgm(W, omega, g, h)
        q_naive = 0.5 * (q_naive + q_naive.T)
        scale = max(np.linalg.norm(q_naive), 1e-300)
        worst = max(
            worst,
            np.linalg.norm(q_pair - q_naive) / scale,
            np.linalg.norm(q_ie - q_naive) / scale,
            np.linalg.norm(q_pair - q_ie) / scale,
        )
    assert worst <= 1e-10
    elapsed = time.time() - t0
    assert elapsed < 30.0
    report("criterion-2 estimator agreement", elapsed, f"500 instances, worst rel err {worst:.2e}")


def test_criterion_3_sandwich_reductions():
    t0 = time.time()
    rng = np.random.default_rng(30)
    worst_hc0 = worst_oneway = 0.0
    for _ in range(50):
        n = int(rng.integers(20, 120))
        D = rng.normal(size=n)
        ctrl = np.column_stack([np.ones(n), rng.normal(size=n)])
        Y = D + ctrl @ np.array([0.5, -1.0]) + rng.normal(size=n)

        def v_hat(g, h):
            data = RegressionData(
                Y=Y, D=D, controls=ctrl, scheme=ClusterScheme.from_labels(g, h)
            )
            return data, stochastic_design_inference(data, build_index(data.scheme))

        # independently coded oracles
        data, res = v_hat(np.arange(n), np.arange(n))
        X = data.X
        XtX_inv = np.linalg.inv(X.T @ X)
        beta = XtX_inv @ X.T @ Y
        u = Y - X @ beta
        hc0 = XtX_inv @ ((X * u[:, None]).T @ (X * u[:, None])) @ XtX_inv
        worst_hc0 = max(worst_hc0, np.abs(res.V_hat - hc0).max() / np.abs(hc0).max())

        g = rng.integers(0, 7, n)
        data, res = v_hat(g, np.arange(n))
        meat = np.zeros((3, 3))
        for c in np.unique(g):
            s = (X[g == c] * u[g == c, None]).sum(axis=0)
            meat += np.outer(s, s)
        oneway = XtX_inv @ meat @ XtX_inv
        worst_oneway = max(
            worst_oneway, np.abs(res.V_hat - oneway).max() / np.abs(oneway).max()
        )
    assert worst_hc0 <= 1e-10
    assert worst_oneway <= 1e-10
    elapsed = time.time() - t0
    assert elapsed < 10.0
    report(
        "criterion-3 sandwich reductions",
        elapsed,
        f"HC0 worst {worst_hc0:.2e}, one-way worst {worst_oneway:.2e}",
    )


def test_criterion_4_partialling_out_identities():
    t0 = time.time()
    rng = np.random.default_rng(40)
    worst_theta = worst_var = 0.0
    for _ in range(200):
        n = int(rng.integers(15, 120))
        p = int(rng.integers(0, 4))
        g = rng.integers(0, max(2, n // 6), n)
        h = rng.integers(0, max(2, n // 4), n)
        ctrl = np.column_stack([np.ones(n)] + [rng.normal(size=n) for _ in range(p)])
        D = rng.normal(size=n)
        Y = rng.uniform(-2, 2) * D + ctrl @ rng.normal(size=p + 1) + rng.normal(size=n)
        data = RegressionData(
            Y=Y, D=D, controls=ctrl, scheme=ClusterScheme.from_labels(g, h)
        )
        index = build_index(data.scheme)
        res = theta_inference(data, index)  # asserts the variance-path identity
        beta_long = np.linalg.lstsq(data.X, Y, rcond=None)[0]
        worst_theta = max(
            worst_theta,
            abs(res.theta_hat - beta_long[0]) / max(abs(beta_long[0]), 1e-12),
        )
        worst_var = max(
            worst_var,
            abs(res.V_hat[0, 0] - res.sigma_sq) / max(abs(res.sigma_sq), 1e-300),
        )
    assert worst_theta <= 1e-8
    assert worst_var <= 1e-8
    elapsed = time.time() - t0
    assert elapsed < 30.0
    report(
        "criterion-4 partialling-out identities",
        elapsed,
        f"200 regressions, slope worst {worst_theta:.2e}, variance-path worst {worst_var:.2e}",
    )


def test_criterion_5_coverage_heteroskedastic_grid():
    t0 = time.time()
    spec = DgpSpec(
        variant="additive-re",
        M=20,
        hetero_alpha=True,
        hetero_gamma=True,
        hetero_eps=True,
    )
    rep = run_coverage(spec, target="mean", reps=2000, seed=0)
    assert 0.93 <= rep.coverage_95 <= 0.97
    elapsed = time.time() - t0
    assert elapsed < 180.0
    report(
        "criterion-5 coverage",
        elapsed,
        f"coverage_95={rep.coverage_95:.4f} (band [0.93, 0.97]), "
        f"negative-variance reps={rep.rejection_flags}",
    )


def test_criterion_6_variance_ratio_consistency_sweep():
    t0 = time.time()
    rep = run_consistency(DgpSpec(variant="additive-re"), [5, 10, 20, 40], reps=500, seed=0)
    errs = [abs(row["mean_var_ratio"] - 1.0) for row in rep.trace]
    ses = [row["mc_se"] for row in rep.trace]
    for k in range(1, 4):
        assert errs[k] <= errs[k - 1] + 2 * math.hypot(ses[k], ses[k - 1])
    assert errs[-1] < 0.1
    elapsed = time.time() - t0
    assert elapsed < 180.0
    report(
        "criterion-6 consistency sweep",
        elapsed,
        "ratio errors " + ", ".join(f"M={r['M']}: {e:.4f}" for r, e in zip(rep.trace, errs)),
    )


def test_criterion_7_violation_detection():
    t0 = time.time()
    chaos = run_coverage(
        DgpSpec(variant="interactive-chaos", M=20), target="mean", reps=2000, seed=0
    )
    additive = run_coverage(
        DgpSpec(variant="additive-re", M=20), target="mean", reps=2000, seed=0
    )
    assert chaos.ks_pivot > 0.05
    assert chaos.ks_pivot >= 3.0 * additive.ks_pivot
    scheme, oracle = structure(DgpSpec(variant="interactive-chaos", M=20))
    diag = assumption_ratios(
        build_index(scheme), np.ones(scheme.n), oracle.true_Q, dependent=oracle.dependent
    )
    assert diag.ratio_23_upper["G"] == 20.0
    assert diag.ratio_23_upper["H"] == 20.0
    elapsed = time.time() - t0
    assert elapsed < 120.0
    report(
        "criterion-7 violation detection",
        elapsed,
        f"chaos KS={chaos.ks_pivot:.4f} vs additive KS={additive.ks_pivot:.4f} "
        f"({chaos.ks_pivot / additive.ks_pivot:.1f}x), ratio=20 exact",
    )


def test_criterion_8_normal_approximation_bound():
    t0 = time.time()
    ks_err = 0.5 / math.sqrt(10_000)
    prev_dw = math.inf
    details = []
    for M in (8, 16, 32):
        spec = DgpSpec(variant="additive-re", M=M)
        bound = wasserstein_bound(spec, method="analytic")
        assert bound.term_third == 0.0
        cov = run_coverage(spec, target="mean", reps=10_000, seed=0)
        assert cov.ks_pivot <= bound.d_K_bound + 3 * ks_err
        assert bound.d_W_bound < prev_dw
        prev_dw = bound.d_W_bound
        details.append(f"M={M}: KS={cov.ks_pivot:.4f} <= d_K={bound.d_K_bound:.4f}")
    elapsed = time.time() - t0
    assert elapsed < 180.0
    report("criterion-8 normal-approximation bound", elapsed, "; ".join(details))


def test_criterion_9_leverage_exact_values():
    t0 = time.time()
    singles = build_index(ClusterScheme.from_labels(np.arange(30), np.arange(30)))
    L = leverage_L(singles, np.ones(30))
    assert L["G"] == 1.0 / 30.0
    assert L["H"] == 1.0 / 30.0
    lumped = build_index(ClusterScheme.from_labels(np.zeros(12), np.arange(12)))
    assert leverage_L(lumped, np.ones(12))["G"] == 1.0
    elapsed = time.time() - t0
    assert elapsed < 1.0
    report("criterion-9 leverage", elapsed, "singletons 1/30 exact, single cluster 1")


def test_criterion_10_cli_round_trip_and_determinism(tmp_path):
    t0 = time.time()
    from mwclust.cli import main

    csv_path = tmp_path / "rep0.csv"
    cfg = tmp_path / "cfg.json"
    cfg.write_text(
        json.dumps(
            {
                "dgp": {"variant": "additive-re", "M": 6},
                "mode": "coverage",
                "target": "regression-theta",
                "reps": 20,
                "seed": 11,
                "write_data": str(csv_path),
            }
        )
    )
    sim_outs = []
    for k in range(2):
        out = tmp_path / f"sim{k}.json"
        assert main(["simulate", "--config", str(cfg), "--out", str(out)]) == 0
        sim_outs.append(out.read_bytes())
    assert sim_outs[0] == sim_outs[1]  # byte-identical rerun

    first = json.loads(sim_outs[0])["results"]["first_replication"]
    est_out = tmp_path / "est.json"
    assert (
        main(
            [
                "estimate",
                "--data", str(csv_path),
                "--y", "y",
                "--d", "d",
                "--cluster", "g,h",
                "--out", str(est_out),
            ]
        )
        == 0
    )
    res = json.loads(est_out.read_text())["results"]
    assert res["theta_hat"] == first["theta_hat"]  # full precision
    assert res["sigma_hat"] == first["sigma_hat"]
    elapsed = time.time() - t0
    assert elapsed < 10.0
    report(
        "criterion-10 CLI round trip",
        elapsed,
        f"theta_hat={res['theta_hat']!r} reproduced exactly; reruns byte-identical",
    )
