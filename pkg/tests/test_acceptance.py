"""Acceptance suite: one test per criterion, each printing a pass/fail line.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the per-criterion
lines as they execute.
"""

import gzip
import itertools
import json
import math
import time

import numpy as np
import pytest

import nsopt.bench as bench
from nsopt.bench import CampaignSpec, DatasetSpec, performance_profile, run_campaign, winning_probability
from nsopt.data_io import parse_libsvm, serialize_libsvm, split, synthetic_blobs, load_libsvm
from nsopt.model import Ball, SpectralBounds
from nsopt.problems import KINK, HingeLossSvm, MedianL1, median_value
from nsopt.solver import (
    LINE_SEARCH,
    SolverConfig,
    armijo_accepts_norm,
    ls_candidates,
    run,
    spectral_update,
)


def report(criterion: int, ok: bool, detail: str) -> None:
    print(f"ACCEPTANCE {criterion}: {'PASS' if ok else 'FAIL'} - {detail}")
    assert ok, f"criterion {criterion}: {detail}"


@pytest.fixture(scope="module")
def trend_campaign():
    spec = CampaignSpec(
        methods=("sps", "ls-sps", "ls-sps-f", "ls-ps"),
        datasets=(
            DatasetSpec(
                name="blobs",
                synthetic={"kind": "blobs", "n_rows": 1000, "n_cols": 20, "seed": 0},
                reg_coeff=10.0,
                radius_sq=0.1,
            ),
        ),
        seeds=(1, 2, 3, 4, 5),
        budget=50_000,
        tau_grid=(0.01, 0.1, 1.0, 3.5),
        q_grid=(1.0, 1.5, 2.0, 4.0, 16.0),
    )
    t0 = time.perf_counter()
    result = run_campaign(spec)
    elapsed = time.perf_counter() - t0
    return spec, result, elapsed


@pytest.fixture(scope="module")
def assorted_runs(trend_campaign):
    """Every solver trace produced by the acceptance suite, with its config."""
    spec, result, _ = trend_campaign
    runs = []
    for (m, d, s), trace in result.traces.items():
        runs.append((bench.method_config(m).with_overrides(seed=s), trace))
    median = MedianL1(anchors=np.linspace(0, 4, 201), radius=10.0)
    for kw in (
        dict(step_mode="predefined", sample_start_fraction=0.1, max_iters=150, seed=3),
        dict(step_mode=LINE_SEARCH, sample_start_fraction=0.1, max_iters=150, seed=3),
        dict(step_mode=LINE_SEARCH, sample_start_fraction=0.2, y_policy="cross-sample", max_iters=100, seed=4),
        dict(step_mode=LINE_SEARCH, sample_start_fraction=0.2, y_policy="next-sample", max_iters=100, seed=4),
    ):
        cfg = SolverConfig(**kw)
        runs.append((cfg, run(median, median.region, cfg, budget=200_000)))
    return runs


def test_criterion_1_finite_sum_convergence_oracle():
    # Full sample from the first iteration, predefined alpha_k = 1/k.  The
    # spectral safeguard is [1, 1e4]: with the default floor 1e-4 the
    # degenerate-ratio rule (s.y <= 0 -> floor) freezes the iterate inside the
    # flat pieces of this piecewise-linear objective (see decisions notes).
    problem = MedianL1(anchors=np.linspace(0.0, 4.0, 201), radius=10.0)
    f_star = median_value(problem)
    config = SolverConfig(
        step_mode="predefined",
        sample_start_fraction=None,
        zeta_lo=1.0,
        zeta_hi=1e4,
        zeta_init=1.0,
        max_iters=100_000,
        seed=12345,
    )
    t0 = time.perf_counter()
    trace = run(problem, problem.region, config)
    elapsed = time.perf_counter() - t0
    best_gap = float(np.min(np.abs(trace.f_true - f_star)))
    ok = best_gap <= 1e-3 and elapsed < 5.0
    report(1, ok, f"best |f - f*| = {best_gap:.3e} (tol 1e-3) in {elapsed:.2f}s (limit 5s)")


def test_criterion_2_spectral_safeguard_suite():
    bounds = SpectralBounds(1e-4, 1e4)
    rng = np.random.default_rng(2024)
    total = 1_000_000
    svals = rng.normal(size=(total, 2)) * (10.0 ** rng.integers(-9, 9, size=(total, 1)).astype(float))
    yvals = rng.normal(size=(total, 2)) * (10.0 ** rng.integers(-9, 9, size=(total, 1)).astype(float))
    kinds = rng.integers(0, 10, size=total)
    yvals[kinds == 0] = -svals[kinds == 0]                      # s.y < 0
    yvals[kinds == 1] = svals[kinds == 1][:, ::-1] * [-1.0, 1.0]  # s.y = 0 exactly
    yvals[kinds == 2] = svals[kinds == 2] * 1e-300              # near-zero denominator
    svals[kinds == 3] = 0.0                                     # zero displacement
    yvals[kinds == 4] = 0.0
    violations = 0
    prev = 1.0
    for i in range(total):
        out = spectral_update(svals[i], yvals[i], bounds, prev)
        if not (1e-4 <= out <= 1e4):
            violations += 1
        prev = out
    report(2, violations == 0, f"{total} randomized calls, {violations} safeguard violations")


def test_criterion_3_step_rule_suite(assorted_runs):
    checked = 0
    violations = 0
    for cfg, trace in assorted_runs:
        sched = cfg.step_schedule
        stepped = ~np.isnan(trace.alpha)
        ks = trace.k[stepped]
        alphas = trace.alpha[stepped]
        lo = cfg.c1 / ks
        hi = cfg.c2 / ks
        violations += int(np.sum((alphas < lo) | (alphas > hi)))
        checked += len(ks)
        if cfg.step_mode == LINE_SEARCH:
            for diag in trace.steps:
                d, mid, fb = ls_candidates(diag.k, sched)
                if diag.alpha not in (d, mid, fb):
                    violations += 1
                trial_alphas = tuple(a for a, _ in diag.trials)
                if trial_alphas not in ((), (d,), (d, mid)):
                    violations += 1
    report(3, violations == 0 and checked > 500, f"{checked} recorded steps, {violations} step-rule violations")


def test_criterion_4_armijo_replay(assorted_runs):
    replayed = 0
    failures = 0
    for cfg, trace in assorted_runs:
        if cfg.step_mode != LINE_SEARCH:
            continue
        for diag in trace.steps:
            if diag.fallback:
                continue
            accepted = diag.accepted
            if accepted is None:
                failures += 1
                continue
            a, f_trial = accepted
            if a != diag.alpha:
                failures += 1
            # exact inequality on the stored floats, tolerance 0
            if not armijo_accepts_norm(f_trial, diag.reference, cfg.eta, a, diag.p_norm_sq):
                failures += 1
            replayed += 1
    report(4, failures == 0 and replayed > 100, f"{replayed} accepted steps replayed, {failures} failures")


def _corner_sup(svm, x, idx, p):
    n_kinks = int(np.sum(svm.margin_classes(x, idx) == KINK))
    best = -math.inf
    for corner in itertools.product((0.0, 1.0), repeat=n_kinks):
        g = svm.subgradient(x, idx, beta=np.array(corner))
        best = max(best, float(g @ p))
    return best


def test_criterion_5_subgradient_validity():
    rng = np.random.default_rng(55)
    violations = 0
    probes = 0

    blob_ds = synthetic_blobs(120, 6, seed=5)
    problems = [
        (HingeLossSvm.from_dataset(blob_ds, reg_coeff=10.0), 6, 2.0),
        (HingeLossSvm(np.array([[2.0, 1.0], [0.5, -1.0], [-1.0, 3.0]]), np.array([1.0, -1.0, 1.0])), 2, 3.0),
        (MedianL1(anchors=np.linspace(-1, 3, 33), radius=5.0), 1, 5.0),
    ]
    for problem, dim, scale in problems:
        n = problem.ground_size
        for _ in range(100):
            idx = rng.choice(n, size=int(rng.integers(1, n + 1)), replace=False)
            x = rng.uniform(-scale, scale, size=dim)
            y = rng.uniform(-scale, scale, size=dim)
            g = problem.subgradient(x, idx)
            if problem.value(y, idx) < problem.value(x, idx) + float(g @ (y - x)) - 1e-9:
                violations += 1
            probes += 1

    # directional sup vs corner enumeration on instances with exact kinks
    sup_checks = 0
    kink_svm = HingeLossSvm(
        np.array([[2.0, 0.0], [0.0, 4.0], [1.0, 2.0], [-1.0, 1.0], [0.5, 0.5], [2.0, -3.0]]),
        np.array([1.0, 1.0, 1.0, -1.0, -1.0, 1.0]),
        reg_coeff=1.5,
    )
    x = np.array([0.5, 0.25])
    idx = np.arange(6)
    n_kinks = int(np.sum(kink_svm.margin_classes(x, idx) == KINK))
    assert 1 <= n_kinks <= 10
    for _ in range(50):
        p = rng.normal(size=2)
        exact = kink_svm.directional_sup(x, idx, p)
        oracle = _corner_sup(kink_svm, x, idx, p)
        if abs(exact - oracle) > 1e-12:
            violations += 1
        sup_checks += 1
    report(
        5,
        violations == 0,
        f"{probes} subgradient-inequality probes + {sup_checks} corner-enumeration sup checks ({n_kinks} kinks), {violations} violations",
    )


def test_criterion_6_metric_correctness(trend_campaign):
    inf = float("inf")
    table = {
        "A": [100.0, 300.0, inf, 200.0],
        "B": [150.0, 100.0, inf, 400.0],
        "C": [inf, 100.0, inf, 200.0],
    }
    first_hit = {}
    for m, fevs in table.items():
        for i, fev in enumerate(fevs):
            first_hit[(m, "synth", i)] = np.array([fev])
    fixture = bench.CampaignResult(
        methods=("A", "B", "C"),
        runs=tuple(("synth", i) for i in range(4)),
        tau_grid=np.array([1.0]),
        q_grid=np.array([1.0, 1.5, 3.0, 1e9]),
        f_star={"synth": {"value": 1.0, "mode": "given"}},
        first_hit=first_hit,
        final_true={k: 0.0 for k in first_hit},
        fev_total={k: 0 for k in first_hit},
    )
    # hand enumeration: run0 best 100 -> A; run1 best 100 -> B, C; run2 none;
    # run3 best 200 -> A, C.  T = 4 throughout.
    pi = winning_probability(fixture, 1.0)
    exact_pi = pi == {"A": 0.5, "B": 0.25, "C": 0.5}
    curves = performance_profile(fixture, 1.0)
    exact_pp = (
        np.array_equal(curves["A"], [0.5, 0.5, 0.75, 0.75])
        and np.array_equal(curves["B"], [0.25, 0.5, 0.75, 0.75])
        and np.array_equal(curves["C"], [0.5, 0.5, 0.5, 0.5])
    )
    # PP(1) == pi on a real campaign, every tau
    spec, result, _ = trend_campaign
    pp1_matches = True
    for tau in result.tau_grid:
        pi_c = winning_probability(result, tau)
        curves_c = performance_profile(result, tau)
        for m in result.methods:
            pp1_matches &= curves_c[m][0] == pi_c[m]
    ok = exact_pi and exact_pp and pp1_matches
    report(6, ok, f"hand table exact (pi={exact_pi}, pp={exact_pp}), PP(1)==pi on campaign: {pp1_matches}")


def test_criterion_7_paper_trend_replication(trend_campaign):
    spec, result, elapsed = trend_campaign
    j = result.tau_index(1.0)
    wins_a = wins_b = wins_c = 0
    for seed in spec.seeds:
        hit_vss = result.first_hit[("ls-sps", "blobs", seed)][j]
        hit_full = result.first_hit[("ls-sps-f", "blobs", seed)][j]
        wins_a += hit_vss < hit_full
        wins_b += result.final_true[("ls-sps", "blobs", seed)] < result.final_true[("sps", "blobs", seed)]
        wins_c += result.final_true[("ls-sps", "blobs", seed)] <= result.final_true[("ls-ps", "blobs", seed)]
    ok = wins_a >= 3 and wins_b >= 4 and wins_c >= 4 and elapsed < 120.0
    report(
        7,
        ok,
        f"VSS benefit {wins_a}/5 (need 3), line-search benefit {wins_b}/5 (need 4), "
        f"spectral benefit {wins_c}/5 (need 4), campaign {elapsed:.1f}s (limit 120s)",
    )


def test_criterion_8_determinism(tmp_path):
    ds = DatasetSpec(name="blobs", synthetic={"kind": "blobs", "n_rows": 150, "n_cols": 8, "seed": 2})
    problem, region = ds.build()
    cfg = bench.method_config("ls-sps").with_overrides(seed=11)
    csv_a = run(problem, region, cfg, budget=20_000).to_csv()
    csv_b = run(problem, region, cfg, budget=20_000).to_csv()
    run_identical = csv_a.encode() == csv_b.encode()

    spec = CampaignSpec(
        methods=("sps", "ls-sps"),
        datasets=(ds,),
        seeds=(1, 2),
        budget=5_000,
        tau_grid=(0.1, 1.0),
        q_grid=(1.0, 4.0),
        reference_budget_factor=4.0,
    )
    out1, out2 = tmp_path / "c1", tmp_path / "c2"
    run_campaign(spec, out_dir=out1)
    run_campaign(spec, out_dir=out2)
    r1 = json.loads((out1 / "results.json").read_text())
    r2 = json.loads((out2 / "results.json").read_text())
    results_identical = json.dumps(r1["result"], sort_keys=True).encode() == json.dumps(r2["result"], sort_keys=True).encode()
    traces_identical = all(
        p.read_bytes() == (out2 / "traces" / p.name).read_bytes() for p in sorted((out1 / "traces").glob("*.csv"))
    )
    profiles_identical = (out1 / "profiles.csv").read_bytes() == (out2 / "profiles.csv").read_bytes()
    ok = run_identical and results_identical and traces_identical and profiles_identical
    report(
        8,
        ok,
        f"trace bytes {run_identical}, results.json deterministic section {results_identical}, "
        f"trace files {traces_identical}, profiles {profiles_identical}",
    )


def test_criterion_9_libsvm_ingestion(tmp_path):
    corpus = [
        "+1 1:0.5 3:2\n-1 2:1\n",                     # plain +/-1
        "0 1:1\n1 2:1\n0 3:0.25\n",                    # {0,1} labels
        "+1 1:0.5\n-1\n+1 2:1e-3\n",                   # empty-feature row
        "1 1:0.125\n2 2:-4\n1 3:7\n",                  # {1,2} alphabet
    ]
    identity_ok = True
    for text in corpus:
        first = parse_libsvm(text)
        again = parse_libsvm(serialize_libsvm(first))
        identity_ok &= first == again
    gz = tmp_path / "corpus.libsvm.gz"
    with gzip.open(gz, "wt") as fh:
        fh.write(corpus[0])
    identity_ok &= load_libsvm(gz) == parse_libsvm(corpus[0])

    big = parse_libsvm("\n".join(f"{'+1' if i % 2 else '-1'} 1:{i}" for i in range(3175)) + "\n")
    train, test = split(big, 0.8, seed=0)
    sizes_ok = (train.n_rows, test.n_rows) == (2540, 635)
    report(9, identity_ok and sizes_ok, f"round-trip identity {identity_ok}, split sizes {train.n_rows}/{test.n_rows} (want 2540/635)")
