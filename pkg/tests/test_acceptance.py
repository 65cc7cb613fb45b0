"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Criteria 2 and 3 are expected to fail as written; the analysis lives in the
decision ledger and the README.
"""

import math
import time

import numpy as np
import pytest
from scipy import stats

from quadmean.costs import (
    BoundedLipschitz,
    BregmanStruct,
    InnerProduct,
    Nice,
    PowerCost,
    PowerStruct,
    SquaredDistance,
    WeightedIP,
)
from quadmean.entropy import ball_points, covering_numbers, eta, rate_prediction
from quadmean.harness import (
    CauchyLine,
    ExperimentConfig,
    GaussianVector,
    empirical_process_sup,
    fit_rate,
    run_experiment,
    tripod_three_point,
)
from quadmean.lab import (
    arithmetic_form_sweep,
    lemma_battery,
    optimality_case,
    power_constant_peak,
    sweep_structure,
    tripod_strong_counterexample,
)
from quadmean.spaces import Euclidean, MetricTree

R1 = Euclidean(1)


@pytest.fixture
def verdict(capsys):
    def emit(criterion: int, ok: bool, detail: str) -> None:
        with capsys.disabled():
            print(f"\nCRITERION {criterion}: {'PASS' if ok else 'FAIL'} - {detail}")
        assert ok, detail

    return emit


def test_criterion_1_structure_sweeps(verdict):
    trials = 1_000_000
    tripod, tree8 = MetricTree.tripod(), MetricTree.random(8, seed=8)
    cases = [("nice/tripod", tripod, Nice()), ("nice/random tree", tree8, Nice())]
    for alpha in (0.5, 0.6, 0.721, 0.9, 1.0):
        cases.append((f"power {alpha}/R3", Euclidean(3), PowerStruct(alpha)))
        cases.append((f"power {alpha}/tripod", tripod, PowerStruct(alpha)))
    cases += [
        ("inner product/R5", Euclidean(5), InnerProduct()),
        ("weighted/R5", Euclidean(5), WeightedIP((1.0, 0.5, 2.0, 0.25, 4.0))),
        ("bregman exp/R3", Euclidean(3), BregmanStruct("coordinate_exponential")),
        ("bounded lipschitz/unit square", Euclidean(2, box=(0.0, 1.0)), BoundedLipschitz(math.sqrt(2))),
    ]
    start = time.perf_counter()
    bad = []
    for seed, (label, space, structure) in enumerate(cases):
        rep = sweep_structure(space, structure, trials=trials, seed=seed)
        if rep.violations:
            bad.append(f"{label}: {rep.violations}")
    elapsed = time.perf_counter() - start
    _, peak = power_constant_peak()
    ok = not bad and elapsed <= 120 and peak <= 2.123
    verdict(1, ok, f"{len(cases)} sweeps x {trials} trials, violations {bad or 'none'}, {elapsed:.1f}s, peak constant {peak:.4f}")


def test_criterion_2_lemma_battery(verdict):
    results = {"arithmetic_form": arithmetic_form_sweep(trials=1_000_000, seed=0).violations}
    ids = [
        "tight_power_1",
        "tight_power_2",
        "tight_power_3",
        "simple_merging",
        "rasc_merging_1",
        "rasc_merging_2",
        "rasc_merging_3",
        "asc_merging",
        "fraction_bound",
        "beta_bound",
        "alpha_binom",
        "slogs",
        "abxfrac",
    ]
    for seed, lemma_id in enumerate(ids, start=1):
        results[lemma_id] = lemma_battery(lemma_id, trials=100_000, seed=seed).violations
    failing = {k: v for k, v in results.items() if v}
    proof_domain = lemma_battery("asc_merging_proof_domain", trials=100_000, seed=99).violations
    detail = f"violations {failing or 'none'}; a-sc merging restricted to its proof domain: {proof_domain}"
    verdict(2, not failing, detail)


def test_criterion_3_optimality(verdict):
    target = lambda a: 8 * a * 2 ** (-2 * a)
    errors = {a: abs(optimality_case("a", a, 1e-5) / target(a) - 1) for a in (0.5, 0.75, 1.0)}
    b = optimality_case("b", 1.25, 1e-6)
    c = optimality_case("c", 0.25, 1e-6)
    ok_a = all(e <= 0.005 for e in errors.values())
    ok = ok_a and b > 1e3 and c > 1e3
    rel = ", ".join(f"{a}: {e:.2e}" for a, e in errors.items())
    verdict(3, ok, f"case a relative errors {rel}; case b ratio {b:.1f}; case c ratio {c:.1f} (need > 1000)")


def test_criterion_4_tripod_counterexample(verdict):
    eps = 2e-4
    res = tripod_strong_counterexample(1.0, eps, detail=True)
    lhs_err = abs(res.lhs / (2 * eps) - 1)
    ok = res.required_K >= 100 and lhs_err <= 1e-10
    verdict(4, ok, f"required K {res.required_K:.4f}, left side relative error {lhs_err:.1e}")


def test_criterion_5_euclidean_identity(verdict):
    cfg = ExperimentConfig(Euclidean(2), SquaredDistance(), GaussianVector((0.0, 0.0), (1.0, 4.0)), [64], 2000, seed=1)
    msl = float(np.mean(run_experiment(cfg).loss ** 2))
    rel = msl / (5 / 64) - 1
    verdict(5, abs(rel) <= 0.1, f"mean squared loss {msl:.5f} vs {5 / 64:.5f} ({rel:+.1%})")


def test_criterion_6_rate_exponents(verdict):
    ns = [16, 64, 256, 1024, 4096]
    tree, three_point = tripod_three_point()
    cases = [
        ("gaussian", ExperimentConfig(R1, SquaredDistance(), GaussianVector((0.0,), (1.0,)), ns, 500, seed=2), 0.1),
        ("cauchy median", ExperimentConfig(R1, PowerCost(1.0), CauchyLine(), ns, 500, seed=3, known_m=np.zeros(1)), 0.1),
        ("tripod", ExperimentConfig(tree, SquaredDistance(), three_point, ns, 500, seed=4), 0.15),
    ]
    start = time.perf_counter()
    slopes, ok = {}, True
    for label, cfg, tol in cases:
        slopes[label] = fit_rate(run_experiment(cfg)).slope
        ok &= abs(slopes[label] + 0.5) <= tol
    elapsed = time.perf_counter() - start
    ok &= elapsed <= 300
    verdict(6, ok, ", ".join(f"{k} {v:.3f}" for k, v in slopes.items()) + f"; {elapsed:.1f}s")


def test_criterion_7_ball_cover_bound(verdict):
    worst = []
    for dim, r_min in ((1, 0.05), (2, 0.05), (3, 0.2)):
        radii = np.geomspace(r_min, 1.0, 10)
        counts = covering_numbers(ball_points(dim, 1.0, r_min / 4), radii)
        worst.append(float(np.max(counts / (3.0 / radii) ** dim)))
    verdict(7, all(w <= 1 for w in worst), "largest count / bound ratio per dimension " + ", ".join(f"{w:.3f}" for w in worst))


def test_criterion_8_empirical_process(verdict):
    cfg = ExperimentConfig(R1, SquaredDistance(), GaussianVector((0.0,), (1.0,)), [64, 256, 1024], 300, seed=5)
    grid = np.linspace(-1, 1, 41)[:, None]
    ns = [64, 256, 1024]
    means = [np.mean([empirical_process_sup(cfg, 1.0, grid, n, rep) for rep in range(300)]) for n in ns]
    slope = stats.linregress(np.log(ns), np.log(means)).slope
    verdict(8, abs(slope + 0.5) <= 0.2, f"slope {slope:.3f}")


def test_criterion_9_unit_formulas(verdict):
    checks = {
        "eta(0.5, 100)": eta(0.5, 100) == pytest.approx(0.1, rel=1e-15),
        "eta(2, 1e4)": eta(2.0, 10_000) == pytest.approx(0.1, rel=1e-15),
    }
    try:
        rate_prediction(2.0, 1.0, 0.5, 100)
        checks["rejects alpha/beta >= gamma"] = False
    except ValueError:
        checks["rejects alpha/beta >= gamma"] = True
    n = 5000.0
    sched = rate_prediction(2.0, 0.5, 1.0, n, mode="scheduled", kappa=2.0).schedule
    checks["schedule"] = sched["xi_n"] == 1 - 1 / math.log(n) and sched["R_n"] == n
    failed = [k for k, v in checks.items() if not v]
    verdict(9, not failed, f"failed {failed or 'none'}")
