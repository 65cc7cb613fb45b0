import math

import numpy as np
import pytest

from quadmean.costs import AnchoredPowerCost, Nice, PowerCost, SquaredDistance
from quadmean.errors import AllZeroLoss, NothingToFit, TooFewReplications
from quadmean.harness import (
    CauchyLine,
    ExperimentConfig,
    GaussianVector,
    LossTable,
    PlaneCloud,
    PointMass,
    empirical_process_sup,
    fit_rate,
    moment_estimate,
    run_experiment,
    substream,
    tail_check,
    tripod_three_point,
)
from quadmean.spaces import Disc, Euclidean, MetricTree, PlaneWithHole, TreePoint

R1, R2 = Euclidean(1), Euclidean(2)


def gaussian_line(n_grid=(16, 64, 256), reps=50, seed=0):
    return ExperimentConfig(R1, SquaredDistance(), GaussianVector((0.0,), (1.0,)), list(n_grid), reps, seed=seed)


def test_substreams_are_independent_of_order():
    a = substream(3, 64, 5).standard_normal(4)
    substream(3, 64, 4).standard_normal(100)
    assert np.array_equal(a, substream(3, 64, 5).standard_normal(4))
    assert not np.array_equal(a, substream(3, 64, 6).standard_normal(4))


def test_point_mass_losses_are_zero():
    cfg = ExperimentConfig(R2, SquaredDistance(), PointMass(np.array([1.0, -2.0])), [4, 8], 5)
    table = run_experiment(cfg)
    assert len(table) == 10 and np.all(table.loss == 0.0)


def test_point_mass_on_tree():
    tree = MetricTree.tripod()
    cfg = ExperimentConfig(tree, SquaredDistance(), PointMass(TreePoint(1, 0.4)), [3], 2)
    assert np.all(run_experiment(cfg).loss == 0.0)


def test_gaussian_mean_squared_loss():
    cfg = ExperimentConfig(R2, SquaredDistance(), GaussianVector((0.0, 0.0), (1.0, 4.0)), [64], 2000, seed=11)
    table = run_experiment(cfg)
    assert np.mean(table.loss**2) == pytest.approx(5 / 64, rel=0.1)


def test_cauchy_median_losses_finite():
    cfg = ExperimentConfig(R1, PowerCost(1.0), CauchyLine(2.0, 1.0), [5, 50], 100, known_m=np.array([2.0]))
    assert np.all(np.isfinite(run_experiment(cfg).loss))


def test_cauchy_objective_closed_form():
    cost = AnchoredPowerCost(1.0, np.zeros(1))
    for q in (-3.0, -0.2, 0.0, 0.4, 5.0):
        exact = (2 / math.pi) * (q * math.atan(q) - 0.5 * math.log1p(q * q))
        assert CauchyLine().objective(cost, R1, np.array([q])) == pytest.approx(exact, rel=1e-8, abs=1e-14)


def test_cauchy_objective_needs_anchor():
    with pytest.raises(ValueError):
        CauchyLine().objective(PowerCost(1.0), R1, np.zeros(1))


def test_tripod_three_point_minimizer():
    tree, dist = tripod_three_point()
    m = dist.minimizer(SquaredDistance(), tree)
    assert float(tree.base_distance(m, TreePoint(0, 0.2))) <= 1e-12


def test_plane_cloud_minimizer_projects_mean():
    space = PlaneWithHole(Disc((0.0, 0.0), 1.0))
    dist = PlaneCloud(centers=((0.5, 0.0),), weights=(1.0,), sigma=0.1)
    np.testing.assert_allclose(dist.minimizer(SquaredDistance(), space), [1.0, 0.0], atol=1e-15)


def test_reproducible_tables():
    a, b = run_experiment(gaussian_line(seed=7)), run_experiment(gaussian_line(seed=7))
    assert np.array_equal(a.loss, b.loss)
    assert not np.array_equal(a.loss, run_experiment(gaussian_line(seed=8)).loss)


def test_replication_relabeling_permutes_rows():
    small = run_experiment(gaussian_line(n_grid=(32,), reps=10))
    large = run_experiment(gaussian_line(n_grid=(32,), reps=20))
    # adding replications never changes earlier rows
    assert np.array_equal(small.loss, large.loss[:10])


def test_failures_are_recorded():
    cfg = ExperimentConfig(R1, SquaredDistance(), GaussianVector((0.0, 0.0), (1.0, 1.0)), [4], 2)
    table = run_experiment(ExperimentConfig(R2, SquaredDistance(), cfg.distribution, [4], 2, known_m=np.zeros(2)))
    assert all(s == "converged" for s in table.status)
    table = run_experiment(cfg)  # two-dimensional draws on a line fail in the estimator
    assert all(s.startswith("failed:") for s in table.status) and np.all(np.isnan(table.loss))


def test_config_validation():
    with pytest.raises(ValueError):
        gaussian_line(n_grid=(64, 16))
    with pytest.raises(ValueError):
        gaussian_line(reps=0)


def test_csv_round_trip(tmp_path):
    table = run_experiment(gaussian_line())
    path = tmp_path / "losses.csv"
    table.to_csv(path)
    back = LossTable.from_csv(path)
    assert np.array_equal(back.loss, table.loss) and np.array_equal(back.n, table.n)
    assert np.all(np.isnan(back.runtime))
    table.to_csv(path, timing=True)
    assert np.all(np.isfinite(LossTable.from_csv(path).runtime))


def test_csv_header_checked(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("a,b\n1,2\n")
    with pytest.raises(ValueError):
        LossTable.from_csv(path)


def test_exact_power_law_fit():
    ns = [16, 64, 256, 1024]
    fit = fit_rate(LossTable.from_losses({n: [n**-0.5] * 3 for n in ns}))
    assert fit.slope == pytest.approx(-0.5, abs=1e-12)
    assert fit.r2 == pytest.approx(1.0, abs=1e-12)
    fit = fit_rate(LossTable.from_losses({n: [2 * n**-0.75] for n in ns}), statistic="mean")
    assert fit.slope == pytest.approx(-0.75, abs=1e-12)


def test_fit_statistics():
    ns = [10, 100, 1000]
    table = LossTable.from_losses({n: np.linspace(1, 2, 11) * n**-1.0 for n in ns})
    assert fit_rate(table, "quantile", p=0.9).slope == pytest.approx(-1.0, abs=1e-12)
    with pytest.raises(ValueError):
        fit_rate(table, "quantile")
    with pytest.raises(ValueError):
        fit_rate(table, "mode")


def test_fit_errors():
    with pytest.raises(NothingToFit):
        fit_rate(LossTable.from_losses({10: [1.0], 20: [0.5]}))
    with pytest.raises(AllZeroLoss):
        fit_rate(LossTable.from_losses({10: [0.0], 20: [0.0], 40: [0.0]}))


def test_gaussian_median_rate():
    cfg = gaussian_line(n_grid=[2**k for k in range(4, 13)], reps=200, seed=2)
    assert fit_rate(run_experiment(cfg)).slope == pytest.approx(-0.5, abs=0.1)


def test_pareto_tail():
    u = np.random.default_rng(0).random(5000)
    table = LossTable.from_losses({1: u**-0.5})
    check = tail_check(table, 1, loss_exponent=1.0, zeta=2.0, gamma_minus=1.0)
    assert check.slope == pytest.approx(-2.0, abs=0.3)
    assert check.theoretical_slope == -2.0


def test_gaussian_tail_is_light():
    table = run_experiment(gaussian_line(n_grid=(16,), reps=1000, seed=3))
    assert tail_check(table, 16, 1.0, 2.0, 1.0).slope <= -2.0


def test_tail_errors():
    with pytest.raises(TooFewReplications):
        tail_check(LossTable.from_losses({4: np.ones(10)}), 4, 1.0, 2.0, 1.0)
    with pytest.raises(AllZeroLoss):
        tail_check(LossTable.from_losses({4: np.zeros(600)}), 4, 1.0, 2.0, 1.0)


def test_moments():
    assert moment_estimate(PointMass(np.zeros(1)), R1, Nice(), 2.0, 100) == 0.0
    sigma2 = 2.0
    g = GaussianVector((0.0,), (sigma2,))
    assert moment_estimate(g, R1, Nice(), 2.0, 200_000, seed=1) == pytest.approx(8 * sigma2, rel=0.02)
    assert moment_estimate(g, R1, Nice(), 1.0, 200_000, seed=1) == pytest.approx(math.sqrt(8 * sigma2), rel=0.02)


def test_moment_branches_agree_at_two():
    g = GaussianVector((0.0,), (1.0,))
    hi = moment_estimate(g, R1, Nice(), 2.0, 1000, seed=4)
    lo = moment_estimate(g, R1, Nice(), 1.999999999, 1000, seed=4)
    assert lo == pytest.approx(hi, rel=1e-6)


def test_moment_bad_zeta():
    with pytest.raises(ValueError):
        moment_estimate(PointMass(np.zeros(1)), R1, Nice(), 0.5, 10)


def test_process_sup_point_mass():
    cfg = ExperimentConfig(R1, SquaredDistance(), PointMass(np.zeros(1)), [8], 1)
    assert empirical_process_sup(cfg, 1.0, np.linspace(-1, 1, 11)[:, None], 8) == 0.0


def test_process_sup_monotone_in_delta():
    cfg = gaussian_line()
    grid = np.linspace(-2, 2, 41)[:, None]
    for rep in range(5):
        values = [empirical_process_sup(cfg, d, grid, 64, rep) for d in (0.25, 0.5, 1.0, 2.0)]
        assert all(b >= a for a, b in zip(values, values[1:])) and values[0] >= 0


def test_process_sup_errors():
    cfg = gaussian_line()
    with pytest.raises(ValueError):
        empirical_process_sup(cfg, 0.0, np.zeros((3, 1)), 8)
    with pytest.raises(ValueError):
        empirical_process_sup(cfg, 1.0, np.empty((0, 1)), 8)
