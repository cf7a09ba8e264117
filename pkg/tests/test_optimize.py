import numpy as np
import pytest

from specpts.geometry import (PointConfig, Sphere, all_pair_distances_sq, pair_geometry, random_config,
                              triangular_config, unit_density_canvas)
from specpts.gradients import value_and_grad
from specpts.graphkernel import WeightFunction
from specpts.optimize import OptimizeSettings, bfgs_minimize, d_min, multi_start, triangular_spacing
from specpts.spectral import InvariantId

EXP2 = WeightFunction.exp(2.0)


def test_settings_validation():
    s = OptimizeSettings()
    assert (s.max_iter, s.gtol, s.armijo_c, s.shrink) == (2000, 1e-8, 1e-4, 0.5)
    for bad in ({"gtol": 0.0}, {"restarts": 0}, {"shrink": 1.0}, {"armijo_c": -1.0}):
        with pytest.raises(ValueError):
            OptimizeSettings(**bad)


def test_three_points_on_circle_become_equilateral():
    cfg = random_config(Sphere(2), 3, seed=4)
    res = bfgs_minimize(cfg, EXP2, InvariantId("trace"))
    np.testing.assert_allclose(all_pair_distances_sq(res.config), 3.0, atol=1e-6)
    assert res.converged
    assert res.history[-1] <= res.history[0]


def test_accepted_steps_are_monotone_and_feasible():
    cfg = random_config(Sphere(3), 10, seed=2)
    res = bfgs_minimize(cfg, EXP2, InvariantId("lambdamax"), OptimizeSettings(max_iter=200, snapshot_stride=20))
    assert np.all(np.diff(res.history) <= 1e-12)
    for _, snap in res.snapshots:
        np.testing.assert_allclose(np.linalg.norm(snap.points, axis=1), 1.0, atol=1e-12)


def test_maximization_is_monotone_upwards():
    cfg = random_config(Sphere(3), 6, seed=1)
    res = bfgs_minimize(cfg, WeightFunction.one_minus_exp(2.0), InvariantId("lambda2"),
                        OptimizeSettings(max_iter=150))
    assert np.all(np.diff(res.history) >= -1e-12)


def test_torus_iterates_stay_in_cell():
    torus = unit_density_canvas(16)
    res = bfgs_minimize(random_config(torus, 16, seed=0), EXP2, InvariantId("trace"),
                        OptimizeSettings(max_iter=60, snapshot_stride=10))
    width, height = np.diag(torus.basis)
    for _, snap in res.snapshots:
        assert np.all((snap.points >= 0) & (snap.points < [width, height]))


def test_converged_gradient_below_tolerance():
    res = bfgs_minimize(random_config(Sphere(3), 5, seed=3), EXP2, InvariantId("trace"))
    assert res.converged and res.status == "gtol"
    assert value_and_grad(res.config, EXP2, InvariantId("trace"))[1].norm <= 1e-8


def test_d_min_diagnostic():
    assert d_min(triangular_config(10)) == pytest.approx(0.0, abs=1e-12)
    assert triangular_spacing(unit_density_canvas(100).area, 100) == pytest.approx(1.07457, abs=1e-5)
    torus = unit_density_canvas(4)
    pts = np.array([[0.1, 0.1], [0.1, 0.1], [1.0, 1.0], [0.5, 1.5]])
    assert d_min(PointConfig(torus, pts)) == pytest.approx(torus.basis[0, 0] / 2)
    with pytest.raises(ValueError):
        d_min(random_config(Sphere(3), 4, seed=0))


def test_multi_start_single_restart_is_bfgs():
    settings = OptimizeSettings(restarts=1, seed=5, max_iter=50)
    best, runs = multi_start(Sphere(3), 6, EXP2, InvariantId("trace"), settings)
    direct = bfgs_minimize(random_config(Sphere(3), 6, 5), EXP2, InvariantId("trace"), settings)
    assert len(runs) == 1
    np.testing.assert_array_equal(best.config.points, direct.config.points)


def test_multi_start_deterministic_across_workers():
    serial = OptimizeSettings(restarts=4, seed=2, max_iter=80)
    threaded = OptimizeSettings(restarts=4, seed=2, max_iter=80, workers=4)
    a, _ = multi_start(Sphere(3), 7, EXP2, InvariantId("rtot"), serial)
    b, _ = multi_start(Sphere(3), 7, EXP2, InvariantId("rtot"), threaded)
    np.testing.assert_array_equal(a.config.points, b.config.points)
    assert a.value == b.value


def test_multi_start_picks_best_in_sense():
    settings = OptimizeSettings(restarts=3, seed=0, max_iter=30)
    best, runs = multi_start(Sphere(3), 5, WeightFunction.one_minus_exp(2.0), InvariantId("lambda2"), settings)
    assert best.value == max(r.value for r in runs)


def test_trace_recovers_triangular_lattice_n64():
    n = 64
    best, _ = multi_start(unit_density_canvas(n), n, EXP2, InvariantId("trace"),
                          OptimizeSettings(restarts=10, seed=0, workers=4))
    assert best.d_min < 1e-3


def test_effective_resistance_coalesces():
    n = 100
    res = bfgs_minimize(random_config(unit_density_canvas(n), n, seed=0), EXP2, InvariantId("rtot"),
                        OptimizeSettings(max_iter=400, snapshot_stride=10))

    def mean_nn(cfg):
        _, r2 = pair_geometry(cfg)
        np.fill_diagonal(r2, np.inf)
        return float(np.sqrt(r2.min(axis=1)).mean())

    series = [mean_nn(c) for _, c in res.snapshots]
    half = len(series) // 2
    assert series[-1] < series[half] < series[0]
    assert series[-1] < 0.1 * series[0]
    # full coalescence approaches the complete graph with unit weights: rtot -> n - 1
    assert res.value == pytest.approx(n - 1, rel=1e-6)
