import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from slowmanifolds import SlowFastSystem, StableSpec, generate_path, integrate_sde
from slowmanifolds.analysis import (ConvergenceTable, StudyParams, coupled_realization, coupled_study,
                                    ks_critical, ks_distance, ks_statistic, to_jsonable,
                                    tracking_decay)
from slowmanifolds.errors import ConfigurationError, DomainError
from slowmanifolds.examples import example1
from slowmanifolds.integrators import Trajectory
from slowmanifolds.stable_noise import zero_path


def pair(sys, z0a, z0b, t_end, dt, path=None):
    path = path if path is not None else zero_path(sys.n2, 0.0, t_end, dt)
    return (integrate_sde(sys, path, z0a, (0.0, t_end), dt),
            integrate_sde(sys, path, z0b, (0.0, t_end), dt))


def test_identical_trajectories_are_degenerate():
    sys = example1(sigma=0.0)
    a, b = pair(sys, [1.0, 0.0], [1.0, 0.0], 0.1, 1e-3)
    fit = tracking_decay(a, b)
    assert fit.degenerate and fit.clipped > 0
    json.dumps(to_jsonable(fit.to_dict()), allow_nan=False)


def test_linear_decay_rate():
    eps = 0.1
    sys = SlowFastSystem(S=[[0.0]], F=[[-1.0]], g1=lambda x, y: np.zeros(1), g2=lambda x, y: np.zeros(1),
                         K=0.1, epsilon=eps, sigma=0.0, noise=StableSpec.uniform(1.8, 1))
    a, b = pair(sys, [0.0, 1.0], [0.0, 0.0], 1.0, 1e-3)
    fit = tracking_decay(a, b)
    assert fit.rate == pytest.approx(-1.0 / eps, rel=0.01)
    assert 0 <= fit.r_squared <= 1


def test_example1_tracking_rate_and_bound():
    sys = example1(epsilon=0.01, sigma=0.05)
    path = generate_path(sys.noise, 0.0, 0.1, 1e-4, 17)
    a, b = pair(sys, [1.0, 0.5], [1.0, -0.3], 0.1, 1e-4, path)
    fit = tracking_decay(a, b, window=(0.0, 0.05), sys=sys)
    assert fit.rate <= -(1 / 3) / 0.01 * 0.8
    assert fit.bound_ok and fit.bound_checked > 0


def test_tracking_window_errors():
    sys = example1(sigma=0.0)
    a, b = pair(sys, [1.0, 0.0], [1.0, 1.0], 0.1, 1e-3)
    with pytest.raises(ConfigurationError):
        tracking_decay(a, b, window=(0.0, 0.5))
    short = Trajectory(a.times[:10], a.states[:10], 1, "sde")
    with pytest.raises(ConfigurationError):
        tracking_decay(short, b)


def test_decay_fit_serialisation(tmp_path):
    sys = example1(sigma=0.0)
    a, b = pair(sys, [1.0, 0.0], [1.0, 1.0], 0.1, 1e-3)
    fit = tracking_decay(a, b, sys=sys)
    fit.to_json(tmp_path / "f.json")
    fit.to_csv(tmp_path / "f.csv")
    assert json.loads((tmp_path / "f.json").read_text())["bound_ok"] is True
    assert (tmp_path / "f.csv").read_text().startswith("rate,")


def test_ks_identical_samples():
    x = np.random.default_rng(0).normal(size=200)
    r = ks_distance(x, x)
    assert r.statistic == 0 and r.passed


def test_ks_detects_shift():
    rng = np.random.default_rng(1)
    assert not ks_distance(rng.normal(size=1000), rng.normal(size=1000) + 3).passed


@pytest.mark.parametrize("n,m", [(60, 60), (500, 700), (1000, 77)])
def test_ks_statistic_matches_scipy(n, m):
    rng = np.random.default_rng(n + m)
    a, b = rng.standard_t(3, size=n), rng.normal(size=m) * 1.2
    assert ks_statistic(a, b) == pytest.approx(stats.ks_2samp(a, b).statistic, abs=1e-14)


def test_ks_critical_value():
    n = 10_000
    assert ks_critical(n, n, 0.01) == pytest.approx(1.6276 * np.sqrt(2 / n), rel=1e-4)


def test_ks_refuses_small_or_bad_samples():
    with pytest.raises(DomainError):
        ks_distance(np.zeros(49), np.zeros(100))
    with pytest.raises(DomainError):
        ks_distance(np.r_[np.zeros(99), np.nan], np.zeros(100))
    with pytest.raises(DomainError):
        ks_distance(np.zeros((100, 2)), np.zeros((100, 3)))


def test_ks_vector_bonferroni():
    rng = np.random.default_rng(2)
    a = rng.normal(size=(500, 2))
    b = rng.normal(size=(500, 2))
    r = ks_distance(a, b)
    assert len(r.per_coordinate) == 2
    assert r.critical == pytest.approx(ks_critical(500, 500, 0.005))
    b[:, 1] += 1.0
    assert not ks_distance(a, b).passed


@settings(max_examples=30)
@given(st.integers(0, 10_000), st.integers(50, 300), st.integers(50, 300))
def test_ks_symmetric_and_transform_invariant(seed, n, m):
    rng = np.random.default_rng(seed)
    a, b = rng.normal(size=n), rng.normal(0.3, 1.5, size=m)
    d = ks_statistic(a, b)
    assert d == ks_statistic(b, a)
    assert d == pytest.approx(ks_statistic(np.exp(a), np.exp(b)), abs=1e-15)
    assert d == pytest.approx(ks_statistic(np.arctan(3 * a), np.arctan(3 * b)), abs=1e-15)


@given(st.floats(0.5, 2.5), st.floats(0.01, 10.0))
def test_convergence_table_recovers_power_law(p, c):
    eps = np.array([0.2, 0.1, 0.05, 0.025])
    tab = ConvergenceTable("h0_distance", eps, c * eps ** p, np.full(4, 10)).fit()
    assert tab.slope == pytest.approx(p, rel=1e-9)
    assert tab.slope_ci[0] <= tab.slope <= tab.slope_ci[1]
    assert tab.monotone


def test_convergence_table_outputs(tmp_path):
    eps = np.array([0.2, 0.1, 0.05])
    tab = ConvergenceTable("h1_residual", eps, np.array([0.04, 0.011, 0.0026]), np.full(3, 5)).fit()
    tab.to_csv(tmp_path / "t.csv")
    tab.to_json(tmp_path / "t.json")
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "epsilon,distance,n_realizations" and len(lines) == 4
    d = json.loads((tmp_path / "t.json").read_text())
    assert d["kind"] == "h1_residual" and len(d["rows"]) == 3


def _affine():
    return SlowFastSystem(S=[[0.0]], F=[[-2.0]], g1=lambda x, y: np.zeros(1),
                          g2=lambda x, y: 0.3 * x[:1] + 0.4 * y[:1], K=0.7, epsilon=0.1, sigma=0.1,
                          noise=StableSpec.uniform(1.8, 1))


def _zero_fast():
    return SlowFastSystem(S=[[0.5]], F=[[-1.0]], g1=lambda x, y: np.sin(y[:1]) / 4,
                          g2=lambda x, y: np.zeros(1), K=0.25, epsilon=0.1, sigma=0.1,
                          noise=StableSpec.uniform(1.8, 1))


FAST = StudyParams(T=10.0, dt=0.01)


def test_study_trivial_fast_drift():
    h0, h1 = coupled_study(_zero_fast(), [1.0], [0.2, 0.1], 3, params=FAST)
    assert np.all(h0.distances < 1e-12) and np.all(h1.distances < 1e-12)


def test_study_affine_residual_at_floor():
    h0, h1 = coupled_study(_affine(), [1.0], [0.2, 0.1, 0.05], 3, params=FAST)
    assert np.all(h1.distances < 1e-12)
    assert np.all(h0.distances < 1e-12)


def test_study_parallel_matches_serial():
    sys = example1()
    a = coupled_study(sys, [1.0], [0.2, 0.1], 4, 11, FAST, workers=1)
    b = coupled_study(sys, [1.0], [0.2, 0.1], 4, 11, FAST, workers=2)
    np.testing.assert_array_equal(a[0].distances, b[0].distances)
    np.testing.assert_array_equal(a[1].distances, b[1].distances)
    assert a[0].seeds == [11, 12, 13, 14]


def test_study_example1_ordering():
    sys = example1()
    d0, d1 = coupled_realization(sys, [1.0], [0.2, 0.1, 0.05], 3, FAST)
    assert np.all(np.diff(d0) < 0) and np.all(np.diff(d1) < 0)
    assert np.all(d1 < d0)


def test_study_rejects_bad_epsilons():
    with pytest.raises(ConfigurationError):
        coupled_study(example1(), [1.0], [0.1, 0.1], 3, params=FAST)
    with pytest.raises(ConfigurationError):
        coupled_study(example1(), [1.0], [0.1, -0.1], 3, params=FAST)
    with pytest.raises(ConfigurationError):
        coupled_study(example1(K=0.9), [1.0], [0.2, 0.1], 3, params=FAST)
