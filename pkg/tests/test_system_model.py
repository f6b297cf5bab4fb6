from fractions import Fraction as Fr

import numpy as np
import pytest
from hypothesis import assume, given
from hypothesis import strategies as st
from scipy.linalg import expm

from slowmanifolds import SlowFastSystem, StableSpec
from slowmanifolds.errors import ContractionError, DomainError, ShapeError
from slowmanifolds.examples import example1
from slowmanifolds.system_model import (backward_growth, contraction_rate, epsilon_threshold,
                                        estimate_lipschitz, lipschitz_bound_h, log_norm,
                                        require_contraction, tracking_rate, validate_hypotheses)

ARGS = dict(K=1 / 3, gamma=1 / 3, gamma_s=1.0, gamma_f=-1.0)


def linear(S, F, K=0.5, eps=0.01, **kw):
    n1, n2 = np.shape(S)[0], np.shape(F)[0]
    return SlowFastSystem(S=S, F=F, g1=lambda x, y: np.zeros(n1), g2=lambda x, y: np.zeros(n2),
                          K=K, epsilon=eps, sigma=0.0, noise=StableSpec.uniform(1.8, n2), **kw)


def test_example1_hypotheses():
    rep = validate_hypotheses(example1(), gamma=1 / 3)
    assert rep.gamma_s == pytest.approx(1.0) and rep.gamma_f == pytest.approx(-1.0)
    assert rep.a1_ok and rep.a3_ok and rep.contraction_ok


def test_diagonal_case():
    rep = validate_hypotheses(linear([[0.0]], -np.eye(2)), gamma=0.25)
    assert rep.gamma_f == pytest.approx(-1.0)
    assert rep.a3_ok


def test_non_normal_fast_matrix_fails_closed():
    F = [[-1.0, 10.0], [0.0, -1.0]]
    assert np.all(np.linalg.eigvals(F).real < 0)
    assert log_norm(F) == pytest.approx(4.0)
    rep = validate_hypotheses(linear([[1.0]], F))
    assert not rep.a1_ok and not rep.contraction_ok


def test_declared_eigen_rates_flagged_uncertified():
    rep = validate_hypotheses(linear([[1.0]], [[-1.0, 10.0], [0.0, -1.0]]), declared_rates=(1.0, -1.0))
    assert not rep.certified and not rep.a1_ok
    assert rep.notes


def test_shape_errors():
    with pytest.raises(ShapeError):
        linear([[1.0, 0.0]], [[-1.0]])
    with pytest.raises(ShapeError):
        SlowFastSystem(S=[[1.0]], F=[[-1.0]], g1=lambda x, y: np.zeros(1), g2=lambda x, y: np.zeros(1),
                       K=0.5, epsilon=0.1, sigma=0.0, noise=StableSpec.uniform(1.8, 2))


def test_nonlinearity_must_vanish_at_origin():
    with pytest.raises(DomainError):
        SlowFastSystem(S=[[1.0]], F=[[-1.0]], g1=lambda x, y: np.ones(1), g2=lambda x, y: np.zeros(1),
                       K=0.5, epsilon=0.1, sigma=0.0, noise=StableSpec.uniform(1.8, 1))


def test_contraction_rate_values():
    assert contraction_rate(0.0, 0.4, 0.5, 1.0, -1.0) == pytest.approx(0.8)
    exact = Fr(1, 100) * Fr(1, 3) / (Fr(1, 3) + Fr(1, 100)) + Fr(1, 2)
    assert contraction_rate(0.01, **ARGS) == pytest.approx(float(exact), abs=1e-14)
    assert float(exact) == pytest.approx(0.509708, abs=1e-6)


def _rho_bar_exact(eps, K, g, gs, gf):
    a, b = g + eps * gs, g + gf
    rho = eps * K / a - K / b
    bracket = 1 - K * (eps / a - 1 / b)
    return rho - eps * K * K / (a * b * bracket)


def test_tracking_rate_oracle():
    exact = _rho_bar_exact(Fr(1, 100), Fr(1, 3), Fr(1, 3), Fr(1), Fr(-1))
    val = tracking_rate(0.01, **ARGS)
    assert val == pytest.approx(float(exact), abs=1e-14)
    assert 0 < val < 1
    # with gamma + gamma_f < 0 the subtracted term is negative, so rho_bar sits above rho
    assert val > contraction_rate(0.01, **ARGS)


def test_tracking_rate_at_zero():
    assert tracking_rate(0.0, **ARGS) == contraction_rate(0.0, **ARGS) == pytest.approx(0.5)


@pytest.mark.parametrize("bad", [dict(gamma=0.0), dict(gamma=1.5), dict(gamma_s=-100.0)])
def test_rate_domain_errors(bad):
    kw = dict(ARGS, **bad)
    with pytest.raises(DomainError):
        contraction_rate(0.01, **kw)
    with pytest.raises(DomainError):
        tracking_rate(0.01, **kw)


def test_lipschitz_bound_values():
    # rho = 0.5 exactly at eps = 0
    assert lipschitz_bound_h(0.0, **ARGS) == pytest.approx(1.0)
    assert lipschitz_bound_h(0.0, 1e-9, 1 / 3, 1.0, -1.0) < 1e-8
    with pytest.raises(ContractionError):
        lipschitz_bound_h(1.0, 0.8, 0.1, 1.0, -1.0)


@given(st.floats(0.01, 0.9), st.floats(0.01, 0.9))
def test_lipschitz_bound_critical_identity(k_frac, g_frac):
    gf = -1.0
    K = k_frac
    gamma = g_frac * (-gf - K)
    assume(gamma > 1e-6)
    assert lipschitz_bound_h(0.0, K, gamma, 1.0, gf) == pytest.approx(-K / (gamma + gf + K), rel=1e-12)


@given(st.floats(0.0, 1.0), st.floats(1e-4, 1.0))
def test_contraction_rate_increasing(e1, de):
    r1 = contraction_rate(e1, **ARGS)
    r2 = contraction_rate(e1 + de, **ARGS)
    assert r2 > r1


def test_epsilon_threshold_unbounded_range():
    # rho(eps) < K/gamma_s + rho(0) = 5/6 for every eps, so 0.9 is never reached
    assert epsilon_threshold(rho_max=0.9, **ARGS) == float("inf")
    sup = contraction_rate(1e12, **ARGS)
    assert sup == pytest.approx(1 / 3 + 0.5, rel=1e-9)


@given(st.floats(0.51, 0.83))
def test_epsilon_threshold_inverts_rate(rho_max):
    eps = epsilon_threshold(rho_max=rho_max, **ARGS)
    assert contraction_rate(eps, **ARGS) == pytest.approx(rho_max, rel=1e-10)


def test_epsilon_threshold_near_rho0():
    assert epsilon_threshold(rho_max=0.5 + 1e-9, **ARGS) < 1e-7
    with pytest.raises(DomainError):
        epsilon_threshold(rho_max=0.4, **ARGS)


@given(st.lists(st.floats(-3, 3), min_size=4, max_size=4))
def test_log_norm_soundness(entries):
    F = np.array(entries).reshape(2, 2) - 4 * np.eye(2)
    sys = linear([[1.0]], F)
    rep = validate_hypotheses(sys)
    if not rep.a1_ok:
        return
    rng = np.random.default_rng(0)
    ys = rng.normal(size=(100, 2))
    for t in (0.1, 1.0, 10.0):
        E = expm(F * t)
        ratio = np.linalg.norm(ys @ E.T, axis=1) / np.linalg.norm(ys, axis=1)
        assert np.all(ratio <= np.exp(rep.gamma_f * t) * (1 + 1e-9))


@given(st.lists(st.floats(-3, 3), min_size=4, max_size=4))
def test_backward_growth_soundness(entries):
    S = np.array(entries).reshape(2, 2)
    g = backward_growth(S)
    rng = np.random.default_rng(1)
    xs = rng.normal(size=(50, 2))
    for t in (-0.1, -1.0, -3.0):
        ratio = np.linalg.norm(xs @ expm(S * t).T, axis=1) / np.linalg.norm(xs, axis=1)
        assert np.all(ratio <= np.exp(g * t) * (1 + 1e-9))


def test_report_invariants_and_require():
    rep = validate_hypotheses(example1(K=0.9))
    assert not rep.contraction_ok
    with pytest.raises(ContractionError):
        require_contraction(example1(K=0.9))
    ok = require_contraction(example1())
    assert ok.a3_ok and ok.K < -ok.gamma_f and 0 < ok.rho_eps < 1


def test_estimate_lipschitz_is_a_lower_bound():
    est = estimate_lipschitz(example1(), radius=1.0, n=300)
    assert 0 < est <= 1 / 3 + 1e-3
