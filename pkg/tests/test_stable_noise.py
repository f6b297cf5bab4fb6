import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats

from slowmanifolds import StableSpec, generate_path, sample_standard_stable, shift_path
from slowmanifolds.analysis import ks_distance
from slowmanifolds.errors import AlignmentError, ConfigurationError, DomainError, SpanError
from slowmanifolds.stable_noise import (dump_path, load_path, rescale_path, stable_cells,
                                        zero_path)

from conftest import DATA

N = 100_000


def uniforms(n, seed):
    rng = np.random.default_rng(seed)
    return rng.uniform(size=n), rng.uniform(size=n)


def test_alpha_two_is_normal_with_variance_two():
    x = sample_standard_stable(2.0, *uniforms(N, 1))
    se = 2.0 * np.sqrt(2.0 / N)  # standard error of a normal sample variance
    assert abs(x.var() - 2.0) < 3 * se


def test_alpha_two_matches_gaussian_law():
    x = sample_standard_stable(2.0, *uniforms(20_000, 2))
    assert stats.kstest(x / np.sqrt(2.0), "norm").pvalue > 0.01


def test_symmetric_median():
    x = sample_standard_stable(1.5, *uniforms(N, 3))
    assert abs(np.median(x)) < 0.02


def test_characteristic_function_at_one():
    x = sample_standard_stable(1.8, *uniforms(N, 4))
    c = np.cos(x)
    assert abs(c.mean() - np.exp(-1.0)) < 3 * c.std() / np.sqrt(N)


def test_agrees_with_scipy_levy_stable_law():
    x = sample_standard_stable(1.7, *uniforms(50_000, 5))
    # scipy's S1 parameterisation with beta = 0 and unit scale has cf exp(-|u|^alpha)
    ref = stats.levy_stable.rvs(1.7, 0.0, size=50_000, random_state=6)
    assert ks_distance(x, ref).passed


def test_deterministic_given_uniforms():
    assert sample_standard_stable(1.3, 0.2, 0.7) == sample_standard_stable(1.3, 0.2, 0.7)


@pytest.mark.parametrize("alpha", [1.0, 0.5, 2.1, -1.0])
def test_alpha_out_of_range(alpha):
    with pytest.raises(DomainError):
        sample_standard_stable(alpha, 0.3, 0.4)
    with pytest.raises(DomainError):
        StableSpec((alpha,))


@pytest.mark.parametrize("u", [(0.0, 0.5), (0.5, 1.0), (1.2, 0.5)])
def test_uniforms_must_be_open(u):
    with pytest.raises(DomainError):
        sample_standard_stable(1.5, *u)


def test_one_cell_increment_variance():
    spec = StableSpec.uniform(2.0, 1)
    inc = np.array([generate_path(spec, 0.0, 0.01, 0.01, s).increments[0, 0] for s in range(N)])
    se = 0.02 * np.sqrt(2.0 / N)
    assert abs(inc.var() - 0.02) < 3 * se


def test_degenerate_span():
    p = generate_path(StableSpec.uniform(1.5, 2), 0.0, 0.0, 0.1, 1)
    assert p.increments.shape == (0, 2)
    assert np.all(p.values() == 0)


def test_value_at_origin_is_exactly_zero():
    p = generate_path(StableSpec((1.5, 1.8)), -1.0, 2.0, 0.01, 9)
    assert np.all(p.value_at(0.0) == 0.0)
    assert p.n_cells == 300
    assert p.values().shape == (301, 2)


def test_non_integral_span_rejected():
    with pytest.raises(ConfigurationError):
        generate_path(StableSpec((1.5,)), -1.0, 0.25, 0.1, 0)
    with pytest.raises(ConfigurationError):
        generate_path(StableSpec((1.5,)), 0.5, 1.0, 0.1, 0)


def test_reproducible():
    spec = StableSpec((1.3, 1.9))
    a = generate_path(spec, -2.0, 3.0, 0.01, 123)
    b = generate_path(spec, -2.0, 3.0, 0.01, 123)
    assert np.array_equal(a.increments, b.increments)
    c = generate_path(spec, -2.0, 3.0, 0.01, 124)
    assert not np.array_equal(a.increments, c.increments)


def test_nested_spans_share_cells():
    spec = StableSpec((1.6,))
    a = generate_path(spec, -1.0, 1.0, 0.01, 5)
    b = generate_path(spec, -3.0, 2.0, 0.01, 5)
    assert np.array_equal(a.cell_slice(-1.0, 1.0), b.cell_slice(-1.0, 1.0))


def test_components_and_sides_independent_streams():
    x = stable_cells(1, 0, 0, 50, 1.5)
    assert not np.array_equal(x, stable_cells(1, 1, 0, 50, 1.5))
    assert not np.array_equal(x, stable_cells(1, 0, 1, 50, 1.5))


def test_disjoint_cells_uncorrelated():
    n = 10_000
    spec = StableSpec.uniform(2.0, 1)
    inc = np.array([generate_path(spec, -0.02, 0.02, 0.01, s).increments[:, 0] for s in range(n)])
    r = np.corrcoef(inc.T)
    off = r[~np.eye(4, dtype=bool)]
    assert np.all(np.abs(off) < 3 / np.sqrt(n))


def test_shift_by_zero_is_identity():
    p = generate_path(StableSpec((1.5,)), -1.0, 1.0, 0.1, 2)
    q = shift_path(p, 0.0)
    assert np.array_equal(p.increments, q.increments)
    assert (q.n_neg, q.n_pos) == (p.n_neg, p.n_pos)


def test_shift_rebases_to_zero():
    p = generate_path(StableSpec((1.5,)), -1.0, 1.0, 0.1, 2)
    q = shift_path(p, 0.3)
    assert np.all(q.value_at(0.0) == 0)
    np.testing.assert_allclose(q.value_at(0.4), p.value_at(0.7) - p.value_at(0.3), atol=1e-14)
    assert q.t_min == pytest.approx(-1.3) and q.t_max == pytest.approx(0.7)


@given(st.integers(-10, 10), st.integers(-10, 10))
def test_flow_law(i, j):
    p = generate_path(StableSpec((1.7, 1.2)), -2.0, 2.0, 0.1, 11)
    s, t = 0.1 * i, 0.1 * j
    a = shift_path(shift_path(p, t), s)
    b = shift_path(p, s + t)
    assert (a.n_neg, a.n_pos) == (b.n_neg, b.n_pos)
    assert np.array_equal(a.values(), b.values())


def test_shift_of_zero_path():
    z = zero_path(2, -1.0, 1.0, 0.1)
    assert np.all(shift_path(z, 0.5).increments == 0)


def test_shift_errors():
    p = generate_path(StableSpec((1.5,)), -1.0, 1.0, 0.1, 2)
    with pytest.raises(AlignmentError):
        shift_path(p, 0.05)
    with pytest.raises(SpanError):
        shift_path(p, 1.5)


def test_increments_immutable():
    p = generate_path(StableSpec((1.5,)), 0.0, 1.0, 0.1, 2)
    with pytest.raises(ValueError):
        p.increments[0, 0] = 1.0


def test_rescale_path_grid_and_scale():
    p = generate_path(StableSpec((1.5,)), -1.0, 1.0, 0.01, 2)
    q = rescale_path(p, 0.1)
    assert q.dt == pytest.approx(0.1)
    np.testing.assert_allclose(q.increments, p.increments * 0.1 ** (-1 / 1.5))


@pytest.mark.parametrize("c,alpha", [(2.0, 1.5), (2.0, 1.8), (4.0, 1.5), (4.0, 1.8)])
def test_self_similarity(c, alpha):
    n = 10_000
    spec = StableSpec.uniform(alpha, 1)
    lt = np.array([generate_path(spec, 0.0, 1.0, 0.05, i).value_at(1.0)[0] for i in range(n)])
    lct = np.array([generate_path(spec, 0.0, c, 0.05, n + i).value_at(c)[0] for i in range(n)])
    assert ks_distance(c ** (1 / alpha) * lt, lct).passed


def test_dump_roundtrip(tmp_path):
    p = generate_path(StableSpec((1.5, 1.9)), -0.3, 0.5, 0.01, 77)
    dump_path(p, tmp_path / "p.bin")
    q = load_path(tmp_path / "p.bin")
    assert np.array_equal(p.increments, q.increments)
    assert (q.dt, q.n_neg, q.n_pos, q.alpha, q.seed) == (p.dt, p.n_neg, p.n_pos, p.alpha, p.seed)
    raw = (tmp_path / "p.bin").read_bytes()
    assert len(raw) == 8 + 4 + 16 + 40 + 80 * 2 * 8


def test_dump_rejects_garbage(tmp_path):
    (tmp_path / "x.bin").write_bytes(b"NOTAPATH" + bytes(40))
    with pytest.raises(ConfigurationError):
        load_path(tmp_path / "x.bin")


def test_golden_path():
    from make_golden import golden_path
    ref = load_path(DATA / "golden_path.bin")
    new = golden_path()
    assert np.array_equal(ref.increments, new.increments)
    assert ref.alpha == new.alpha and ref.seed == new.seed
