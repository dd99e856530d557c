import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from rbyhj.paths import (
    DrivingPath,
    brownian,
    deterministic,
    flatten,
    fractional_brownian,
    partition_indices,
    running_extrema,
    unflatten,
)


def test_zero_sigma_gives_zero_path():
    assert np.all(brownian(1.0, 64, 0.0, seed=3).values == 0.0)


def test_same_seed_same_path():
    a, b = brownian(1.0, 128, 1.0, seed=42), brownian(1.0, 128, 1.0, seed=42)
    assert np.array_equal(a.values, b.values)
    assert not np.array_equal(a.values, brownian(1.0, 128, 1.0, seed=43).values)
    f1, f2 = fractional_brownian(1.0, 64, 0.3, seed=42), fractional_brownian(1.0, 64, 0.3, seed=42)
    assert np.array_equal(f1.values, f2.values)


def _variance_check(samples, target):
    # sample variance within 5 standard errors; se of s^2 is about sqrt(2/N) var for Gaussians
    n = samples.size
    var = samples.var(ddof=1)
    assert abs(var - target) < 5 * target * np.sqrt(2.0 / (n - 1))


def test_brownian_terminal_variance():
    T, sigma = 2.0, 1.7
    ends = np.array([brownian(T, 8, sigma, seed=s).values[-1] for s in range(10_000)]) / sigma
    _variance_check(ends, T)


@pytest.mark.parametrize("H", [0.25, 0.5, 0.75])
def test_fbm_terminal_variance(H):
    T = 1.5
    ends = np.array([fractional_brownian(T, 16, H, seed=s).values[-1] for s in range(10_000)])
    _variance_check(ends, T ** (2 * H))


def test_fbm_half_matches_brownian_covariance():
    T, n, N = 1.0, 8, 10_000
    fb = np.array([fractional_brownian(T, n, 0.5, seed=s).values[1:] for s in range(N)])
    t = np.linspace(0, T, n + 1)[1:]
    target = np.minimum(t[:, None], t[None, :])
    est = np.cov(fb, rowvar=False)
    # each entry has standard error below sqrt(2/N) * T
    assert np.max(np.abs(est - target)) < 5 * np.sqrt(2.0 / N) * T


def test_fbm_errors():
    with pytest.raises(ValueError):
        fractional_brownian(1.0, 8, 1.0)
    with pytest.raises(ValueError):
        fractional_brownian(1.0, 5000, 0.5)


def test_deterministic_kinds():
    assert np.all(deterministic("zero", 1.0, 10).values == 0)
    lin = deterministic("linear", 2.0, 10, c=1.0)
    np.testing.assert_array_equal(lin.values, lin.times)
    s = deterministic("sine", 3.0, 30, amplitude=0.3, omega=2.0)
    np.testing.assert_allclose(s.values, 0.3 * np.sin(2 * s.times), atol=1e-15)
    with pytest.raises(ValueError):
        deterministic("square", 1.0, 10)


def test_running_extrema_examples():
    inc = running_extrema(deterministic("linear", 1.0, 20))
    assert np.all(inc.running_min == 0.0)
    st_ = running_extrema(deterministic("sine", 2 * np.pi, 400))
    assert st_.running_max[-1] == pytest.approx(1.0, abs=1e-12)
    assert st_.running_min[-1] == pytest.approx(-1.0, abs=1e-12)
    z = running_extrema(deterministic("zero", 1.0, 5))
    assert np.all(z.running_max == 0) and np.all(z.running_min == 0)


def test_path_validation():
    with pytest.raises(ValueError):
        DrivingPath([0.0, 1.0], [1.0, 2.0])
    with pytest.raises(ValueError):
        DrivingPath([0.0, 1.0, 3.0], [0.0, 1.0, 2.0])
    with pytest.raises(ValueError):
        DrivingPath([0.0, 1.0], [0.0, 1.0], jumps=((0, 1.0),))


def test_csv_round_trip_with_jumps():
    p = DrivingPath(np.linspace(0, 1, 5), [0.0, 0.1, -0.2, 0.3, 0.0], jumps=((2, 0.5), (4, -1.0)))
    assert p.to_csv().splitlines()[0] == "t,xi"
    assert p.jumps_csv().splitlines()[0] == "t_index,delta"
    back = DrivingPath.from_csv(p.to_csv(), p.jumps_csv())
    np.testing.assert_allclose(back.values, p.values, atol=1e-15)
    assert back.jumps == p.jumps


def test_partitions():
    p = brownian(1.0, 16, seed=0)
    np.testing.assert_array_equal(partition_indices(p, 4), [0, 4, 8, 12, 16])
    assert partition_indices(p).size == 17
    with pytest.raises(ValueError):
        partition_indices(p, 5)
    with pytest.raises(ValueError):
        partition_indices(p, [0, 5, 3, 16])


@st.composite
def jump_paths(draw):
    n = draw(st.integers(1, 30))
    inc = draw(st.lists(st.floats(-2, 2), min_size=n, max_size=n))
    idx = draw(st.lists(st.integers(1, n), unique=True, max_size=n))
    sizes = draw(st.lists(st.floats(-3, 3), min_size=len(idx), max_size=len(idx)))
    vals = np.concatenate(([0.0], np.cumsum(inc)))
    return DrivingPath(np.linspace(0, 1, n + 1), vals, tuple(zip(idx, sizes)))


@pytest.mark.property
@given(jump_paths())
def test_running_extrema_bracket_values(p):
    s = running_extrema(p)
    v = p.total()
    assert np.all(v - s.running_min >= 0) and np.all(s.running_max - v >= 0)
    assert np.all(np.diff(s.running_max) >= 0) and np.all(np.diff(s.running_min) <= 0)


@pytest.mark.property
@given(jump_paths())
def test_flatten_round_trip(p):
    flat, where = flatten(p)
    assert flat.jumps == ()
    # traversing the inserted cell moves the flat path by exactly the jump
    for i, d in p.jumps:
        assert flat.values[where[i]] - flat.values[where[i] - 1] == pytest.approx(d, abs=1e-12)
    np.testing.assert_allclose(flat.values[where], p.total(), atol=1e-9)
    back = unflatten(flat, where, p.T)
    np.testing.assert_allclose(back.values, p.values, atol=1e-9)
    assert [i for i, _ in back.jumps] == [i for i, _ in p.jumps]
    np.testing.assert_allclose([d for _, d in back.jumps], [d for _, d in p.jumps], atol=1e-12)
