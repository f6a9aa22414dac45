import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from replicator_swarm.core import build_payoff_example1, build_payoff_example2, controlled_rhs, replicator_rhs
from replicator_swarm.errors import DivergenceError, ParameterError, RangeError
from replicator_swarm.odeint import (
    Trajectory,
    integrate,
    on_simplex,
    peak_to_peak,
    resample,
    sample,
    write_trajectory,
)
from replicator_swarm.tableio import read_table

from conftest import EX1, payoff_and_point

K1 = build_payoff_example1(**EX1)
K2 = build_payoff_example2(0.01)
Y0_1 = [0.2, 0.2, 0.6]
Y0_2 = [0.1, 0.2, 0.4, 0.3]


def field(k):
    return lambda t, y: replicator_rhs(k, y)


def observed_order(k, y0, dt=0.1, t_end=20.0):
    base = integrate(field(k), y0, dt / 8, t_end).states[-1]
    e1 = np.abs(integrate(field(k), y0, dt, t_end).states[-1] - base).max()
    e2 = np.abs(integrate(field(k), y0, dt / 2, t_end).states[-1] - base).max()
    return np.log2(e1 / e2)


def test_grid_is_uniform_and_includes_end():
    tr = integrate(field(K1), Y0_1, 0.01, 1.0)
    assert len(tr) == 101
    assert tr.times[-1] == pytest.approx(1.0)
    np.testing.assert_allclose(np.diff(tr.times), 0.01, atol=1e-15)


def test_zero_field_gives_constant_trajectory():
    alpha = np.ones((3, 3)) - np.eye(3)
    y0 = np.array(Y0_1)
    tr = integrate(lambda t, y: controlled_rhs(alpha, y0, y), y0, 0.01, 5.0)
    assert np.all(tr.states == y0)


def test_example2_uniform_start_stays_put():
    tr = integrate(field(K2), np.full(4, 0.25), 0.01, 100.0)
    assert np.max(np.abs(tr.states - 0.25)) <= 1e-12


@pytest.mark.parametrize("k,y0", [(K1, Y0_1), (K2, Y0_2)])
def test_simplex_drift_over_reference_horizon(k, y0):
    tr = integrate(field(k), y0, 0.01, 100.0)
    assert tr.max_drift <= 1e-9
    assert on_simplex(tr)


def test_example2_reference_oscillates():
    tr = integrate(field(K2), Y0_2, 0.01, 100.0)
    amp = peak_to_peak(tr, 0)
    assert amp.size >= 3
    # frozen from a dt/2 cross-check run
    half = integrate(field(K2), Y0_2, 0.005, 100.0)
    np.testing.assert_allclose(amp, peak_to_peak(half, 0)[: amp.size], atol=1e-6)


@pytest.mark.parametrize("k,y0", [(K1, Y0_1), (K2, Y0_2)])
def test_convergence_order(k, y0):
    assert observed_order(k, y0) >= 3.9


def test_divergence_reports_time():
    def blowup(t, y):
        return np.array([np.inf, -np.inf]) if t > 0.05 else np.zeros(2)

    with pytest.raises(DivergenceError) as err:
        integrate(blowup, [0.5, 0.5], 0.01, 1.0)
    assert 0.05 < err.value.t <= 0.08


def test_renormalisation_guard_counts_and_clamps():
    # a field that leaks mass; the guard must pull states back onto the simplex
    tr = integrate(lambda t, y: np.array([-1.0, 0.0]), [0.5, 0.5], 0.1, 1.0)
    assert tr.renormalizations > 0
    assert on_simplex(tr)
    assert tr.max_drift > 1e-12


def test_bad_arguments():
    with pytest.raises(ParameterError):
        integrate(field(K1), Y0_1, 0.0, 1.0)
    with pytest.raises(ParameterError):
        integrate(field(K1), Y0_1, 0.1, 0.01)
    with pytest.raises(ParameterError):
        integrate(field(K1), [0.5, 0.6, 0.1], 0.1, 1.0)


def test_sample_exact_on_grid_and_linear_between():
    tr = integrate(field(K2), Y0_2, 0.01, 2.0)
    for i in (0, 37, 200):
        assert np.array_equal(sample(tr, tr.times[i]), tr.states[i])
    mid = 0.5 * (tr.times[10] + tr.times[11])
    np.testing.assert_allclose(sample(tr, mid), 0.5 * (tr.states[10] + tr.states[11]), atol=1e-15)


def test_sample_out_of_range():
    tr = integrate(field(K2), Y0_2, 0.01, 1.0)
    with pytest.raises(RangeError):
        sample(tr, -0.01)
    with pytest.raises(RangeError):
        sample(tr, 1.5)
    with pytest.raises(RangeError):
        resample(tr, [0.5, 2.0])


@given(payoff_and_point(), st.floats(0, 1))
def test_interpolated_samples_stay_on_simplex(kp, u):
    k, y0 = kp
    tr = integrate(lambda t, y: replicator_rhs(k, y), y0, 0.05, 1.0)
    y = sample(tr, u * tr.t_end)
    assert abs(y.sum() - 1.0) <= 1e-9
    assert y.min() >= -1e-9


def test_trajectory_invariants():
    with pytest.raises(ParameterError):
        Trajectory([0.0, 0.0], [[1, 0], [1, 0]])
    with pytest.raises(ParameterError):
        Trajectory([0.0, 1.0], [[1, 0]])


def test_peak_to_peak_on_sine():
    t = np.linspace(0, 20 * np.pi, 20001)
    y = np.column_stack([0.5 + 0.2 * np.sin(t), 0.5 - 0.2 * np.sin(t)])
    amp = peak_to_peak(Trajectory(t, y), 0)
    np.testing.assert_allclose(amp, 0.4, atol=1e-6)


def test_write_trajectory_round_trip(tmp_path):
    tr = integrate(field(K1), Y0_1, 0.1, 1.0, meta={"model": "example1"})
    path = tmp_path / "ref.csv"
    write_trajectory(tr, path, {"params": EX1})
    header, cols, data = read_table(path)
    assert header.startswith("model=example1")
    assert cols == ["t", "Y_1", "Y_2", "Y_3"]
    assert np.array_equal(data[:, 1:], tr.states)
