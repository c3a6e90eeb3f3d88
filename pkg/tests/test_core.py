import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from niconsensus import catalog
from niconsensus.core import (
    DimensionError,
    SystemModel,
    TestSignal,
    Trajectory,
    evaluate_output,
    fd_jacobian,
    output_rate,
)

ALL_ENTRIES = [
    catalog.make_single_integrator(),
    catalog.make_single_integrator(3),
    catalog.make_double_integrator(),
    *catalog.example_plants(),
    *catalog.example_controllers(),
    catalog.make_linear_state_space([[-1.0, 2.0], [0.0, -3.0]], [[1.0], [1.0]], [[1.0, 0.5]]),
]


def test_evaluate_output_examples():
    plant = catalog.make_cubic_integrator(1.0).system
    assert evaluate_output(plant, [5.0], [2.0]) == pytest.approx([5.0])
    c1 = catalog.example_controllers()[0].system
    assert evaluate_output(c1, [3.0], [1.0]) == pytest.approx([2.0])
    for e in ALL_ENTRIES:
        s = e.system
        y = evaluate_output(s, np.zeros(s.state_dim), np.zeros(s.io_dim))
        np.testing.assert_array_equal(y, np.zeros(s.io_dim))


def test_evaluate_output_rejects_bad_dims():
    s = catalog.make_double_integrator().system
    with pytest.raises(DimensionError):
        evaluate_output(s, [1.0], [0.0])
    with pytest.raises(DimensionError):
        evaluate_output(s, [1.0, 2.0], [0.0, 1.0])


def test_output_rate_examples():
    c1 = catalog.example_controllers()[0].system
    assert output_rate(c1, [1.0], [0.0]) == pytest.approx([-8.0])
    di = catalog.make_double_integrator().system
    assert output_rate(di, [0.0, 4.0], [0.0]) == pytest.approx([4.0])
    # equilibrium of controller 1 at u = 8 is x = 1
    assert output_rate(c1, [1.0], [8.0]) == pytest.approx([0.0], abs=1e-14)


@pytest.mark.parametrize("entry", ALL_ENTRIES, ids=lambda e: e.system.label)
def test_jacobian_and_fd_output_rate_agree(entry):
    s = entry.system
    fd_only = SystemModel(s.state_dim, s.io_dim, s.dynamics, s.output_map, s.feedthrough, None, "fd")
    rng = np.random.default_rng(7)
    for _ in range(100):
        x = rng.uniform(-2, 2, s.state_dim)
        u = rng.uniform(-2, 2, s.io_dim)
        exact = output_rate(s, x, u)
        approx = output_rate(fd_only, x, u)
        np.testing.assert_allclose(approx, exact, rtol=1e-4, atol=1e-4 * max(1.0, np.abs(exact).max()))


def test_nonsymmetric_feedthrough_rejected():
    with pytest.raises(ValueError, match="symmetric"):
        SystemModel(2, 2, lambda x, u: u, lambda x: x, [[0.0, 1.0], [0.0, 0.0]])


def test_wrong_jacobian_rejected():
    with pytest.raises(ValueError, match="finite differences"):
        SystemModel(1, 1, lambda x, u: u, lambda x: x**2, output_jacobian=lambda x: np.array([[1.0]]))


def test_wrong_dynamics_shape_rejected():
    with pytest.raises(DimensionError):
        SystemModel(2, 1, lambda x, u: u, lambda x: x[:1])


def test_fd_jacobian_matches_linear_map():
    M = np.array([[1.0, 2.0], [3.0, -4.0], [0.5, 0.0]])
    np.testing.assert_allclose(fd_jacobian(lambda x: M @ x, np.array([0.3, -1.0]), 3), M, atol=1e-9)


@pytest.mark.parametrize("kind", ["constant", "step", "sinusoid", "smoothed-random"])
def test_signal_is_deterministic(kind):
    a = TestSignal(kind, io_dim=2, amplitude=0.7, frequency=1.3, offset=0.1, seed=42)
    b = TestSignal(kind, io_dim=2, amplitude=0.7, frequency=1.3, offset=0.1, seed=42)
    for t in np.linspace(0, 80, 57):
        assert np.array_equal(a(t), b(t))


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), t=st.floats(0.0, 200.0))
def test_smoothed_random_is_c1(seed, t):
    sig = TestSignal("smoothed-random", io_dim=1, frequency=0.8, seed=seed, horizon=20.0)
    h = 1e-5
    fd = (sig(t + h) - sig(max(t - h, 0.0))) / (t + h - max(t - h, 0.0))
    np.testing.assert_allclose(fd, sig.derivative(t), atol=1e-4)
    # no jump anywhere, including across the period boundary
    assert np.all(np.abs(sig(t + 1e-9) - sig(t)) < 1e-6)


def test_signal_kinds():
    assert TestSignal("constant", amplitude=2.0, offset=1.0)(5.0) == pytest.approx([3.0])
    step = TestSignal("step", amplitude=1.0, step_time=2.0)
    assert step(1.9)[0] == 0.0 and step(2.0)[0] == 1.0
    sin = TestSignal("sinusoid", amplitude=1.0, frequency=0.25)
    assert sin(1.0) == pytest.approx([1.0])
    with pytest.raises(ValueError):
        TestSignal("chirp")


def test_trajectory_length_and_time_checks():
    z = np.zeros((3, 1))
    with pytest.raises(ValueError, match="strictly increasing"):
        Trajectory(np.array([0.0, 1.0, 1.0]), z, z, z, z, np.zeros((1, 1)))
    with pytest.raises(ValueError, match="length"):
        Trajectory(np.array([0.0, 1.0]), z, z, z, z, np.zeros((1, 1)))


def test_storage_fd_gradient_fallback():
    from niconsensus.core import StorageFunction

    V = StorageFunction(lambda x: float(x[0] ** 2 + 3 * x[0] * x[1]))
    np.testing.assert_allclose(V.grad([1.0, 2.0]), [8.0, 3.0], rtol=1e-8)
