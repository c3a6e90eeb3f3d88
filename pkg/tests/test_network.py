import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from niconsensus import catalog
from niconsensus.graph import Topology
from niconsensus.network import (
    AssemblyError,
    NetworkAssembly,
    PlantBank,
    SingleLoop,
    closed_loop_rhs,
    composite_storage,
    consensus_metric,
    edge_coordinate_storage,
    single_loop_rhs,
    single_loop_storage,
)
from niconsensus.sim import IntegratorConfig, integrate_closed_loop


def example_W_hat(xp, xc):
    """Expanded composite storage of the three-plant example, by hand."""
    d1, d2 = xp[0] - xp[1], xp[1] - xp[2]
    c1, c2 = xc
    return (2.5 * c1**2 + 0.75 * c1**4 + 4 * c2**2 + 0.5 * c2**4
            - d1 * c1 - d2 * c2 + 0.5 * d1**2 + 0.5 * d2**2)


@pytest.fixture(scope="module")
def loop1():
    return SingleLoop.from_entries(catalog.make_cubic_integrator(1.0), catalog.example_controllers()[0])


def test_closed_loop_rhs_at_example_initial_condition(example_assembly):
    sig = example_assembly.signals(np.array([30.0, 2.0, -8.0]), np.zeros(2))
    np.testing.assert_array_equal(sig.U_c, [28.0, 10.0])
    np.testing.assert_array_equal(sig.Y_c, [-28.0, -10.0])
    np.testing.assert_array_equal(sig.U_p, [-28.0, 18.0, 10.0])
    dXp, dXc = closed_loop_rhs(example_assembly, [30.0, 2.0, -8.0], [0.0, 0.0])
    np.testing.assert_array_equal(dXp, [-21952.0, 17496.0, 2000.0])
    np.testing.assert_array_equal(dXc, [28.0, 10.0])


def test_closed_loop_rhs_fixed_points(example_assembly):
    for X_p in ([0.0, 0.0, 0.0], [4.2, 4.2, 4.2], [-3.0, -3.0, -3.0]):
        dXp, dXc = closed_loop_rhs(example_assembly, X_p, [0.0, 0.0])
        assert not np.any(dXp) and not np.any(dXc)


def test_closed_loop_rhs_dimension_error(example_assembly):
    with pytest.raises(AssemblyError):
        closed_loop_rhs(example_assembly, [1.0, 2.0], [0.0, 0.0])


def test_composite_storage_examples(example_assembly):
    assert composite_storage(example_assembly, np.zeros(3), np.zeros(2)) == 0.0
    assert composite_storage(example_assembly, [1.0, 0.0, 0.0], [0.0, 0.0]) == pytest.approx(0.5)
    rng = np.random.default_rng(3)
    for _ in range(200):
        xp, xc = rng.uniform(-5, 5, 3), rng.uniform(-2, 2, 2)
        assert composite_storage(example_assembly, xp, xc) == pytest.approx(example_W_hat(xp, xc), rel=1e-12, abs=1e-12)


def test_edge_coordinate_storage(example_assembly):
    W = edge_coordinate_storage(example_assembly)
    rng = np.random.default_rng(4)
    for _ in range(50):
        z = rng.uniform(-5, 5, 4)
        # (x_hat1, x_hat2) = (1, 0) corresponds to X_p = (1, 0, 0) up to a shift
        xp = np.array([z[0] + z[1], z[1], 0.0])
        assert W(z) == pytest.approx(example_W_hat(xp, z[2:]), rel=1e-10, abs=1e-10)


def test_edge_coordinates_need_tree():
    topo = Topology(3, ((1, 2), (2, 3), (1, 3)))
    asm = NetworkAssembly.from_entries(topo, catalog.example_plants(), [catalog.example_controllers()[0]] * 3)
    with pytest.raises(AssemblyError, match="tree"):
        edge_coordinate_storage(asm)


def test_single_loop_examples(loop1):
    dx1, dx2 = single_loop_rhs(loop1, [2.0], [0.0])
    assert dx1 == pytest.approx([-8.0]) and dx2 == pytest.approx([2.0])
    d = single_loop_rhs(loop1, [0.0], [0.0])
    assert not np.any(d[0]) and not np.any(d[1])
    assert single_loop_storage(loop1, [0.0], [0.0]) == 0.0
    assert single_loop_storage(loop1, [1.0], [0.0]) == pytest.approx(0.5)
    assert single_loop_storage(loop1, [0.0], [1.0]) == pytest.approx(3.25)
    x1, x2 = 0.7, -1.1
    expected = 2.5 * x2**2 + 0.75 * x2**4 - x1 * x2 + 0.5 * x1**2
    assert single_loop_storage(loop1, [x1], [x2]) == pytest.approx(expected)


def test_consensus_metric_examples():
    assert consensus_metric([30.0, 2.0, -8.0], Topology.path(3)) == 38.0
    assert consensus_metric([1.5, 1.5, 1.5], Topology.path(3)) == 0.0
    assert consensus_metric([0.0, 1.0], Topology.path(2)) == 1.0
    # m = 2: euclidean distance between output blocks
    assert consensus_metric([0.0, 0.0, 3.0, 4.0], Topology.path(2)) == pytest.approx(5.0)


def test_assembly_validation():
    plants = catalog.example_plants()
    ctrl = catalog.example_controllers()
    with pytest.raises(AssemblyError, match="unreachable from node 1: 3"):
        NetworkAssembly.from_entries(Topology(3, ((1, 2),)), plants, ctrl[:1])
    with pytest.raises(AssemblyError, match="controllers for 2 edges"):
        NetworkAssembly.from_entries(Topology.path(3), plants, ctrl[:1])
    with pytest.raises(AssemblyError, match="zero feedthrough"):
        PlantBank.from_entries([catalog.example_controllers()[0]])


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_power_balance(seed):
    rng = np.random.default_rng(seed)
    topo = Topology(4, ((1, 2), (2, 3), (4, 2)))
    plants = [catalog.make_single_integrator(2)] * 2 + [catalog.make_linear_state_space(
        -np.eye(3), np.ones((3, 2)), np.ones((2, 3)))] * 2
    ctrl = [catalog.make_linear_state_space(-np.eye(2), np.eye(2), np.eye(2), D=-np.eye(2))] * 3
    asm = NetworkAssembly.from_entries(topo, plants, ctrl)
    U_hat = rng.normal(size=6)
    X_p = rng.normal(size=asm.plant_state_dim)
    U_p = asm.plant_inputs_from_hat(U_hat)
    Y_p = asm.plant_outputs(X_p)
    Y_hat = asm.networked_output(X_p)
    lhs, rhs = U_p @ Y_p, U_hat @ Y_hat
    assert abs(lhs - rhs) <= 1e-12 * max(1.0, abs(lhs))


def test_orientation_invariance_of_plant_trajectories(example_assembly, example_x0):
    flipped = NetworkAssembly.from_entries(
        example_assembly.topology.flipped(), catalog.example_plants(), catalog.example_controllers()
    )
    cfg = IntegratorConfig(t_end=50.0, records=60, t_first_record=1e-3)
    a = integrate_closed_loop(example_assembly, example_x0, cfg)
    b = integrate_closed_loop(flipped, example_x0, cfg)
    np.testing.assert_allclose(a.states[:, :3], b.states[:, :3], atol=1e-8, rtol=0)
    np.testing.assert_allclose(a.states[:, 3:], -b.states[:, 3:], atol=1e-8, rtol=0)
    np.testing.assert_allclose(a.storage_values, b.storage_values, atol=1e-8, rtol=1e-10)
