"""End-to-end acceptance criteria, one test per criterion.

A pass/fail line per criterion is printed in the terminal summary.
"""

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from niconsensus import catalog
from niconsensus.certify import (
    check_assumption_II,
    check_dissipation,
    check_ni_trajectory,
    check_positive_definite,
    excitation_batch,
)
from niconsensus.graph import incidence_matrix, is_connected, laplacian, random_connected_topology
from niconsensus.network import SingleLoop, edge_coordinate_storage
from niconsensus.sim import IntegratorConfig, integrate_closed_loop, solve, storage_nonincreasing

criterion = pytest.mark.criterion


def _oracle_rhs(t, z):
    # the three-plant network, written out by hand
    mu, a, b = np.array([1.0, 3.0, 2.0]), np.array([5.0, 8.0]), np.array([3.0, 2.0])
    Q = np.array([[1.0, -1.0, 0.0], [0.0, 1.0, -1.0]])
    uc = Q @ z[:3]
    up = Q.T @ (z[3:] - uc)
    return np.concatenate([mu * up**3, -a * z[3:] - b * z[3:] ** 3 + uc])


@pytest.fixture(scope="module")
def oracle_final():
    sol = solve_ivp(_oracle_rhs, (0.0, 1e4), [30.0, 2.0, -8.0, 0.0, 0.0], method="DOP853",
                    rtol=1e-12, atol=1e-12, t_eval=[1e4])
    assert sol.success
    return sol.y[:, -1]


@pytest.fixture(scope="module")
def single_loop_run():
    loop = SingleLoop.from_entries(catalog.make_cubic_integrator(1.0), catalog.example_controllers()[0])
    return integrate_closed_loop(loop, [2.0, 0.0], IntegratorConfig(t_end=1e3, records=200,
                                                                      t_first_record=1e-3))


@criterion("1a", "three-plant example: consensus_metric(1e4) < 1e-2")
def test_c1a_consensus_reached(example_run):
    tr, _ = example_run
    metric = tr.extras["consensus"][-1]
    print(f"consensus_metric(t={tr.times[-1]:g}) = {metric:.6g}")
    assert metric < 1e-2


@criterion("1b", "three-plant example: final outputs within 1% of the 1e-12 reference run")
def test_c1b_matches_oracle(example_run, oracle_final):
    tr, _ = example_run
    y = tr.extras["plant_outputs"][-1]
    rel = np.abs(y - oracle_final[:3]) / np.abs(oracle_final[:3])
    print(f"max relative deviation from reference = {rel.max():.3g}")
    assert np.all(rel < 0.01)


@criterion("1c", "three-plant example: simulation runtime < 60 s")
def test_c1c_runtime(example_run):
    _, seconds = example_run
    print(f"runtime = {seconds:.2f} s")
    assert seconds < 60.0


@criterion("2", "W_hat non-increasing within 1e-6 per step and W_hat(end) < 1e-4 W_hat(0)")
def test_c2_lyapunov_decay(example_run):
    tr, _ = example_run
    W = tr.storage_values
    ok, bad = storage_nonincreasing(W, 1e-6)
    print(f"W_hat(0) = {W[0]:.6g}, W_hat(end) = {W[-1]:.6g}")
    assert ok, f"increase at record {bad}"
    assert W[-1] < 1e-4 * W[0]


@criterion("3a", "single loop from (2, 0): |x1| + |x2| < 1e-3 by t = 1e3")
def test_c3a_single_loop_converges(single_loop_run):
    size = np.abs(single_loop_run.final_state).sum()
    print(f"|x1| + |x2| at t=1e3 = {size:.6g}")
    assert size < 1e-3


@criterion("3b", "single loop: W non-increasing throughout")
def test_c3b_single_loop_storage(single_loop_run):
    ok, bad = storage_nonincreasing(single_loop_run.storage_values)
    assert ok, f"increase at record {bad}"


NI_ENTRIES = {
    "single_integrator": catalog.make_single_integrator(),
    "single_integrator_2d": catalog.make_single_integrator(2),
    "double_integrator": catalog.make_double_integrator(),
    "cubic_integrator_1": catalog.make_cubic_integrator(1.0),
    "cubic_integrator_3": catalog.make_cubic_integrator(3.0),
    "cubic_integrator_2": catalog.make_cubic_integrator(2.0),
    "linear_state_space": catalog.make_linear_state_space([[-1.0]], [[1.0]], [[1.0]], P=[[1.0]]),
}


@criterion("4", "NI passes on all catalog entries (100 runs); controller eps in [0.9, 1]; "
                "double integrator eps < 0.01")
def test_c4_certification_suite():
    for name, e in NI_ENTRIES.items():
        sig, x0s = excitation_batch(e.system.io_dim, e.system.state_dim, 100, seed=0)
        if name == "double_integrator":
            ni, osni = check_dissipation(e.system, e.storage, sig, x0s, seed=0)
            print(f"{name}: {ni.line()} | {osni.line()}")
            assert osni.estimate < 0.01 and osni.verdict == "fail"
        else:
            ni = check_ni_trajectory(e.system, e.storage, sig, x0s, seed=0)
            print(f"{name}: {ni.line()}")
        assert ni.verdict == "pass" and ni.samples_used > 0
    for k, e in enumerate(catalog.example_controllers(), 1):
        sig, x0s = excitation_batch(1, 1, 100, seed=0)
        ni, osni = check_dissipation(e.system, e.storage, sig, x0s, seed=0)
        print(f"controller {k}: {ni.line()} | {osni.line()}")
        assert ni.verdict == "pass"
        assert 0.9 <= osni.estimate <= 1.0


@criterion("5", "assumption II on the default grid: gamma >= 0.79 and >= 0.86")
def test_c5_gamma():
    c1, c2 = catalog.example_controllers()
    g1 = check_assumption_II(c1.system).estimate
    g2 = check_assumption_II(c2.system).estimate
    print(f"gamma_hat = {g1:.6g}, {g2:.6g}")
    assert g1 >= 0.79 and g2 >= 0.86


@criterion("6", "Laplacian properties on 200 seeded random connected graphs")
def test_c6_graph_algebra():
    rng = np.random.default_rng(2024)
    for _ in range(200):
        topo = random_connected_topology(rng, 12)
        N = topo.node_count
        Q, L = incidence_matrix(topo), laplacian(topo)
        assert is_connected(topo)
        assert np.array_equal(L, Q.T @ Q)
        assert np.array_equal(L, L.T)
        assert not np.any(L @ np.ones(N))
        assert np.linalg.eigvalsh(L).min() >= -1e-10
        assert int(np.sum(np.linalg.svd(L, compute_uv=False) > 1e-8)) == N - 1
        assert np.array_equal(laplacian(topo.flipped()), L)


@criterion("7", "power balance U_p^T Y_p = U_hat^T Y_hat on 1000 samples")
def test_c7_power_balance(example_assembly):
    rng = np.random.default_rng(7)
    worst = 0.0
    for _ in range(1000):
        U_hat = rng.normal(0.0, 10.0, 2)
        X_p = rng.normal(0.0, 10.0, 3)
        lhs = example_assembly.plant_inputs_from_hat(U_hat) @ example_assembly.plant_outputs(X_p)
        rhs = U_hat @ example_assembly.networked_output(X_p)
        worst = max(worst, abs(lhs - rhs) / max(1.0, abs(lhs)))
    print(f"worst relative mismatch = {worst:.3g}")
    assert worst <= 1e-12


@criterion("8", "W_hat positive definite on [-5, 5]^4; planted counterexample fails")
def test_c8_positive_definite(example_assembly):
    W = edge_coordinate_storage(example_assembly)
    box = ([-5.0] * 4, [5.0] * 4)
    r = check_positive_definite(W, box, 4096, seed=0)
    print(r.line())
    assert r.verdict == "pass"
    # indefinite: drop the controller self-terms so -x_hat1 x_c1 dominates
    planted = lambda z: W(z) - 2.5 * z[2] ** 2 - 0.75 * z[2] ** 4
    bad = check_positive_definite(planted, box, 4096, seed=0)
    print(bad.line())
    assert bad.verdict == "fail" and planted(bad.witness["z"]) <= 0


@criterion("9", "rk4_fixed error drops >= 8x on step halving")
def test_c9_integrator_order():
    c1 = catalog.example_controllers()[0].system
    rhs = lambda t, x: c1.f(x, np.array([np.sin(t)]))
    ref = solve_ivp(lambda t, x: -5 * x - 3 * x**3 + np.sin(t), (0.0, 5.0), [1.0],
                    method="DOP853", rtol=1e-12, atol=1e-12).y[:, -1]
    errs = []
    for h in (0.05, 0.025):
        _, xs = solve(rhs, [1.0], IntegratorConfig(t_end=5.0, method="rk4_fixed", step=h))
        errs.append(float(np.abs(xs[-1] - ref).max()))
    print(f"errors {errs[0]:.3g} -> {errs[1]:.3g}, ratio {errs[0] / errs[1]:.2f}")
    assert errs[0] / errs[1] >= 8.0
