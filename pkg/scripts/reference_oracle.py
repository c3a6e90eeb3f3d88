"""High-accuracy reference runs with scipy's DOP853, written out
independently of the package's own models and integrator.

Prints the values frozen into the test suite.
"""

import numpy as np
from scipy.integrate import solve_ivp

MU = np.array([1.0, 3.0, 2.0])
A = np.array([5.0, 8.0])
B = np.array([3.0, 2.0])
Q = np.array([[1.0, -1.0, 0.0], [0.0, 1.0, -1.0]])


def network_rhs(t, z):
    xp, xc = z[:3], z[3:]
    uc = Q @ xp
    yc = xc - uc
    up = Q.T @ yc
    return np.concatenate([MU * up**3, -A * xc - B * xc**3 + uc])


def single_loop_rhs(t, z):
    x1, x2 = z
    y2 = x2 - x1
    return [y2**3, -5.0 * x2 - 3.0 * x2**3 + x1]


def reference(rhs, x0, t_end, t_eval=None):
    sol = solve_ivp(rhs, (0.0, t_end), x0, method="DOP853", rtol=1e-12, atol=1e-12,
                    t_eval=t_eval, dense_output=False)
    assert sol.success, sol.message
    return sol


if __name__ == "__main__":
    np.set_printoptions(precision=17)
    net = reference(network_rhs, [30.0, 2.0, -8.0, 0.0, 0.0], 1e4, [1e3, 1e4])
    print("network state at t=1e3, 1e4:")
    print(repr(net.y.T))
    yp = net.y[:3, -1]
    print("consensus metric at 1e4:", np.ptp(yp), "midpoint:", 0.5 * (yp.max() + yp.min()))
    loop = reference(single_loop_rhs, [2.0, 0.0], 1e3, [1e2, 1e3])
    print("single loop at t=1e2, 1e3:", repr(loop.y.T), np.abs(loop.y[:, -1]).sum())
    t_needed = reference(network_rhs, [30.0, 2.0, -8.0, 0.0, 0.0], 1e5, np.geomspace(1e3, 1e5, 41))
    gaps = np.ptp(t_needed.y[:3], axis=0)
    print("first t with consensus metric < 1e-2:", t_needed.t[np.argmax(gaps < 1e-2)])
