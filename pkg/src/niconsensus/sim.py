"""Explicit Runge-Kutta integration of open-loop systems and closed loops.

Two methods are available:

* ``rk4_fixed``: classical 4th-order Runge-Kutta with a fixed step.
* ``rk45_adaptive``: Dormand-Prince 5(4) pair with FSAL and per-component
  error control ``|err_i| <= abs_tol + rel_tol * |x_i|``.

Records fall either on every ``record_stride``-th accepted step, or, when
``records`` is set, on a fixed grid that the stepper lands on exactly. The
grid is log-spaced when ``t_end / t_first_record > 100`` and linear
otherwise; ``t = 0`` is always recorded.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Callable, Optional, Union

import numpy as np
from scipy.linalg import block_diag

from .core import StorageFunction, SystemModel, TestSignal, Trajectory, as_vector
from .network import NetworkAssembly, SingleLoop, consensus_metric

METHODS = ("rk4_fixed", "rk45_adaptive")


class IntegrationError(RuntimeError):
    """Step-size underflow or non-finite state; ``time`` is where it happened."""

    def __init__(self, message: str, time: float):
        super().__init__(message)
        self.time = time


@dataclass(frozen=True)
class IntegratorConfig:
    t_end: float
    method: str = "rk45_adaptive"
    step: Optional[float] = None
    abs_tol: float = 1e-9
    rel_tol: float = 1e-9
    min_step: float = 1e-12
    max_step: Optional[float] = None
    record_stride: int = 1
    records: Optional[int] = None
    t_first_record: Optional[float] = None

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")
        if not self.t_end > 0:
            raise ValueError("t_end must be > 0")
        if not (self.abs_tol > 0 and self.rel_tol > 0):
            raise ValueError("tolerances must be > 0")
        if self.min_step <= 0 or self.min_step > self.max_step_value:
            raise ValueError("need 0 < min_step <= max_step")
        if self.step is not None and self.step <= 0:
            raise ValueError("step must be > 0")
        if int(self.record_stride) < 1:
            raise ValueError("record_stride must be >= 1")
        if self.records is not None and int(self.records) < 1:
            raise ValueError("records must be >= 1")

    @property
    def max_step_value(self) -> float:
        return self.max_step if self.max_step is not None else self.t_end / 100.0

    @property
    def step_value(self) -> float:
        return self.step if self.step is not None else self.t_end / 1000.0

    def with_(self, **changes) -> "IntegratorConfig":
        return replace(self, **changes)


def record_grid(cfg: IntegratorConfig) -> Optional[np.ndarray]:
    """Record times after ``t = 0``, or None for stride-based recording."""
    if cfg.records is None:
        return None
    n = int(cfg.records)
    t_first = cfg.t_first_record if cfg.t_first_record is not None else cfg.t_end / n
    t_first = min(t_first, cfg.t_end)
    if n == 1 or t_first >= cfg.t_end:
        return np.array([cfg.t_end])
    if cfg.t_end / t_first > 100.0:
        grid = np.geomspace(t_first, cfg.t_end, n)
    else:
        grid = np.linspace(t_first, cfg.t_end, n)
    grid[-1] = cfg.t_end
    return grid


# Dormand-Prince 5(4) tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B5 = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_B4 = np.array([5179 / 57600, 0.0, 7571 / 16695, 393 / 640, -92097 / 339200, 187 / 2100, 1 / 40])
_E = _B5 - _B4

Rhs = Callable[[float, np.ndarray], np.ndarray]


def _initial_step(rhs: Rhs, t, x, f0, cfg: IntegratorConfig) -> float:
    scale = cfg.abs_tol + cfg.rel_tol * np.abs(x)
    d0 = np.max(np.abs(x) / scale)
    d1 = np.max(np.abs(f0) / scale)
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h0 = min(h0, cfg.max_step_value)
    f1 = rhs(t + h0, x + h0 * f0)
    d2 = np.max(np.abs(f1 - f0) / scale) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** (1 / 5)
    return max(min(100 * h0, h1, cfg.max_step_value), cfg.min_step)


_A_NZ = [[(j, a) for j, a in enumerate(row) if a] for row in _A]
_B5_NZ = [(j, b) for j, b in enumerate(_B5) if b]
_E_NZ = [(j, e) for j, e in enumerate(_E) if e]


def _dopri_step(rhs: Rhs, t, x, k1, h):
    ks = [k1]
    for i in range(1, 7):
        xi = x.copy()
        for j, a in _A_NZ[i]:
            xi += (h * a) * ks[j]
        ks.append(rhs(t + _C[i] * h, xi))
    # stage 7 is evaluated at the 5th-order solution (FSAL), so ks[6] is k1 of the next step
    x_new = ks[6] * 0.0
    for j, b in _B5_NZ:
        x_new += b * ks[j]
    x_new = x + h * x_new
    err = ks[0] * 0.0
    for j, e in _E_NZ:
        err += e * ks[j]
    return x_new, h * err, ks[6]


def _rk4_step(rhs: Rhs, t, x, h):
    k1 = rhs(t, x)
    k2 = rhs(t + h / 2, x + h / 2 * k1)
    k3 = rhs(t + h / 2, x + h / 2 * k2)
    k4 = rhs(t + h, x + h * k3)
    return x + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)


def solve(rhs: Rhs, x0, cfg: IntegratorConfig) -> tuple[np.ndarray, np.ndarray]:
    """Integrate ``x' = rhs(t, x)`` over ``[0, t_end]``; return record times and states."""
    x = np.array(x0, dtype=np.float64)
    t = 0.0
    times, states = [0.0], [x.copy()]
    grid = record_grid(cfg)
    targets = list(grid) if grid is not None else [cfg.t_end]
    stride = int(cfg.record_stride)
    ti = 0
    accepted = 0
    snap = lambda target: 1e-13 * max(1.0, abs(target))

    if cfg.method == "rk4_fixed":
        h_nom = cfg.step_value
        while ti < len(targets):
            target = targets[ti]
            remaining = target - t
            land = remaining <= h_nom * (1 + 1e-12)
            h = remaining if land else h_nom
            with np.errstate(over="ignore", invalid="ignore"):
                x = _rk4_step(rhs, t, x, h)
            if not np.all(np.isfinite(x)):
                raise IntegrationError(f"non-finite state at t={t:.6g}", t)
            t = target if land else t + h
            accepted += 1
            if land:
                times.append(t)
                states.append(x.copy())
                ti += 1
            elif grid is None and accepted % stride == 0:
                times.append(t)
                states.append(x.copy())
        return np.array(times), np.array(states)

    k1 = np.asarray(rhs(t, x), dtype=np.float64)
    h = _initial_step(rhs, t, x, k1, cfg)
    h_max = cfg.max_step_value
    while ti < len(targets):
        target = targets[ti]
        remaining = target - t
        if remaining <= snap(target):
            ti += 1
            if not times or times[-1] != target:
                times.append(target)
                states.append(x.copy())
            continue
        h_try = min(h, h_max)
        land = h_try >= remaining
        if land:
            h_try = remaining
        # blow-up is detected below as a non-finite error norm
        with np.errstate(over="ignore", invalid="ignore"):
            x_new, err, k7 = _dopri_step(rhs, t, x, k1, h_try)
            scale = cfg.abs_tol + cfg.rel_tol * np.maximum(np.abs(x), np.abs(x_new))
            finite = np.all(np.isfinite(x_new)) and np.all(np.isfinite(err))
            err_norm = float(np.max(np.abs(err) / scale)) if finite else np.inf
        if err_norm <= 1.0:
            t = target if land else t + h_try
            x = x_new
            k1 = k7
            accepted += 1
            factor = 5.0 if err_norm == 0.0 else min(5.0, max(0.2, 0.9 * err_norm ** -0.2))
            if not land:
                h = h_try * factor
            else:
                h = max(h, h_try * factor)
                times.append(t)
                states.append(x.copy())
                ti += 1
            if not land and grid is None and accepted % stride == 0:
                times.append(t)
                states.append(x.copy())
        else:
            factor = 0.2 if not np.isfinite(err_norm) else max(0.2, 0.9 * err_norm ** -0.2)
            h = h_try * factor
            if h < cfg.min_step:
                raise IntegrationError(
                    f"step size underflow at t={t:.9g} (h={h:.3g} < min_step={cfg.min_step:g})", t
                )
    return np.array(times), np.array(states)


def integrate_open_loop(
    system: SystemModel,
    signal: TestSignal,
    x0,
    cfg: IntegratorConfig,
    storage: Optional[StorageFunction] = None,
) -> Trajectory:
    x0 = as_vector(x0, system.state_dim, "x0")
    if signal.io_dim != system.io_dim:
        raise ValueError(f"signal io_dim {signal.io_dim} != system io_dim {system.io_dim}")
    f = system.dynamics
    times, states = solve(lambda t, x: np.asarray(f(x, signal(t)), dtype=np.float64), x0, cfg)
    inputs = np.array([signal(t) for t in times])
    aux = np.array([system.h(x) for x in states])
    D = system.feedthrough
    values = np.array([storage(x) for x in states]) if storage is not None else None
    return Trajectory(times, states, inputs, aux + inputs @ D.T, aux, D, values)


def integrate_closed_loop(
    loop: Union[NetworkAssembly, SingleLoop], X0, cfg: IntegratorConfig
) -> Trajectory:
    """Integrate a network or single loop, recording storage (and consensus for networks)."""
    X0 = as_vector(X0, loop.state_dim, "X0")
    times, states = solve(loop.rhs, X0, cfg)
    inputs, aux, values, extras = [], [], [], {}
    if isinstance(loop, NetworkAssembly):
        consensus = []
        F = block_diag(np.zeros((loop.plant_bank.io_dim * loop.topology.node_count,) * 2),
                       loop.controller_bank.feedthrough)
        for X in states:
            X_p, X_c = loop.split(X)
            sig = loop.signals(X_p, X_c)
            inputs.append(np.concatenate([sig.U_p, sig.U_c]))
            aux.append(np.concatenate([sig.Y_p, sig.Pi_c]))
            values.append(loop.storage(X))
            consensus.append(consensus_metric(sig.Y_p, loop.topology))
        extras["consensus"] = np.array(consensus)
        extras["plant_outputs"] = np.array(aux)[:, : loop.io_dim * loop.topology.node_count]
    else:
        F = block_diag(np.zeros((loop.plant.io_dim,) * 2), loop.controller.feedthrough)
        for X in states:
            x1, x2 = loop.split(X)
            u1, y1, u2, _ = loop.signals(x1, x2)
            inputs.append(np.concatenate([u1, u2]))
            aux.append(np.concatenate([y1, loop.controller.h(x2)]))
            values.append(loop.storage(X))
    inputs = np.array(inputs)
    aux = np.array(aux)
    return Trajectory(times, states, inputs, aux + inputs @ F.T, aux, F, np.array(values), extras)


def storage_nonincreasing(values, rel_tol: float = 1e-6) -> tuple[bool, int]:
    """Check ``W[k+1] <= W[k] + rel_tol * (1 + |W[k]|)``; return (ok, first bad index or -1)."""
    values = np.asarray(values, dtype=np.float64)
    slack = values[:-1] + rel_tol * (1.0 + np.abs(values[:-1])) - values[1:]
    bad = np.nonzero(slack < 0)[0]
    return (len(bad) == 0, int(bad[0]) + 1 if len(bad) else -1)
