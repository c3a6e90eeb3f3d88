"""Shared domain types: state-space systems, storage functions, excitation
signals and trajectory records.

Every system has the form

    x' = f(x, u),    y = h(x) + D u,

with ``D`` symmetric. ``h(x)`` is called the auxiliary output.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.interpolate import CubicSpline

Vector = np.ndarray
DynamicsFn = Callable[[Vector, Vector], Vector]
OutputFn = Callable[[Vector], Vector]
JacobianFn = Callable[[Vector], np.ndarray]

JACOBIAN_CHECK_RTOL = 1e-5
JACOBIAN_CHECK_SAMPLES = 4
JACOBIAN_CHECK_SEED = 12345


class DimensionError(ValueError):
    """Raised when a vector does not match a system's declared dimension."""


def as_vector(v, dim: int, name: str = "vector") -> Vector:
    arr = np.atleast_1d(np.asarray(v, dtype=np.float64))
    if arr.ndim != 1 or arr.shape[0] != dim:
        raise DimensionError(f"{name} must have shape ({dim},), got {arr.shape}")
    return arr


def fd_step(x: Vector) -> float:
    return 1e-6 * (1.0 + float(np.linalg.norm(x)))


def fd_jacobian(fn: Callable[[Vector], Vector], x: Vector, out_dim: int) -> np.ndarray:
    """Central finite-difference Jacobian of ``fn`` at ``x``."""
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    jac = np.empty((out_dim, n))
    for j in range(n):
        h = 1e-6 * (1.0 + abs(x[j]))
        e = np.zeros(n)
        e[j] = h
        jac[:, j] = (np.asarray(fn(x + e)) - np.asarray(fn(x - e))) / (2.0 * h)
    return jac


@dataclass(frozen=True, eq=False)
class SystemModel:
    """Nonlinear state-space system ``x' = f(x, u)``, ``y = h(x) + D u``.

    Parameters
    ----------
    state_dim, io_dim : int
        ``n`` and ``m``.
    dynamics : callable
        ``f(x, u) -> x'``.
    output_map : callable
        ``h(x) -> y_tilde``.
    feedthrough : array_like, optional
        Symmetric ``m x m`` matrix ``D``; defaults to zero.
    output_jacobian : callable, optional
        ``x -> dh/dx`` (``m x n``). Spot-checked against finite differences
        at construction.
    label : str
    """

    state_dim: int
    io_dim: int
    dynamics: DynamicsFn
    output_map: OutputFn
    feedthrough: np.ndarray = None
    output_jacobian: Optional[JacobianFn] = None
    label: str = "system"

    def __post_init__(self):
        if int(self.state_dim) < 1 or int(self.io_dim) < 1:
            raise ValueError("state_dim and io_dim must be positive")
        m = self.io_dim
        if self.feedthrough is None:
            d = np.zeros((m, m))
        else:
            d = np.array(self.feedthrough, dtype=np.float64).reshape(m, m)
        if not np.array_equal(d, d.T):
            raise ValueError(f"{self.label}: feedthrough D must be symmetric")
        d.setflags(write=False)
        object.__setattr__(self, "feedthrough", d)
        self._check_shapes()
        if self.output_jacobian is not None:
            self._check_jacobian()

    def _check_shapes(self):
        x = np.zeros(self.state_dim)
        u = np.zeros(self.io_dim)
        dx = np.asarray(self.dynamics(x, u), dtype=np.float64)
        if dx.shape != (self.state_dim,):
            raise DimensionError(f"{self.label}: dynamics returned shape {dx.shape}")
        y = np.asarray(self.output_map(x), dtype=np.float64)
        if y.shape != (self.io_dim,):
            raise DimensionError(f"{self.label}: output_map returned shape {y.shape}")

    def _check_jacobian(self):
        rng = np.random.default_rng(JACOBIAN_CHECK_SEED)
        for _ in range(JACOBIAN_CHECK_SAMPLES):
            x = rng.uniform(-1.0, 1.0, self.state_dim)
            analytic = np.asarray(self.output_jacobian(x), dtype=np.float64)
            if analytic.shape != (self.io_dim, self.state_dim):
                raise DimensionError(
                    f"{self.label}: output_jacobian returned shape {analytic.shape}"
                )
            numeric = fd_jacobian(self.output_map, x, self.io_dim)
            scale = max(1.0, float(np.max(np.abs(analytic))))
            if np.max(np.abs(analytic - numeric)) > JACOBIAN_CHECK_RTOL * scale:
                raise ValueError(
                    f"{self.label}: output_jacobian disagrees with finite differences at x={x}"
                )

    @property
    def has_feedthrough(self) -> bool:
        return bool(np.any(self.feedthrough != 0.0))

    def f(self, x: Vector, u: Vector) -> Vector:
        return np.asarray(self.dynamics(x, u), dtype=np.float64)

    def h(self, x: Vector) -> Vector:
        return np.asarray(self.output_map(x), dtype=np.float64)

    def jacobian(self, x: Vector) -> np.ndarray:
        if self.output_jacobian is not None:
            return np.asarray(self.output_jacobian(x), dtype=np.float64)
        return fd_jacobian(self.output_map, x, self.io_dim)


def evaluate_output(system: SystemModel, x, u) -> Vector:
    """Full output ``h(x) + D u``."""
    x = as_vector(x, system.state_dim, "state")
    u = as_vector(u, system.io_dim, "input")
    return system.h(x) + system.feedthrough @ u


def output_rate(system: SystemModel, x, u, *, allow_fd: bool = True) -> Vector:
    """Time derivative of the auxiliary output, ``(dh/dx)(x) f(x, u)``.

    Without an analytic Jacobian, ``h`` is differenced along the direction
    ``f(x, u)`` with step ``1e-6 (1 + |x|)``.
    """
    x = as_vector(x, system.state_dim, "state")
    u = as_vector(u, system.io_dim, "input")
    dx = system.f(x, u)
    if system.output_jacobian is not None:
        return np.asarray(system.output_jacobian(x), dtype=np.float64) @ dx
    if not allow_fd:
        raise ValueError(f"{system.label}: no output_jacobian and finite differences disabled")
    h = fd_step(x)
    return (system.h(x + h * dx) - system.h(x - h * dx)) / (2.0 * h)


@dataclass(frozen=True, eq=False)
class StorageFunction:
    """Scalar storage certificate ``V(x)`` attached to a system by label."""

    value: Callable[[Vector], float]
    gradient: Optional[Callable[[Vector], Vector]] = None
    system_ref: str = ""

    def __call__(self, x) -> float:
        return float(self.value(np.asarray(x, dtype=np.float64)))

    def grad(self, x) -> Vector:
        x = np.asarray(x, dtype=np.float64)
        if self.gradient is not None:
            return np.asarray(self.gradient(x), dtype=np.float64)
        return fd_jacobian(lambda z: np.array([self.value(z)]), x, 1)[0]

    def rate(self, system: SystemModel, x, u) -> float:
        """``dV/dt = grad V(x) . f(x, u)``."""
        x = np.asarray(x, dtype=np.float64)
        return float(self.grad(x) @ system.f(x, np.asarray(u, dtype=np.float64)))


def zero_storage(dim: int, system_ref: str = "") -> StorageFunction:
    return StorageFunction(lambda x: 0.0, lambda x: np.zeros(dim), system_ref)


def quadratic_storage(P, system_ref: str = "") -> StorageFunction:
    """``V(x) = 1/2 x^T P x`` for symmetric ``P``."""
    P = np.array(P, dtype=np.float64)
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise ValueError("P must be square")
    if not np.allclose(P, P.T):
        raise ValueError("P must be symmetric")
    return StorageFunction(lambda x: 0.5 * float(x @ P @ x), lambda x: P @ x, system_ref)


SIGNAL_KINDS = ("constant", "step", "sinusoid", "smoothed-random")


@dataclass(frozen=True, eq=False)
class TestSignal:
    """Deterministic excitation input ``u(t)`` for ``t >= 0``.

    ``smoothed-random`` draws one knot per ``1/frequency`` time units from a
    seeded normal distribution and interpolates them with a periodic cubic
    spline of period ``horizon``, so the signal is C2 on all of ``t >= 0``.
    ``step`` switches from ``offset`` to ``offset + amplitude`` at
    ``step_time``.
    """

    __test__ = False  # not a pytest class

    kind: str
    io_dim: int = 1
    amplitude: float = 1.0
    frequency: float = 1.0
    offset: float = 0.0
    seed: int = 0
    step_time: float = 1.0
    horizon: float = 50.0
    _spline: Optional[CubicSpline] = field(default=None, init=False, repr=False)

    def __post_init__(self):
        if self.kind not in SIGNAL_KINDS:
            raise ValueError(f"unknown signal kind {self.kind!r}")
        if self.kind == "smoothed-random":
            n_knots = max(4, int(np.ceil(self.horizon * self.frequency)))
            rng = np.random.default_rng(self.seed)
            knots = rng.standard_normal((n_knots + 1, self.io_dim))
            knots[-1] = knots[0]
            ts = np.linspace(0.0, self.horizon, n_knots + 1)
            object.__setattr__(self, "_spline", CubicSpline(ts, knots, bc_type="periodic"))

    def __call__(self, t: float) -> Vector:
        m = self.io_dim
        if self.kind == "constant":
            return np.full(m, self.offset + self.amplitude)
        if self.kind == "step":
            level = self.offset + (self.amplitude if t >= self.step_time else 0.0)
            return np.full(m, level)
        if self.kind == "sinusoid":
            phases = np.arange(m) * (np.pi / max(m, 1))
            return self.offset + self.amplitude * np.sin(2.0 * np.pi * self.frequency * t + phases)
        return self.offset + self.amplitude * self._spline(t % self.horizon)

    def derivative(self, t: float) -> Vector:
        m = self.io_dim
        if self.kind in ("constant", "step"):
            return np.zeros(m)
        if self.kind == "sinusoid":
            w = 2.0 * np.pi * self.frequency
            phases = np.arange(m) * (np.pi / max(m, 1))
            return self.amplitude * w * np.cos(w * t + phases)
        return self.amplitude * self._spline(t % self.horizon, 1)


@dataclass
class Trajectory:
    """Time-sampled record of a simulation.

    ``outputs[k] == aux_outputs[k] + feedthrough @ inputs[k]`` holds by
    construction. ``extras`` carries per-record diagnostics such as the
    consensus metric of network runs.
    """

    times: np.ndarray
    states: np.ndarray
    inputs: np.ndarray
    outputs: np.ndarray
    aux_outputs: np.ndarray
    feedthrough: np.ndarray
    storage_values: Optional[np.ndarray] = None
    extras: dict = field(default_factory=dict)

    def __post_init__(self):
        k = len(self.times)
        for name in ("states", "inputs", "outputs", "aux_outputs"):
            if len(getattr(self, name)) != k:
                raise ValueError(f"{name} has length {len(getattr(self, name))}, expected {k}")
        if self.storage_values is not None and len(self.storage_values) != k:
            raise ValueError("storage_values length mismatch")
        if k > 1 and not np.all(np.diff(self.times) > 0):
            raise ValueError("times must be strictly increasing")

    def __len__(self) -> int:
        return len(self.times)

    def reconstruction_residual(self) -> float:
        recon = self.aux_outputs + self.inputs @ self.feedthrough.T
        return float(np.max(np.abs(self.outputs - recon))) if len(self) else 0.0

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]
