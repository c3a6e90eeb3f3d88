"""Built-in parametric system families with their storage functions.

Families are addressable by name through :func:`make`, which is what the
scenario loader uses.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .core import StorageFunction, SystemModel, quadratic_storage, zero_storage

FAMILIES = (
    "single_integrator",
    "double_integrator",
    "cubic_integrator",
    "cubic_damped_controller",
    "linear_state_space",
)


@dataclass(frozen=True, eq=False)
class CatalogEntry:
    family: str
    parameters: dict
    system: SystemModel
    storage: StorageFunction
    # known certification constants; None when not analytically available
    epsilon: Optional[float] = None
    gamma: Optional[float] = None

    @property
    def is_osni(self) -> bool:
        return self.epsilon is not None and self.epsilon > 0


def _identity_jacobian(n):
    eye = np.eye(n)
    return lambda x: eye


def make_single_integrator(dim: int = 1) -> CatalogEntry:
    """``x' = u``, ``y = x`` with zero storage."""
    dim = int(dim)
    label = f"single_integrator(dim={dim})"
    sys = SystemModel(
        state_dim=dim,
        io_dim=dim,
        dynamics=lambda x, u: np.array(u, dtype=np.float64),
        output_map=lambda x: np.array(x, dtype=np.float64),
        output_jacobian=_identity_jacobian(dim),
        label=label,
    )
    return CatalogEntry("single_integrator", {"dim": dim}, sys, zero_storage(dim, label))


def make_double_integrator() -> CatalogEntry:
    """``x1' = x2``, ``x2' = u``, ``y = x1``; storage ``x2^2 / 2``."""
    label = "double_integrator"
    sys = SystemModel(
        state_dim=2,
        io_dim=1,
        dynamics=lambda x, u: np.array([x[1], u[0]]),
        output_map=lambda x: np.array([x[0]]),
        output_jacobian=lambda x: np.array([[1.0, 0.0]]),
        label=label,
    )
    storage = StorageFunction(
        value=lambda x: 0.5 * x[1] ** 2,
        gradient=lambda x: np.array([0.0, x[1]]),
        system_ref=label,
    )
    return CatalogEntry("double_integrator", {}, sys, storage)


def make_cubic_integrator(mu: float) -> CatalogEntry:
    """Nonlinear single integrator ``x' = mu u^3``, ``y = x`` with ``V = 0``."""
    mu = float(mu)
    if not mu > 0:
        raise ValueError(f"cubic_integrator requires mu > 0, got {mu}")
    label = f"cubic_integrator(mu={mu:g})"
    sys = SystemModel(
        state_dim=1,
        io_dim=1,
        dynamics=lambda x, u: mu * u**3,
        output_map=lambda x: np.array(x, dtype=np.float64),
        output_jacobian=_identity_jacobian(1),
        label=label,
    )
    return CatalogEntry("cubic_integrator", {"mu": mu}, sys, zero_storage(1, label))


def cubic_damped_gamma(a: float) -> float:
    # steady state: a x + b x^3 = u  =>  u x <= u^2 / a, and y = x - u
    return (a - 1.0) / a


def make_cubic_damped_controller(a: float, b: float) -> CatalogEntry:
    """``x' = -a x - b x^3 + u``, ``y = x - u``.

    Storage ``V = a x^2 / 2 + b x^4 / 4`` gives ``u y_tilde' - V' = x'^2``,
    so the output-strictness level is exactly 1.
    """
    a, b = float(a), float(b)
    if not (a > 0 and b > 0):
        raise ValueError(f"cubic_damped_controller requires a > 0 and b > 0, got a={a}, b={b}")
    label = f"cubic_damped_controller(a={a:g}, b={b:g})"
    sys = SystemModel(
        state_dim=1,
        io_dim=1,
        dynamics=lambda x, u: -a * x - b * x**3 + u,
        output_map=lambda x: np.array(x, dtype=np.float64),
        feedthrough=[[-1.0]],
        output_jacobian=_identity_jacobian(1),
        label=label,
    )
    storage = StorageFunction(
        value=lambda x: 0.5 * a * x[0] ** 2 + 0.25 * b * x[0] ** 4,
        gradient=lambda x: a * x + b * x**3,
        system_ref=label,
    )
    gamma = cubic_damped_gamma(a) if a > 1 else None
    return CatalogEntry(
        "cubic_damped_controller", {"a": a, "b": b}, sys, storage, epsilon=1.0, gamma=gamma
    )


def make_linear_state_space(A, B, C, D=None, P=None) -> CatalogEntry:
    """Linear system ``(A, B, C, D)`` with storage ``x^T P x / 2``.

    ``P`` defaults to zero. No storage synthesis is attempted; the caller is
    responsible for supplying a certificate.
    """
    A = np.atleast_2d(np.array(A, dtype=np.float64))
    B = np.atleast_2d(np.array(B, dtype=np.float64))
    C = np.atleast_2d(np.array(C, dtype=np.float64))
    n, m = A.shape[0], B.shape[1]
    if A.shape != (n, n) or B.shape != (n, m) or C.shape != (m, n):
        raise ValueError(f"incompatible shapes A{A.shape} B{B.shape} C{C.shape}")
    D = np.zeros((m, m)) if D is None else np.atleast_2d(np.array(D, dtype=np.float64))
    P = np.zeros((n, n)) if P is None else np.atleast_2d(np.array(P, dtype=np.float64))
    if np.min(np.linalg.eigvalsh(0.5 * (P + P.T))) < -1e-12:
        raise ValueError("P must be positive semidefinite")
    label = f"linear_state_space(n={n}, m={m})"
    sys = SystemModel(
        state_dim=n,
        io_dim=m,
        dynamics=lambda x, u: A @ x + B @ u,
        output_map=lambda x: C @ x,
        feedthrough=D,
        output_jacobian=lambda x: C,
        label=label,
    )
    params = {"A": A.tolist(), "B": B.tolist(), "C": C.tolist(), "D": D.tolist(), "P": P.tolist()}
    return CatalogEntry("linear_state_space", params, sys, quadratic_storage(P, label))


_BUILDERS = {
    "single_integrator": make_single_integrator,
    "double_integrator": make_double_integrator,
    "cubic_integrator": make_cubic_integrator,
    "cubic_damped_controller": make_cubic_damped_controller,
    "linear_state_space": make_linear_state_space,
}


def make(family: str, **parameters) -> CatalogEntry:
    """Build a catalog entry by family name."""
    try:
        builder = _BUILDERS[family]
    except KeyError:
        raise ValueError(f"unknown family {family!r}; expected one of {', '.join(FAMILIES)}") from None
    return builder(**parameters)


def example_plants() -> list[CatalogEntry]:
    return [make_cubic_integrator(mu) for mu in (1.0, 3.0, 2.0)]


def example_controllers() -> list[CatalogEntry]:
    return [make_cubic_damped_controller(5.0, 3.0), make_cubic_damped_controller(8.0, 2.0)]
