"""Plant/controller banks, the networked closed loop and the single loop.

Network wiring (plants on nodes, controllers on edges, positive feedback)::

    Y_p = [h_p1(x_p1); ...; h_pN(x_pN)]
    U_c = (Q kron I_m) Y_p                  # edge output differences
    Y_c = Pi_c(X_c) + D_c U_c
    U_p = (Q^T kron I_m) Y_c

Plants have no feedthrough, so the loop has no algebraic constraint.
Seen from the plants' side, ``U_hat = Y_c`` and ``Y_hat = U_c``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from typing import NamedTuple, Optional, Sequence

import numpy as np
from scipy.linalg import block_diag

from .catalog import CatalogEntry
from .core import StorageFunction, SystemModel
from .graph import Topology, incidence_matrix, unreachable_nodes


class AssemblyError(ValueError):
    pass


def _offsets(dims: Sequence[int]) -> list[slice]:
    out, start = [], 0
    for d in dims:
        out.append(slice(start, start + d))
        start += d
    return out


@dataclass(frozen=True, eq=False)
class PlantBank:
    systems: tuple[SystemModel, ...]
    storages: tuple[StorageFunction, ...]

    def __post_init__(self):
        object.__setattr__(self, "systems", tuple(self.systems))
        object.__setattr__(self, "storages", tuple(self.storages))
        if not self.systems:
            raise AssemblyError("plant bank is empty")
        if len(self.storages) != len(self.systems):
            raise AssemblyError("one storage function per plant required")
        m = self.systems[0].io_dim
        for s in self.systems:
            if s.io_dim != m:
                raise AssemblyError(f"{s.label}: io_dim {s.io_dim} differs from {m}")
            if s.has_feedthrough:
                raise AssemblyError(f"{s.label}: plants must have zero feedthrough")

    @classmethod
    def from_entries(cls, entries: Sequence[CatalogEntry]) -> "PlantBank":
        return cls(tuple(e.system for e in entries), tuple(e.storage for e in entries))

    @property
    def io_dim(self) -> int:
        return self.systems[0].io_dim

    @property
    def state_dims(self) -> list[int]:
        return [s.state_dim for s in self.systems]


@dataclass(frozen=True, eq=False)
class ControllerBank:
    systems: tuple[SystemModel, ...]
    storages: tuple[StorageFunction, ...]
    epsilons: tuple[Optional[float], ...] = ()
    gammas: tuple[Optional[float], ...] = ()

    def __post_init__(self):
        k = len(self.systems)
        object.__setattr__(self, "systems", tuple(self.systems))
        object.__setattr__(self, "storages", tuple(self.storages))
        object.__setattr__(self, "epsilons", tuple(self.epsilons) or (None,) * k)
        object.__setattr__(self, "gammas", tuple(self.gammas) or (None,) * k)
        if len(self.storages) != k or len(self.epsilons) != k or len(self.gammas) != k:
            raise AssemblyError("controller bank fields must have equal length")
        if k:
            m = self.systems[0].io_dim
            for s in self.systems:
                if s.io_dim != m:
                    raise AssemblyError(f"{s.label}: io_dim {s.io_dim} differs from {m}")

    @classmethod
    def from_entries(cls, entries: Sequence[CatalogEntry]) -> "ControllerBank":
        return cls(
            tuple(e.system for e in entries),
            tuple(e.storage for e in entries),
            tuple(e.epsilon for e in entries),
            tuple(e.gamma for e in entries),
        )

    @property
    def state_dims(self) -> list[int]:
        return [s.state_dim for s in self.systems]

    @property
    def feedthrough(self) -> np.ndarray:
        """Block-diagonal ``D_c``."""
        if not self.systems:
            return np.zeros((0, 0))
        return block_diag(*[s.feedthrough for s in self.systems])

    @property
    def epsilon_min(self) -> Optional[float]:
        vals = [e for e in self.epsilons if e is not None]
        return min(vals) if len(vals) == len(self.epsilons) and vals else None

    @property
    def gamma_min(self) -> Optional[float]:
        vals = [g for g in self.gammas if g is not None]
        return min(vals) if len(vals) == len(self.gammas) and vals else None


class LoopSignals(NamedTuple):
    Y_p: np.ndarray
    U_c: np.ndarray
    Pi_c: np.ndarray
    Y_c: np.ndarray
    U_p: np.ndarray


@dataclass(frozen=True, eq=False)
class NetworkAssembly:
    topology: Topology
    plant_bank: PlantBank
    controller_bank: ControllerBank
    _Qm: np.ndarray = field(init=False, repr=False)
    _Dc: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        topo = self.topology
        if len(self.plant_bank.systems) != topo.node_count:
            raise AssemblyError(
                f"{len(self.plant_bank.systems)} plants for {topo.node_count} nodes"
            )
        if len(self.controller_bank.systems) != topo.edge_count:
            raise AssemblyError(
                f"{len(self.controller_bank.systems)} controllers for {topo.edge_count} edges"
            )
        missing = unreachable_nodes(topo)
        if missing:
            raise AssemblyError(
                "topology is not connected; unreachable from node 1: "
                + ", ".join(str(v) for v in missing)
            )
        m = self.io_dim
        for s in self.controller_bank.systems:
            if s.io_dim != m:
                raise AssemblyError(f"{s.label}: io_dim {s.io_dim} differs from plants' {m}")
        Dc = self.controller_bank.feedthrough
        if not np.array_equal(Dc, Dc.T):
            raise AssemblyError("block feedthrough D_c must be symmetric")
        object.__setattr__(self, "_Qm", np.kron(incidence_matrix(topo), np.eye(m)))
        object.__setattr__(self, "_Dc", Dc)

    @classmethod
    def from_entries(cls, topology, plants, controllers) -> "NetworkAssembly":
        return cls(topology, PlantBank.from_entries(plants), ControllerBank.from_entries(controllers))

    @property
    def io_dim(self) -> int:
        return self.plant_bank.io_dim

    @property
    def incidence(self) -> np.ndarray:
        """``Q kron I_m``."""
        return self._Qm

    @property
    def plant_slices(self) -> list[slice]:
        return _offsets(self.plant_bank.state_dims)

    @property
    def controller_slices(self) -> list[slice]:
        return _offsets(self.controller_bank.state_dims)

    @property
    def plant_state_dim(self) -> int:
        return sum(self.plant_bank.state_dims)

    @property
    def controller_state_dim(self) -> int:
        return sum(self.controller_bank.state_dims)

    @property
    def state_dim(self) -> int:
        return self.plant_state_dim + self.controller_state_dim

    def split(self, X) -> tuple[np.ndarray, np.ndarray]:
        X = np.asarray(X, dtype=np.float64)
        if X.shape != (self.state_dim,):
            raise AssemblyError(f"stacked state must have shape ({self.state_dim},), got {X.shape}")
        k = self.plant_state_dim
        return X[:k], X[k:]

    def stack(self, X_p, X_c) -> np.ndarray:
        return np.concatenate([np.asarray(X_p, dtype=np.float64), np.asarray(X_c, dtype=np.float64)])

    def plant_outputs(self, X_p) -> np.ndarray:
        return np.concatenate(
            [s.h(X_p[sl]) for s, sl in zip(self.plant_bank.systems, self.plant_slices)]
        )

    def controller_aux_outputs(self, X_c) -> np.ndarray:
        """``Pi_c``: stacked ``h_ck(x_ck)``."""
        if not self.controller_bank.systems:
            return np.zeros(0)
        return np.concatenate(
            [s.h(X_c[sl]) for s, sl in zip(self.controller_bank.systems, self.controller_slices)]
        )

    def networked_output(self, X_p) -> np.ndarray:
        """``Y_hat = (Q kron I_m) Y_p``."""
        return self._Qm @ self.plant_outputs(X_p)

    def plant_inputs_from_hat(self, U_hat) -> np.ndarray:
        """``U_p = (Q^T kron I_m) U_hat``."""
        return self._Qm.T @ np.asarray(U_hat, dtype=np.float64)

    def signals(self, X_p, X_c) -> LoopSignals:
        X_p = np.asarray(X_p, dtype=np.float64)
        X_c = np.asarray(X_c, dtype=np.float64)
        if X_p.shape != (self.plant_state_dim,) or X_c.shape != (self.controller_state_dim,):
            raise AssemblyError(
                f"expected plant/controller states of size {self.plant_state_dim}/"
                f"{self.controller_state_dim}, got {X_p.shape}/{X_c.shape}"
            )
        Y_p = self.plant_outputs(X_p)
        U_c = self._Qm @ Y_p
        Pi_c = self.controller_aux_outputs(X_c)
        Y_c = Pi_c + self._Dc @ U_c
        U_p = self._Qm.T @ Y_c
        return LoopSignals(Y_p, U_c, Pi_c, Y_c, U_p)

    def plant_derivatives(self, X_p, U_p) -> np.ndarray:
        m = self.io_dim
        return np.concatenate(
            [
                s.f(X_p[sl], U_p[i * m : (i + 1) * m])
                for i, (s, sl) in enumerate(zip(self.plant_bank.systems, self.plant_slices))
            ]
        )

    def controller_derivatives(self, X_c, U_c) -> np.ndarray:
        if not self.controller_bank.systems:
            return np.zeros(0)
        m = self.io_dim
        return np.concatenate(
            [
                s.f(X_c[sl], U_c[k * m : (k + 1) * m])
                for k, (s, sl) in enumerate(zip(self.controller_bank.systems, self.controller_slices))
            ]
        )

    def rhs(self, t, X) -> np.ndarray:
        X_p, X_c = self.split(X)
        dXp, dXc = closed_loop_rhs(self, X_p, X_c)
        return np.concatenate([dXp, dXc])

    def storage(self, X) -> float:
        return composite_storage(self, *self.split(X))


def closed_loop_rhs(assembly: NetworkAssembly, X_p, X_c) -> tuple[np.ndarray, np.ndarray]:
    sig = assembly.signals(X_p, X_c)
    X_p = np.asarray(X_p, dtype=np.float64)
    X_c = np.asarray(X_c, dtype=np.float64)
    return assembly.plant_derivatives(X_p, sig.U_p), assembly.controller_derivatives(X_c, sig.U_c)


def composite_storage(assembly: NetworkAssembly, X_p, X_c) -> float:
    """``W_hat = V_p + V_c - Y_hat^T Pi_c - 1/2 Y_hat^T D_c Y_hat``."""
    X_p = np.asarray(X_p, dtype=np.float64)
    X_c = np.asarray(X_c, dtype=np.float64)
    pb, cb = assembly.plant_bank, assembly.controller_bank
    V_p = sum(V(X_p[sl]) for V, sl in zip(pb.storages, assembly.plant_slices))
    V_c = sum(V(X_c[sl]) for V, sl in zip(cb.storages, assembly.controller_slices))
    Y_hat = assembly.networked_output(X_p)
    Pi_c = assembly.controller_aux_outputs(X_c)
    return float(V_p + V_c - Y_hat @ Pi_c - 0.5 * Y_hat @ assembly._Dc @ Y_hat)


def edge_coordinate_storage(assembly: NetworkAssembly):
    """``W_hat`` as a function of ``(Y_hat, X_c)``.

    Positive definiteness of the composite storage is only meaningful in
    coordinates transverse to the consensus direction. This lift assumes
    every plant's state is its output (``h = identity``) and the graph is a
    tree, so ``Y_hat`` determines ``X_p`` up to a common shift.
    """
    pb = assembly.plant_bank
    rng = np.random.default_rng(0)
    for s in pb.systems:
        if s.state_dim != s.io_dim:
            raise AssemblyError(f"{s.label}: edge coordinates need state_dim == io_dim")
        x = rng.standard_normal(s.state_dim)
        if not np.allclose(s.h(x), x):
            raise AssemblyError(f"{s.label}: edge coordinates need an identity output map")
    Qm = assembly.incidence
    if np.linalg.matrix_rank(Qm) != Qm.shape[0]:
        raise AssemblyError("edge coordinates need a tree topology")
    lift = np.linalg.pinv(Qm)
    k = Qm.shape[0]

    def storage(z) -> float:
        z = np.asarray(z, dtype=np.float64)
        return composite_storage(assembly, lift @ z[:k], z[k:])

    return storage


def consensus_metric(Y_p, topology: Topology) -> float:
    """Largest pairwise distance between plant outputs."""
    Y_p = np.asarray(Y_p, dtype=np.float64)
    N = topology.node_count
    blocks = Y_p.reshape(N, -1)
    if N < 2:
        return 0.0
    return max(float(np.linalg.norm(blocks[i] - blocks[j])) for i, j in combinations(range(N), 2))


@dataclass(frozen=True, eq=False)
class SingleLoop:
    """Positive feedback loop of a plant (no feedthrough) and a controller."""

    plant: SystemModel
    plant_storage: StorageFunction
    controller: SystemModel
    controller_storage: StorageFunction
    epsilon: Optional[float] = None

    def __post_init__(self):
        if self.plant.has_feedthrough:
            raise AssemblyError(f"{self.plant.label}: plant must have zero feedthrough")
        if self.plant.io_dim != self.controller.io_dim:
            raise AssemblyError("plant and controller io_dim differ")

    @classmethod
    def from_entries(cls, plant: CatalogEntry, controller: CatalogEntry) -> "SingleLoop":
        return cls(plant.system, plant.storage, controller.system, controller.storage, controller.epsilon)

    @property
    def state_dim(self) -> int:
        return self.plant.state_dim + self.controller.state_dim

    def split(self, X) -> tuple[np.ndarray, np.ndarray]:
        X = np.asarray(X, dtype=np.float64)
        if X.shape != (self.state_dim,):
            raise AssemblyError(f"stacked state must have shape ({self.state_dim},), got {X.shape}")
        return X[: self.plant.state_dim], X[self.plant.state_dim :]

    def signals(self, x1, x2) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """``(u1, y1, u2, y2)``."""
        y1 = self.plant.h(np.asarray(x1, dtype=np.float64))
        u2 = y1
        y2 = self.controller.h(np.asarray(x2, dtype=np.float64)) + self.controller.feedthrough @ u2
        return y2, y1, u2, y2

    def rhs(self, t, X) -> np.ndarray:
        return np.concatenate(single_loop_rhs(self, *self.split(X)))

    def storage(self, X) -> float:
        return single_loop_storage(self, *self.split(X))


def single_loop_rhs(loop: SingleLoop, x1, x2) -> tuple[np.ndarray, np.ndarray]:
    x1 = np.asarray(x1, dtype=np.float64)
    x2 = np.asarray(x2, dtype=np.float64)
    u1, _, u2, _ = loop.signals(x1, x2)
    return loop.plant.f(x1, u1), loop.controller.f(x2, u2)


def single_loop_storage(loop: SingleLoop, x1, x2) -> float:
    """``W = V1 + V2 - h1^T h2 - 1/2 h1^T D2 h1``."""
    x1 = np.asarray(x1, dtype=np.float64)
    x2 = np.asarray(x2, dtype=np.float64)
    h1 = loop.plant.h(x1)
    h2 = loop.controller.h(x2)
    D2 = loop.controller.feedthrough
    return float(loop.plant_storage(x1) + loop.controller_storage(x2) - h1 @ h2 - 0.5 * h1 @ D2 @ h1)
