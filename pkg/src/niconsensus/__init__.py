"""Simulation and sampling-based certification for networks of nonlinear
negative-imaginary plants under output strictly negative-imaginary edge
controllers."""

from .core import (
    StorageFunction,
    SystemModel,
    TestSignal,
    Trajectory,
    evaluate_output,
    output_rate,
)
from .graph import Topology, incidence_matrix, is_connected, kron_expand, laplacian
from .network import (
    ControllerBank,
    NetworkAssembly,
    PlantBank,
    SingleLoop,
    closed_loop_rhs,
    composite_storage,
    consensus_metric,
    single_loop_rhs,
    single_loop_storage,
)
from .sim import IntegratorConfig, integrate_closed_loop, integrate_open_loop

__version__ = "0.1.0"
