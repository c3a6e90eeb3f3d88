"""Scenario files: TOML description of plants, graph, controllers, integrator
and certification settings.

Grammar (all keys except the component lists have defaults)::

    name = "paper-fig7"
    io_dim = 1
    consensus_threshold = 0.02

    [topology]
    node_count = 3
    edges = [[1, 2], [2, 3]]
    orientation = [1, 2]        # initial vertex per edge; default: smaller index

    [[plants]]                  # one table per node, in node order
    family = "cubic_integrator"
    parameters = { mu = 1.0 }
    x0 = [30.0]

    [[controllers]]             # one table per edge, in edge order
    family = "cubic_damped_controller"
    parameters = { a = 5.0, b = 3.0 }
    x0 = [0.0]
    storage = { quadratic = [[2.0]] }   # optional override, V = x^T P x / 2

    [integrator]                # fields of IntegratorConfig
    method = "rk45_adaptive"
    t_end = 10000.0
    records = 400
    t_first_record = 0.001

    [certification]
    checks = ["ni", "osni", "assumption_II", "assumption_V", "pd_storage"]
    seed = 0
    runs = 20

    [output]
    directory = "out"
"""

from __future__ import annotations

import re
from dataclasses import asdict, dataclass, field, fields
from importlib import resources
from pathlib import Path
from typing import Optional

import numpy as np
import tomli
import tomli_w

from .catalog import FAMILIES, CatalogEntry, make
from .certify import PROPERTIES
from .core import quadratic_storage
from .graph import Topology, unreachable_nodes
from .network import NetworkAssembly
from .sim import IntegratorConfig

BUNDLED = {"paper-fig7": "paper_fig7.toml"}


class ScenarioError(ValueError):
    """Parse or validation error; the message carries ``file:line``."""


@dataclass
class ComponentSpec:
    family: str
    parameters: dict = field(default_factory=dict)
    x0: Optional[list] = None
    storage: Optional[dict] = None


@dataclass
class CertificationSpec:
    checks: list = field(default_factory=lambda: ["ni", "osni", "assumption_II", "assumption_V", "pd_storage"])
    seed: int = 0
    runs: int = 100
    tol: float = 1e-7
    floor: float = 0.01
    pd_box: float = 5.0
    pd_samples: int = 4096


@dataclass
class Scenario:
    plants: list
    controllers: list
    node_count: int
    edges: list
    orientation: Optional[list] = None
    io_dim: int = 1
    integrator: IntegratorConfig = field(default_factory=lambda: IntegratorConfig(t_end=10.0))
    certification: CertificationSpec = field(default_factory=CertificationSpec)
    output_dir: str = "out"
    consensus_threshold: float = 1e-2
    name: str = "scenario"

    @property
    def topology(self) -> Topology:
        return Topology.from_pairs(self.node_count, self.edges, self.orientation)


def _line_of(text: str, pattern: str, occurrence: int = 0) -> int:
    hits = [i + 1 for i, line in enumerate(text.splitlines()) if re.match(pattern, line)]
    return hits[occurrence] if occurrence < len(hits) else 1


def _component(raw, where: str) -> ComponentSpec:
    if not isinstance(raw, dict) or "family" not in raw:
        raise KeyError(f"{where}: missing 'family'")
    unknown = set(raw) - {"family", "parameters", "x0", "storage"}
    if unknown:
        raise KeyError(f"{where}: unknown keys {sorted(unknown)}")
    x0 = raw.get("x0")
    return ComponentSpec(
        family=raw["family"],
        parameters=dict(raw.get("parameters", {})),
        x0=[float(v) for v in x0] if x0 is not None else None,
        storage=raw.get("storage"),
    )


def parse_scenario(text: str, source: str = "<scenario>") -> Scenario:
    try:
        data = tomli.loads(text)
    except tomli.TOMLDecodeError as exc:
        raise ScenarioError(f"{source}: {exc}") from None
    try:
        topo = data["topology"]
        integ = dict(data.get("integrator", {}))
        known = {f.name for f in fields(IntegratorConfig)}
        bad = set(integ) - known
        if bad:
            line = _line_of(text, r"\s*\[integrator\]")
            raise ScenarioError(f"{source}:{line}: unknown integrator keys {sorted(bad)}")
        if "t_end" not in integ:
            integ["t_end"] = 10.0
        cert = dict(data.get("certification", {}))
        bad = set(cert) - {f.name for f in fields(CertificationSpec)}
        if bad:
            line = _line_of(text, r"\s*\[certification\]")
            raise ScenarioError(f"{source}:{line}: unknown certification keys {sorted(bad)}")
        scenario = Scenario(
            plants=[_component(p, f"plants[{i}]") for i, p in enumerate(data.get("plants", []))],
            controllers=[
                _component(c, f"controllers[{k}]") for k, c in enumerate(data.get("controllers", []))
            ],
            node_count=int(topo["node_count"]),
            edges=[[int(v) for v in e] for e in topo.get("edges", [])],
            orientation=[int(v) for v in topo["orientation"]] if "orientation" in topo else None,
            io_dim=int(data.get("io_dim", 1)),
            integrator=IntegratorConfig(**integ),
            certification=CertificationSpec(**cert),
            output_dir=str(data.get("output", {}).get("directory", "out")),
            consensus_threshold=float(data.get("consensus_threshold", 1e-2)),
            name=str(data.get("name", Path(source).stem)),
        )
    except ScenarioError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ScenarioError(f"{source}:1: {exc}") from None
    validate(scenario, text, source)
    return scenario


def load_scenario(path) -> Scenario:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ScenarioError(f"{path}: {exc.strerror}") from None
    return parse_scenario(text, str(path))


def bundled_scenario_text(name: str) -> str:
    try:
        fname = BUNDLED[name]
    except KeyError:
        raise ScenarioError(f"unknown bundled scenario {name!r}; available: {', '.join(BUNDLED)}") from None
    return resources.files("niconsensus.scenarios").joinpath(fname).read_text()


def bundled_scenario(name: str) -> Scenario:
    return parse_scenario(bundled_scenario_text(name), f"<bundled:{name}>")


def validate(s: Scenario, text: str = "", source: str = "<scenario>") -> None:
    def fail(msg, pattern=r"", occurrence=0):
        line = _line_of(text, pattern, occurrence) if pattern else 1
        raise ScenarioError(f"{source}:{line}: {msg}")

    topo_pat = r"\s*\[topology\]"
    try:
        topo = s.topology
    except ValueError as exc:
        fail(f"invalid topology: {exc}", topo_pat)
    missing = unreachable_nodes(topo)
    if missing:
        fail(
            "topology is not connected; node(s) "
            + ", ".join(str(v) for v in missing)
            + " unreachable from node 1",
            topo_pat,
        )
    if len(s.plants) != s.node_count:
        fail(f"{len(s.plants)} plants for node_count = {s.node_count}", r"\s*\[\[plants\]\]")
    if len(s.controllers) != topo.edge_count:
        fail(
            f"{len(s.controllers)} controllers for {topo.edge_count} edges",
            r"\s*\[\[controllers\]\]",
        )
    for kind, specs in (("plants", s.plants), ("controllers", s.controllers)):
        for i, spec in enumerate(specs):
            pat = rf"\s*\[\[{kind}\]\]"
            if spec.family not in FAMILIES:
                fail(f"{kind}[{i}]: unknown family {spec.family!r}", pat, i)
            try:
                entry = build_entry(spec)
            except (TypeError, ValueError) as exc:
                fail(f"{kind}[{i}]: {exc}", pat, i)
            if entry.system.io_dim != s.io_dim:
                fail(f"{kind}[{i}]: io_dim {entry.system.io_dim} != scenario io_dim {s.io_dim}", pat, i)
            if spec.x0 is not None and len(spec.x0) != entry.system.state_dim:
                fail(f"{kind}[{i}]: x0 has {len(spec.x0)} entries, state_dim is {entry.system.state_dim}", pat, i)
    for check in s.certification.checks:
        if check not in PROPERTIES:
            fail(f"unknown certification check {check!r}", r"\s*\[certification\]")


def build_entry(spec: ComponentSpec) -> CatalogEntry:
    entry = make(spec.family, **spec.parameters)
    if spec.storage is None:
        return entry
    if set(spec.storage) != {"quadratic"}:
        raise ValueError(f"storage override must be {{quadratic = P}}, got {spec.storage}")
    storage = quadratic_storage(spec.storage["quadratic"], entry.system.label)
    if np.shape(spec.storage["quadratic"]) != (entry.system.state_dim,) * 2:
        raise ValueError("storage matrix shape does not match state_dim")
    # a replaced certificate voids the recorded constants
    return CatalogEntry(entry.family, entry.parameters, entry.system, storage)


def build(s: Scenario) -> tuple[NetworkAssembly, np.ndarray, list, list]:
    """Assembly, stacked initial state, plant entries, controller entries."""
    plants = [build_entry(p) for p in s.plants]
    controllers = [build_entry(c) for c in s.controllers]
    assembly = NetworkAssembly.from_entries(s.topology, plants, controllers)
    x0 = []
    for spec, e in zip(s.plants + s.controllers, plants + controllers):
        x0.extend(spec.x0 if spec.x0 is not None else [0.0] * e.system.state_dim)
    return assembly, np.array(x0, dtype=np.float64), plants, controllers


def _drop_none(d: dict) -> dict:
    return {k: v for k, v in d.items() if v is not None}


def dump_scenario(s: Scenario) -> str:
    """Normalized TOML text; parses back to an equal Scenario."""
    topo = {"node_count": s.node_count, "edges": s.edges}
    if s.orientation is not None:
        topo["orientation"] = s.orientation
    doc = {
        "name": s.name,
        "io_dim": s.io_dim,
        "consensus_threshold": s.consensus_threshold,
        "topology": topo,
        "plants": [_drop_none(asdict(p)) for p in s.plants],
        "controllers": [_drop_none(asdict(c)) for c in s.controllers],
        "integrator": _drop_none(asdict(s.integrator)),
        "certification": asdict(s.certification),
        "output": {"directory": s.output_dir},
    }
    return tomli_w.dumps(doc)
