"""Command-line front end.

    niconsensus run <config>         certify, simulate, write artifacts
    niconsensus certify <config>     certification only
    niconsensus example paper-fig7   run the bundled three-plant scenario
    niconsensus dump <config>        print the normalized scenario file

Exit codes: 0 success, 1 certification or consensus failure, 2 parse or
validation error, 3 integration or I/O failure.
"""

from __future__ import annotations

import argparse
import csv
import sys
from dataclasses import replace
from pathlib import Path
from typing import Optional

from . import certify
from .network import AssemblyError, NetworkAssembly, edge_coordinate_storage
from .scenario import Scenario, ScenarioError, build, bundled_scenario, dump_scenario, load_scenario
from .sim import IntegrationError, integrate_closed_loop
from .core import Trajectory

EXIT_OK, EXIT_CERT, EXIT_PARSE, EXIT_RUNTIME = 0, 1, 2, 3
DIAGNOSTIC = {"assumption_III_IV"}


def _fmt(v: float) -> str:
    return f"{v:.17g}"


def csv_header(assembly: NetworkAssembly) -> list[str]:
    cols = ["t"]
    for i, d in enumerate(assembly.plant_bank.state_dims, 1):
        cols += [f"x_p{i}_{j}" for j in range(1, d + 1)]
    for k, d in enumerate(assembly.controller_bank.state_dims, 1):
        cols += [f"x_c{k}_{j}" for j in range(1, d + 1)]
    m = assembly.io_dim
    for i in range(1, assembly.topology.node_count + 1):
        cols += [f"y_p{i}"] if m == 1 else [f"y_p{i}_{j}" for j in range(1, m + 1)]
    return cols + ["W_hat", "consensus"]


def emit_trajectory_csv(traj: Trajectory, assembly: NetworkAssembly, path) -> None:
    n_y = assembly.io_dim * assembly.topology.node_count
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(csv_header(assembly))
        for k, t in enumerate(traj.times):
            row = [t, *traj.states[k], *traj.aux_outputs[k, :n_y],
                   traj.storage_values[k], traj.extras["consensus"][k]]
            w.writerow([_fmt(float(v)) for v in row])


def emit_summary_csv(traj: Trajectory, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "W_hat", "consensus"])
        for t, W, c in zip(traj.times, traj.storage_values, traj.extras["consensus"]):
            w.writerow([_fmt(t), _fmt(W), _fmt(c)])


def run_certification(s: Scenario, assembly: NetworkAssembly, plants, controllers) -> list:
    spec = s.certification
    checks = set(spec.checks)
    seed = spec.seed
    reports = []

    def batch(system):
        return certify.excitation_batch(system.io_dim, system.state_dim, spec.runs, seed)

    for i, e in enumerate(plants, 1):
        subj = f"p{i}"
        if "ni" in checks:
            sig, x0s = batch(e.system)
            reports.append(certify.check_ni_trajectory(e.system, e.storage, sig, x0s,
                                                       tol=spec.tol, seed=seed, subject=subj))
        if "assumption_I" in checks:
            reports.append(certify.check_assumption_I(e.system, seed=seed, subject=subj))
        if "assumption_III_IV" in checks:
            sig, x0s = batch(e.system)
            reports.append(certify.check_assumption_III_IV(e.system, sig, x0s, seed=seed, subject=subj))
    for k, e in enumerate(controllers, 1):
        subj = f"c{k}"
        if checks & {"ni", "osni"}:
            sig, x0s = batch(e.system)
            ni, osni = certify.check_dissipation(e.system, e.storage, sig, x0s, tol=spec.tol,
                                                 floor=spec.floor, seed=seed, subject=subj)
            reports += [r for r in (ni, osni) if r.property in checks]
        if "assumption_II" in checks:
            reports.append(certify.check_assumption_II(e.system, seed=seed, subject=subj,
                                                       floor=spec.floor))
        if "assumption_III_IV" in checks:
            sig, x0s = batch(e.system)
            reports.append(certify.check_assumption_III_IV(e.system, sig, x0s, seed=seed, subject=subj))
    if "assumption_V" in checks:
        reports.append(certify.check_assumption_V(assembly, seed=seed))
    if "pd_storage" in checks:
        try:
            W = edge_coordinate_storage(assembly)
        except AssemblyError as exc:
            reports.append(certify.CertReport("pd_storage", "inconclusive", "W_hat", seed=seed,
                                              note=str(exc)))
        else:
            d = assembly.incidence.shape[0] + assembly.controller_state_dim
            box = spec.pd_box
            reports.append(certify.check_positive_definite(
                W, ([-box] * d, [box] * d), spec.pd_samples, seed, subject="W_hat"))
    return reports


def run_scenario(s: Scenario, *, simulate: bool = True, out_dir: Optional[Path] = None) -> int:
    try:
        assembly, X0, plants, controllers = build(s)
    except (AssemblyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    out = Path(out_dir if out_dir is not None else s.output_dir)

    reports = run_certification(s, assembly, plants, controllers)
    failed = [r for r in reports if r.property not in DIAGNOSTIC and not r.passed]
    for r in reports:
        print(r.line())
    for r in failed:
        print(f"certification failed: {r.line()}", file=sys.stderr)

    try:
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.txt").write_text("".join(r.line() + "\n" for r in reports))
    except OSError as exc:
        print(f"error: cannot write report: {exc}", file=sys.stderr)
        return EXIT_RUNTIME

    if not simulate:
        return EXIT_CERT if failed else EXIT_OK

    try:
        traj = integrate_closed_loop(assembly, X0, s.integrator)
    except IntegrationError as exc:
        print(f"error: integration failed at t={exc.time:.9g}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    try:
        emit_trajectory_csv(traj, assembly, out / "trajectory.csv")
        emit_summary_csv(traj, out / "summary.csv")
    except OSError as exc:
        print(f"error: cannot write trajectory: {exc}", file=sys.stderr)
        return EXIT_RUNTIME

    final = float(traj.extras["consensus"][-1])
    ok = final < s.consensus_threshold
    print(f"consensus t={traj.times[-1]:.6g} metric={final:.6g} "
          f"threshold={s.consensus_threshold:g} {'pass' if ok else 'fail'}")
    if failed or not ok:
        return EXIT_CERT
    return EXIT_OK


def _apply_overrides(s: Scenario, args) -> Scenario:
    if args.seed is not None:
        s = replace(s, certification=replace(s.certification, seed=args.seed))
    if args.t_end is not None:
        s = replace(s, integrator=s.integrator.with_(t_end=args.t_end))
    if args.tol is not None:
        s = replace(s, integrator=s.integrator.with_(abs_tol=args.tol, rel_tol=args.tol))
    return s


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="niconsensus", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--seed", type=int, default=None, help="certification seed")
        p.add_argument("--out-dir", type=Path, default=None)
        p.add_argument("--t-end", type=float, default=None)
        p.add_argument("--tol", type=float, default=None, help="integrator abs/rel tolerance")

    p = sub.add_parser("run", help="certify and simulate a scenario")
    p.add_argument("config", type=Path)
    common(p)
    p = sub.add_parser("certify", help="run certification checks only")
    p.add_argument("config", type=Path)
    common(p)
    p = sub.add_parser("example", help="run a bundled scenario")
    p.add_argument("name", choices=["paper-fig7"])
    common(p)
    p = sub.add_parser("dump", help="print the normalized scenario")
    p.add_argument("config", type=Path)
    p.add_argument("-o", "--output", type=Path, default=None)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "example":
            s = bundled_scenario(args.name)
        else:
            s = load_scenario(args.config)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE

    if args.command == "dump":
        text = dump_scenario(s)
        if args.output is None:
            sys.stdout.write(text)
        else:
            args.output.write_text(text)
        return EXIT_OK
    try:
        s = _apply_overrides(s, args)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    return run_scenario(s, simulate=args.command != "certify", out_dir=args.out_dir)


if __name__ == "__main__":
    sys.exit(main())
