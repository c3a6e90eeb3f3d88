"""Sampling-based certification of dissipation inequalities and steady-state
assumptions.

Every check here is falsification, not proof: ``pass`` means no violation
was found on the sampled states/trajectories at the stated tolerances.
Reports are deterministic given the seed.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy.stats import qmc

from .core import StorageFunction, SystemModel, TestSignal, fd_jacobian, output_rate
from .network import NetworkAssembly
from .sim import IntegrationError, IntegratorConfig, integrate_open_loop, solve

PROPERTIES = (
    "ni",
    "osni",
    "assumption_I",
    "assumption_II",
    "assumption_III_IV",
    "assumption_V",
    "pd_storage",
)
VERDICTS = ("pass", "fail", "inconclusive")

NI_TOL = 1e-7
STRICTNESS_FLOOR = 0.01
RATE_FLOOR = 1e-10
ROOT_TOL = 1e-10
STEADY_SIGN_TOL = 1e-10
HAT_SIGN_TOL = 1e-8

DEFAULT_CERT_CONFIG = IntegratorConfig(t_end=10.0, abs_tol=1e-8, rel_tol=1e-8, max_step=0.1)


@dataclass
class CertReport:
    property: str
    verdict: str
    subject: str = ""
    witness: Optional[dict] = None
    estimate: Optional[float] = None
    samples_used: int = 0
    seed: int = 0
    note: str = ""

    def __post_init__(self):
        if self.property not in PROPERTIES:
            raise ValueError(f"unknown property {self.property!r}")
        if self.verdict not in VERDICTS:
            raise ValueError(f"unknown verdict {self.verdict!r}")

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"

    def line(self) -> str:
        """``<property> <verdict> <estimate|witness> seed=<n>``."""
        name = f"{self.property}[{self.subject}]" if self.subject else self.property
        if self.verdict == "fail" and self.witness is not None:
            detail = "witness=" + _fmt_witness(self.witness)
        elif self.estimate is not None:
            detail = f"estimate={self.estimate:.10g}"
        else:
            detail = "estimate=none"
        return f"{name} {self.verdict} {detail} seed={self.seed}"


def _fmt_witness(w: dict) -> str:
    parts = []
    for k, v in w.items():
        if isinstance(v, np.ndarray):
            v = "[" + ";".join(f"{c:.10g}" for c in v) + "]"
        elif isinstance(v, float):
            v = f"{v:.10g}"
        parts.append(f"{k}={v}")
    return "{" + ",".join(parts) + "}"


def excitation_batch(
    io_dim: int, state_dim: int, count: int, seed: int = 0, amplitude: float = 1.0
) -> tuple[list[TestSignal], list[np.ndarray]]:
    """Seeded excitation signals and initial states for trajectory checks.

    Mostly smoothed-random inputs with some sinusoids and steps mixed in.
    """
    rng = np.random.default_rng(seed)
    signals, x0s = [], []
    for i in range(count):
        sub = int(rng.integers(0, 2**31 - 1))
        kind = ("smoothed-random", "smoothed-random", "sinusoid", "step")[i % 4]
        signals.append(
            TestSignal(
                kind=kind,
                io_dim=io_dim,
                amplitude=amplitude * float(rng.uniform(0.2, 1.0)),
                frequency=float(rng.uniform(0.2, 2.0)),
                offset=float(rng.uniform(-0.2, 0.2)) * amplitude,
                seed=sub,
                step_time=float(rng.uniform(0.5, 5.0)),
                horizon=20.0,
            )
        )
        x0s.append(rng.uniform(-1.0, 1.0, state_dim))
    return signals, x0s


def _run_batch(system, signals, x0s, cfg, workers):
    def one(args):
        sig, x0 = args
        return integrate_open_loop(system, sig, x0, cfg)

    jobs = list(zip(signals, x0s))
    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(one, jobs))
    return [one(j) for j in jobs]


def _batch_inputs(system, signals, x0s, seed):
    if signals is None:
        signals, gen_x0s = excitation_batch(system.io_dim, system.state_dim, 100, seed)
        if x0s is None:
            x0s = gen_x0s
    if x0s is None:
        rng = np.random.default_rng(seed)
        x0s = [rng.uniform(-1.0, 1.0, system.state_dim) for _ in signals]
    if len(signals) != len(x0s):
        raise ValueError("one initial state per signal required")
    if not signals:
        raise ValueError("batch must contain at least one signal")
    return signals, x0s


def dissipation_terms(system: SystemModel, storage: StorageFunction, x, u):
    """``(V', u^T y_tilde', y_tilde')`` at one sample."""
    x = np.asarray(x, dtype=np.float64)
    u = np.asarray(u, dtype=np.float64)
    rate = output_rate(system, x, u)
    return storage.rate(system, x, u), float(u @ rate), rate


def _ni_from_runs(system, storage, runs, tol, seed, subject):
    n = 0
    worst = -np.inf
    for r, traj in enumerate(runs):
        for t, x, u in zip(traj.times, traj.states, traj.inputs):
            vdot, supply, _ = dissipation_terms(system, storage, x, u)
            excess = vdot - supply - tol * (1.0 + abs(supply))
            worst = max(worst, vdot - supply)
            n += 1
            if excess > 0:
                witness = {"run": r, "t": float(t), "x": x.copy(), "u": u.copy(),
                           "vdot": vdot, "supply": supply, "excess": excess}
                return CertReport("ni", "fail", subject, witness, vdot - supply, n, seed)
    return CertReport("ni", "pass", subject, None, worst, n, seed,
                      note="estimate is max(V' - u^T y_tilde') over samples")


def _osni_from_runs(system, storage, runs, floor, rate_floor, seed, subject):
    eps_hat = np.inf
    argmin = None
    n = 0
    for r, traj in enumerate(runs):
        for t, x, u in zip(traj.times, traj.states, traj.inputs):
            vdot, supply, rate = dissipation_terms(system, storage, x, u)
            energy = float(rate @ rate)
            if energy <= rate_floor:
                continue
            n += 1
            ratio = (supply - vdot) / energy
            if ratio < eps_hat:
                eps_hat = ratio
                argmin = {"run": r, "t": float(t), "x": x.copy(), "u": u.copy(), "ratio": ratio}
    if n == 0:
        return CertReport("osni", "inconclusive", subject, seed=seed,
                          note="insufficient excitation: every |y_tilde'|^2 below floor")
    if eps_hat > floor:
        return CertReport("osni", "pass", subject, None, eps_hat, n, seed)
    return CertReport("osni", "fail", subject, argmin, eps_hat, n, seed)


def check_ni_trajectory(
    system: SystemModel,
    storage: StorageFunction,
    signals: Optional[Sequence[TestSignal]] = None,
    x0s=None,
    cfg: IntegratorConfig = DEFAULT_CERT_CONFIG,
    *,
    tol: float = NI_TOL,
    seed: int = 0,
    subject: str = "",
    workers: int = 1,
) -> CertReport:
    """Falsify ``V' <= u^T y_tilde'`` at every record point of every run.

    A sample violates when ``V' > u^T y_tilde' + tol (1 + |u^T y_tilde'|)``.
    Without explicit ``signals``, 100 seeded excitations are generated.
    """
    signals, x0s = _batch_inputs(system, signals, x0s, seed)
    subject = subject or system.label
    try:
        runs = _run_batch(system, signals, x0s, cfg, workers)
    except IntegrationError as exc:
        return CertReport("ni", "inconclusive", subject, seed=seed, note=str(exc))
    return _ni_from_runs(system, storage, runs, tol, seed, subject)


def check_osni_trajectory(
    system: SystemModel,
    storage: StorageFunction,
    signals: Optional[Sequence[TestSignal]] = None,
    x0s=None,
    cfg: IntegratorConfig = DEFAULT_CERT_CONFIG,
    *,
    floor: float = STRICTNESS_FLOOR,
    rate_floor: float = RATE_FLOOR,
    seed: int = 0,
    subject: str = "",
    workers: int = 1,
) -> CertReport:
    """Estimate the output-strictness level as the infimum of
    ``(u^T y_tilde' - V') / |y_tilde'|^2`` over excited samples.

    Passes when the estimate exceeds ``floor``; samples with
    ``|y_tilde'|^2 <= rate_floor`` are ignored.
    """
    signals, x0s = _batch_inputs(system, signals, x0s, seed)
    subject = subject or system.label
    try:
        runs = _run_batch(system, signals, x0s, cfg, workers)
    except IntegrationError as exc:
        return CertReport("osni", "inconclusive", subject, seed=seed, note=str(exc))
    return _osni_from_runs(system, storage, runs, floor, rate_floor, seed, subject)


def check_dissipation(
    system: SystemModel,
    storage: StorageFunction,
    signals=None,
    x0s=None,
    cfg: IntegratorConfig = DEFAULT_CERT_CONFIG,
    *,
    tol: float = NI_TOL,
    floor: float = STRICTNESS_FLOOR,
    seed: int = 0,
    subject: str = "",
    workers: int = 1,
) -> tuple[CertReport, CertReport]:
    """NI and OSNI reports from one shared batch of runs."""
    signals, x0s = _batch_inputs(system, signals, x0s, seed)
    subject = subject or system.label
    try:
        runs = _run_batch(system, signals, x0s, cfg, workers)
    except IntegrationError as exc:
        return (CertReport("ni", "inconclusive", subject, seed=seed, note=str(exc)),
                CertReport("osni", "inconclusive", subject, seed=seed, note=str(exc)))
    return (_ni_from_runs(system, storage, runs, tol, seed, subject),
            _osni_from_runs(system, storage, runs, floor, RATE_FLOOR, seed, subject))


def witness_violation(report: CertReport, system: SystemModel, storage: StorageFunction,
                      *, tol: float = NI_TOL, floor: float = STRICTNESS_FLOOR) -> float:
    """Re-evaluate a stored ni/osni witness; positive means still violating."""
    w = report.witness
    vdot, supply, rate = dissipation_terms(system, storage, w["x"], w["u"])
    if report.property == "ni":
        return vdot - supply - tol * (1.0 + abs(supply))
    if report.property == "osni":
        return floor - (supply - vdot) / float(rate @ rate)
    raise ValueError(f"no replay for {report.property}")


def find_steady_state(
    system: SystemModel,
    u_bar,
    *,
    starts: int = 16,
    box: float = 10.0,
    seed: int = 0,
    tol: float = ROOT_TOL,
    max_iter: int = 100,
) -> Optional[np.ndarray]:
    """Solve ``f(x, u_bar) = 0`` by damped Newton from the origin and seeded starts.

    The Jacobian is a central finite difference; singular systems use the
    least-squares step. Returns None when no start converges.
    """
    u_bar = np.atleast_1d(np.asarray(u_bar, dtype=np.float64))
    n = system.state_dim
    F = lambda x: system.f(x, u_bar)
    rng = np.random.default_rng(seed)
    candidates = [np.zeros(n)] + [rng.uniform(-box, box, n) for _ in range(starts)]
    for x in candidates:
        fx = F(x)
        norm = float(np.linalg.norm(fx))
        for _ in range(max_iter):
            if norm < tol:
                return x
            J = fd_jacobian(F, x, n)
            step = np.linalg.lstsq(J, -fx, rcond=None)[0]
            if not np.any(step):
                break
            alpha = 1.0
            while alpha > 1e-10:
                trial = x + alpha * step
                f_trial = F(trial)
                n_trial = float(np.linalg.norm(f_trial))
                if np.isfinite(n_trial) and n_trial < (1.0 - 1e-4 * alpha) * norm:
                    break
                alpha *= 0.5
            else:
                break
            x, fx, norm = trial, f_trial, n_trial
        if norm < tol:
            return x
    return None


def default_input_grid(io_dim: int, include_zero: bool = False) -> list[np.ndarray]:
    """Log-spaced 16-point grid over [-8, 8] along each input coordinate."""
    mags = np.geomspace(0.125, 8.0, 8)
    values = np.concatenate([-mags[::-1], mags])
    grid = []
    if include_zero:
        grid.append(np.zeros(io_dim))
    for i in range(io_dim):
        for v in values:
            e = np.zeros(io_dim)
            e[i] = v
            grid.append(e)
    return grid


def _steady_states(system, grid, seed):
    out = []
    for u in grid:
        u = np.atleast_1d(np.asarray(u, dtype=np.float64))
        x = find_steady_state(system, u, seed=seed)
        if x is not None:
            y = system.h(x) + system.feedthrough @ u
            out.append((u, x, y))
    return out


def check_assumption_I(system: SystemModel, u_grid=None, *, seed: int = 0, subject: str = "",
                       tol: float = STEADY_SIGN_TOL) -> CertReport:
    """``u_bar^T y_bar >= 0`` at every steady state found on the grid.

    No steady state on the grid is a vacuous pass.
    """
    grid = default_input_grid(system.io_dim) if u_grid is None else u_grid
    subject = subject or system.label
    found = _steady_states(system, grid, seed)
    if not found:
        return CertReport("assumption_I", "pass", subject, samples_used=0, seed=seed,
                          note="vacuous: no grid input admits a steady state")
    worst = np.inf
    for u, x, y in found:
        s = float(u @ y)
        worst = min(worst, s)
        if s < -tol:
            return CertReport("assumption_I", "fail", subject,
                              {"u": u, "x": x, "y": y, "uy": s}, s, len(found), seed)
    return CertReport("assumption_I", "pass", subject, None, worst, len(found), seed)


def check_assumption_II(system: SystemModel, u_grid=None, *, seed: int = 0, subject: str = "",
                        floor: float = STRICTNESS_FLOOR) -> CertReport:
    """Estimate ``gamma`` as ``min -u_bar^T y_bar / |u_bar|^2`` over steady states."""
    grid = default_input_grid(system.io_dim) if u_grid is None else u_grid
    grid = [np.atleast_1d(np.asarray(u, dtype=np.float64)) for u in grid]
    if any(not np.any(u) for u in grid):
        raise ValueError("assumption II grid must exclude u = 0")
    subject = subject or system.label
    found = _steady_states(system, grid, seed)
    if not found:
        return CertReport("assumption_II", "inconclusive", subject, seed=seed,
                          note="no grid input admits a steady state")
    gamma_hat, arg = np.inf, None
    for u, x, y in found:
        ratio = -float(u @ y) / float(u @ u)
        if ratio < gamma_hat:
            gamma_hat, arg = ratio, {"u": u, "x": x, "y": y, "ratio": ratio}
    verdict = "pass" if gamma_hat > floor else "fail"
    return CertReport("assumption_II", verdict, subject, None if verdict == "pass" else arg,
                      gamma_hat, len(found), seed)


def check_assumption_III_IV(
    system: SystemModel,
    signals: Optional[Sequence[TestSignal]] = None,
    x0s=None,
    cfg: IntegratorConfig = DEFAULT_CERT_CONFIG,
    *,
    seed: int = 0,
    subject: str = "",
    window: int = 3,
    rate_tol: float = 1e-8,
    motion_tol: float = 1e-6,
) -> CertReport:
    """Diagnostic only: look for windows where ``h`` is still but ``x`` or ``u`` move.

    These assumptions quantify over all time intervals, so the verdict is
    always ``inconclusive``; the first suspicious window, if any, is kept as
    the witness and ``estimate`` counts suspicious windows.
    """
    signals, x0s = _batch_inputs(system, signals, x0s, seed)
    subject = subject or system.label
    suspicious, first, n = 0, None, 0
    for r, (sig, x0) in enumerate(zip(signals, x0s)):
        try:
            traj = integrate_open_loop(system, sig, x0, cfg)
        except IntegrationError:
            continue
        still = []
        for t, x, u in zip(traj.times, traj.states, traj.inputs):
            n += 1
            hdot = np.linalg.norm(output_rate(system, x, u))
            xdot = np.linalg.norm(system.f(x, u))
            udot = np.linalg.norm(sig.derivative(t))
            still.append((hdot < rate_tol, xdot, udot, t, x))
        for k in range(len(still) - window + 1):
            win = still[k : k + window]
            if all(w[0] for w in win) and any(w[1] > motion_tol or w[2] > motion_tol for w in win):
                suspicious += 1
                if first is None:
                    first = {"run": r, "t": float(win[0][3]), "x": win[0][4].copy()}
                break
    return CertReport("assumption_III_IV", "inconclusive", subject, first, float(suspicious), n,
                      seed, note="heuristic diagnostic; not decidable from finite runs")


def check_assumption_V(
    assembly: NetworkAssembly,
    *,
    inputs: int = 8,
    starts: int = 3,
    scale: float = 0.5,
    seed: int = 0,
    cfg: IntegratorConfig = IntegratorConfig(t_end=20.0, abs_tol=1e-10, rel_tol=1e-10, max_step=0.05),
    settle_tol: float = 1e-6,
    tol: float = HAT_SIGN_TOL,
) -> CertReport:
    """Drive the networked plants with constant ``U_hat`` and check
    ``U_hat^T Y_hat >= 0`` for every run whose ``Y_hat`` settles.

    ``U_hat = 0`` is always in the grid, once from equal plant states.
    Settling means total variation of ``Y_hat`` over the last 10 % of the
    run below ``settle_tol``; other runs are skipped.
    """
    rng = np.random.default_rng(seed)
    k = assembly.incidence.shape[0]
    n_p = assembly.plant_state_dim
    grid = [np.zeros(k)] + [rng.normal(0.0, scale, k) for _ in range(inputs)]
    settled, worst = 0, np.inf
    for gi, U_hat in enumerate(grid):
        U_p = assembly.plant_inputs_from_hat(U_hat)
        x0_list = [rng.uniform(-1.0, 1.0, n_p) for _ in range(starts)]
        if gi == 0:
            x0_list.insert(0, np.full(n_p, float(rng.uniform(-1.0, 1.0))))
        for x0 in x0_list:
            try:
                times, states = solve(lambda t, X: assembly.plant_derivatives(X, U_p), x0, cfg)
            except IntegrationError:
                continue
            Y_hat = np.array([assembly.networked_output(X) for X in states])
            tail = times >= 0.9 * times[-1]
            tv = float(np.sum(np.abs(np.diff(Y_hat[tail], axis=0))))
            if tv >= settle_tol:
                continue
            settled += 1
            s = float(U_hat @ Y_hat[-1])
            worst = min(worst, s)
            if s < -tol:
                witness = {"U_hat": U_hat, "x0": x0, "Y_hat": Y_hat[-1], "uy": s}
                return CertReport("assumption_V", "fail", "network", witness, s, settled, seed)
    if settled == 0:
        return CertReport("assumption_V", "inconclusive", "network", seed=seed,
                          note="no run settled")
    return CertReport("assumption_V", "pass", "network", None, worst, settled, seed)


def check_positive_definite(
    storage_expr: Callable[[np.ndarray], float],
    domain,
    samples: int = 4096,
    seed: int = 0,
    *,
    near_radius: float = 1e-3,
    near_samples: int = 256,
    origin_tol: float = 1e-12,
    subject: str = "",
) -> CertReport:
    """Check ``V(0) = 0`` and ``V(z) > 0`` on scrambled-Sobol box samples and a
    small sphere around the origin.

    ``domain`` is ``(lower, upper)`` bounds. ``estimate`` is the smallest
    ``V(z) / |z|^2`` seen.
    """
    lo, hi = (np.asarray(b, dtype=np.float64) for b in domain)
    d = lo.shape[0]
    v0 = float(storage_expr(np.zeros(d)))
    if abs(v0) > origin_tol:
        return CertReport("pd_storage", "fail", subject, {"z": np.zeros(d), "value": v0}, v0, 1, seed)
    sobol = qmc.Sobol(d, scramble=True, seed=seed)
    box = qmc.scale(sobol.random_base2(int(np.ceil(np.log2(max(samples, 2))))), lo, hi)[:samples]
    rng = np.random.default_rng(seed)
    dirs = rng.standard_normal((near_samples, d))
    near = near_radius * dirs / np.linalg.norm(dirs, axis=1, keepdims=True)
    n, margin = 1, np.inf
    for z in np.vstack([near, box]):
        r2 = float(z @ z)
        if r2 == 0.0:
            continue
        v = float(storage_expr(z))
        n += 1
        if not v > 0:
            return CertReport("pd_storage", "fail", subject, {"z": z, "value": v}, v / r2, n, seed)
        margin = min(margin, v / r2)
    return CertReport("pd_storage", "pass", subject, None, margin, n, seed)
