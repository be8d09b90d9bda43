"""Scenario configuration, plant simulation, and the end-to-end pipeline."""
from __future__ import annotations

import csv
import io
import json
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .agent import ObserverGains
from .decomposition import (AgentMeasurementModel, AssumptionViolated, DEFAULT_RANK_TOL, PlantModel,
                            decompose, transform_measurement)
from .intervals import IntervalVector
from .messaging import CommGraph, GraphError, MessageBus
from .network import (AgentObserver, DistributedObserver, NotCertified, certify, collective_error,
                      comparison_trajectory, realized_rho_max, run_observer, steady_state_bounds)
from .synthesis import EPSILON, SynthesisError, design_lp, run_initialization

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
ATTACK_TYPES = ("zero", "step", "ramp", "sinusoid", "table")
NOISE_MODES = ("uniform", "vertex")


class ConfigError(ValueError):
    """Every problem found in a configuration, reported together."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid configuration:\n  - " + "\n  - ".join(self.problems))


class CPDNNotSatisfied(RuntimeError):
    def __init__(self, failing: dict):
        self.failing = failing
        detail = "; ".join(f"agent {i}: dims {dims}" for i, dims in failing.items())
        super().__init__(f"neighbourhood detectability fails ({detail})")


@dataclass(frozen=True)
class AttackChannel:
    kind: str = "zero"
    magnitude: float = 0.0
    start: int = 0
    slope: float = 0.0
    period: float = 20.0
    phase: float = 0.0
    table: tuple = ()

    def value(self, k: int) -> float:
        if self.kind == "zero":
            return 0.0
        if self.kind == "step":
            return self.magnitude if k >= self.start else 0.0
        if self.kind == "ramp":
            return self.slope * (k - self.start) if k >= self.start else 0.0
        if self.kind == "sinusoid":
            return self.magnitude * np.sin(2.0 * np.pi * k / self.period + self.phase)
        # piecewise-constant table of [start_step, value] pairs
        v = 0.0
        for s, val in self.table:
            if k >= s:
                v = val
        return v


@dataclass
class ScenarioConfig:
    plant: PlantModel
    agents: list
    graph: CommGraph
    horizon: int
    seed: int
    x0: np.ndarray
    attack: list
    noise_mode: str = "uniform"
    name: str = "scenario"
    epsilon: float = EPSILON
    rank_tol: float = DEFAULT_RANK_TOL
    exchange_iterations: int = 1
    rounding_guard: float | None = None
    out_dir: str = "out"
    gains: list | None = None
    raw: dict = field(default_factory=dict, repr=False)


# ------------------------------------------------------------------ parsing

def _interval(obj, name, problems):
    try:
        return IntervalVector(np.asarray(obj["lower"], float), np.asarray(obj["upper"], float))
    except (KeyError, TypeError, ValueError) as exc:
        problems.append(f"{name}: {exc}")
        return None


def _matrix(obj, name, problems, rows=None):
    try:
        M = np.asarray(obj, dtype=float)
        if M.ndim == 1 and rows is not None:
            M = M.reshape(rows, -1) if M.size else np.zeros((rows, 0))
        if M.ndim != 2:
            raise ValueError(f"expected a 2-D nested list, got {M.ndim}-D")
        if rows is not None and M.shape[0] != rows:
            raise ValueError(f"has {M.shape[0]} rows, expected {rows}")
        return M
    except (TypeError, ValueError) as exc:
        problems.append(f"{name}: {exc}")
        return None


def _graph(spec, N, problems):
    if spec is None:
        spec = {"type": "complete"}
    try:
        if "neighbors" in spec:
            if len(spec["neighbors"]) != N:
                problems.append(f"graph.neighbors has {len(spec['neighbors'])} entries for {N} agents")
                return None
            return CommGraph(tuple(tuple(nb) for nb in spec["neighbors"]))
        if "edges" in spec:
            return CommGraph.from_edges(N, spec["edges"], add_self_loops=spec.get("add_self_loops", False))
        kind = spec.get("type", "complete")
        builders = {"complete": CommGraph.complete, "path": CommGraph.path,
                    "ring": CommGraph.ring, "isolated": CommGraph.isolated}
        if kind not in builders:
            problems.append(f"graph.type {kind!r} not one of {sorted(builders)}")
            return None
        return builders[kind](N)
    except GraphError as exc:
        problems.append(f"graph: {exc}")
        return None


def _attack(spec, n_p, problems):
    channels = spec.get("channels", []) if spec else []
    out = []
    for c, ch in enumerate(channels):
        kind = ch.get("type", "zero")
        if kind not in ATTACK_TYPES:
            problems.append(f"attack.channels[{c}].type {kind!r} not one of {ATTACK_TYPES}")
            kind = "zero"
        try:
            out.append(AttackChannel(
                kind=kind, magnitude=float(ch.get("magnitude", 0.0)), start=int(ch.get("start", 0)),
                slope=float(ch.get("slope", 0.0)), period=float(ch.get("period", 20.0)),
                phase=float(ch.get("phase", 0.0)), table=tuple((int(k), float(v)) for k, v in ch.get("table", ())),
            ))
        except (TypeError, ValueError) as exc:
            problems.append(f"attack.channels[{c}]: {exc}")
    if n_p is not None and len(channels) not in (0, n_p):
        problems.append(f"attack.channels has {len(channels)} entries, plant has {n_p} unknown inputs")
    return out or [AttackChannel()] * (n_p or 0)


def parse_config(raw: dict, base_dir=None) -> ScenarioConfig:
    """Validate a config dict, collecting every problem before failing."""
    problems = []
    version = raw.get("schema_version")
    if version != SCHEMA_VERSION:
        problems.append(f"schema_version must be {SCHEMA_VERSION}, got {version!r}")
    if "seed" not in raw:
        problems.append("seed is required")
    p = raw.get("plant", {})
    A = _matrix(p.get("A"), "plant.A", problems)
    n = A.shape[0] if A is not None else 0
    B = _matrix(p.get("B"), "plant.B", problems, rows=n)
    # actuator/sensor attacks given separately are stacked into one unknown input
    lumped = "G_actuator" in p
    if lumped:
        G_hat = _matrix(p.get("G_actuator"), "plant.G_actuator", problems, rows=n)
        n_s = G_hat.shape[1] if G_hat is not None else 0
        sensor = [np.asarray(a.get("H_sensor", []), float) for a in raw.get("agents", [])]
        n_o = sensor[0].shape[1] if sensor and sensor[0].ndim == 2 else 0
        G = np.hstack([G_hat, np.zeros((n, n_o))]) if G_hat is not None else None
    else:
        G = _matrix(p.get("G"), "plant.G", problems, rows=n)
    w_bounds = _interval(p.get("w_bounds", {}), "plant.w_bounds", problems)
    x0_bounds = _interval(p.get("x0_bounds", {}), "plant.x0_bounds", problems)
    plant = None
    if not problems:
        try:
            plant = PlantModel(A, B, G, w_bounds, x0_bounds)
        except ValueError as exc:
            problems.append(f"plant: {exc}")

    agents = []
    for a, spec in enumerate(raw.get("agents", [])):
        C = _matrix(spec.get("C"), f"agents[{a}].C", problems)
        m = C.shape[0] if C is not None else 0
        D = _matrix(spec.get("D"), f"agents[{a}].D", problems, rows=m)
        if lumped:
            H_hat = _matrix(spec.get("H_sensor"), f"agents[{a}].H_sensor", problems, rows=m)
            H = np.hstack([np.zeros((m, n_s)), H_hat]) if H_hat is not None else None
        else:
            H = _matrix(spec.get("H"), f"agents[{a}].H", problems, rows=m)
        v = _interval(spec.get("v_bounds", {}), f"agents[{a}].v_bounds", problems)
        if any(o is None for o in (C, D, H, v)):
            continue
        try:
            agent = AgentMeasurementModel(C, D, H, v, name=str(spec.get("name", f"agent{a}")))
            if plant is not None:
                agent.check_against(plant)
            agents.append(agent)
        except ValueError as exc:
            problems.append(f"agents[{a}]: {exc}")
    if not raw.get("agents"):
        problems.append("at least one agent is required")

    N = len(raw.get("agents", []))
    graph = _graph(raw.get("graph"), N, problems) if N else None
    horizon = raw.get("horizon", 200)
    if not isinstance(horizon, int) or horizon < 1:
        problems.append(f"horizon must be a positive integer, got {horizon!r}")
    noise_mode = raw.get("noise", {}).get("mode", "uniform")
    if noise_mode not in NOISE_MODES:
        problems.append(f"noise.mode {noise_mode!r} not one of {NOISE_MODES}")
    n_p = G.shape[1] if G is not None else None
    attack = _attack(raw.get("attack"), n_p, problems)

    x0 = raw.get("x0")
    if x0 is not None:
        x0 = np.asarray(x0, dtype=float)
        if plant is not None and (x0.shape != (plant.n,) or not plant.x0_bounds.contains(x0)):
            problems.append("x0 must lie inside plant.x0_bounds")
    design = raw.get("design", {})
    try:
        if design.get("rounding_guard") is not None and float(design["rounding_guard"]) < 0:
            problems.append("design.rounding_guard must be nonnegative")
    except (TypeError, ValueError):
        problems.append("design.rounding_guard must be a number")
    gains = None
    if "gains" in raw:
        try:
            gains = [ObserverGains(L=np.asarray(g["L"], float), Gamma=np.asarray(g["Gamma"], float))
                     for g in raw["gains"]]
        except (KeyError, TypeError, ValueError) as exc:
            problems.append(f"gains: {exc}")
    if problems:
        raise ConfigError(problems)
    if x0 is None:
        rng = np.random.default_rng([int(raw["seed"]), 0])
        x0 = rng.uniform(plant.x0_bounds.lower, plant.x0_bounds.upper)
    out_dir = raw.get("output", {}).get("dir", "out")
    if base_dir is not None and not Path(out_dir).is_absolute():
        out_dir = str(Path(base_dir) / out_dir)
    return ScenarioConfig(
        plant=plant, agents=agents, graph=graph, horizon=horizon, seed=int(raw["seed"]), x0=x0,
        attack=attack, noise_mode=noise_mode, name=str(raw.get("name", "scenario")),
        epsilon=float(design.get("epsilon", EPSILON)), rank_tol=float(design.get("rank_tol", DEFAULT_RANK_TOL)),
        exchange_iterations=int(design.get("exchange_iterations", 1)),
        rounding_guard=None if design.get("rounding_guard") is None else float(design["rounding_guard"]), out_dir=out_dir, gains=gains, raw=raw,
    )


def load_config(path) -> ScenarioConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError([f"{path}: {exc}"]) from exc
    return parse_config(raw)


# ------------------------------------------------------------------ simulation

@dataclass
class PlantTrajectory:
    x: np.ndarray            # (K+2, n): one extra step so y[K+1] exists
    d: np.ndarray            # (K+2, n_p)
    w: np.ndarray            # (K+1, n_w)
    v: list                  # per agent (K+2, n_v)
    y: list                  # per agent (K+2, m)


def _sample(rng, bounds: IntervalVector, size, mode):
    lo, hi = bounds.lower, bounds.upper
    if mode == "vertex":
        pick = rng.integers(0, 2, size=(size, lo.size)).astype(bool)
        out = np.where(pick, hi, lo)
    else:
        out = rng.uniform(lo, hi, size=(size, lo.size))
    if not (np.all(out >= lo) and np.all(out <= hi)):
        raise AssertionError("sampled noise outside its declared bounds")
    return out


def attack_signal(channels, steps):
    return np.array([[ch.value(k) for ch in channels] for k in range(steps)], dtype=float).reshape(steps, len(channels))


def simulate_plant(cfg: ScenarioConfig) -> PlantTrajectory:
    """Simulate ``K+1`` transitions so that the observer can run ``K`` rounds."""
    plant = cfg.plant
    K = cfg.horizon
    rng = np.random.default_rng(cfg.seed)
    steps = K + 2
    d = attack_signal(cfg.attack, steps)
    w = _sample(rng, plant.w_bounds, steps - 1, cfg.noise_mode)
    v = [_sample(rng, ag.v_bounds, steps, cfg.noise_mode) for ag in cfg.agents]
    x = np.empty((steps, plant.n))
    x[0] = cfg.x0
    for k in range(steps - 1):
        x[k + 1] = plant.A @ x[k] + plant.B @ w[k] + plant.G @ d[k]
    y = [x @ ag.C.T + vi @ ag.D.T + d @ ag.H.T for ag, vi in zip(cfg.agents, v)]
    return PlantTrajectory(x=x, d=d, w=w, v=v, y=y)


# ------------------------------------------------------------------ pipeline

@dataclass
class SynthesisOutcome:
    models: list
    forms: list
    reports: list
    gains: list
    objectives: list


def decompose_all(cfg: ScenarioConfig):
    models = []
    for i, ag in enumerate(cfg.agents):
        models.append(decompose(cfg.plant, ag, rank_tol=cfg.rank_tol, agent_id=i))
    return models


def synthesize(cfg: ScenarioConfig, models=None, bus=None, require_cpdn=True) -> SynthesisOutcome:
    from .agent import affine_form, eta_bounds

    models = models if models is not None else decompose_all(cfg)
    forms = [affine_form(m, cfg.plant) for m in models]
    reports = run_initialization(forms, cfg.graph, bus=bus, epsilon=cfg.epsilon)
    failing = {r.agent: list(r.failing_dims) for r in reports if not r.cpdn_satisfied}
    if failing and require_cpdn:
        raise CPDNNotSatisfied(failing)
    gains, objectives = [], []
    for m, f, r in zip(models, forms, reports):
        width = eta_bounds(cfg.plant, m.agent.v_bounds).width
        res = design_lp(f, r.J_set, width, epsilon=cfg.epsilon)
        gains.append(res.gains)
        objectives.append(res.objective)
    return SynthesisOutcome(models, forms, reports, gains, objectives)


def build_observer(cfg: ScenarioConfig, models, gains, backend=None, bus=None):
    agents = [AgentObserver(m, cfg.plant, g) for m, g in zip(models, gains)]
    return DistributedObserver(agents, cfg.graph, backend=backend, bus=bus,
                               exchange_iterations=cfg.exchange_iterations, rounding_guard=cfg.rounding_guard)


def measurement_channels(models, traj: PlantTrajectory):
    z1, z2 = [], []
    for m, y in zip(models, traj.y):
        z1.append(y @ m.U1)
        z2.append(y @ m.U2)
    return z1, z2


TRACE_FLOAT = "{:.17g}"


def trace_header(n, n_p):
    cols = ["k", "agent"]
    for tag, dim in (("x_lo", n), ("x_hi", n), ("d_lo", n_p), ("d_hi", n_p), ("x_true", n), ("d_true", n_p),
                     ("x_width", n), ("d_width", n_p), ("sw_lo", n), ("sw_hi", n)):
        cols += [f"{tag}_{s}" for s in range(dim)]
    return cols


def write_trace(fh, run, traj: PlantTrajectory):
    K, N, n_p = run.d_lo.shape
    n = run.x_lo.shape[2]
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(trace_header(n, n_p))
    fmt = TRACE_FLOAT.format
    for k in range(K):
        sw = run.x_switch[k]
        for i in range(N):
            xl, xh, dl, dh = run.x_lo[k, i], run.x_hi[k, i], run.d_lo[k, i], run.d_hi[k, i]
            row = [k, i]
            row += [fmt(v) for v in xl] + [fmt(v) for v in xh] + [fmt(v) for v in dl] + [fmt(v) for v in dh]
            row += [fmt(v) for v in traj.x[k]] + [fmt(v) for v in traj.d[k]]
            row += [fmt(v) for v in xh - xl] + [fmt(v) for v in dh - dl]
            row += [int(v) for v in sw.lower[i]] + [int(v) for v in sw.upper[i]]
            w.writerow(row)


def audit_trace(path, atol=1e-9):
    """Recount containment violations from a trace file alone."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        idx = {}
        for c, name in enumerate(header):
            tag = name.rsplit("_", 1)[0]
            idx.setdefault(tag, []).append(c)
        x_viol = d_viol = rows = 0
        for row in reader:
            vals = np.asarray(row, dtype=float)
            x, d = vals[idx["x_true"]], vals[idx["d_true"]]
            x_viol += int(np.sum((x < vals[idx["x_lo"]] - atol) | (x > vals[idx["x_hi"]] + atol)))
            d_viol += int(np.sum((d < vals[idx["d_lo"]] - atol) | (d > vals[idx["d_hi"]] + atol)))
            rows += 1
    return {"rows": rows, "state_violations": x_viol, "input_violations": d_viol}


def width_metrics(run, steady_from=None):
    K = run.horizon
    steady_from = K // 2 if steady_from is None else steady_from
    xw = run.x_hi[:K] - run.x_lo[:K]
    dw = run.d_hi - run.d_lo
    return {
        "max_state_width": float(xw.max()),
        "mean_state_width": float(xw.mean()),
        "max_input_width": float(dw.max()),
        "mean_input_width": float(dw.mean()),
        "steady_from": int(steady_from),
        "steady_max_state_width": float(xw[steady_from:].max()),
        "steady_max_input_width": float(dw[steady_from:].max()),
        "steady_max_state_width_per_dim": [float(v) for v in xw[steady_from:].max(axis=(0, 1))],
        "steady_max_input_width_per_dim": [float(v) for v in dw[steady_from:].max(axis=(0, 1))],
    }


@dataclass
class ScenarioResult:
    config: ScenarioConfig
    synthesis: SynthesisOutcome
    observer: DistributedObserver
    trajectory: PlantTrajectory
    run: object
    summary: dict
    trace_path: Path | None


def run_scenario(cfg: ScenarioConfig, uncertified=False, write=True, backend=None, bus=None) -> ScenarioResult:
    """Decompose, synthesise, simulate, observe; persist trace and summary."""
    t0 = time.perf_counter()
    models = decompose_all(cfg)
    syn = synthesize(cfg, models, bus=bus, require_cpdn=not uncertified)
    if cfg.gains is not None:
        syn.gains = cfg.gains
    if not all(r.cpdn_satisfied for r in syn.reports):
        log.warning("running without neighbourhood detectability; bounds are not certified")
    observer = build_observer(cfg, models, syn.gains, backend=backend, bus=bus)
    traj = simulate_plant(cfg)
    z1, z2 = measurement_channels(models, traj)
    K = cfg.horizon
    run = run_observer(observer, cfg.plant.x0_bounds, [z[:K + 1] for z in z1], [z[:K + 1] for z in z2])

    mats = [a.matrices for a in observer.agents]
    widths = [a.eta_width for a in observer.agents]
    cert = certify(mats, syn.reports, cfg.graph)
    try:
        ss = steady_state_bounds(cert.rho_star, mats, widths)
        bounds = {"state": ss.state, "input": ss.input, "input_gain": ss.input_gain}
    except NotCertified:
        bounds = None

    summary = {
        "name": cfg.name,
        "seed": cfg.seed,
        "horizon": K,
        "agents": cfg.graph.N,
        "kernel_backend": observer.kern.__name__.rsplit(".", 1)[-1],
        "certified": cert.certified,
        "rho_star": cert.rho_star,
        "witness_contraction": cert.contraction,
        "realized_rho_max": realized_rho_max(run.x_switch, mats),
        "steady_state_bounds": bounds,
        "design_objectives": syn.objectives,
        "reports": [r.summary() for r in syn.reports],
        "widths": width_metrics(run),
    }
    trace_path = None
    if write:
        out = Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        trace_path = out / f"{cfg.name}_trace.csv"
        with open(trace_path, "w", newline="") as fh:
            write_trace(fh, run, traj)
        summary["audit"] = audit_trace(trace_path)
    summary["runtime_s"] = time.perf_counter() - t0
    if write:
        (Path(cfg.out_dir) / f"{cfg.name}_summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    return ScenarioResult(cfg, syn, observer, traj, run, summary, trace_path)


def empirical_errors(run, traj: PlantTrajectory):
    """Collective state errors ``(K+1, 2Nn)`` and input errors ``(K, 2N n_p)``."""
    K = run.horizon
    e = np.stack([collective_error(run.x_lo[k], run.x_hi[k], traj.x[k]) for k in range(K + 1)])
    delta = np.stack([collective_error(run.d_lo[k], run.d_hi[k], traj.d[k]) for k in range(K)])
    return e, delta


def envelope_for(result: ScenarioResult):
    obs = result.observer
    mats = [a.matrices for a in obs.agents]
    widths = [a.eta_width for a in obs.agents]
    e0 = collective_error(result.run.x_lo[0], result.run.x_hi[0], result.trajectory.x[0])
    return comparison_trajectory(e0, result.run.x_switch, mats, widths, result.run.x_pad, result.run.d_pad)


def gains_to_json(gains) -> list:
    return [{"L": g.L.tolist(), "Gamma": g.Gamma.tolist()} for g in gains]


def trace_bytes(result: ScenarioResult) -> bytes:
    buf = io.StringIO()
    write_trace(buf, result.run, result.trajectory)
    return buf.getvalue().encode()
