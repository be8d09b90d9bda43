"""Bundled scenario generators (returned as config dicts in the JSON schema).

``swing10`` is a synthetic 5-generator swing-dynamics network. It is not
the IEEE 14-bus reduction; only the noise magnitudes (process noise of
inf-norm 5, sensor noise of magnitude 1e-4) follow the published example.
"""
from __future__ import annotations

import json
import sys
from pathlib import Path

import numpy as np
from scipy.linalg import expm

from .harness import SCHEMA_VERSION


def _box(lo, hi):
    return {"lower": np.asarray(lo, float).tolist(), "upper": np.asarray(hi, float).tolist()}


def _sym(radius):
    r = np.asarray(radius, float)
    return _box(-r, r)


def small4(seed=7, horizon=300):
    """4-state, 3-agent chain (open-loop stable, spectral radius 0.994) with one actuator attack."""
    A = np.array([[0.9, 0.2, 0.0, 0.0],
                  [0.0, 0.8, 0.3, 0.0],
                  [0.0, 0.0, 0.7, 0.2],
                  [0.02, 0.0, 0.0, 0.95]])
    B = 0.1 * np.eye(4)
    G = np.array([[0.0], [1.0], [0.0], [0.0]])
    agents = [
        # measures x1, x2 with the attack leaking into the second sensor
        {"name": "a0", "C": [[1, 0, 0, 0], [0, 1, 0, 0]], "D": np.eye(2).tolist(),
         "H": [[0.0], [0.5]], "v_bounds": _sym([0.01, 0.01])},
        {"name": "a1", "C": [[0, 1, 0, 0], [0, 0, 1, 0], [0, 0, 0, 1]], "D": np.eye(3).tolist(),
         "H": [[0.0], [0.0], [0.0]], "v_bounds": _sym([0.01, 0.01, 0.01])},
        {"name": "a2", "C": [[0, 0, 1, 0], [0, 0, 0, 1], [1, 0, 0, 0]], "D": np.eye(3).tolist(),
         "H": [[1.0], [0.0], [0.0]], "v_bounds": _sym([0.01, 0.01, 0.01])},
    ]
    return {
        "schema_version": SCHEMA_VERSION,
        "name": "small4",
        "seed": seed,
        "horizon": horizon,
        "plant": {"A": A.tolist(), "B": B.tolist(), "G": G.tolist(),
                  "w_bounds": _sym(np.full(4, 0.5)), "x0_bounds": _sym(np.full(4, 1.0))},
        "agents": agents,
        "graph": {"type": "complete"},
        "attack": {"channels": [{"type": "step", "magnitude": 100.0, "start": 50}]},
        "noise": {"mode": "uniform"},
        "output": {"dir": "out"},
    }


def swing10(seed=2024, horizon=2000, dt=0.05):
    """Linearised swing dynamics of 5 coupled generators, one attacked actuator."""
    g = 5
    inertia = np.array([5.0, 4.0, 4.5, 3.5, 4.0])
    damping = np.array([4.0, 3.0, 3.5, 3.0, 3.2])
    lines = [(0, 1, 1.2), (1, 2, 0.9), (2, 3, 1.1), (3, 4, 0.8), (4, 0, 1.0), (0, 2, 0.6)]
    K = np.zeros((g, g))
    for i, j, b in lines:
        K[i, i] += b
        K[j, j] += b
        K[i, j] -= b
        K[j, i] -= b
    Minv = np.diag(1.0 / inertia)
    Ac = np.block([[np.zeros((g, g)), np.eye(g)], [-Minv @ K, -Minv @ np.diag(damping)]])
    Bc = np.vstack([np.zeros((g, g)), 0.05 * Minv])
    Gc = np.vstack([np.zeros((g, 1)), Minv[:, [0]]])
    # zero-order hold for state, process noise and attack together
    aug = np.zeros((2 * g + g + 1, 2 * g + g + 1))
    aug[:2 * g, :2 * g] = Ac
    aug[:2 * g, 2 * g:3 * g] = Bc
    aug[:2 * g, 3 * g:] = Gc
    E = expm(aug * dt)
    A = E[:2 * g, :2 * g]
    B = E[:2 * g, 2 * g:3 * g]
    G = E[:2 * g, 3 * g:]

    agents = []
    for i in range(g):
        rows = []
        e = np.zeros(2 * g)
        e[i] = 1.0
        rows.append(e)                          # rotor angle
        e = np.zeros(2 * g)
        e[g + i] = 1.0
        rows.append(e)                          # frequency
        p = np.zeros(2 * g)
        p[:g] = K[i]
        rows.append(p)                          # real power injection
        for a, b, bij in lines:                 # flows on incident branches
            if i in (a, b):
                j = b if a == i else a
                f = np.zeros(2 * g)
                f[i], f[j] = bij, -bij
                rows.append(f)
        C = np.array(rows)
        m = C.shape[0]
        H = np.zeros((m, 1))
        # the reduced network puts the generator-1 disturbance on every injection
        H[2, 0] = 0.4 if i == 0 else 0.1 + 0.05 * i
        agents.append({"name": f"bus{i + 1}", "C": C.tolist(), "D": np.eye(m).tolist(), "H": H.tolist(),
                       "v_bounds": _sym(np.full(m, 1e-4))})
    return {
        "schema_version": SCHEMA_VERSION,
        "name": "swing10",
        "description": "synthetic 10-state, 5-generator swing network (not the IEEE 14-bus reduction)",
        "seed": seed,
        "horizon": horizon,
        "plant": {"A": A.tolist(), "B": B.tolist(), "G": G.tolist(),
                  "w_bounds": _sym(np.full(g, 5.0)), "x0_bounds": _sym(np.concatenate([np.full(g, 0.2), np.full(g, 0.1)]))},
        "agents": agents,
        "graph": {"type": "complete"},
        "attack": {"channels": [{"type": "sinusoid", "magnitude": 2.0, "period": 400.0}]},
        "noise": {"mode": "uniform"},
        "output": {"dir": "out"},
    }


def _random_attack(rng, horizon):
    kind = rng.choice(["step", "ramp", "sinusoid", "table", "zero"], p=[0.3, 0.2, 0.3, 0.15, 0.05])
    mag = float(10 ** rng.uniform(0, 3)) * rng.choice([-1.0, 1.0])
    start = int(rng.integers(0, horizon // 2))
    if kind == "step":
        return {"type": "step", "magnitude": mag, "start": start}
    if kind == "ramp":
        return {"type": "ramp", "slope": mag / max(horizon - start, 1), "start": start}
    if kind == "sinusoid":
        return {"type": "sinusoid", "magnitude": mag, "period": float(rng.uniform(5, 80)),
                "phase": float(rng.uniform(0, 2 * np.pi))}
    if kind == "table":
        steps = sorted(int(s) for s in rng.integers(0, horizon, size=4))
        return {"type": "table", "table": [[s, float(rng.uniform(-1e3, 1e3))] for s in steps]}
    return {"type": "zero"}


def _random_draw(rng, seed, horizon):
    n = int(rng.integers(2, 7))
    N = int(rng.integers(1, 6))
    n_p = int(rng.integers(1, min(2, n) + 1))
    n_w = int(rng.integers(1, 3))
    A = rng.normal(size=(n, n))
    rad = np.max(np.abs(np.linalg.eigvals(A)))
    target = rng.uniform(1.0, 1.03) if seed % 2 else rng.uniform(0.5, 0.98)
    A *= target / rad
    B = 0.3 * rng.normal(size=(n, n_w))
    G = rng.normal(size=(n, n_p))
    agents = []
    for i in range(N):
        m = int(rng.integers(n_p + 1, n + n_p + 1))
        r = int(rng.integers(0, n_p + 1))
        H = rng.normal(size=(m, r)) @ rng.normal(size=(r, n_p)) if r else np.zeros((m, n_p))
        n_v = int(rng.integers(1, 3))
        agents.append({
            "name": f"r{i}", "C": rng.normal(size=(m, n)).tolist(), "D": rng.normal(size=(m, n_v)).tolist(),
            "H": H.tolist(), "v_bounds": _sym(rng.uniform(1e-3, 0.1, size=n_v)),
        })
    kind = rng.choice(["complete", "path", "ring", "random"])
    if kind == "random":
        nbrs = [sorted({i} | {int(j) for j in np.flatnonzero(rng.random(N) < 0.5)}) for i in range(N)]
        graph = {"neighbors": nbrs}
    else:
        graph = {"type": str(kind)}
    return {
        "schema_version": SCHEMA_VERSION,
        "name": f"random{seed}",
        "seed": int(seed),
        "horizon": horizon,
        "plant": {"A": A.tolist(), "B": B.tolist(), "G": G.tolist(),
                  "w_bounds": _sym(rng.uniform(0.01, 0.5, size=n_w)),
                  "x0_bounds": _sym(rng.uniform(0.5, 2.0, size=n))},
        "agents": agents,
        "graph": graph,
        "attack": {"channels": [_random_attack(rng, horizon) for _ in range(n_p)]},
        "noise": {"mode": "vertex" if rng.random() < 0.3 else "uniform"},
        "output": {"dir": "out"},
    }


def random_scenario(seed, horizon=200, max_draws=50):
    """Randomised plant, agents, graph and attack for property checks.

    ``A`` is scaled to a spectral radius in ``[0.5, 1.03]``; odd seeds are
    open-loop unstable. Attacks reach magnitude 1e3. Draws are repeated
    until every agent decomposes and the network is neighbourhood
    detectable, so the scenario can run certified.
    """
    from .harness import parse_config, synthesize
    from .decomposition import AssumptionViolated

    rng = np.random.default_rng([seed, 1234])
    for _ in range(max_draws):
        raw = _random_draw(rng, seed, horizon)
        try:
            syn = synthesize(parse_config(raw), require_cpdn=False)
        except AssumptionViolated:
            continue
        if all(r.cpdn_satisfied for r in syn.reports):
            return raw
    raise RuntimeError(f"no detectable draw for seed {seed} in {max_draws} attempts")


BUILTIN = {"small4": small4, "swing10": swing10}


def main(argv=None):
    """Write the bundled configs to a directory (default ``scenarios/``)."""
    argv = sys.argv[1:] if argv is None else argv
    out = Path(argv[0] if argv else "scenarios")
    out.mkdir(parents=True, exist_ok=True)
    for name, fn in BUILTIN.items():
        (out / f"{name}.json").write_text(json.dumps(fn(), indent=1) + "\n")
        print(out / f"{name}.json")


if __name__ == "__main__":
    main()
