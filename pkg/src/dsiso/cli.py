"""Command-line entry point: ``dsiso run|check|synth <config>``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .decomposition import AssumptionViolated
from .harness import (ConfigError, CPDNNotSatisfied, decompose_all, gains_to_json, parse_config,
                      run_scenario, synthesize)
from .intervals import EmptyIntersection
from .synthesis import SynthesisError

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_ASSUMPTION = 3
EXIT_SOLVER = 4


def _parser():
    ap = argparse.ArgumentParser(prog="dsiso", description="Distributed resilient interval observer toolkit.")
    sub = ap.add_subparsers(dest="command", required=True)
    for name, text in (("run", "decompose, synthesise, simulate and observe"),
                       ("check", "decomposition and detectability report only"),
                       ("synth", "synthesise gains and write them to a file")):
        p = sub.add_parser(name, help=text)
        p.add_argument("config", help="scenario JSON file")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--horizon", type=int, help="override the number of steps")
        p.add_argument("--out-dir", help="override the output directory")
        p.add_argument("--uncertified", action="store_true",
                       help="continue when neighbourhood detectability fails")
        p.add_argument("--stress-noise", action="store_true", help="sample noise at interval vertices")
        p.add_argument("--backend", choices=("cython", "python"), help="kernel backend")
        p.add_argument("-v", "--verbose", action="store_true")
    return ap


def _load(args):
    path = Path(args.config)
    try:
        raw = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError([f"{path}: {exc}"]) from exc
    if args.seed is not None:
        raw["seed"] = args.seed
    if args.horizon is not None:
        raw["horizon"] = args.horizon
    if args.stress_noise:
        raw.setdefault("noise", {})["mode"] = "vertex"
    if args.out_dir is not None:
        raw.setdefault("output", {})["dir"] = args.out_dir
    base = None if args.out_dir is not None else path.parent
    return parse_config(raw, base_dir=base)


def _cmd_check(cfg, args):
    models = decompose_all(cfg)
    for m in models:
        print(f"agent {m.agent.name}: m={m.m} rank(H)={m.rank} clean channels={m.clean_dim} "
              f"singular values={np.array2string(m.singular_values, precision=4)}")
    syn = synthesize(cfg, models, require_cpdn=False)
    ok = True
    for r in syn.reports:
        s = r.summary()
        ok &= s["cpdn_satisfied"]
        print(f"agent {r.agent}: J={s['J_set']} witnesses={s['witnesses']} failing={s['failing_dims']}")
    print("neighbourhood detectability:", "satisfied" if ok else "NOT satisfied")
    if not ok and not args.uncertified:
        raise CPDNNotSatisfied({r.agent: list(r.failing_dims) for r in syn.reports if not r.cpdn_satisfied})
    return EXIT_OK


def _cmd_synth(cfg, args):
    syn = synthesize(cfg, require_cpdn=not args.uncertified)
    out = Path(cfg.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{cfg.name}_gains.json"
    payload = {"gains": gains_to_json(syn.gains), "design_objectives": syn.objectives,
               "reports": [r.summary() for r in syn.reports]}
    path.write_text(json.dumps(payload, indent=1) + "\n")
    print(path)
    return EXIT_OK


def _cmd_run(cfg, args):
    if args.uncertified:
        logging.getLogger("dsiso").warning("--uncertified: bounds may not hold if detectability fails")
    res = run_scenario(cfg, uncertified=args.uncertified, backend=args.backend)
    s = res.summary
    print(f"trace: {res.trace_path}")
    print(f"certified={s['certified']} rho_star={s['rho_star']:.6g} "
          f"violations={s['audit']['state_violations'] + s['audit']['input_violations']} "
          f"steady max width state={s['widths']['steady_max_state_width']:.3g} "
          f"input={s['widths']['steady_max_input_width']:.3g} runtime={s['runtime_s']:.2f}s")
    return EXIT_OK


COMMANDS = {"run": _cmd_run, "check": _cmd_check, "synth": _cmd_synth}


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        cfg = _load(args)
        return COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(exc, file=sys.stderr)
        return EXIT_VALIDATION
    except (AssumptionViolated, CPDNNotSatisfied, EmptyIntersection) as exc:
        print(f"assumption failure: {exc}", file=sys.stderr)
        return EXIT_ASSUMPTION
    except SynthesisError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
