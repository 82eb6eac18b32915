"""Command line front end: synthesize, verify, and benchmark from JSON.

Exit codes for ``synth``: 0 success, 1 malformed input, 2 synthesis
failure, 3 post-verification failure.  ``verify`` exits 0 exactly when the
controller is a retrofit controller for the plant; ``bench`` exits 0 only
when every row of the sweep completed.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from . import config
from .config import ToleranceConfig
from .lti import TransferMatrix, plant_from_json_dict
from .network import NetworkSpec, paper_default_spec, run_benchmark
from .rectifier import tm_from_json
from .synthesis import (
    SynthesisWeights,
    VerificationFailed,
    invariance_residual,
    synthesize_retrofit,
    verify_output_rectifying,
    verify_retrofit_general,
)

DEFAULT_SEED = 0


def _load_json(path: str) -> dict:
    with open(path, "r", encoding="utf-8") as f:
        return json.load(f)


def _install_tolerances(path: str | None) -> None:
    if path is None:
        return
    d = _load_json(path)
    base = ToleranceConfig()
    cfg = ToleranceConfig(
        eps_cancel=float(d.get("eps_cancel", base.eps_cancel)),
        eps_stab=float(d.get("eps_stab", base.eps_stab)),
        eps_rank=float(d.get("eps_rank", base.eps_rank)),
        residual_tol=float(d.get("residual_tol", base.residual_tol)),
    )
    config.set_active(cfg)


def _seed_from(args) -> int:
    if args.seed is not None:
        return args.seed
    env = os.environ.get("RETROFIT_SEED")
    return int(env) if env else DEFAULT_SEED


def cmd_synth(args) -> int:
    try:
        plant = plant_from_json_dict(_load_json(args.plant))
        weights = (
            SynthesisWeights.from_json_dict(_load_json(args.weights))
            if args.weights
            else SynthesisWeights()
        )
        _install_tolerances(args.tol)
    except (OSError, ValueError, json.JSONDecodeError) as exc:
        print(f"error: malformed input: {exc}", file=sys.stderr)
        return 1
    try:
        ctrl = synthesize_retrofit(plant, weights, mode=args.mode, seed=_seed_from(args))
    except VerificationFailed as exc:
        print(f"error: post-verification failed: {exc}", file=sys.stderr)
        return 3
    except (ValueError, RuntimeError) as exc:
        print(f"error: synthesis failed: {exc}", file=sys.stderr)
        return 2
    try:
        payload = ctrl.to_json_dict(include_rational=True)
    except ValueError:
        payload = ctrl.to_json_dict(include_rational=False)
        payload["note"] = "system too large for rational controller entries"
    payload["invariance_residual"] = invariance_residual(plant, ctrl, seed=_seed_from(args))
    with open(args.out, "w", encoding="utf-8") as f:
        json.dump(payload, f, indent=2)
    print(f"controller written to {args.out}")
    return 0


def cmd_verify(args) -> int:
    try:
        plant = plant_from_json_dict(_load_json(args.plant))
        cdict = _load_json(args.controller)
        if "K" not in cdict:
            raise ValueError("controller JSON lacks the rational entries 'K'")
        K = tm_from_json(cdict["K"])
        _install_tolerances(args.tol)
    except (OSError, ValueError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: malformed input: {exc}", file=sys.stderr)
        return 1
    seed = _seed_from(args)
    rect_rep = verify_output_rectifying(plant, K, seed=seed)
    retro_rep = verify_retrofit_general(plant, K, seed=seed)
    report = {
        "retrofit": retro_rep.passed,
        "output_rectifying": rect_rep.passed,
        "residuals": {
            "annihilation": rect_rep.annihilation_residual,
            "interaction_invariance": retro_rep.invariance_residual,
        },
        "q_stable": rect_rep.q_stable,
    }
    print(json.dumps(report, indent=2))
    return 0 if retro_rep.passed else 2


def cmd_bench(args) -> int:
    try:
        if args.default_paper:
            base = paper_default_spec(1)
        elif args.spec:
            base = NetworkSpec.from_json_dict(_load_json(args.spec))
        else:
            raise ValueError("provide a network spec JSON or --default-paper")
        weights = (
            SynthesisWeights.from_json_dict(_load_json(args.weights))
            if args.weights
            else SynthesisWeights()
        )
        _install_tolerances(args.tol)
    except (OSError, ValueError, json.JSONDecodeError) as exc:
        print(f"error: malformed input: {exc}", file=sys.stderr)
        return 1
    result = run_benchmark(
        base, weights, num_graphs=args.graphs, seed=_seed_from(args)
    )
    csv = result.to_csv()
    with open(args.out, "w", encoding="utf-8") as f:
        f.write(csv)
    orderings = result.orderings()
    print(f"benchmark written to {args.out}")
    for name, held in orderings.items():
        print(f"  {name}: {held}")
    for row in result.rows:
        if row.error:
            print(f"  graph {row.graph_index} failed: {row.error}", file=sys.stderr)
    return 0 if result.complete() else 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="retrofit-control",
        description=(
            "Synthesize, verify, and benchmark output-rectifying retrofit "
            "controllers for interconnected linear systems."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None,
                        help="seed for all randomized checks (fallback: env RETROFIT_SEED)")
    common.add_argument("--tol", default=None,
                        help="JSON file overriding the tolerance configuration "
                             "(eps_cancel, eps_stab, eps_rank, residual_tol)")

    p = sub.add_parser("synth", parents=[common],
                       help="synthesize a retrofit controller from a plant JSON")
    p.add_argument("plant", help="plant JSON with A, L, B, Gamma, C")
    p.add_argument("--weights", default=None, help="LQG weights JSON")
    p.add_argument("--mode", choices=("general", "measured"), default="general")
    p.add_argument("--out", "-o", required=True, help="output controller JSON")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("verify", parents=[common],
                       help="verify a controller JSON against a plant JSON")
    p.add_argument("plant")
    p.add_argument("controller")
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("bench", parents=[common],
                       help="run the networked benchmark sweep")
    p.add_argument("spec", nargs="?", default=None, help="network spec JSON")
    p.add_argument("--default-paper", action="store_true",
                   help="use the built-in 50-node, 15-graph family")
    p.add_argument("--weights", default=None, help="LQG weights JSON")
    p.add_argument("--graphs", type=int, default=None, help="number of sweep graphs")
    p.add_argument("--out", "-o", required=True, help="output CSV path")
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
