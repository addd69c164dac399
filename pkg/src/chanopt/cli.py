"""Command-line entry point: ``chanopt <subcommand> [options]``.

Exit codes: 0 success, 2 invalid input, 3 an experiment check flagged a
failure, 4 internal error. ``--config`` takes a JSON object whose keys are
option names of the chosen subcommand (dashes or underscores); explicit
flags win over it. For ``experiment`` the config may also be a manifest
written by an earlier run, which reproduces that run.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .costing import maintenance_cost, optimal_allocation, optimal_total_liquidity, network_rps, rps0
from .cuts import gomory_hu, tree_objective
from .experiments import KINDS, ExperimentSpec, FlaggedFailure, load_spec, random_tree, run_experiment
from .game import GameState, best_response_dynamics, is_equilibrium
from .genesis import GenesisConfig, generate
from .hubs import best_hub
from .montecarlo import SimConfig, round_to_even, simulate
from .netcore import CostParams, DemandMatrix, PaymentNetwork, Topology, is_spanning_tree
from .routing import direct_routing, edge_rates, hub_routing, tree_routing

log = logging.getLogger("chanopt")

EXIT_OK, EXIT_INVALID, EXIT_FLAGGED, EXIT_INTERNAL = 0, 2, 3, 4


class UsageError(ValueError):
    pass


def _read_json(path):
    return json.loads(Path(path).read_text())


def _emit(obj, out) -> None:
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text)


def _demand(args) -> DemandMatrix:
    if args.demand is None:
        raise UsageError("--demand is required")
    return DemandMatrix.from_json(_read_json(args.demand))


def _params(args) -> CostParams:
    return CostParams(alpha=args.alpha, phi=args.phi)


def _design(args, demand: DemandMatrix):
    """(topology, routing policy) for the requested design."""
    if args.topology is not None:
        topo = Topology.from_json(_read_json(args.topology))
        if topo.n != demand.n:
            raise UsageError("topology and demand disagree on the number of agents")
        if not is_spanning_tree(topo):
            raise UsageError("only spanning-tree topology files can be routed; use --design for others")
        return topo, tree_routing(topo, demand)
    if args.design == "tree":
        topo = gomory_hu(demand).tree
        return topo, tree_routing(topo, demand)
    if args.design == "hub":
        center = args.center if args.center is not None else best_hub(demand, _params(args))[0]
        policy = hub_routing(demand.n, center, demand)
        return policy.topology, policy
    policy = direct_routing(demand)
    return policy.topology, policy


def _edge_list(mapping) -> list:
    return [[e[0], e[1], v] for e, v in sorted(mapping.items())]


# ---------------------------------------------------------------- subcommands


def cmd_gen_demand(args) -> int:
    cfg = GenesisConfig(args.n, args.degree_exponent, args.rate_exponent, args.rate_min, args.seed, args.degree_min)
    _emit(generate(cfg).to_json(), args.out)
    return EXIT_OK


def cmd_tree_opt(args) -> int:
    demand = _demand(args)
    ct = gomory_hu(demand)
    rates = edge_rates(tree_routing(ct.tree, demand), demand)
    _emit({
        "cut_tree": ct.to_json(),
        "topology": ct.tree.to_json(),
        "cube_root_sum": tree_objective(ct.tree, demand),
        "rps0": rps0(rates),
    }, args.out)
    return EXIT_OK


def cmd_hub(args) -> int:
    demand = _demand(args)
    center, cost = best_hub(demand, _params(args))
    policy = hub_routing(demand.n, center, demand)
    W, _ = optimal_total_liquidity(edge_rates(policy, demand), _params(args))
    _emit({"center": center, "liquidity": W, "cost": cost.to_json(), "topology": policy.topology.to_json()}, args.out)
    return EXIT_OK


def cmd_allocate(args) -> int:
    demand = _demand(args)
    topo, policy = _design(args, demand)
    rates = edge_rates(policy, demand)
    alloc = optimal_allocation(rates, args.liquidity)
    _emit({
        "topology": topo.to_json(),
        "liquidity": args.liquidity,
        "omega": _edge_list(alloc.omega),
        "rates": _edge_list(rates),
        "rps": network_rps(rates, alloc),
    }, args.out)
    return EXIT_OK


def cmd_cost(args) -> int:
    demand = _demand(args)
    _, policy = _design(args, demand)
    rates = edge_rates(policy, demand)
    if args.liquidity is None:
        W, cost = optimal_total_liquidity(rates, _params(args))
    else:
        W, cost = args.liquidity, maintenance_cost(rates, args.liquidity, _params(args))
    _emit({"liquidity": W, "cost": cost.to_json()}, args.out)
    return EXIT_OK


def cmd_simulate(args) -> int:
    demand = _demand(args)
    topo, policy = _design(args, demand)
    rates = edge_rates(policy, demand)
    alloc = round_to_even(optimal_allocation(rates, args.liquidity))
    if (args.resets is None) == (args.horizon is None):
        raise UsageError("give exactly one of --resets or --horizon")
    cfg = SimConfig(PaymentNetwork(topo, alloc), policy, demand, seed=args.seed,
                    horizon=args.horizon, target_resets=args.resets)
    res = simulate(cfg)
    out = Path(args.out or "sim-out")
    out.mkdir(parents=True, exist_ok=True)
    res.write_csv(out / "channels.csv")
    res.write_summary(out / "summary.json", args.batches)
    sys.stdout.write(f"{res.total_resets} resets in {res.elapsed:.6g} s -> {out}\n")
    return EXIT_OK


def cmd_game(args) -> int:
    demand = _demand(args)
    if args.tree is not None:
        start = Topology.from_json(_read_json(args.tree))
    elif args.start == "gomory-hu":
        start = gomory_hu(demand).tree
    else:
        start = random_tree(np.random.default_rng(args.seed), demand.n)
    res = best_response_dynamics(GameState.create(start, demand, _params(args)), args.max_rounds)
    eq, witness = is_equilibrium(res.final)
    out = Path(args.out or "game-out")
    out.mkdir(parents=True, exist_ok=True)
    res.write_jsonl(out / "history.jsonl")
    _emit({
        "converged": res.converged,
        "cycled": res.cycled,
        "rounds": res.rounds,
        "moves": len(res.history),
        "equilibrium": eq,
        "improving_move": None if witness is None else {**witness[0].to_json(), "delta": witness[1]},
        "final_tree": res.final.tree.to_json(),
        "total_cost": res.final.total_cost(),
    }, out / "final.json")
    sys.stdout.write(f"converged={res.converged} cycled={res.cycled} rounds={res.rounds} -> {out}\n")
    return EXIT_OK


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def cmd_experiment(args) -> int:
    if args.manifest is not None:
        spec = args.manifest
    else:
        if args.kind is None:
            raise UsageError(f"name an experiment kind: {sorted(KINDS)}")
        params = dict(args.params or {})
        for item in args.set or []:
            key, sep, value = item.partition("=")
            if not sep:
                raise UsageError(f"--set expects key=value, got {item!r}")
            params[key.replace("-", "_")] = _parse_value(value)
        spec = ExperimentSpec(args.kind, params, args.seed)
    out = Path(args.out or f"runs/{spec.kind}")
    outcome = run_experiment(spec, out, args.threads)
    for name, ok in sorted(outcome.checks.items()):
        sys.stdout.write(f"{'PASS' if ok else 'FAIL'} {name}\n")
    if not outcome.ok:
        raise FlaggedFailure(f"{spec.kind}: checks failed, see {out / 'manifest.json'}")
    return EXIT_OK


# ---------------------------------------------------------------- parser


def _add_design(p: argparse.ArgumentParser) -> None:
    p.add_argument("--demand", help="demand matrix JSON")
    p.add_argument("--design", choices=["tree", "hub", "complete"], default="tree")
    p.add_argument("--topology", help="spanning-tree topology JSON, overrides --design")
    p.add_argument("--center", type=int, help="hub center, default the cheapest")


def _add_costs(p: argparse.ArgumentParser) -> None:
    p.add_argument("--alpha", type=float, default=1.0, help="interest per coin-second")
    p.add_argument("--phi", type=float, default=1.0, help="fee per blockchain record")


def _common(suppress: bool) -> argparse.ArgumentParser:
    # subcommand copies must not overwrite values given before the subcommand
    d = (lambda v: argparse.SUPPRESS) if suppress else (lambda v: v)
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, default=d(0))
    p.add_argument("--out", default=d(None), help="output file or directory")
    p.add_argument("--config", default=d(None), help="JSON file of option defaults")
    p.add_argument("--threads", type=int, default=d(1), help="worker processes for trials")
    p.add_argument("-v", "--verbose", action="store_true", default=d(False))
    return p


def build_parser() -> argparse.ArgumentParser:
    common = _common(suppress=True)
    parser = argparse.ArgumentParser(prog="chanopt", description=__doc__.splitlines()[0], parents=[_common(suppress=False)])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-demand", parents=[common], help="sample a scale-free demand matrix")
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--degree-exponent", type=float, default=2.5)
    p.add_argument("--rate-exponent", type=float, default=2.5)
    p.add_argument("--rate-min", type=float, default=1.0)
    p.add_argument("--degree-min", type=int, default=2)
    p.set_defaults(func=cmd_gen_demand)

    p = sub.add_parser("tree-opt", parents=[common], help="Gomory-Hu cut tree and optimal spanning tree")
    p.add_argument("--demand")
    p.set_defaults(func=cmd_tree_opt)

    p = sub.add_parser("hub", parents=[common], help="cheapest hub and its cost")
    p.add_argument("--demand")
    _add_costs(p)
    p.set_defaults(func=cmd_hub)

    p = sub.add_parser("allocate", parents=[common], help="optimal liquidity split for a design")
    _add_design(p)
    _add_costs(p)
    p.add_argument("--liquidity", type=float, default=1.0, help="total liquidity W")
    p.set_defaults(func=cmd_allocate)

    p = sub.add_parser("cost", parents=[common], help="maintenance cost, at W or at the optimum")
    _add_design(p)
    _add_costs(p)
    p.add_argument("--liquidity", type=float, help="total liquidity W, default optimal")
    p.set_defaults(func=cmd_cost)

    p = sub.add_parser("simulate", parents=[common], help="Monte Carlo reset counts")
    _add_design(p)
    _add_costs(p)
    p.add_argument("--liquidity", type=float, default=64.0, help="total liquidity before rounding to even channels")
    p.add_argument("--resets", type=int, help="stop after this many resets")
    p.add_argument("--horizon", type=float, help="simulated seconds")
    p.add_argument("--batches", type=int, default=20)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("game", parents=[common], help="best-response dynamics on spanning trees")
    p.add_argument("--demand")
    p.add_argument("--tree", help="starting tree JSON")
    p.add_argument("--start", choices=["random", "gomory-hu"], default="random")
    p.add_argument("--max-rounds", type=int, default=100)
    _add_costs(p)
    p.set_defaults(func=cmd_game)

    p = sub.add_parser("experiment", parents=[common], help="run a named experiment")
    p.add_argument("kind", nargs="?", choices=sorted(KINDS))
    p.add_argument("--set", action="append", metavar="KEY=VALUE", help="experiment parameter, JSON value")
    p.set_defaults(func=cmd_experiment, params=None, manifest=None)
    return parser


def _apply_config(parser: argparse.ArgumentParser, argv: list[str]) -> argparse.Namespace:
    args = parser.parse_args(argv)
    if args.config is None:
        return args
    cfg = _read_json(args.config)
    if not isinstance(cfg, dict):
        raise UsageError("--config must hold a JSON object")
    if args.command == "experiment":
        if "kind" in cfg:
            args.manifest = load_spec(args.config)
            return args
        args.params = {k.replace("-", "_"): v for k, v in cfg.items()}
        return args
    defaults = parser.parse_args([args.command])
    explicit = {k for k, v in vars(args).items() if getattr(defaults, k, None) != v}
    for key, value in cfg.items():
        dest = key.replace("-", "_")
        if not hasattr(args, dest) or dest in ("func", "command", "config"):
            raise UsageError(f"unknown option {key!r} in config for {args.command}")
        if dest not in explicit:
            setattr(args, dest, value)
    return args


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
    except SystemExit as exc:
        return EXIT_INVALID if exc.code else EXIT_OK
    except (UsageError, ValueError, OSError) as exc:
        sys.stderr.write(f"chanopt: {exc}\n")
        return EXIT_INVALID
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.threads < 1:
        sys.stderr.write("chanopt: --threads must be at least 1\n")
        return EXIT_INVALID
    try:
        return args.func(args)
    except FlaggedFailure as exc:
        sys.stderr.write(f"chanopt: {exc}\n")
        return EXIT_FLAGGED
    except (ValueError, OSError, KeyError, json.JSONDecodeError) as exc:
        sys.stderr.write(f"chanopt: {exc}\n")
        return EXIT_INVALID
    except Exception as exc:  # noqa: BLE001
        log.exception("internal error")
        sys.stderr.write(f"chanopt: internal error: {exc}\n")
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
