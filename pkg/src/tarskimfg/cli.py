"""Command-line runner: ``solve``, ``verify``, ``enumerate`` and ``trace``.

Exit codes: 0 success, 1 configuration error, 2 structural-assumption
violation or failed verification, 3 budget or resource error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path

import numpy as np

from . import markov as mk
from . import oracle
from . import stopping as st
from . import suites
from .config import DIRECTIONS, RunConfig, as_jsonable, build_markov, build_stopping, load_config, resolve_suites
from .engine import learn
from .errors import ConfigError, ResourceError, StructuralAssumptionViolation
from .stochorder import flow_to_json, strict_functional

logger = logging.getLogger("tarskimfg")

EXIT_OK, EXIT_CONFIG, EXIT_STRUCTURAL, EXIT_RESOURCE = 0, 1, 2, 3
PRNG_NAME = "numpy.PCG64"


class NonConvergence(Exception):
    pass


def _setup_logging():
    level = os.environ.get("MFG_LOG", "").lower()
    logging.basicConfig(
        level={"debug": logging.DEBUG, "info": logging.INFO}.get(level, logging.WARNING),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )


def _write_json(path: Path, data: dict):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(data, sort_keys=True, indent=2, default=as_jsonable) + "\n")


def _meta(cfg: RunConfig, command: str) -> dict:
    return {"command": command, "model": cfg.model, "seed": cfg.seed, "prng": PRNG_NAME,
            "tolerance": cfg.tolerance, "max_iter": cfg.max_iter, "config": cfg.source}


def _rng(cfg: RunConfig) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(cfg.seed))


# ---------------------------------------------------------------------------
# chains


def _markov_chains(cfg: RunConfig) -> tuple[dict, dict]:
    model = build_markov(cfg.params)
    game = mk.markov_game(model)
    chains, summary = {}, {}
    for direction in DIRECTIONS[cfg.directions]:
        chain = learn(game, direction, cfg.tolerance, cfg.max_iter)
        flow = mk.from_measure_flow(chain.limit, model.d)
        chains[direction] = chain
        summary[direction] = {
            "converged": chain.converged,
            "iterations": chain.iterations,
            "residual": chain.residual,
            "monotone": chain.monotone,
            "terminal_law": flow[-1],
            "terminal_mass": float(flow[-1, -1]),
            "flow": flow,
            "F_value": strict_functional(chain.limit),
        }
    return chains, summary


def _rule_json(tree, rule: st.StoppingRule) -> list:
    return [flags.astype(int).tolist() for flags in rule.stop]


def _stopping_chains(cfg: RunConfig) -> tuple[dict, dict]:
    tree, costs = build_stopping(cfg.params)
    chains, summary = {}, {}
    for direction in DIRECTIONS[cfg.directions]:
        if direction == "up":
            chain = st.stopping_learn(tree, costs, cfg.tolerance, cfg.max_iter)
        else:
            chain = st.top_down_diagnostic(tree, costs, cfg.tolerance, cfg.max_iter)
        rule = st.optimal_rule(tree, chain.limit, costs, "min")
        chains[direction] = chain
        summary[direction] = {
            "converged": chain.converged,
            "iterations": chain.iterations,
            "residual": chain.residual,
            "monotone": chain.monotone,
            "diagnostic_only": direction == "down",
            "rule": _rule_json(tree, rule),
            "flow": flow_to_json(chain.limit),
            "cell_masses": [m.total_mass for m in chain.limit.measures],
            "F_value": strict_functional(chain.limit),
        }
    return chains, summary


def _run_chains(cfg: RunConfig):
    return _markov_chains(cfg) if cfg.model == "markov" else _stopping_chains(cfg)


def _check_converged(cfg: RunConfig, chains: dict):
    for direction, chain in chains.items():
        # the top-down stopping chain is a diagnostic and may legitimately stall
        if cfg.model == "stopping" and direction == "down":
            continue
        if not chain.converged:
            raise NonConvergence(f"{direction}-chain did not converge within {chain.iterations} iterations "
                                 f"(residual {chain.residual:.3e})")


def _write_traces(out: Path, chains: dict) -> list[str]:
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for direction, chain in chains.items():
        path = out / f"trace_{direction}.csv"
        path.write_text(chain.to_csv())
        written.append(str(path))
    return written


# ---------------------------------------------------------------------------
# commands


def cmd_solve(cfg: RunConfig, out: Path, args) -> int:
    chains, summary = _run_chains(cfg)
    _write_traces(out, chains)
    report = {"meta": _meta(cfg, "solve"), "chains": summary}
    _write_json(out / "report.json", report)
    _check_converged(cfg, chains)
    for direction, s in summary.items():
        extra = f" terminal_mass={s['terminal_mass']:.12g}" if "terminal_mass" in s else ""
        print(f"{direction}: converged={s['converged']} iterations={s['iterations']}{extra}")
    return EXIT_OK


def cmd_trace(cfg: RunConfig, out: Path, args) -> int:
    chains, _ = _run_chains(cfg)
    for path in _write_traces(out, chains):
        print(path)
    _check_converged(cfg, chains)
    return EXIT_OK


def cmd_enumerate(cfg: RunConfig, out: Path, args) -> int:
    if cfg.model == "markov":
        model = build_markov(cfg.params)
        flows = mk.enumerate_equilibria(model)
        report = {
            "count": len(flows),
            "terminal_masses": sorted({round(float(f[-1, -1]), 12) + 0.0 for f in flows}),
            "equilibria": [{"flow": f, "F_value": strict_functional(mk.as_measure_flow(f))} for f in flows],
        }
    else:
        tree, costs = build_stopping(cfg.params)
        eqs = oracle.stopping_equilibria_oracle(tree, costs)
        report = {
            "count": len(eqs.flows),
            "stopping_times": eqs.n_stopping_times,
            "distinct_projections": eqs.n_projections,
            "minimal_index": eqs.minimal_index,
            "equilibria": [{"flow": flow_to_json(f), "F_value": strict_functional(f)} for f in eqs.flows],
        }
    report["meta"] = _meta(cfg, "enumerate")
    _write_json(out / "enumerate.json", report)
    print(f"{report['count']} equilibria")
    return EXIT_OK


def cmd_verify(cfg: RunConfig, out: Path, args) -> int:
    names = resolve_suites(cfg, args.suite)
    rng = _rng(cfg)
    results = []
    if cfg.model == "markov":
        model = build_markov(cfg.params)
        runners = {
            "lattice": lambda: suites.lattice_suite(rng),
            "submodularity": lambda: suites.markov_submodularity_suite(model, rng),
            "directedness": lambda: suites.markov_directedness_suite(model, rng),
            "oracle": lambda: suites.markov_oracle_suite(model, cfg.tolerance, cfg.max_iter),
        }
    else:
        tree, costs = build_stopping(cfg.params)
        runners = {
            "lattice": lambda: suites.lattice_suite(rng),
            "supermodularity": lambda: suites.stopping_supermodularity_suite(tree, costs, rng),
            "f_monotonicity": lambda: suites.stopping_f_suite(tree, costs, rng),
            "oracle": lambda: suites.stopping_oracle_suite(tree, costs, rng, tol=cfg.tolerance, max_iter=cfg.max_iter),
        }
    for name in names:
        logger.info("running suite %s", name)
        try:
            results.append(runners[name]())
        except StructuralAssumptionViolation as err:
            results.append({"suite": name, "passed": False, "failed_invariant": err.invariant or "structural",
                            "error": str(err)})
    passed = all(r["passed"] for r in results)
    _write_json(out / "verify.json", {"meta": _meta(cfg, "verify"), "passed": passed, "suites": results})
    for r in results:
        status = "PASS" if r["passed"] else f"FAIL ({r['failed_invariant']})"
        print(f"{r['suite']}: {status}")
    if not passed:
        bad = next(r for r in results if not r["passed"])
        probe = "submodularity probe" if bad["suite"] == "submodularity" else f"{bad['suite']} suite"
        print(f"verification failed: {probe}: {bad['failed_invariant']}", file=sys.stderr)
        return EXIT_STRUCTURAL
    return EXIT_OK


COMMANDS = {"solve": cmd_solve, "verify": cmd_verify, "enumerate": cmd_enumerate, "trace": cmd_trace}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tarskimfg", description="Monotone learning for lattice mean field games.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="JSON run configuration")
        p.add_argument("--out", help="output directory (default: the config's 'output' entry)")
        p.add_argument("--seed", type=int, help="seed for the PCG64 generator used by random probes")
        p.add_argument("--tol", type=float, help="fixed-point residual tolerance")
        p.add_argument("--max-iter", type=int, help="iteration cap per chain")
        p.add_argument("--direction", choices=sorted(DIRECTIONS), help="which learning chains to run")
        if name == "verify":
            p.add_argument("--suite", help="comma-separated suites to run (default: all for the model)")
    return parser


def _apply_overrides(cfg: RunConfig, args) -> RunConfig:
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError("--seed must be nonnegative")
        cfg.seed = args.seed
    if args.tol is not None:
        if not args.tol > 0:
            raise ConfigError("--tol must be positive")
        cfg.tolerance = args.tol
    if args.max_iter is not None:
        if args.max_iter <= 0:
            raise ConfigError("--max-iter must be positive")
        cfg.max_iter = args.max_iter
    if args.direction is not None:
        cfg.directions = args.direction
    return cfg


def main(argv=None) -> int:
    _setup_logging()
    args = build_parser().parse_args(argv)
    try:
        cfg = _apply_overrides(load_config(args.config), args)
        out = Path(args.out if args.out is not None else cfg.output)
        return COMMANDS[args.command](cfg, out, args)
    except ConfigError as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except StructuralAssumptionViolation as err:
        print(f"structural assumption violated: {err}", file=sys.stderr)
        return EXIT_STRUCTURAL
    except NonConvergence as err:
        print(f"no convergence: {err}", file=sys.stderr)
        return EXIT_STRUCTURAL
    except ResourceError as err:
        print(f"resource limit: {err}", file=sys.stderr)
        return EXIT_RESOURCE


if __name__ == "__main__":
    sys.exit(main())
