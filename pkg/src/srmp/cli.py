"""Command line front end: ``srmp solve`` and ``srmp compare``.

Exit codes: 0 success, 1 a ``--verify`` check failed, 2 the model could not
be read or parsed, 3 bad configuration.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys

import numpy as np

from . import instances
from .consistency import check_j_consistency
from .graph import (
    Factor,
    FactorGraph,
    absorb_single_child_factors,
    build_graph,
    close_under_intersections,
    complete_labeling,
    energy,
)
from .oracle import BudgetExceeded, brute_force_map, brute_force_min_marginal, verify_bound_certificate
from .solvers import ALGORITHMS, solve
from .uai import UAIParseError, read_uai

EXIT_VERIFY = 1
EXIT_PARSE = 2
EXIT_CONFIG = 3

METRICS_HEADER = ["iteration", "seconds", "lower_bound", "best_energy"]
COMPARE_HEADER = ["algorithm", "iteration", "seconds", "lower_bound", "best_energy",
                  "normalized_bound", "normalized_energy"]


class ConfigError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _num(x: float) -> str:
    return format(float(x), ".17g")


def _merge_duplicates(factors):
    tables = {}
    for f in factors:
        tables[f.scope] = tables[f.scope] + f.costs if f.scope in tables else f.costs
    return [Factor(s, t) for s, t in tables.items()]


GENERATORS = {
    "potts": lambda rng, dims, k: instances.potts_grid(rng, dims[0], dims[1], k),
    "grid": lambda rng, dims, k: instances.grid(rng, dims[0], dims[1], k),
    "chain": lambda rng, dims, k: instances.chain(rng, dims[0], k),
    "tree": lambda rng, dims, k: instances.random_tree(rng, dims[0], k),
    "ternary": lambda rng, dims, k: instances.ternary_chain(rng, dims[0], k, "blp"),
}


def _generate(spec: str, seed):
    """``kind:dims:labels`` with dims ``R`` or ``RxC``, e.g. ``potts:10x10:4``."""
    try:
        kind, dims, labels = spec.split(":")
        dims = [int(d) for d in dims.split("x")]
        labels = int(labels)
    except ValueError:
        raise ConfigError(f"cannot read generator spec {spec!r}; expected kind:dims:labels") from None
    if kind not in GENERATORS:
        raise ConfigError(f"unknown generator {kind!r}; choose from {', '.join(GENERATORS)}")
    if kind in ("potts", "grid") and len(dims) != 2:
        raise ConfigError(f"{kind} needs RxC dimensions")
    g = GENERATORS[kind](np.random.default_rng(seed), dims, labels)
    return g.nodes, list(g.factors)


def load_model(args) -> tuple[FactorGraph, FactorGraph]:
    """Returns the model as given and the graph the solvers run on."""
    if args.input is None and args.generate is None:
        raise ConfigError("one of --input or --generate is required")
    if args.input is not None:
        try:
            nodes, factors = read_uai(args.input)
        except OSError as exc:
            raise UAIParseError(f"cannot read {args.input}: {exc.strerror}") from None
    else:
        nodes, factors = _generate(args.generate, args.seed)
    factors = _merge_duplicates(factors)
    try:
        if args.relaxation == "blp":
            graph = build_graph(nodes, factors, "blp")
            return graph, graph
        graph = close_under_intersections(build_graph(nodes, factors, "maximal"))
        return graph, absorb_single_child_factors(graph, strict=False)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def _node_order(spec, n):
    if spec in (None, "input"):
        return None
    try:
        with open(spec) as fh:
            order = [int(t) for t in fh.read().split()]
    except (OSError, ValueError) as exc:
        raise ConfigError(f"cannot read node order from {spec}: {exc}") from None
    if sorted(order) != list(range(n)):
        raise ConfigError(f"node order in {spec} is not a permutation of 0..{n - 1}")
    return order


def _run(graph, algorithm, args, **extra):
    try:
        return solve(graph, algorithm, max_iterations=args.iterations, eps=args.eps,
                     primal_period=args.primal_period, node_order=_node_order(args.node_order, graph.nodes.count),
                     **extra)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None


def write_metrics(trace, fh):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(METRICS_HEADER)
    for k in range(len(trace.lower_bounds)):
        w.writerow([k, _num(trace.seconds[k]), _num(trace.lower_bounds[k]), _num(trace.best_energies[k])])


def verify_run(original: FactorGraph, work: FactorGraph, trace, labeling, seed) -> dict:
    """Oracle checks on a finished run; ``passed`` is the conjunction."""
    checks = {}
    tol = 1e-7 * (1 + abs(trace.lower_bound))
    # bounds on the working graph are bounds on the model itself
    checks["bound_certificate"] = verify_bound_certificate(work, trace.theta, rng=seed).passed
    checks["energy_recomputed"] = abs(energy(original, labeling) - trace.best_energy) <= tol
    mm_ok = True
    for e, (a, b) in enumerate(work.edges):
        fast = work.marginalize(e, work.costs(a))
        slow = brute_force_min_marginal(work.costs(a), work.scope(a), work.scope(b))
        mm_ok &= bool(np.array_equal(fast, slow))
    checks["min_marginals_match_enumeration"] = mm_ok
    samples = np.random.default_rng(seed)
    cards = np.asarray(original.cardinalities)
    margins = [energy(original, samples.integers(0, cards)) - trace.lower_bound for _ in range(100)]
    checks["bound_below_sampled_energies"] = min(margins) >= -tol
    out = {"checks": checks}
    try:
        value, _ = brute_force_map(original)
        out["map_energy"] = value
        checks["bound_below_map"] = trace.lower_bound <= value + tol
        checks["energy_at_least_map"] = trace.best_energy >= value - tol
    except BudgetExceeded as exc:
        out["map_energy"] = None
        out["skipped"] = str(exc)
    out["passed"] = all(checks.values())
    return out


def cmd_solve(args) -> int:
    original, work = load_model(args)
    trace = _run(work, args.algorithm, args)
    labeling = complete_labeling(work, trace.best_labeling)
    final_energy = energy(original, labeling)
    summary = {
        "algorithm": args.algorithm,
        "status": trace.status,
        "iterations": trace.iterations,
        "lower_bound": trace.lower_bound,
        "energy": final_energy,
        "gap": final_energy - trace.lower_bound,
    }
    if args.metrics:
        with open(args.metrics, "w", newline="") as fh:
            write_metrics(trace, fh)
    if args.labeling:
        with open(args.labeling, "w") as fh:
            fh.write(" ".join(str(int(v)) for v in labeling) + "\n")
    if args.check_consistency:
        res = check_j_consistency(work, trace.theta, args.consistency_eps)
        summary["consistency"] = {"consistent": res.consistent, "eps": args.consistency_eps,
                                  "empty_factor": None if res.empty_factor is None
                                  else list(work.scope(res.empty_factor))}
    code = 0
    if args.verify:
        summary["verify"] = verify_run(original, work, trace, labeling, args.seed)
        code = 0 if summary["verify"]["passed"] else EXIT_VERIFY
    text = json.dumps(summary, indent=2)
    if args.summary:
        with open(args.summary, "w") as fh:
            fh.write(text + "\n")
    print(text)
    return code


def normalize_traces(traces: dict) -> tuple[float, float]:
    """Constants (initial, best) of the map sending the zero-message bound to -1
    and the best bound of the whole group to 0."""
    initial = next(iter(traces.values())).lower_bounds[0]
    best = max(max(t.lower_bounds) for t in traces.values())
    return initial, best


def _scaled(v, initial, best):
    span = best - initial
    if not np.isfinite(v):
        return v
    return (v - best) / span if span > 0 else v - best


def compare_rows(traces: dict):
    initial, best = normalize_traces(traces)
    for name, tr in traces.items():
        for k in range(len(tr.lower_bounds)):
            yield [name, k, _num(tr.seconds[k]), _num(tr.lower_bounds[k]), _num(tr.best_energies[k]),
                   _num(_scaled(tr.lower_bounds[k], initial, best)),
                   _num(_scaled(tr.best_energies[k], initial, best))]


def cmd_compare(args) -> int:
    original, work = load_model(args)
    names = [a.strip() for a in args.algorithms.split(",") if a.strip()]
    bad = [a for a in names if a not in ALGORITHMS]
    if bad or not names:
        raise ConfigError(f"unknown algorithm(s) {bad}; choose from {', '.join(ALGORITHMS)}")
    extra = {"max_updates": args.updates} if args.updates else {}
    traces = {a: _run(work, a, args, **extra) for a in names}
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COMPARE_HEADER)
    w.writerows(compare_rows(traces))
    if args.output:
        with open(args.output, "w", newline="") as fh:
            fh.write(buf.getvalue())
    per_iter = {a: (t.seconds[-1] / t.iterations if t.iterations else float("nan")) for a, t in traces.items()}
    ref = per_iter[names[0]]
    initial, best = normalize_traces(traces)
    summary = {
        "initial_bound": initial,
        "best_bound": best,
        "runs": {a: {"iterations": t.iterations, "updates": t.updates[-1], "lower_bound": t.lower_bound,
                     "energy": t.best_energy, "seconds_per_iteration": per_iter[a],
                     "time_ratio": per_iter[a] / ref if ref else float("nan")}
                 for a, t in traces.items()},
    }
    print(json.dumps(summary, indent=2))
    if not args.output:
        sys.stdout.write(buf.getvalue())
    return 0


def _common(p):
    p.add_argument("--input", help="UAI MARKOV model file")
    p.add_argument("--generate", metavar="KIND:DIMS:LABELS",
                   help="random model instead of --input, e.g. potts:10x10:4 (kinds: %s)" % ", ".join(GENERATORS))
    p.add_argument("--relaxation", choices=["blp", "maximal"], default="blp")
    p.add_argument("--iterations", type=int, default=100)
    p.add_argument("--node-order", default="input", help="'input' or a file with a node permutation")
    p.add_argument("--primal-period", type=int, default=3)
    p.add_argument("--seed", type=int, default=0, help="seeds --generate and the --verify sampling")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="srmp", description="Message passing MAP inference on UAI models.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("solve", help="run one algorithm")
    _common(s)
    s.add_argument("--algorithm", choices=ALGORITHMS, default="srmp")
    s.add_argument("--eps", type=float, default=1e-7, help="relative bound gain below which a run stops")
    s.add_argument("--metrics", help="CSV of per-iteration bound and energy")
    s.add_argument("--labeling", help="file for the best labeling")
    s.add_argument("--summary", help="also write the JSON summary here")
    s.add_argument("--check-consistency", action="store_true")
    s.add_argument("--consistency-eps", type=float, default=1e-6)
    s.add_argument("--verify", action="store_true", help="check the run against brute-force oracles")
    s.set_defaults(func=cmd_solve)

    c = sub.add_parser("compare", help="run several algorithms and emit normalized traces")
    _common(c)
    c.add_argument("--algorithms", default="srmp,cmp,mplp")
    c.add_argument("--eps", type=float, default=0.0)
    c.add_argument("--updates", type=int, default=None, help="min-marginal budget per run")
    c.add_argument("--output", help="CSV of normalized traces (default: stdout)")
    c.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UAIParseError as exc:
        print(f"srmp: error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except ConfigError as exc:
        print(f"srmp: error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
