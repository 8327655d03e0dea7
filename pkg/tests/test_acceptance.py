"""Acceptance suite: one test and one verdict line per criterion.

Each test records a PASS/FAIL line (shown in the terminal summary) and then
asserts it, except the desk-scale Potts comparison, which is a soft check
that reports without failing the run.
"""
import csv
import time
import warnings

import numpy as np

from srmp import instances
from srmp.cli import compare_rows
from srmp.consistency import amsd_call_sequence, check_j_consistency, track_relations
from srmp.graph import energy
from srmp.oracle import BudgetExceeded, brute_force_map, exact_map_by_elimination
from srmp.schedule import cmp_weights, compute_pass_sets, order_factors, srmp_weights
from srmp.solvers import solve
from srmp.uai import UAIParseError, parse_uai, write_uai
from srmp.updates import StarSelection, WeightDistribution, amplp, amplp_optimality_check, amsd, amsd_optimality_check

from test_uai import MALFORMED, random_model
from test_updates import (
    _message_form_matches,
    amsd_identities_hold,
    msd_step,
    random_distribution,
    random_theta,
)

FIXED = dict(eps=0, gap_tol=None)


def exact_map(g):
    try:
        return brute_force_map(g)
    except BudgetExceeded:
        return exact_map_by_elimination(g)


def random_integer_tree(rng):
    return instances.random_tree(rng, max_nodes=12, max_labels=4)


def breadth_first_order(g):
    """Node order in which every node has at most one earlier tree neighbour."""
    adj = {v: set() for v in range(g.nodes.count)}
    for f in g.factors:
        if len(f.scope) == 2:
            a, b = f.scope
            adj[a].add(b)
            adj[b].add(a)
    order, seen = [0], {0}
    for v in order:
        for u in sorted(adj[v] - seen):
            seen.add(u)
            order.append(u)
    return order


def test_criterion_01_tree_exactness(acceptance):
    rng = np.random.default_rng(101)
    trees = [random_integer_tree(rng) for _ in range(50)]
    start = time.perf_counter()
    worst_bound, worst_energy = 0.0, 0.0
    for g in trees:
        value, _ = exact_map(g)
        for alg in ("srmp", "cmp", "mplp"):
            # integer costs give exact ties; decoding them needs a tree-compatible order
            tr = solve(g, alg, max_iterations=1000, eps=1e-15, gap_tol=1e-12,
                       node_order=breadth_first_order(g))
            worst_bound = max(worst_bound, abs(tr.lower_bound - value))
            worst_energy = max(worst_energy, abs(energy(g, tr.best_labeling) - value))
    seconds = time.perf_counter() - start
    ok = worst_bound <= 1e-7 and worst_energy <= 1e-7 and seconds < 5.0
    acceptance(1, "tree exactness (50 trees x 3 solvers)", ok,
               f"max |bound-MAP|={worst_bound:.2e}, max |E(x)-MAP|={worst_energy:.2e}, {seconds:.2f}s")
    assert ok


def loopy_instances():
    rng = np.random.default_rng(202)
    return ([instances.grid(rng, 6, 6, labels=3) for _ in range(10)]
            + [instances.ternary_chain(rng, 10, labels=3) for _ in range(10)])


def test_criterion_02_monotonicity(acceptance):
    worst = {"srmp": 0.0, "cmp": 0.0, "mplp": 0.0}
    for g in loopy_instances():
        for alg in worst:
            lb = np.array(solve(g, alg, max_iterations=40, **FIXED).lower_bounds)
            # lower_bounds[k] is the bound after iteration k; SRMP may dip during iteration 1
            tail = lb[1:] if alg == "srmp" else lb
            worst[alg] = min(worst[alg], float(np.diff(tail).min(initial=0.0)))
    ok = all(v >= -1e-9 for v in worst.values())
    acceptance(2, "monotone bound on 20 loopy instances", ok,
               ", ".join(f"{k} worst step {v:.2e}" for k, v in worst.items()))
    assert ok


def test_criterion_03_block_update_postconditions(acceptance):
    rng = np.random.default_rng(303)
    pool = [instances.random_higher_order(rng, n=5, labels=3, n_factors=4, max_order=3) for _ in range(5)]
    pool += [instances.grid(rng, 3, 3), instances.ternary_chain(rng, 5)]
    identity_failures, updates = 0, 0
    while updates < 1000:
        g = pool[updates % len(pool)]
        theta = random_theta(g, rng)
        for _ in range(50):
            children = [f for f in range(g.n_factors) if g.in_edges[f]]
            b = children[int(rng.integers(0, len(children)))]
            edges = tuple(e for e in g.in_edges[b] if rng.random() < 0.7) or (g.in_edges[b][0],)
            w = random_distribution(rng, len(edges))
            star = StarSelection(b, edges)
            _, hat = amsd(g, theta, star, w)
            identity_failures += not amsd_identities_hold(g, theta, star, w, hat, tol=1e-9)
            updates += 1
    cert_failures, certs = 0, 0
    for g in pool:
        theta = random_theta(g, rng)
        for f in range(g.n_factors):
            if g.in_edges[f]:
                star = StarSelection(f, tuple(g.in_edges[f]))
                w = random_distribution(rng, len(star.edges))
                before = [t.copy() for t in theta]
                amsd(g, theta, star, w)
                cert_failures += not amsd_optimality_check(g, before, theta, star, rng=certs, trials=10)
                certs += 1
            if g.out_edges[f]:
                star = StarSelection(f, tuple(g.out_edges[f]))
                rho = random_distribution(rng, len(star.edges))
                before = [t.copy() for t in theta]
                amplp(g, theta, star, rho)
                cert_failures += not amplp_optimality_check(g, before, theta, star, rng=certs, trials=10)
                certs += 1
    ok = identity_failures == 0 and cert_failures == 0
    acceptance(3, "AMSD identities and block-optimality certificates", ok,
               f"{updates} AMSD calls, {identity_failures} identity failures; "
               f"{certs} certificates, {cert_failures} failures")
    assert ok


def test_criterion_04_skip_rule(acceptance):
    rng = np.random.default_rng(404)
    cases = ([instances.grid(rng, 4, 4) for _ in range(4)] + [instances.ternary_chain(rng, 7) for _ in range(3)]
             + [instances.random_higher_order(rng, n=6, labels=2, n_factors=5, max_order=3, relaxation="maximal")
                for _ in range(3)])
    worst, passes = 0.0, 0
    for g in cases:
        snaps = {}
        for full in (False, True):
            snaps[full] = []
            solve(g, "srmp", max_iterations=5, full_collection=full,
                  on_pass=lambda n, s, out=snaps[full]: out.append([m.copy() for m in s.messages]), **FIXED)
        for a, b in zip(snaps[False][1:], snaps[True][1:]):
            passes += 1
            worst = max([worst] + [float(np.abs(x - y).max()) for x, y in zip(a, b)])
    ok = worst <= 1e-9
    acceptance(4, "skip rule: IN- collection equals full collection", ok,
               f"10 instances, {passes} pass boundaries from pass 2, max message diff {worst:.2e}")
    assert ok


def test_criterion_05_alternative_pairwise(acceptance):
    rng = np.random.default_rng(505)
    worst, compared = 0.0, 0
    for _ in range(10):
        g = instances.grid(rng, 5, 5, labels=3)
        a = solve(g, "srmp", max_iterations=15, **FIXED).pass_bounds
        b = solve(g, "srmp-alt", max_iterations=15, **FIXED).pass_bounds
        n = min(len(a), len(b))
        compared += n
        worst = max(worst, float(np.max(np.abs(np.subtract(a[:n], b[:n])))))
    ok = worst <= 1e-6
    acceptance(5, "alternative pairwise SRMP agrees per pass", ok,
               f"10 grids, {compared} pass bounds, max diff {worst:.2e}")
    assert ok


def test_criterion_06_weights(acceptance):
    problems = []
    grid = instances.grid(np.random.default_rng(0), 3, 3)
    sched = compute_pass_sets(grid, order_factors(grid))
    centre = grid.index[(4,)]
    for direction in ("forward", "backward"):
        w = srmp_weights(grid, sched, direction)[centre]
        if sorted(w.edge_weights) != [0.0, 0.0, 0.5, 0.5] or w.residual != 0.0:
            problems.append(f"grid interior {direction}: {w}")
    chain = instances.chain(np.random.default_rng(0), 5)
    csched = compute_pass_sets(chain, order_factors(chain))
    for v in (1, 2, 3):
        w = srmp_weights(chain, csched, "forward")[chain.index[(v,)]]
        if sorted(w.edge_weights) != [0.0, 1.0] or w.residual != 0.0:
            problems.append(f"chain interior {v}: {w}")
    for f, w in cmp_weights(grid).items():
        k = len(grid.in_edges[f])
        if w.edge_weights != (1 / (1 + k),) * k:
            problems.append(f"cmp factor {f}: {w}")
    rng = np.random.default_rng(606)
    checked = 0
    models = [instances.random_higher_order(rng, n=6, labels=2, n_factors=5, max_order=3, relaxation=r)
              for r in ("blp", "maximal") for _ in range(10)]
    for g in models + [grid, chain]:
        s = compute_pass_sets(g, order_factors(g))
        tables = [srmp_weights(g, s, "forward"), srmp_weights(g, s, "backward"), cmp_weights(g)]
        for table in tables:
            for f, w in table.items():
                checked += 1
                if abs(sum(w.edge_weights) + w.residual - 1) > 1e-12 or w.residual < 0 or min(w.edge_weights) < 0:
                    problems.append(f"distribution of factor {f}: {w}")
    ok = not problems
    acceptance(6, "weight formulas", ok,
               f"hand-derived grid/chain/CMP values, {checked} distributions checked"
               + (f"; {problems[:3]}" if problems else ""))
    assert ok


def stall_pool():
    rng = np.random.default_rng(707)
    return ([random_integer_tree(rng) for _ in range(10)] + [instances.grid(rng, 4, 4) for _ in range(5)]
            + [instances.ternary_chain(rng, 8) for _ in range(5)] + [instances.frustrated_cycle()])


def test_criterion_07_consistency_at_stall(acceptance):
    stalled, consistent, tracked, violations, illegal = 0, 0, 0, 0, 0
    for g in stall_pool():
        tr = solve(g, "srmp", max_iterations=200, **FIXED)
        lb = tr.lower_bounds
        if len(lb) < 6 or lb[-1] - lb[-6] >= 1e-9:
            continue
        stalled += 1
        consistent += check_j_consistency(g, tr.theta, 1e-6).consistent
        for alg in ("srmp", "cmp"):
            rep = track_relations(g, tr.theta, amsd_call_sequence(g, alg, iterations=3), eps=1e-6)
            tracked += rep.updates
            violations += len(rep.violations)
            illegal += len(rep.illegal)
    pair = instances.two_node_example()
    bad = [np.array([0.0, 1.0]), np.array([0.0, 0.0]), np.array([[1.0, 1.0], [0.0, 1.0]])]
    rejects = not check_j_consistency(pair, bad, 1e-6).consistent
    ok = stalled > 0 and consistent == stalled and violations == 0 and illegal == 0 and rejects
    acceptance(7, "J-consistency at stall and relation invariants", ok,
               f"{consistent}/{stalled} stalled runs consistent at eps=1e-6; {tracked} tracked updates, "
               f"{violations} invariant violations, {illegal} locking errors; inconsistent theta rejected={rejects}")
    assert ok


def test_criterion_08_special_cases(acceptance):
    rng = np.random.default_rng(808)
    worst_msd, steps = 0.0, 0
    for _ in range(10):
        g = instances.random_higher_order(rng, n=5, labels=3, n_factors=4, max_order=3)
        t1 = random_theta(g, rng)
        t2 = [t.copy() for t in t1]
        for _ in range(30):
            e = int(rng.integers(0, g.n_edges))
            amsd(g, t1, StarSelection(g.edges[e][1], (e,)), WeightDistribution((0.5,), 0.5))
            msd_step(g, t2, e)
            steps += 1
            worst_msd = max([worst_msd] + [float(np.abs(x - y).max()) for x, y in zip(t1, t2)])
    worst_mf = 0.0
    for _ in range(5):
        g = instances.random_higher_order(rng, n=6, labels=3, n_factors=5, max_order=3)
        worst_mf = max(worst_mf, _message_form_matches(g, rng, 100))
    ok = worst_msd <= 1e-9 and worst_mf <= 1e-9
    acceptance(8, "AMSD reduces to MSD; AMPLP message form equals table form", ok,
               f"{steps} MSD steps max diff {worst_msd:.2e}; 500 AMPLP updates max diff {worst_mf:.2e}")
    assert ok


def test_criterion_09_potts_desk_reproduction(acceptance, tmp_path_factory):
    budget = 8000
    start = time.perf_counter()
    wins, finals, rows = 0, [], []
    for seed in range(5):
        g = instances.potts_grid(np.random.default_rng(seed), 10, 10, labels=4)
        traces = {alg: solve(g, alg, max_iterations=10_000, max_updates=budget, **FIXED)
                  for alg in ("srmp", "cmp", "mplp")}
        phi = {k: t.lower_bound for k, t in traces.items()}
        slack = 1e-9 * (1 + abs(phi["srmp"]))
        wins += phi["srmp"] >= max(phi["cmp"], phi["mplp"]) - slack
        rows += [[seed] + r for r in compare_rows(traces)]
        last = {}
        for r in rows:
            if r[0] == seed:
                last[r[1]] = float(r[6])
        finals.append(f"seed {seed}: " + " ".join(f"{k}={v:+.4f}" for k, v in last.items()))
    seconds = time.perf_counter() - start
    path = tmp_path_factory.mktemp("report") / "potts_normalized_traces.csv"
    with open(path, "w", newline="") as fh:
        out = csv.writer(fh)
        out.writerow(["seed", "algorithm", "iteration", "seconds", "lower_bound", "best_energy",
                      "normalized_bound", "normalized_energy"])
        out.writerows(rows)
    ok = wins >= 4 and seconds < 30
    acceptance(9, "Potts 10x10x4 at equal update budget (soft)", ok,
               f"SRMP best in {wins}/5 seeds, {seconds:.1f}s; final normalized bounds "
               + "; ".join(finals) + f"; traces in {path}", soft=True)
    if not ok:
        warnings.warn(f"soft criterion 9 missed: SRMP best in {wins}/5 seeds, {seconds:.1f}s")


def test_criterion_10_parser(acceptance):
    rng = np.random.default_rng(1010)
    round_trips = 0
    for _ in range(20):
        nodes, factors = random_model(rng)
        back_nodes, back = parse_uai(write_uai(nodes, factors))
        same = (back_nodes.cardinalities == nodes.cardinalities
                and [f.scope for f in back] == [f.scope for f in factors]
                and all(np.array_equal(a.costs, b.costs) for a, b in zip(back, factors))
                and any(len(f.scope) == 4 for f in back))
        round_trips += same
    positioned = 0
    for text, line, _ in MALFORMED.values():
        try:
            parse_uai(text)
        except UAIParseError as err:
            positioned += err.line == line
    ok = round_trips == 20 and positioned == len(MALFORMED)
    acceptance(10, "UAI round trip and positioned errors", ok,
               f"{round_trips}/20 exact round trips with 4th-order factors; "
               f"{positioned}/{len(MALFORMED)} malformed inputs reported at the right line")
    assert ok
