"""Factor ordering, forward/backward edge partitions and AMSD weights."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

from .graph import FactorGraph
from .updates import WeightDistribution

__all__ = [
    "factor_sort_key",
    "order_factors",
    "PassSchedule",
    "compute_pass_sets",
    "srmp_weights",
    "cmp_weights",
    "in_plus_weights",
]


def factor_sort_key(scope: Sequence[int], rank: Sequence[int]):
    """Sort key: min node, then max node, then the ranked scope, then size."""
    r = sorted(rank[v] for v in scope)
    return (r[0], r[-1], tuple(r), len(r))


def _node_rank(graph: FactorGraph, node_order):
    n = graph.nodes.count
    if node_order is None:
        return list(range(n))
    node_order = [int(v) for v in node_order]
    if sorted(node_order) != list(range(n)):
        raise ValueError(f"node order must be a permutation of 0..{n - 1}")
    rank = [0] * n
    for pos, v in enumerate(node_order):
        rank[v] = pos
    return rank


def order_factors(graph: FactorGraph, node_order=None, which: str = "updatable") -> list[int]:
    """Total order on factors.

    ``which="updatable"`` returns the factors with at least one incoming
    edge (the ones AMSD visits), ``"parents"`` those with outgoing edges
    (the ones MPLP visits), ``"all"`` every factor.
    """
    rank = _node_rank(graph, node_order)
    if which == "updatable":
        pool = [f for f in range(graph.n_factors) if graph.in_edges[f]]
    elif which == "parents":
        pool = [f for f in range(graph.n_factors) if graph.out_edges[f]]
    elif which == "all":
        pool = list(range(graph.n_factors))
    else:
        raise ValueError(f"unknown factor selection {which!r}")
    return sorted(pool, key=lambda f: factor_sort_key(graph.scope(f), rank))


@dataclass
class PassSchedule:
    """Order on the updatable factors with per-direction edge partitions.

    ``in_fw[b]`` holds the incoming edges of ``b`` whose parent is touched
    after ``b`` in a forward pass; ``out_fw[b]`` the outgoing edges to
    children processed later.  ``*_bw`` are the mirror images.
    """

    order: list[int]
    position: dict[int, int]
    in_fw: dict[int, tuple[int, ...]] = field(default_factory=dict)
    in_bw: dict[int, tuple[int, ...]] = field(default_factory=dict)
    out_fw: dict[int, tuple[int, ...]] = field(default_factory=dict)
    out_bw: dict[int, tuple[int, ...]] = field(default_factory=dict)

    def in_set(self, b: int, forward: bool) -> tuple[int, ...]:
        return self.in_fw[b] if forward else self.in_bw[b]

    def out_set(self, b: int, forward: bool) -> tuple[int, ...]:
        return self.out_fw[b] if forward else self.out_bw[b]


def compute_pass_sets(graph: FactorGraph, order: Sequence[int]) -> PassSchedule:
    order = list(order)
    pos = {f: i for i, f in enumerate(order)}
    sched = PassSchedule(order, pos)
    for b in order:
        for forward in (True, False):
            later = (lambda f: pos[f] > pos[b]) if forward else (lambda f: pos[f] < pos[b])
            ins = []
            for e in graph.in_edges[b]:
                a = graph.edges[e][0]
                if (a in pos and later(a)) or any(later(graph.edges[g][1]) for g in graph.other_children(e)):
                    ins.append(e)
            outs = [e for e in graph.out_edges[b] if later(graph.edges[e][1])]
            if forward:
                sched.in_fw[b], sched.out_fw[b] = tuple(ins), tuple(outs)
            else:
                sched.in_bw[b], sched.out_bw[b] = tuple(ins), tuple(outs)
        missing = set(graph.in_edges[b]) - set(sched.in_fw[b]) - set(sched.in_bw[b])
        if missing:
            e = min(missing)
            a = graph.edges[e][0]
            raise ValueError(
                f"edge {graph.scope(a)} -> {graph.scope(b)} is in neither pass set; factor "
                f"{graph.scope(a)} has a single child (run absorb_single_child_factors first)"
            )
    for b in order:
        if not graph.in_edges[b]:
            raise ValueError(f"factor {graph.scope(b)} has no incoming edges and cannot be ordered for AMSD")
    return sched


def _lambda_weights(graph, sched, direction, rule):
    forward = direction == "forward"
    if direction not in ("forward", "backward"):
        raise ValueError(f"direction must be 'forward' or 'backward', got {direction!r}")
    weights = {}
    for b in sched.order:
        plus = set(sched.in_set(b, forward))
        n_in = len(graph.in_edges[b])
        if not plus:
            lam = 0.0
        elif rule == "srmp":
            lam = 1.0 / (len(sched.out_set(b, forward)) + max(len(plus), n_in - len(plus)))
        else:
            lam = 1.0 / len(plus)
        weights[b] = WeightDistribution.from_edges(lam if e in plus else 0.0 for e in graph.in_edges[b])
    return weights


def srmp_weights(graph: FactorGraph, sched: PassSchedule, direction: str = "forward"):
    """Default SRMP weights, one distribution per factor aligned with ``graph.in_edges``.

    Edges in the direction's pass set share
    ``1 / (|OUT+| + max(|IN+|, |IN| - |IN+|))``; the rest get zero.
    """
    return _lambda_weights(graph, sched, direction, "srmp")


def in_plus_weights(graph: FactorGraph, sched: PassSchedule, direction: str = "forward"):
    """Alternative lambda = 1/|IN+|: no mass is kept at the factor."""
    return _lambda_weights(graph, sched, direction, "in_plus")


def cmp_weights(graph: FactorGraph, factors=None):
    """Uniform distribution over IN(b) and b itself, for every updatable factor."""
    factors = factors if factors is not None else [f for f in range(graph.n_factors) if graph.in_edges[f]]
    return {b: WeightDistribution.uniform(len(graph.in_edges[b])) for b in factors}
