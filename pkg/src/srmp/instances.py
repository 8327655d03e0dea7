"""Random model generators used by the tests, the demos and ``--verify``."""
from __future__ import annotations

import math

import numpy as np

from .graph import Factor, FactorGraph, NodeSet, build_graph, close_under_intersections

__all__ = [
    "two_node_example",
    "random_tree",
    "chain",
    "grid",
    "potts_grid",
    "ternary_chain",
    "frustrated_cycle",
    "random_higher_order",
]


def _ints(rng, shape, high=10):
    return rng.integers(0, high, size=shape).astype(float)


def two_node_example() -> FactorGraph:
    """Two binary nodes, unaries (0, 2) and (0, 0), pair table [0, 3, 3, 0]."""
    factors = [
        Factor((0,), [0.0, 2.0]),
        Factor((1,), [0.0, 0.0]),
        Factor((0, 1), [0.0, 3.0, 3.0, 0.0]),
    ]
    return build_graph(NodeSet((2, 2)), factors, "blp")


def _pairwise(cards, pairs, rng, high=10):
    factors = [Factor((v,), _ints(rng, (c,), high)) for v, c in enumerate(cards)]
    for i, j in pairs:
        i, j = min(i, j), max(i, j)
        factors.append(Factor((i, j), _ints(rng, (cards[i], cards[j]), high)))
    return build_graph(NodeSet(tuple(cards)), factors, "blp")


def random_tree(rng, max_nodes: int = 12, max_labels: int = 4) -> FactorGraph:
    """Pairwise model on a random spanning tree, integer costs 0..9."""
    n = int(rng.integers(2, max_nodes + 1))
    cards = [int(c) for c in rng.integers(2, max_labels + 1, size=n)]
    perm = rng.permutation(n)
    pairs = [(int(perm[k]), int(perm[rng.integers(0, k)])) for k in range(1, n)]
    return _pairwise(cards, pairs, rng)


def chain(rng, n: int, labels: int = 2) -> FactorGraph:
    return _pairwise([labels] * n, [(i, i + 1) for i in range(n - 1)], rng)


def grid(rng, rows: int, cols: int, labels: int = 3, high: int = 10) -> FactorGraph:
    """Pairwise 4-connected grid with random integer tables, nodes row-major."""
    pairs = []
    for r in range(rows):
        for c in range(cols):
            v = r * cols + c
            if c + 1 < cols:
                pairs.append((v, v + 1))
            if r + 1 < rows:
                pairs.append((v, v + cols))
    return _pairwise([labels] * (rows * cols), pairs, rng, high)


def potts_grid(rng, rows: int, cols: int, labels: int = 4, strength: float = 1.0,
               unary_high: float = 1.0) -> FactorGraph:
    """4-connected Potts grid: uniform random unaries, ``strength`` per label disagreement."""
    cards = [labels] * (rows * cols)
    factors = [Factor((v,), rng.uniform(0, unary_high, size=labels)) for v in range(rows * cols)]
    potts = strength * (1.0 - np.eye(labels))
    for r in range(rows):
        for c in range(cols):
            v = r * cols + c
            if c + 1 < cols:
                factors.append(Factor((v, v + 1), potts))
            if r + 1 < rows:
                factors.append(Factor((v, v + cols), potts))
    return build_graph(NodeSet(tuple(cards)), factors, "blp")


def ternary_chain(rng, n: int, labels: int = 2, relaxation: str = "maximal") -> FactorGraph:
    """Unaries plus ternary factors on consecutive triples.

    With ``"maximal"`` the family is closed under intersections first, giving
    triple -> pair -> singleton edges as in second-order stereo models.
    """
    cards = [labels] * n
    factors = [Factor((v,), _ints(rng, (labels,))) for v in range(n)]
    for i in range(n - 2):
        factors.append(Factor((i, i + 1, i + 2), _ints(rng, (labels,) * 3)))
    g = build_graph(NodeSet(tuple(cards)), factors, "blp" if relaxation == "blp" else "maximal")
    if relaxation != "blp":
        g = close_under_intersections(g, "maximal")
    return g


def frustrated_cycle() -> FactorGraph:
    """Three binary nodes, each pair penalizing equal labels: the LP bound is loose."""
    anti = [1.0, 0.0, 0.0, 1.0]
    factors = [Factor((v,), [0.0, 0.0]) for v in range(3)]
    factors += [Factor((0, 1), anti), Factor((1, 2), anti), Factor((0, 2), anti)]
    return build_graph(NodeSet((2, 2, 2)), factors, "blp")


def random_higher_order(rng, n: int = 5, labels: int = 2, n_factors: int = 4, max_order: int = 3,
                        relaxation: str = "blp") -> FactorGraph:
    """Random unaries plus random factors of order 2..max_order (distinct scopes)."""
    cards = [int(c) for c in rng.integers(2, labels + 1, size=n)] if labels > 2 else [2] * n
    factors = [Factor((v,), _ints(rng, (cards[v],))) for v in range(n)]
    possible = sum(math.comb(n, k) for k in range(2, max_order + 1))
    scopes = set()
    while len(scopes) < min(n_factors, possible):
        k = int(rng.integers(2, max_order + 1))
        scopes.add(tuple(sorted(int(v) for v in rng.choice(n, size=k, replace=False))))
    for s in sorted(scopes):
        factors.append(Factor(s, _ints(rng, tuple(cards[v] for v in s))))
    return build_graph(NodeSet(tuple(cards)), factors, relaxation)
