"""Energy functions over discrete nodes and the relaxation graph (F, J).

Cost tables are dense numpy arrays with one axis per scope variable, in
C order, so the last scope variable varies fastest (the UAI convention).
Hard constraints are written as ``+inf``.  Messages are plain arrays shaped
like the child factor's table; a message set is a list indexed by edge id.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "NodeSet",
    "Factor",
    "FactorGraph",
    "UnsupportedGraphError",
    "build_graph",
    "close_under_intersections",
    "absorb_single_child_factors",
    "complete_labeling",
    "energy",
    "reparameterize",
    "lower_bound",
    "min_marginal",
    "zero_messages",
    "normalize_messages",
]


class UnsupportedGraphError(ValueError):
    """The relaxation graph has a shape the solvers cannot handle."""


@dataclass(frozen=True)
class NodeSet:
    cardinalities: tuple[int, ...]

    def __post_init__(self):
        cards = tuple(int(c) for c in self.cardinalities)
        if not cards:
            raise ValueError("a model needs at least one node")
        if any(c < 1 for c in cards):
            raise ValueError(f"cardinalities must be >= 1, got {cards}")
        object.__setattr__(self, "cardinalities", cards)

    @property
    def count(self) -> int:
        return len(self.cardinalities)

    def __len__(self):
        return len(self.cardinalities)


@dataclass(frozen=True, eq=False)
class Factor:
    """A cost table over the labelings of ``scope``.

    ``costs`` may be given flat (last scope variable fastest) or already
    shaped; :class:`FactorGraph` reshapes it against the node cardinalities.
    """

    scope: tuple[int, ...]
    costs: np.ndarray

    def __post_init__(self):
        scope = tuple(int(v) for v in self.scope)
        if not scope:
            raise ValueError("factor scope must be non-empty")
        if any(b <= a for a, b in zip(scope, scope[1:])):
            raise ValueError(f"scope must be strictly increasing, got {scope}")
        costs = np.array(self.costs, dtype=float)
        if np.isnan(costs).any() or np.isneginf(costs).any():
            raise ValueError(f"factor {scope}: costs must not contain NaN or -inf")
        object.__setattr__(self, "scope", scope)
        object.__setattr__(self, "costs", costs)

    def __repr__(self):
        return f"Factor(scope={self.scope}, shape={self.costs.shape})"


class FactorGraph:
    """Factors plus directed edges (alpha, beta) with scope(beta) a strict
    subset of scope(alpha).

    The graph is treated as immutable once built; the solvers share it.
    Edges are addressed by their position in ``edges``.
    """

    def __init__(self, nodes, factors: Sequence[Factor], edges: Iterable[tuple[int, int]] = ()):
        self.nodes = nodes if isinstance(nodes, NodeSet) else NodeSet(tuple(nodes))
        self.absorbed: list[Factor] = []
        cards = self.nodes.cardinalities
        self.factors: list[Factor] = []
        self.index: dict[tuple[int, ...], int] = {}
        for f in factors:
            if f.scope[-1] >= len(cards):
                raise ValueError(f"factor {f.scope} refers to a node outside 0..{len(cards) - 1}")
            shape = tuple(cards[v] for v in f.scope)
            if f.costs.size != int(np.prod(shape)):
                raise ValueError(
                    f"factor {f.scope}: table has {f.costs.size} entries, expected {int(np.prod(shape))}"
                )
            if f.scope in self.index:
                raise ValueError(f"duplicate factor scope {f.scope}")
            self.index[f.scope] = len(self.factors)
            self.factors.append(Factor(f.scope, f.costs.reshape(shape)))

        self.edges: list[tuple[int, int]] = []
        self.in_edges: list[list[int]] = [[] for _ in self.factors]
        self.out_edges: list[list[int]] = [[] for _ in self.factors]
        # per edge: parent axes to minimize out, child shape broadcast into the parent
        self.reduce_axes: list[tuple[int, ...]] = []
        self.child_shape: list[tuple[int, ...]] = []
        seen = set()
        for a, b in edges:
            a, b = int(a), int(b)
            sa, sb = self.factors[a].scope, self.factors[b].scope
            if not (set(sb) < set(sa)):
                raise ValueError(f"edge {sa} -> {sb}: child scope must be a strict subset of the parent scope")
            if (a, b) in seen:
                raise ValueError(f"duplicate edge {sa} -> {sb}")
            seen.add((a, b))
            e = len(self.edges)
            self.edges.append((a, b))
            self.out_edges[a].append(e)
            self.in_edges[b].append(e)
            self.reduce_axes.append(tuple(i for i, v in enumerate(sa) if v not in sb))
            self.child_shape.append(tuple(cards[v] if v in sb else 1 for v in sa))

    @property
    def cardinalities(self) -> tuple[int, ...]:
        return self.nodes.cardinalities

    @property
    def n_factors(self) -> int:
        return len(self.factors)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    def scope(self, f: int) -> tuple[int, ...]:
        return self.factors[f].scope

    def costs(self, f: int) -> np.ndarray:
        return self.factors[f].costs

    def other_children(self, e: int) -> list[int]:
        a, b = self.edges[e]
        return [g for g in self.out_edges[a] if g != e]

    def is_pairwise(self) -> bool:
        """True iff |alpha| <= 2 and J is exactly the pair -> singleton edges."""
        if any(len(f.scope) > 2 for f in self.factors):
            return False
        expected = set()
        for a, f in enumerate(self.factors):
            if len(f.scope) == 2:
                for v in f.scope:
                    b = self.index.get((v,))
                    if b is None:
                        return False
                    expected.add((a, b))
        return expected == set(self.edges)

    def expand(self, e: int, child_vec: np.ndarray) -> np.ndarray:
        """View a child-shaped array of edge ``e`` as broadcastable over the parent."""
        return child_vec.reshape(self.child_shape[e])

    def marginalize(self, e: int, parent_table: np.ndarray) -> np.ndarray:
        """min over parent labelings consistent with each child labeling."""
        axes = self.reduce_axes[e]
        return parent_table.min(axis=axes) if axes else parent_table.copy()

    def __repr__(self):
        return f"FactorGraph(nodes={self.nodes.count}, factors={self.n_factors}, edges={self.n_edges})"


def _blp_edges(nodes: NodeSet, factors: list[Factor]):
    index = {f.scope: i for i, f in enumerate(factors)}
    for f in list(factors):
        for v in f.scope if len(f.scope) >= 2 else ():
            if (v,) not in index:
                index[(v,)] = len(factors)
                factors.append(Factor((v,), np.zeros(nodes.cardinalities[v])))
    edges = []
    for a, f in enumerate(factors):
        if len(f.scope) >= 2:
            edges.extend((a, index[(v,)]) for v in f.scope)
    return factors, edges


def _maximal_edges(factors: list[Factor]):
    scopes = [frozenset(f.scope) for f in factors]
    edges = []
    for a, sa in enumerate(scopes):
        for b, sb in enumerate(scopes):
            if not sb < sa:
                continue
            if any(sb < sg < sa for sg in scopes):
                continue
            edges.append((a, b))
    return edges


def build_graph(nodes, factors: Sequence[Factor], relaxation="blp") -> FactorGraph:
    """Assemble a :class:`FactorGraph`.

    ``relaxation`` is ``"blp"`` (every factor of size >= 2 points at each of
    its singletons, which are created with zero costs if missing),
    ``"maximal"`` (every nested pair with no intermediate factor), or an
    explicit iterable of ``(parent, child)`` factor indices.
    """
    nodes = nodes if isinstance(nodes, NodeSet) else NodeSet(tuple(nodes))
    factors = list(factors)
    if isinstance(relaxation, str):
        if relaxation == "blp":
            factors, edges = _blp_edges(nodes, factors)
        elif relaxation == "maximal":
            edges = _maximal_edges(factors)
        else:
            raise ValueError(f"unknown relaxation {relaxation!r}; use 'blp', 'maximal' or an edge list")
    else:
        edges = list(relaxation)
    return FactorGraph(nodes, factors, edges)


def close_under_intersections(graph: FactorGraph, relaxation="maximal") -> FactorGraph:
    """Add a zero-cost factor for every non-empty intersection of scopes.

    The edge set is rebuilt with ``relaxation`` since new factors change
    which pairs are nested without intermediates.
    """
    scopes = {f.scope for f in graph.factors}
    frontier = set(scopes)
    while frontier:
        fresh = set()
        for s in frontier:
            for t in scopes:
                common = tuple(sorted(set(s) & set(t)))
                if common and common not in scopes:
                    fresh.add(common)
        scopes |= fresh
        frontier = fresh
    factors = list(graph.factors)
    cards = graph.cardinalities
    for s in sorted(scopes - {f.scope for f in graph.factors}, key=lambda s: (len(s), s)):
        factors.append(Factor(s, np.zeros(tuple(cards[v] for v in s))))
    if len(factors) == graph.n_factors:
        return graph
    return build_graph(graph.nodes, factors, relaxation)


def absorb_single_child_factors(graph: FactorGraph, strict: bool = True) -> FactorGraph:
    """Fold every factor with exactly one child and no parents into that child.

    The child's table gains the parent's min-marginal, which leaves the exact
    minimum of the energy unchanged.  Repeats to a fixpoint.  The folded
    tables are kept on the result as ``absorbed`` so that
    :func:`complete_labeling` can fill in the nodes they alone covered.  A single-child
    factor that has parents of its own raises :class:`UnsupportedGraphError`
    when ``strict``; otherwise it is left in place (the solvers accept it).
    """
    factors = [Factor(f.scope, f.costs.copy()) for f in graph.factors]
    edges = list(graph.edges)
    alive = [True] * len(factors)
    absorbed = list(getattr(graph, "absorbed", []))
    while True:
        n_out = [0] * len(factors)
        n_in = [0] * len(factors)
        for a, b in edges:
            n_out[a] += 1
            n_in[b] += 1
        single = [a for a in range(len(factors)) if alive[a] and n_out[a] == 1]
        ready = [a for a in single if n_in[a] == 0]
        if not ready:
            if single and strict:
                raise UnsupportedGraphError(
                    f"factor {factors[single[0]].scope} has one child and incoming edges; "
                    "absorption order would be ambiguous"
                )
            break
        for a in ready:
            (e,) = [i for i, (p, _) in enumerate(edges) if p == a]
            b = edges[e][1]
            sa, sb = factors[a].scope, factors[b].scope
            mm = min_marginal(factors[a].costs, sa, sb)
            factors[b] = Factor(sb, factors[b].costs + mm)
            absorbed.append(factors[a])
            alive[a] = False
            del edges[e]
    remap = {}
    kept = []
    for i, f in enumerate(factors):
        if alive[i]:
            remap[i] = len(kept)
            kept.append(f)
    out = FactorGraph(graph.nodes, kept, [(remap[a], remap[b]) for a, b in edges])
    out.absorbed = absorbed
    return out


def complete_labeling(graph: FactorGraph, x) -> np.ndarray:
    """Relabel the nodes covered only by absorbed factors.

    Each absorbed table, latest first, picks its best labeling given the
    labels of the nodes still covered at that point.  The result's energy on
    the original model equals the energy of ``x`` on ``graph``.
    """
    x = np.array(x, dtype=int)
    covered = {v for f in graph.factors for v in f.scope}
    for f in reversed(getattr(graph, "absorbed", [])):
        idx = tuple(x[v] if v in covered else slice(None) for v in f.scope)
        free = [v for v in f.scope if v not in covered]
        if not free:
            continue
        sub = f.costs[idx]
        best = np.unravel_index(int(np.argmin(sub)), sub.shape)
        for v, l in zip(free, best):
            x[v] = l
        covered.update(free)
    return x


def _check_labeling(graph: FactorGraph, x) -> np.ndarray:
    x = np.asarray(x, dtype=int)
    cards = np.asarray(graph.cardinalities)
    if x.shape != cards.shape:
        raise ValueError(f"labeling has {x.size} entries for {cards.size} nodes")
    if (x < 0).any() or (x >= cards).any():
        bad = int(np.flatnonzero((x < 0) | (x >= cards))[0])
        raise ValueError(f"label {x[bad]} out of range for node {bad} (cardinality {cards[bad]})")
    return x


def energy(graph: FactorGraph, x, theta: Sequence[np.ndarray] | None = None) -> float:
    """Total cost of the full labeling ``x`` under the original costs (or ``theta``)."""
    x = _check_labeling(graph, x)
    tables = theta if theta is not None else [f.costs for f in graph.factors]
    return float(sum(t[tuple(x[list(f.scope)])] for t, f in zip(tables, graph.factors)))


def zero_messages(graph: FactorGraph) -> list[np.ndarray]:
    return [np.zeros(graph.factors[b].costs.shape) for _, b in graph.edges]


def reparameterize(graph: FactorGraph, messages: Sequence[np.ndarray]) -> list[np.ndarray]:
    """theta_b = costs_b + sum of incoming messages - sum of outgoing messages."""
    theta = [f.costs.copy() for f in graph.factors]
    for e, (a, b) in enumerate(graph.edges):
        m = messages[e]
        theta[b] += m
        theta[a] -= graph.expand(e, m)
    return theta


def lower_bound(theta: Sequence[np.ndarray]) -> float:
    """Sum of table minima.  ``inf`` flags a factor with no finite entry."""
    return float(sum(t.min() for t in theta))


def min_marginal(table: np.ndarray, scope: Sequence[int], sub_scope: Sequence[int]) -> np.ndarray:
    """min over labelings of ``scope`` that restrict to each labeling of ``sub_scope``."""
    sub = set(sub_scope)
    if not sub <= set(scope):
        raise ValueError(f"{tuple(sub_scope)} is not contained in {tuple(scope)}")
    axes = tuple(i for i, v in enumerate(scope) if v not in sub)
    return table.min(axis=axes) if axes else table.copy()


def normalize_messages(messages: Sequence[np.ndarray]) -> list[np.ndarray]:
    """Shift each message so its minimum is zero."""
    return [m - m.min() for m in messages]
