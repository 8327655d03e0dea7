"""J-consistency checks and relation tracking over AMSD runs.

A relation is a boolean mask over a factor's labelings.  Exact argmin sets
are replaced by epsilon-argmin sets throughout.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .graph import FactorGraph, lower_bound, reparameterize, zero_messages
from .schedule import cmp_weights, compute_pass_sets, order_factors, srmp_weights
from .updates import StarSelection, WeightDistribution, amsd

__all__ = [
    "Relation",
    "project",
    "epsilon_argmin",
    "ConsistencyResult",
    "check_j_consistency",
    "Violation",
    "TrackingReport",
    "RelationTracker",
    "track_relations",
    "amsd_call_sequence",
    "initial_theta",
]


@dataclass(frozen=True)
class Relation:
    """Subset of the labelings of ``scope``, stored as a boolean table."""

    scope: tuple[int, ...]
    mask: np.ndarray
    factor: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "scope", tuple(int(v) for v in self.scope))
        mask = np.asarray(self.mask, dtype=bool)
        if mask.ndim != len(self.scope):
            raise ValueError(f"mask has {mask.ndim} axes for a scope of {len(self.scope)} nodes")
        object.__setattr__(self, "mask", mask)

    @property
    def empty(self) -> bool:
        return not self.mask.any()

    def labelings(self) -> list[tuple[int, ...]]:
        return [tuple(int(i) for i in x) for x in np.argwhere(self.mask)]

    def __and__(self, other: "Relation") -> "Relation":
        if other.scope != self.scope:
            raise ValueError(f"cannot intersect relations on {self.scope} and {other.scope}")
        return Relation(self.scope, self.mask & other.mask, self.factor)

    def __le__(self, other: "Relation") -> bool:
        return bool(not (self.mask & ~other.mask).any())

    def __eq__(self, other) -> bool:
        if not isinstance(other, Relation):
            return NotImplemented
        return self.scope == other.scope and np.array_equal(self.mask, other.mask)

    __hash__ = None


def project(rel: Relation, target_scope: Sequence[int], cardinalities: Sequence[int] | None = None) -> Relation:
    """Labelings of ``target_scope`` that agree with some member of ``rel``.

    Nodes of ``target_scope`` outside ``rel.scope`` are unconstrained, so
    their sizes must come from ``cardinalities`` (indexed by node).
    """
    target = tuple(int(v) for v in target_scope)
    scope = rel.scope
    shared = [v for v in scope if v in target]
    drop = tuple(i for i, v in enumerate(scope) if v not in target)
    m = rel.mask.any(axis=drop) if drop else rel.mask
    # m now has one axis per shared node, in scope order (= target order)
    shape = []
    for v in target:
        if v in shared:
            shape.append(rel.mask.shape[scope.index(v)])
        else:
            if cardinalities is None:
                raise ValueError(f"node {v} is not in {scope}; pass cardinalities to project onto it")
            shape.append(int(cardinalities[v]))
    view = [rel.mask.shape[scope.index(v)] if v in shared else 1 for v in target]
    out = np.broadcast_to(m.reshape(view), shape).copy()
    return Relation(target, out)


def epsilon_argmin(theta: np.ndarray, eps: float, scope: Sequence[int] | None = None,
                   factor: int | None = None) -> Relation:
    """Entries within ``eps`` of the table minimum (empty if every entry is +inf)."""
    theta = np.asarray(theta, dtype=float)
    scope = tuple(range(theta.ndim)) if scope is None else tuple(scope)
    low = theta.min() if theta.size else np.inf
    if not np.isfinite(low):
        mask = np.zeros(theta.shape, dtype=bool)
    else:
        mask = theta <= low + eps
    return Relation(scope, mask, factor)


@dataclass
class ConsistencyResult:
    consistent: bool
    relations: list[Relation]
    empty_factor: int | None = None

    def __bool__(self):
        return self.consistent


def check_j_consistency(graph: FactorGraph, theta, eps: float = 1e-6,
                        edge_order: Sequence[int] | None = None) -> ConsistencyResult:
    """Arc-consistency closure of the epsilon-argmin relations over the edges.

    Relations start at the epsilon-argmin sets and are cut down edge by edge
    until nothing changes.  The result is consistent iff no relation ends up
    empty; the surviving relations are then the witness.
    """
    cards = graph.cardinalities
    rel = [epsilon_argmin(theta[f], eps, graph.scope(f), f) for f in range(graph.n_factors)]
    for r in rel:
        if r.empty:
            return ConsistencyResult(False, rel, r.factor)
    edges = list(range(graph.n_edges)) if edge_order is None else [int(e) for e in edge_order]
    changed = True
    while changed:
        changed = False
        for e in edges:
            a, b = graph.edges[e]
            new_b = rel[b].mask & project(rel[a], graph.scope(b)).mask
            new_a = rel[a].mask & project(Relation(graph.scope(b), new_b), graph.scope(a), cards).mask
            for f, new in ((b, new_b), (a, new_a)):
                if not np.array_equal(new, rel[f].mask):
                    rel[f] = Relation(graph.scope(f), new, f)
                    changed = True
                    if not new.any():
                        return ConsistencyResult(False, rel, f)
    return ConsistencyResult(True, rel)


@dataclass
class Violation:
    update: int
    invariant: str
    factor: int
    edge: int | None = None
    detail: str = ""

    def as_dict(self):
        return {"update": self.update, "invariant": self.invariant, "factor": self.factor,
                "edge": self.edge, "detail": self.detail}


@dataclass
class TrackingReport:
    """Outcome of :func:`track_relations`.

    ``violations`` lists invariant failures (letters ``a``..``e`` and
    ``shrink``); ``illegal`` lists schedule failures (``R1``, ``R2``).
    ``certified`` says whether the final relations are non-empty and satisfy
    ``R_beta = pi_beta(R_alpha)`` on every edge.
    """

    updates: int = 0
    reinitializations: int = 0
    violations: list[Violation] = field(default_factory=list)
    illegal: list[Violation] = field(default_factory=list)
    bounds: list[float] = field(default_factory=list)
    last_change: int = -1
    certified: bool = False
    relations: list[Relation] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations and not self.illegal

    def to_json(self) -> str:
        return json.dumps({
            "updates": self.updates,
            "reinitializations": self.reinitializations,
            "last_change": self.last_change,
            "certified": self.certified,
            "violations": [v.as_dict() for v in self.violations],
            "illegal": [v.as_dict() for v in self.illegal],
        }, indent=2)


class RelationTracker:
    """Relations R_alpha, R_alphabeta and locks Gamma maintained along AMSD calls.

    Each :meth:`step` runs one full-star AMSD on the tracker's own tables,
    updates the relations, and records any invariant or schedule failure.
    If the bound rises by more than ``tol`` the relations are reset to the
    argmin sets of the current tables, since the invariants only describe
    runs along which the bound stays put.
    """

    def __init__(self, graph: FactorGraph, theta, eps: float = 1e-6, tol: float = 1e-9):
        self.graph = graph
        self.theta = [np.array(t, dtype=float) for t in theta]
        self.eps = eps
        self.tol = tol
        self.report = TrackingReport()
        self._reset()

    def _argmin(self, f):
        return epsilon_argmin(self.theta[f], self.eps, self.graph.scope(f), f).mask

    def _reset(self):
        g = self.graph
        self.rel = [self._argmin(f) for f in range(g.n_factors)]
        self.rel_edge = [np.ones(g.costs(b).shape, dtype=bool) for _, b in g.edges]
        self.lock: list[int | None] = [None] * g.n_factors
        # the equality half of (d) needs the child to have been updated once
        self.fresh_child = [False] * g.n_factors
        self.phi = lower_bound(self.theta)

    def _up(self, e, mask_child):
        """pi_alpha of a child relation on edge ``e``."""
        g = self.graph
        a, b = g.edges[e]
        return project(Relation(g.scope(b), mask_child), g.scope(a), g.cardinalities).mask

    def _flag(self, bucket, invariant, factor, edge=None, detail=""):
        bucket.append(Violation(self.report.updates, invariant, factor, edge, detail))

    def _check_legal(self, beta, w):
        g = self.graph
        if g.out_edges[beta] and w.residual <= 0:
            self._flag(self.report.illegal, "R1", beta, detail="omega_beta = 0 on a factor with children")
        if self.lock[beta] is not None:
            self._flag(self.report.illegal, "R2", beta, self.lock[beta], "factor is locked")
        for e in g.in_edges[beta]:
            a = g.edges[e][0]
            if self.lock[a] not in (None, e):
                self._flag(self.report.illegal, "R2", a, self.lock[a], f"parent locked on another edge than {e}")

    def step(self, beta: int, w: WeightDistribution):
        g = self.graph
        star = StarSelection(beta, g.in_edges[beta])
        self._check_legal(beta, w)
        old_rel = [r.copy() for r in self.rel]
        old_edge = [r.copy() for r in self.rel_edge]
        _, theta_hat = amsd(g, self.theta, star, w)
        self.report.updates += 1
        phi = lower_bound(self.theta)
        self.report.bounds.append(phi)
        if phi > self.phi + self.tol * (1 + abs(self.phi)):
            self.report.reinitializations += 1
            self._reset()
            self.report.last_change = self.report.updates
            return
        self.phi = max(self.phi, phi)

        hat = epsilon_argmin(theta_hat, self.eps, g.scope(beta), beta).mask
        self.rel[beta] = hat
        for e, wk in zip(g.in_edges[beta], w.edge_weights):
            a = g.edges[e][0]
            self.rel_edge[e] = hat.copy()
            if wk > 0:
                self.rel[a] = self._argmin(a)
                self.lock[a] = None
            else:
                self.rel[a] = self.rel[a] & self._up(e, hat)
                self.lock[a] = e
        self.fresh_child[beta] = True

        for f in range(g.n_factors):
            if (self.rel[f] & ~old_rel[f]).any():
                self._flag(self.report.violations, "shrink", f, detail="factor relation grew")
        for e in range(g.n_edges):
            if (self.rel_edge[e] & ~old_edge[e]).any():
                self._flag(self.report.violations, "shrink", g.edges[e][1], e, "edge relation grew")
        changed = any(not np.array_equal(x, y) for x, y in zip(self.rel, old_rel)) or \
            any(not np.array_equal(x, y) for x, y in zip(self.rel_edge, old_edge))
        if changed:
            self.report.last_change = self.report.updates
        self._check_invariants()

    def _check_invariants(self):
        g = self.graph
        bad = self.report.violations
        for f in range(g.n_factors):
            am = self._argmin(f)
            if g.out_edges[f]:
                if self.lock[f] is None and not np.array_equal(self.rel[f], am):
                    self._flag(bad, "a", f)
                elif self.lock[f] is not None:
                    e = self.lock[f]
                    if not np.array_equal(self.rel[f], am & self._up(e, self.rel_edge[e])):
                        self._flag(bad, "c", f, e)
            else:
                zero = np.all(np.abs(self.theta[f]) <= self.eps)
                if not (np.array_equal(self.rel[f], am) or zero):
                    self._flag(bad, "b", f)
        for e, (a, b) in enumerate(g.edges):
            if (self.rel[b] & ~self.rel_edge[e]).any():
                self._flag(bad, "d", b, e, "R_beta not inside R_alphabeta")
            elif not g.out_edges[b] and self.fresh_child[b] and not np.array_equal(self.rel[b], self.rel_edge[e]):
                self._flag(bad, "d", b, e, "R_beta differs from R_alphabeta on a leaf")
            if (self.rel[a] & ~self._up(e, self.rel_edge[e])).any():
                self._flag(bad, "e", a, e)

    def certify(self) -> bool:
        """Non-empty relations with R_beta = pi_beta(R_alpha) on every edge."""
        g = self.graph
        if any(not r.any() for r in self.rel):
            return False
        for a, b in g.edges:
            down = project(Relation(g.scope(a), self.rel[a]), g.scope(b)).mask
            if not np.array_equal(down, self.rel[b]):
                return False
        return True

    def relations(self) -> list[Relation]:
        return [Relation(self.graph.scope(f), r, f) for f, r in enumerate(self.rel)]


def track_relations(graph: FactorGraph, theta, calls: Iterable[tuple[int, WeightDistribution]],
                    eps: float = 1e-6, tol: float = 1e-9) -> TrackingReport:
    """Replay ``calls`` (pairs of factor and weights over its incoming edges) with tracking.

    Debug instrumentation: every step copies all relations.
    """
    tracker = RelationTracker(graph, theta, eps, tol)
    for beta, w in calls:
        tracker.step(beta, w)
    report = tracker.report
    report.certified = tracker.certify()
    report.relations = tracker.relations()
    return report


def amsd_call_sequence(graph: FactorGraph, algorithm: str = "srmp", iterations: int = 1,
                       node_order=None, skip_first_pass: bool = False):
    """AMSD calls made by SRMP or CMP, as full-star calls with zero weights off the pass set.

    An SRMP iteration is a forward then a backward pass; ``skip_first_pass``
    drops the opening forward pass, where SRMP does not yet satisfy the
    locking rules.
    """
    order = order_factors(graph, node_order)
    if algorithm == "cmp":
        w = cmp_weights(graph, order)
        for _ in range(iterations):
            for b in order:
                yield b, w[b]
        return
    if algorithm != "srmp":
        raise ValueError(f"relation tracking covers AMSD-only runs (srmp, cmp), not {algorithm!r}")
    sched = compute_pass_sets(graph, order)
    weights = {True: srmp_weights(graph, sched, "forward"), False: srmp_weights(graph, sched, "backward")}
    first = True
    for _ in range(iterations):
        for forward in (True, False):
            if first and skip_first_pass:
                first = False
                continue
            first = False
            for b in (order if forward else order[::-1]):
                yield b, weights[forward][b]


def initial_theta(graph: FactorGraph) -> list[np.ndarray]:
    return reparameterize(graph, zero_messages(graph))
