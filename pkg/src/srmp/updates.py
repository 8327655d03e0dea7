"""Star-shaped block-coordinate ascent steps on the lower bound.

``amsd`` works on the incoming edges of one factor, ``amplp`` on the
outgoing edges of one factor.  Both mutate a list of reparameterized
tables ``theta`` in place.  ``amplp_message_form`` is the same update
expressed over messages plus cached child tables.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .graph import FactorGraph, lower_bound

__all__ = [
    "WeightDistribution",
    "StarSelection",
    "amsd",
    "amplp",
    "MPLPCache",
    "amplp_message_form",
    "amsd_optimality_check",
    "amplp_optimality_check",
]

WEIGHT_TOL = 1e-12


@dataclass(frozen=True)
class WeightDistribution:
    """Probability distribution over the edges of a star plus its center.

    ``edge_weights[k]`` belongs to the k-th edge of the star; ``residual``
    is the mass left at the center (omega_beta for AMSD, rho_alpha for AMPLP).
    """

    edge_weights: tuple[float, ...]
    residual: float

    def __post_init__(self):
        w = tuple(float(v) for v in self.edge_weights)
        object.__setattr__(self, "edge_weights", w)
        object.__setattr__(self, "residual", float(self.residual))
        if any(v < 0 for v in w) or self.residual < 0:
            raise ValueError(f"weights must be non-negative: {w}, residual {self.residual}")
        total = sum(w) + self.residual
        if abs(total - 1.0) > WEIGHT_TOL:
            raise ValueError(f"weights sum to {total!r}, not 1")

    @classmethod
    def from_edges(cls, edge_weights) -> "WeightDistribution":
        edge_weights = tuple(float(v) for v in edge_weights)
        residual = 1.0 - sum(edge_weights)
        if -WEIGHT_TOL < residual < 0:
            residual = 0.0
        return cls(edge_weights, residual)

    @classmethod
    def uniform(cls, n_edges: int, include_center: bool = True) -> "WeightDistribution":
        k = n_edges + (1 if include_center else 0)
        return cls.from_edges([1.0 / k] * n_edges)


@dataclass(frozen=True)
class StarSelection:
    center: int
    edges: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "edges", tuple(int(e) for e in self.edges))
        if not self.edges:
            raise ValueError("a star needs at least one edge")


def _sub(a, b):
    # inf - inf only happens where both sides are infeasible; keep +inf
    with np.errstate(invalid="ignore"):
        out = a - b
    out[np.isnan(out)] = np.inf
    return out


def _scale(w, v):
    if w == 0.0:
        return np.zeros_like(v)
    return w * v


def _check_star(graph, star, w, incoming):
    edges_ok = graph.in_edges if incoming else graph.out_edges
    for e in star.edges:
        if e not in edges_ok[star.center]:
            side = "incoming to" if incoming else "outgoing from"
            raise ValueError(f"edge {e} is not {side} factor {star.center}")
    if len(w.edge_weights) != len(star.edges):
        raise ValueError(f"{len(w.edge_weights)} weights for {len(star.edges)} edges")


def amsd(graph: FactorGraph, theta: list[np.ndarray], star: StarSelection, w: WeightDistribution):
    """Anisotropic min-sum diffusion at ``star.center`` (in place).

    Collects the parents' min-marginals into the center, then hands back
    ``w.edge_weights[k]`` of the collected table to the k-th parent and keeps
    ``w.residual`` of it.  Returns ``(deltas, theta_hat)`` where ``deltas``
    are the collected min-marginals and ``theta_hat`` the collected table.
    """
    _check_star(graph, star, w, incoming=True)
    beta = star.center
    deltas = []
    for e in star.edges:
        a = graph.edges[e][0]
        d = graph.marginalize(e, theta[a])
        theta[a] = _sub(theta[a], graph.expand(e, d))
        theta[beta] = theta[beta] + d
        deltas.append(d)
    theta_hat = theta[beta].copy()
    for e, wk in zip(star.edges, w.edge_weights):
        if wk == 0.0:
            continue
        a = graph.edges[e][0]
        theta[a] = theta[a] + graph.expand(e, wk * theta_hat)
    theta[beta] = _scale(w.residual, theta_hat)
    return deltas, theta_hat


def amplp(graph: FactorGraph, theta: list[np.ndarray], star: StarSelection, rho: WeightDistribution):
    """Anisotropic MPLP at ``star.center`` (in place).

    Pulls the children into the center, then sends ``rho.edge_weights[k]``
    of each child's min-marginal back out.  Returns ``(deltas, theta_hat)``
    with ``theta_hat`` the center table after the pull.
    """
    _check_star(graph, star, rho, incoming=False)
    alpha = star.center
    for e in star.edges:
        b = graph.edges[e][1]
        theta[alpha] = theta[alpha] + graph.expand(e, theta[b])
        theta[b] = np.zeros_like(theta[b])
    theta_hat = theta[alpha].copy()
    deltas = []
    for e, rk in zip(star.edges, rho.edge_weights):
        b = graph.edges[e][1]
        d = graph.marginalize(e, theta_hat)
        share = _scale(rk, d)
        theta[alpha] = _sub(theta[alpha], graph.expand(e, share))
        theta[b] = share
        deltas.append(d)
    return deltas, theta_hat


class MPLPCache:
    """Stored reparameterized tables for factors that have incoming edges.

    Keeps ``theta[b] = costs_b + incoming - outgoing`` for every such factor so
    an MPLP update does not have to rebuild child tables from messages.
    """

    def __init__(self, graph: FactorGraph, messages: Sequence[np.ndarray]):
        self.graph = graph
        self.tables: dict[int, np.ndarray] = {}
        self.recompute(messages)

    def recompute(self, messages, factors=None):
        g = self.graph
        targets = factors if factors is not None else [b for b in range(g.n_factors) if g.in_edges[b]]
        for b in targets:
            self.tables[b] = self._fresh(messages, b)

    def _fresh(self, messages, b):
        g = self.graph
        t = g.costs(b).copy()
        for e in g.in_edges[b]:
            t += messages[e]
        for e in g.out_edges[b]:
            t -= g.expand(e, messages[e])
        return t

    def drift(self, messages, factors=None) -> float:
        targets = factors if factors is not None else list(self.tables)
        worst = 0.0
        for b in targets:
            diff = np.abs(self.tables[b] - self._fresh(messages, b))
            worst = max(worst, float(np.nanmax(diff)) if diff.size else 0.0)
        return worst


def amplp_message_form(
    graph: FactorGraph,
    messages: list[np.ndarray],
    cache: MPLPCache,
    alpha: int,
    rho: WeightDistribution,
    probe_tol: float | None = None,
):
    """MPLP update of all outgoing edges of ``alpha`` on messages (in place).

    With ``probe_tol`` set, the cached tables of the touched factors are
    compared against the messages first and rebuilt if they drifted further.
    """
    out = graph.out_edges[alpha]
    if len(rho.edge_weights) != len(out):
        raise ValueError(f"{len(rho.edge_weights)} weights for {len(out)} outgoing edges")
    children = [graph.edges[e][1] for e in out]
    if probe_tol is not None:
        touched = children + ([alpha] if alpha in cache.tables else [])
        if cache.drift(messages, touched) > probe_tol:
            cache.recompute(messages, touched)

    held = []
    for e, b in zip(out, children):
        cache.tables[b] -= messages[e]
        held.append(cache.tables[b].copy())

    t = graph.costs(alpha).copy()
    for e in graph.in_edges[alpha]:
        t += messages[e]
    for e, b in zip(out, children):
        t += graph.expand(e, cache.tables[b])

    for e, b, rk, h in zip(out, children, rho.edge_weights, held):
        cache.tables[b] = rk * graph.marginalize(e, t)
        messages[e] = cache.tables[b] - h

    if alpha in cache.tables:
        for e, b in zip(out, children):
            t -= graph.expand(e, cache.tables[b])
        cache.tables[alpha] = t


def _perturbation_improves(graph, theta, star, trials, tol, rng):
    base = lower_bound(theta)
    steps = np.concatenate([np.logspace(-6, 1, 15), -np.logspace(-6, 1, 15)])
    for _ in range(trials):
        direction = [rng.standard_normal(theta[graph.edges[e][1]].shape) for e in star.edges]
        for t in steps:
            trial = [th.copy() for th in theta]
            for e, d in zip(star.edges, direction):
                a, b = graph.edges[e]
                # a message change on (a, b) moves mass from a to b
                trial[b] = trial[b] + t * d
                trial[a] = trial[a] - graph.expand(e, t * d)
            if lower_bound(trial) > base + tol:
                return True
    return False


def amsd_optimality_check(graph, theta_before, theta_after, star: StarSelection, w=None,
                          trials: int = 20, tol: float = 1e-7, rng=None) -> bool:
    """Randomized certificate that ``theta_after`` is optimal over the star's messages.

    Also fails if the update lowered the bound.  ``w`` is accepted for
    symmetry with :func:`amsd` and not needed by the check.
    """
    rng = np.random.default_rng(rng)
    if lower_bound(theta_after) < lower_bound(theta_before) - tol:
        return False
    return not _perturbation_improves(graph, theta_after, star, trials, tol, rng)


def amplp_optimality_check(graph, theta_before, theta_after, star: StarSelection, rho=None,
                           trials: int = 20, tol: float = 1e-7, rng=None) -> bool:
    rng = np.random.default_rng(rng)
    if lower_bound(theta_after) < lower_bound(theta_before) - tol:
        return False
    return not _perturbation_improves(graph, theta_after, star, trials, tol, rng)
