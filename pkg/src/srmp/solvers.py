"""Message passing solvers: SRMP, CMP, MPLP and the pairwise SRMP variant.

All solvers start from zero messages, record the lower bound after every
pass, and extract labelings with restricted messages every
``primal_period`` iterations.  An SRMP iteration is a forward plus a
backward pass; CMP and MPLP iterations are a single forward pass.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .graph import Factor, FactorGraph, energy, lower_bound, reparameterize
from .schedule import (
    PassSchedule,
    cmp_weights,
    compute_pass_sets,
    in_plus_weights,
    order_factors,
    srmp_weights,
)
from .updates import MPLPCache, WeightDistribution, amplp_message_form

__all__ = [
    "ALGORITHMS",
    "SolverConfig",
    "RunTrace",
    "run_srmp",
    "run_cmp",
    "run_mplp",
    "run_srmp_alt_pairwise",
    "extract_primal",
    "solve",
    "finite_surrogate",
]

ALGORITHMS = ("srmp", "cmp", "mplp", "srmp-alt")


@dataclass
class SolverConfig:
    """Run settings shared by all solvers.

    ``eps`` is relative: a run stops once an iteration raises the bound by
    less than ``eps * (1 + |bound|)``; ``eps=0`` disables that test.
    ``gap_tol`` stops a run once the best energy is certified optimal
    (``None`` turns that off, for fixed-length runs).  ``max_updates`` caps the number of
    min-marginal computations, which is how runs are put on equal budgets.
    """

    algorithm: str = "srmp"
    max_iterations: int = 100
    eps: float = 1e-7
    gap_tol: float | None = 1e-9
    primal_period: int = 3
    normalize: bool = True
    weighting: str = "srmp"
    full_collection: bool = False
    max_updates: int | None = None
    node_order: Sequence[int] | None = None
    cache_refresh: int = 50

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}; choose from {', '.join(ALGORITHMS)}")
        if self.primal_period < 1:
            raise ValueError("primal_period must be >= 1")
        if self.eps < 0 or (self.gap_tol is not None and self.gap_tol < 0):
            raise ValueError("tolerances must be >= 0")
        if self.max_iterations < 0:
            raise ValueError("max_iterations must be >= 0")
        if self.weighting not in ("srmp", "in_plus"):
            raise ValueError(f"unknown weighting {self.weighting!r}")


@dataclass
class RunTrace:
    """Per-iteration record of a solver run.

    Index 0 of the per-iteration lists is the initial state (zero messages).
    ``pass_bounds`` has the bound after every pass, starting with the
    initial one.
    """

    algorithm: str
    lower_bounds: list[float] = field(default_factory=list)
    best_energies: list[float] = field(default_factory=list)
    seconds: list[float] = field(default_factory=list)
    updates: list[int] = field(default_factory=list)
    pass_bounds: list[float] = field(default_factory=list)
    best_labeling: np.ndarray | None = None
    theta: list[np.ndarray] | None = None
    messages: list[np.ndarray] | None = None
    status: str = "running"

    @property
    def lower_bound(self) -> float:
        return self.lower_bounds[-1]

    @property
    def best_energy(self) -> float:
        return self.best_energies[-1]

    @property
    def gap(self) -> float:
        return self.best_energy - self.lower_bound

    @property
    def iterations(self) -> int:
        return len(self.lower_bounds) - 1


def finite_surrogate(graph: FactorGraph) -> FactorGraph:
    """Copy of ``graph`` with every ``+inf`` cost replaced by a finite penalty.

    The penalty exceeds the spread of all finite costs, so any labeling that
    breaks a hard constraint costs more than every feasible one.  Costs only
    go down, so bounds computed on the copy stay valid for the original.
    """
    tables = [f.costs for f in graph.factors]
    if all(np.isfinite(t).all() for t in tables):
        return graph
    spread = 0.0
    for t in tables:
        fin = t[np.isfinite(t)]
        if fin.size:
            spread += float(fin.max() - fin.min())
    factors = []
    for f in graph.factors:
        t = f.costs.copy()
        fin = t[np.isfinite(t)]
        top = float(fin.max()) if fin.size else 0.0
        t[~np.isfinite(t)] = top + spread + 1.0
        factors.append(Factor(f.scope, t))
    return FactorGraph(graph.nodes, factors, graph.edges)


class _MessageState:
    """Messages over the (finite) working graph plus helpers on them."""

    def __init__(self, graph: FactorGraph):
        self.graph = graph
        self.messages = [np.zeros(graph.costs(b).shape) for _, b in graph.edges]
        self.updates = 0

    def theta_of(self, f: int) -> np.ndarray:
        g = self.graph
        t = g.costs(f).copy()
        for e in g.in_edges[f]:
            t += self.messages[e]
        for e in g.out_edges[f]:
            t -= g.expand(e, self.messages[e])
        return t

    def parent_view(self, e: int) -> np.ndarray:
        """Parent table with every outgoing message except ``e`` subtracted."""
        a = self.graph.edges[e][0]
        return self.theta_of(a) + self.graph.expand(e, self.messages[e])

    def collect(self, e: int):
        self.messages[e] = self.graph.marginalize(e, self.parent_view(e))
        self.updates += 1

    def theta(self) -> list[np.ndarray]:
        return reparameterize(self.graph, self.messages)

    def normalize(self):
        for e, m in enumerate(self.messages):
            self.messages[e] = m - m.min()


def _consistent_mask(graph: FactorGraph, f: int, labels: np.ndarray) -> np.ndarray | None:
    scope = graph.scope(f)
    cards = graph.cardinalities
    mask = None
    for i, v in enumerate(scope):
        if labels[v] < 0:
            continue
        shape = [1] * len(scope)
        shape[i] = cards[v]
        axis = (np.arange(cards[v]) == labels[v]).reshape(shape)
        mask = axis if mask is None else mask & axis
    return mask


class _PrimalBuilder:
    """Greedy labeling built with restricted messages during a pass."""

    def __init__(self, state):
        self.state = state
        self.graph = state.graph
        self.labels = -np.ones(self.graph.nodes.count, dtype=int)

    def _assign(self, f: int, table: np.ndarray):
        mask = _consistent_mask(self.graph, f, self.labels)
        t = np.where(mask, table, np.inf) if mask is not None else table
        if np.isinf(t).all():
            t = np.where(mask, 0.0, np.inf) if mask is not None else np.zeros_like(t)
        x = np.unravel_index(int(np.argmin(t)), t.shape)
        for v, l in zip(self.graph.scope(f), x):
            self.labels[v] = l

    def visit(self, b: int):
        g = self.graph
        if (self.labels[list(g.scope(b))] >= 0).all():
            return
        t = g.costs(b).copy()
        for e in g.in_edges[b]:
            view = self.state.parent_view(e)
            mask = _consistent_mask(g, g.edges[e][0], self.labels)
            if mask is not None:
                view = np.where(mask, view, np.inf)
            t = t + g.marginalize(e, view)
        for e in g.out_edges[b]:
            t = t - g.expand(e, self.state.messages[e])
        self._assign(b, t)

    def finish(self, node_order=None) -> np.ndarray:
        if (self.labels < 0).any():
            theta = self.state.theta()
            for f in order_factors(self.graph, node_order, which="all"):
                if (self.labels[list(self.graph.scope(f))] < 0).any():
                    self._assign(f, theta[f])
        self.labels[self.labels < 0] = 0
        return self.labels.copy()


def extract_primal(graph: FactorGraph, messages, order=None, node_order=None) -> np.ndarray:
    """Labeling from a sweep of restricted messages over ``order`` (no updates)."""
    state = _MessageState(graph)
    state.messages = list(messages)
    order = order if order is not None else order_factors(graph, node_order)
    builder = _PrimalBuilder(state)
    for b in order:
        builder.visit(b)
    return builder.finish(node_order)


class _Run:
    """Bookkeeping shared by the solver loops."""

    def __init__(self, graph: FactorGraph, config: SolverConfig, state, on_pass):
        self.original = graph
        self.config = config
        self.state = state
        self.on_pass = on_pass
        self.trace = RunTrace(config.algorithm)
        self.best_x = None
        self.best_e = math.inf
        self.t0 = time.perf_counter()
        self.n_pass = 0
        phi = lower_bound(state.theta())
        self.trace.pass_bounds.append(phi)
        self._record(phi)

    def _record(self, phi):
        tr = self.trace
        tr.lower_bounds.append(phi)
        tr.best_energies.append(self.best_e)
        tr.seconds.append(time.perf_counter() - self.t0)
        tr.updates.append(self.state.updates)

    def offer(self, x):
        e = energy(self.original, x)
        if e < self.best_e:
            self.best_e, self.best_x = e, np.asarray(x).copy()

    def end_pass(self, forward: bool):
        if self.config.normalize:
            self.state.normalize()
        self.trace.pass_bounds.append(lower_bound(self.state.theta()))
        if self.on_pass is not None:
            self.on_pass(self.n_pass, self.state)
        self.n_pass += 1

    def end_iteration(self, require_monotone_from: int = 1) -> bool:
        """Record the iteration; True means stop."""
        cfg = self.config
        tr = self.trace
        phi = tr.pass_bounds[-1]
        prev = tr.lower_bounds[-1]
        self._record(phi)
        k = tr.iterations
        if cfg.gap_tol is not None and self.best_e - phi <= cfg.gap_tol * (1 + abs(phi)):
            tr.status = "optimal"
        elif cfg.max_updates is not None and self.state.updates >= cfg.max_updates:
            tr.status = "budget"
        elif k >= cfg.max_iterations:
            tr.status = "max_iterations"
        elif cfg.eps > 0 and k > require_monotone_from and phi - prev < cfg.eps * (1 + abs(phi)):
            tr.status = "converged"
        else:
            return False
        return True

    def finish(self, extracted_last: bool, extractor: Callable[[], np.ndarray]):
        if not extracted_last:
            self.offer(extractor())
            self.trace.best_energies[-1] = self.best_e
        tr = self.trace
        tr.best_labeling = self.best_x
        tr.theta = self.state.theta()
        tr.messages = [m.copy() for m in self.state.messages]
        if tr.status == "running":
            tr.status = "max_iterations"
        return tr


def _should_stop_early(run: _Run) -> bool:
    cfg = run.config
    if cfg.max_iterations == 0:
        run.trace.status = "max_iterations"
        return True
    return False


def run_srmp(graph: FactorGraph, config: SolverConfig | None = None, on_pass: Callable | None = None) -> RunTrace:
    """Sequential reweighted message passing over a message representation.

    Each factor update first refreshes the messages whose parents changed
    since the factor was last visited, then sends a weighted share of the
    factor's table back to the parents touched later in the pass.
    """
    config = config or SolverConfig(algorithm="srmp")
    work = finite_surrogate(graph)
    order = order_factors(work, config.node_order)
    sched = compute_pass_sets(work, order)
    weigh = srmp_weights if config.weighting == "srmp" else in_plus_weights
    weights = {True: weigh(work, sched, "forward"), False: weigh(work, sched, "backward")}
    state = _MessageState(work)
    run = _Run(graph, config, state, on_pass)
    extracted = False
    if not _should_stop_early(run):
        it = 0
        while True:
            extracting = it % config.primal_period == 0
            for forward in (True, False):
                builder = _PrimalBuilder(state) if extracting else None
                # the first pass always skips; the skip rule only holds from pass 2
                _srmp_pass(state, sched, weights[forward], forward, builder,
                           full=config.full_collection and run.n_pass > 0)
                if builder is not None:
                    run.offer(builder.finish(config.node_order))
                run.end_pass(forward)
            extracted = extracting
            it += 1
            if run.end_iteration(require_monotone_from=1):
                break
    return run.finish(extracted, lambda: extract_primal(work, state.messages, order, config.node_order))


def _srmp_pass(state: _MessageState, sched: PassSchedule, weights, forward: bool, builder, full: bool):
    g = state.graph
    order = sched.order if forward else sched.order[::-1]
    for b in order:
        if builder is not None:
            builder.visit(b)
        collect = g.in_edges[b] if full else sched.in_set(b, not forward)
        for e in collect:
            state.collect(e)
        t = state.theta_of(b)
        for e, w in zip(g.in_edges[b], weights[b].edge_weights):
            if w:
                state.messages[e] = state.messages[e] - w * t


def run_cmp(graph: FactorGraph, config: SolverConfig | None = None, on_pass: Callable | None = None) -> RunTrace:
    """Forward passes of full AMSD updates with uniform weights 1/(1+|IN|)."""
    config = config or SolverConfig(algorithm="cmp")
    work = finite_surrogate(graph)
    order = order_factors(work, config.node_order)
    weights = cmp_weights(work, order)
    state = _MessageState(work)
    run = _Run(graph, config, state, on_pass)
    extracted = False
    if not _should_stop_early(run):
        it = 0
        while True:
            extracting = it % config.primal_period == 0
            builder = _PrimalBuilder(state) if extracting else None
            for b in order:
                if builder is not None:
                    builder.visit(b)
                for e in work.in_edges[b]:
                    state.collect(e)
                t = state.theta_of(b)
                for e, w in zip(work.in_edges[b], weights[b].edge_weights):
                    state.messages[e] = state.messages[e] - w * t
            if builder is not None:
                run.offer(builder.finish(config.node_order))
            run.end_pass(True)
            extracted = extracting
            it += 1
            if run.end_iteration(require_monotone_from=0):
                break
    return run.finish(extracted, lambda: extract_primal(work, state.messages, order, config.node_order))


class _MPLPState(_MessageState):
    def __init__(self, graph):
        super().__init__(graph)
        self.cache = MPLPCache(graph, self.messages)

    def normalize(self):
        super().normalize()
        self.cache.recompute(self.messages)


def run_mplp(graph: FactorGraph, config: SolverConfig | None = None, on_pass: Callable | None = None) -> RunTrace:
    """Forward passes of MPLP updates (uniform over children, nothing kept at the parent)."""
    config = config or SolverConfig(algorithm="mplp")
    work = finite_surrogate(graph)
    parents = order_factors(work, config.node_order, which="parents")
    sweep = order_factors(work, config.node_order)
    rho = {a: WeightDistribution.uniform(len(work.out_edges[a]), include_center=False) for a in parents}
    state = _MPLPState(work)
    run = _Run(graph, config, state, on_pass)
    extracted = False
    if not _should_stop_early(run):
        it = 0
        while True:
            if it and it % config.cache_refresh == 0:
                state.cache.recompute(state.messages)
            for a in parents:
                amplp_message_form(work, state.messages, state.cache, a, rho[a])
                state.updates += len(work.out_edges[a])
            extracting = it % config.primal_period == 0
            if extracting:
                run.offer(extract_primal(work, state.messages, sweep, config.node_order))
            run.end_pass(True)
            extracted = extracting
            it += 1
            if run.end_iteration(require_monotone_from=0):
                break
    return run.finish(extracted, lambda: extract_primal(work, state.messages, sweep, config.node_order))


class _AltState:
    """Pairwise SRMP with messages read through per-node weights.

    The current tables are ``theta_pair = hat_pair + sum w_e * hat_node`` and
    ``theta_node = w_node * hat_node`` where ``hat = costs[m_hat]`` and the
    weights are the ones used the last time each node was updated.
    """

    def __init__(self, graph: FactorGraph):
        self.graph = graph
        self.messages = [np.zeros(graph.costs(b).shape) for _, b in graph.edges]
        self.edge_w = [0.0] * graph.n_edges
        self.node_w = {b: 1.0 for b in range(graph.n_factors) if graph.in_edges[b]}
        self.hat = {b: graph.costs(b).copy() for b in self.node_w}
        self.updates = 0

    def refresh_hat(self, b):
        t = self.graph.costs(b).copy()
        for e in self.graph.in_edges[b]:
            t += self.messages[e]
        self.hat[b] = t

    def collect(self, e):
        g = self.graph
        a = g.edges[e][0]
        t = g.costs(a).copy()
        for o in g.other_children(e):
            c = g.edges[o][1]
            t += g.expand(o, self.edge_w[o] * self.hat[c] - self.messages[o])
        self.messages[e] = g.marginalize(e, t)
        self.updates += 1

    def theta(self) -> list[np.ndarray]:
        g = self.graph
        hat = reparameterize(g, self.messages)
        out = [t.copy() for t in hat]
        for e, (a, b) in enumerate(g.edges):
            if self.edge_w[e]:
                out[a] += g.expand(e, self.edge_w[e] * hat[b])
        for b, w in self.node_w.items():
            out[b] = w * hat[b]
        return out

    def effective_messages(self) -> list[np.ndarray]:
        """Plain messages defining the same tables (m_hat - w * hat_child)."""
        return [m - w * self.hat[self.graph.edges[e][1]]
                for e, (m, w) in enumerate(zip(self.messages, self.edge_w))]

    def normalize(self):
        for e, m in enumerate(self.messages):
            self.messages[e] = m - m.min()
        for b in self.hat:
            self.refresh_hat(b)


class _AltView:
    """Read-only adapter giving the primal builder plain messages."""

    def __init__(self, alt: _AltState):
        self.graph = alt.graph
        self.messages = alt.effective_messages()
        self._inner = _MessageState(alt.graph)
        self._inner.messages = self.messages

    def parent_view(self, e):
        return self._inner.parent_view(e)

    def theta(self):
        return self._inner.theta()


def run_srmp_alt_pairwise(graph: FactorGraph, config: SolverConfig | None = None,
                          on_pass: Callable | None = None) -> RunTrace:
    """SRMP for pairwise models with TRW-S style message bookkeeping.

    Produces the same bound and tables as :func:`run_srmp` after every pass.
    """
    config = config or SolverConfig(algorithm="srmp-alt")
    if not graph.is_pairwise():
        raise ValueError("run_srmp_alt_pairwise needs a pairwise model with pair -> singleton edges")
    work = finite_surrogate(graph)
    order = order_factors(work, config.node_order)
    sched = compute_pass_sets(work, order)
    weights = {True: srmp_weights(work, sched, "forward"), False: srmp_weights(work, sched, "backward")}
    state = _AltState(work)
    run = _Run(graph, config, state, on_pass)
    extracted = False
    if not _should_stop_early(run):
        it = 0
        while True:
            extracting = it % config.primal_period == 0
            for forward in (True, False):
                labels = None
                seq = order if forward else order[::-1]
                for b in seq:
                    if extracting:
                        if labels is None:
                            labels = _PrimalBuilder(_AltView(state))
                        else:
                            labels.state = _AltView(state)
                        labels.visit(b)
                    for e in sched.in_set(b, not forward):
                        state.collect(e)
                    state.refresh_hat(b)
                    w = weights[forward][b]
                    for e, wk in zip(work.in_edges[b], w.edge_weights):
                        state.edge_w[e] = wk
                    state.node_w[b] = w.residual
                if labels is not None:
                    run.offer(labels.finish(config.node_order))
                run.end_pass(forward)
            extracted = extracting
            it += 1
            if run.end_iteration(require_monotone_from=1):
                break
    return run.finish(extracted, lambda: extract_primal(work, state.effective_messages(), order, config.node_order))


_RUNNERS = {
    "srmp": run_srmp,
    "cmp": run_cmp,
    "mplp": run_mplp,
    "srmp-alt": run_srmp_alt_pairwise,
}


def solve(graph: FactorGraph, algorithm: str = "srmp", on_pass=None, **options) -> RunTrace:
    """Run ``algorithm`` on ``graph``; keyword options go to :class:`SolverConfig`."""
    config = SolverConfig(algorithm=algorithm, **options)
    return _RUNNERS[algorithm](graph, config, on_pass)
