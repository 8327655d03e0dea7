"""Sequential reweighted message passing for MAP inference in discrete models.

The modules are layered: :mod:`srmp.graph` holds energies and the
relaxation graph, :mod:`srmp.updates` the AMSD/AMPLP block updates,
:mod:`srmp.schedule` orders and weights, :mod:`srmp.solvers` the full
algorithms, :mod:`srmp.consistency` the J-consistency diagnostics and
:mod:`srmp.oracle` brute-force references.
"""
from .consistency import (
    Relation,
    check_j_consistency,
    epsilon_argmin,
    project,
    track_relations,
)
from .graph import (
    Factor,
    FactorGraph,
    NodeSet,
    UnsupportedGraphError,
    absorb_single_child_factors,
    build_graph,
    close_under_intersections,
    energy,
    lower_bound,
    min_marginal,
    reparameterize,
    zero_messages,
)
from .oracle import brute_force_map, brute_force_min_marginal, verify_bound_certificate
from .schedule import cmp_weights, compute_pass_sets, order_factors, srmp_weights
from .solvers import (
    ALGORITHMS,
    RunTrace,
    SolverConfig,
    extract_primal,
    run_cmp,
    run_mplp,
    run_srmp,
    run_srmp_alt_pairwise,
    solve,
)
from .uai import UAIParseError, parse_uai, write_uai
from .updates import StarSelection, WeightDistribution, amplp, amsd

__version__ = "0.1.0"
