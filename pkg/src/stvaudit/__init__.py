"""Graph-based risk-limiting audits for Meek STV elections."""

from .asn import AsnQuery, asn_formula, empirical_asn, greedy_lam_search
from .audit import (
    AuditConfig,
    AuditResult,
    add_ghosts,
    audit_success_rate,
    draw_sample,
    noise_profile,
    run_rla,
    verify_design,
)
from .ballots import (
    Profile,
    Ranking,
    TallyTable,
    fpv,
    first_restrict,
    parse_blt,
    parse_ranking_csv,
    project_ranking,
    tally_profile,
    write_blt,
)
from .graph import (
    AuditGraph,
    ElectionState,
    boundary,
    build_audit_graph,
    coherence_check,
    dump_graph_json,
    export_dot,
    universal_neighbors,
)
from .stats import (
    Assorter,
    MarginEstimate,
    estimate_margin,
    hypergeom_cdf,
    hypergeom_pmf,
    k_upper,
    margin_model,
    normal_quantile,
)
from .tabulation import (
    Classification,
    KeepFactorSolution,
    MeekParams,
    RoundRecord,
    degenerate_witness,
    droop_quota,
    meek_calibrate,
    run_meek,
    run_wigm,
    solve_instant_keep,
)

__version__ = "0.1.0"
