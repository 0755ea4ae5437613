"""Average Sampling Number estimation: the closed-form asymptotic and the
empirical 90%-success search, plus the greedy auditable-margin selection."""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from .audit import AuditConfig, AuditContext, noise_profile, run_rla
from .ballots import Profile
from .graph import AuditGraph, PartialGraphError, build_audit_graph, coherence_check
from .stats import normal_quantile
from .tabulation import MeekParams

DEFAULT_GRID = (0.005, 0.01, 0.025, 0.05, 0.1, 0.2, 0.3, 0.5)


@dataclass(frozen=True)
class AsnQuery:
    margin: float
    parameter_count: int
    alpha0: float = 0.045
    alpha_k: float = 0.005
    population: int = 0

    def __post_init__(self):
        if self.margin <= 0:
            raise ValueError("margin must be > 0")
        if self.parameter_count < 1:
            raise ValueError("parameter_count must be >= 1")


@dataclass
class AsnEstimate:
    fraction: float
    absolute: int
    auditable: bool
    small_sample_regime: bool


def asn_formula(query: AsnQuery) -> AsnEstimate:
    """Closed-form fractional sample size z_{1-a0} sqrt(d ln(1/aK)) / margin.

    Valid in the sparse regime n << N; the flag marks where that assumption
    is doubtful. Fractions above 1 mean the margin is not auditable by the
    asymptotic.
    """
    z = normal_quantile(1.0 - query.alpha0)
    fraction = z * math.sqrt(query.parameter_count * math.log(1.0 / query.alpha_k)) / query.margin
    absolute = math.ceil(query.population * fraction) if query.population else 0
    return AsnEstimate(
        fraction=fraction,
        absolute=absolute,
        auditable=fraction <= 1.0,
        small_sample_regime=fraction <= 0.2,
    )


@dataclass
class AsnSearchResult:
    sample_size: int | None
    success_rate: float
    evaluations: list[tuple[int, float]]

    @property
    def auditable(self) -> bool:
        return self.sample_size is not None


def empirical_asn(
    cvr: Profile,
    graph: AuditGraph,
    config: AuditConfig,
    trials: int = 50,
    success_target: float = 0.9,
    grid=DEFAULT_GRID,
    params: MeekParams | None = None,
    bisect_steps: int = 4,
) -> AsnSearchResult:
    """Smallest sample size certifying at least ``success_target`` of seeded
    trials, on a geometric grid refined by bisection.

    Each trial re-noises the CVR and samples a prefix of one shared
    permutation, so success rates are (weakly) monotone in n across the grid.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if params is None:
        params = MeekParams(seats=graph.seats)
    context = AuditContext(graph, cvr, params)
    n_pop = cvr.num_voters

    trial_ballots = []
    trial_orders = []
    for t in range(trials):
        seed = config.seed + 104729 * t
        trial_ballots.append(noise_profile(cvr, config.noise_rate, seed=seed))
        trial_orders.append(np.random.default_rng(seed + 1).permutation(n_pop))

    def rate_at(n: int) -> float:
        if n < 1:
            return 0.0
        successes = 0
        for bal, order in zip(trial_ballots, trial_orders):
            trial_config = AuditConfig(
                sample_size=n, alpha=config.alpha, alpha0=config.alpha0,
                alpha_k=config.alpha_k, seed=config.seed, lam=config.lam,
                noise_rate=config.noise_rate, ghost_rate=config.ghost_rate,
                variance_strategy=config.variance_strategy,
            )
            result = run_rla(bal, cvr, graph, trial_config, params=params,
                             context=context, indices=np.sort(order[:n]))
            successes += int(result.rejected_global)
        return successes / trials

    evaluations: list[tuple[int, float]] = []
    best = None
    prev_n = 0
    for frac in grid:
        n = max(1, math.ceil(frac * n_pop))
        rate = rate_at(n)
        evaluations.append((n, rate))
        if rate >= success_target:
            best = (n, rate)
            lo = prev_n
            break
        prev_n = n
    else:
        return AsnSearchResult(None, evaluations[-1][1] if evaluations else 0.0, evaluations)

    hi, hi_rate = best
    for _ in range(bisect_steps):
        if hi - lo <= max(1, n_pop // 500):
            break
        mid = (lo + hi) // 2
        rate = rate_at(mid)
        evaluations.append((mid, rate))
        if rate >= success_target:
            hi, hi_rate = mid, rate
        else:
            lo = mid
    return AsnSearchResult(hi, hi_rate, evaluations)


def greedy_lam_search(
    cvr: Profile,
    seats: int,
    params: MeekParams,
    lam_grid,
    vertex_cap: int = 5_000_000,
) -> tuple[float, AuditGraph] | None:
    """Largest grid LAM whose graph builds under the cap and stays coherent.

    Growth in LAM only adds states, so the scan stops at the first failure.
    Returns None when even the smallest grid point fails.
    """
    best = None
    for lam in sorted(lam_grid):
        try:
            graph = build_audit_graph(cvr, seats, params, lam, vertex_cap=vertex_cap)
        except PartialGraphError:
            break
        ok, _, _ = coherence_check(graph)
        if not ok:
            break
        best = (lam, graph)
    return best


ASN_CSV_COLUMNS = ("profile", "N", "lam", "lam_pct", "n", "n_pct", "success_rate", "trials")


def asn_csv_rows(label: str, n_pop: int, lam: float, result: AsnSearchResult,
                 trials: int) -> list[dict]:
    n = result.sample_size if result.sample_size is not None else -1
    return [{
        "profile": label,
        "N": n_pop,
        "lam": lam,
        "lam_pct": lam / n_pop,
        "n": n,
        "n_pct": n / n_pop if n >= 0 else -1,
        "success_rate": result.success_rate,
        "trials": trials,
    }]


def write_asn_csv(rows: list[dict]) -> str:
    out = io.StringIO()
    writer = csv.DictWriter(out, fieldnames=ASN_CSV_COLUMNS)
    writer.writeheader()
    for row in rows:
        writer.writerow(row)
    return out.getvalue()
