"""End-to-end risk-limiting audits: noise/ghost synthesis, sampling,
per-boundary-edge local-null rejection, and the hypercube design checks.

The global null "the true election path leaves the audit graph" is rejected
exactly when every boundary edge's local null is rejected at level alpha0,
with alpha_k spent on the hypergeometric variance bounds (an intersection
test needs no further splitting across edges).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .ballots import Profile, Ranking, project_ranking
from .graph import LOSER, WINNER, AuditGraph, BoundaryEdge, boundary, coherence_check
from .stats import (
    CANDIDATE,
    QUOTA,
    DegenerateUnderSampleError,
    MarginEstimate,
    MarginModel,
    SingularEstimateError,
    assorter_row,
    estimate_margin,
    k_upper,
    margin_model,
)
from .tabulation import MeekParams


@dataclass(frozen=True)
class AuditConfig:
    """Sample size, risk split, and synthesis knobs for one audit run."""

    sample_size: int
    alpha: float = 0.05
    alpha0: float = 0.045
    alpha_k: float = 0.005
    seed: int = 0
    lam: float = 0.0
    noise_rate: float = 0.0
    ghost_rate: float = 0.0
    variance_strategy: str = "per-margin"  # or "global"

    def __post_init__(self):
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must be in (0, 1)")
        if abs(self.alpha0 + self.alpha_k - self.alpha) > 1e-12:
            raise ValueError("alpha must split as alpha0 + alpha_k")
        if not 0 <= self.noise_rate <= 1:
            raise ValueError("noise rate must be in [0, 1]")
        if self.variance_strategy not in ("per-margin", "per-parameter", "global"):
            raise ValueError(
                "variance_strategy must be 'per-margin', 'per-parameter', or 'global'")


# --- synthetic profiles -------------------------------------------------------


def noise_profile(profile: Profile, rate: float, seed: int) -> Profile:
    """Perturb floor(rate * N) distinct ballots, each by one uniformly chosen
    applicable move: replace, insert, swap, or remove a candidate."""
    if not 0 <= rate <= 1:
        raise ValueError("rate must be in [0, 1]")
    rng = np.random.default_rng(seed)
    n = profile.num_voters
    m = profile.candidate_count
    count = int(rate * n)
    if count == 0:
        return profile
    chosen = rng.choice(n, size=count, replace=False)
    voters = list(profile.voters)
    for i in chosen:
        voters[i] = _perturb(voters[i], m, rng)
    return profile.with_voters(voters)


def _perturb(r: Ranking, m: int, rng) -> Ranking:
    moves = []
    unused = [c for c in range(m) if c not in r]
    if r and unused:
        moves.append("replace")
    if unused:
        moves.append("insert")
    if len(r) >= 2:
        moves.append("swap")
    if r:
        moves.append("remove")
    move = moves[rng.integers(len(moves))]
    entries = list(r)
    if move == "replace":
        pos = rng.integers(len(entries))
        entries[pos] = unused[rng.integers(len(unused))]
    elif move == "insert":
        pos = rng.integers(len(entries) + 1)
        entries.insert(pos, unused[rng.integers(len(unused))])
    elif move == "swap":
        i, j = rng.choice(len(entries), size=2, replace=False)
        entries[i], entries[j] = entries[j], entries[i]
    else:
        pos = rng.integers(len(entries))
        del entries[pos]
    return tuple(entries)


def add_ghosts(profile: Profile, rate: float = 0.0, count: int | None = None) -> Profile:
    """Append empty rankings: spoiled ballots that only noise can revive."""
    if count is None:
        if rate < 0:
            raise ValueError("rate must be >= 0")
        count = math.ceil(rate * profile.num_voters)
    return profile.with_voters(profile.voters + ((),) * count)


def draw_sample(population: int, size: int, seed: int) -> np.ndarray:
    """Uniform simple random sample of indices, without replacement."""
    if size > population:
        raise ValueError("sample size exceeds population")
    rng = np.random.default_rng(seed)
    return np.sort(rng.choice(population, size=size, replace=False))


# --- per-edge checks ----------------------------------------------------------


@dataclass(frozen=True)
class Check:
    state_key: tuple
    kind: tuple  # stats margin kind
    direction: str  # "+" rejects when lower bound > 0; "-" when upper bound < 0
    cvr_margin: float


@dataclass
class EdgeDecision:
    edge: BoundaryEdge
    check: Check | None
    estimate: MarginEstimate | None
    rejected: bool
    note: str = ""

    def to_json_dict(self, name_of=str) -> dict:
        action, cand = self.edge.kind
        payload = {
            "source": self.edge.source.describe(name_of),
            "kind": action,
            "candidate": name_of(cand),
            "rejected": self.rejected,
        }
        if self.check is not None:
            payload["check"] = {
                "margin_kind": list(self.check.kind),
                "direction": self.check.direction,
                "cvr_margin": self.check.cvr_margin,
            }
        if self.estimate is not None:
            payload["estimate"] = self.estimate.to_json_dict()
        if self.note:
            payload["note"] = self.note
        return payload


@dataclass
class AuditResult:
    rejected_global: bool
    certified_winners: frozenset[int] | None
    decisions: list[EdgeDecision]
    sample_indices: np.ndarray
    discrepancy_count: int

    def to_json_dict(self, name_of=str) -> dict:
        return {
            "rejected_global": self.rejected_global,
            "certified_winners": sorted(name_of(c) for c in self.certified_winners)
            if self.certified_winners is not None
            else None,
            "sample_size": int(len(self.sample_indices)),
            "discrepancies": self.discrepancy_count,
            "edges": [d.to_json_dict(name_of) for d in self.decisions],
        }


class AuditContext:
    """Reusable CVR-side work for repeated audits of one graph: projections,
    margin models, and the per-edge check selection."""

    def __init__(self, graph: AuditGraph, cvr: Profile, params: MeekParams):
        ok, winners, witness = coherence_check(graph)
        if not ok:
            raise ValueError(f"incoherent audit graph refused (conflict: {witness})")
        self.graph = graph
        self.cvr = cvr
        self.params = params
        self.winner_set = winners
        self.edges = boundary(graph)
        self.n_pop = cvr.num_voters
        self._models: dict[tuple, MarginModel | None] = {}
        self._cvr_proj: dict[frozenset, list[Ranking]] = {}
        self.edge_checks: list[tuple[BoundaryEdge, Check | None, str]] = [
            self._select_check(edge) for edge in self.edges
        ]

    # -- projections ------------------------------------------------------

    def live_set(self, state) -> frozenset:
        return state.hopefuls | state.winners

    def cvr_projections(self, state) -> list[Ranking]:
        live = self.live_set(state)
        if live not in self._cvr_proj:
            self._cvr_proj[live] = [project_ranking(r, live) for r in self.cvr.voters]
        return self._cvr_proj[live]

    # -- check selection ----------------------------------------------------

    def model_for(self, state, kind) -> MarginModel | None:
        key = (state, kind)
        if key not in self._models:
            meta = self.graph.info[state]
            try:
                self._models[key] = margin_model(
                    meta.table,
                    tuple(sorted(state.winners)),
                    kind,
                    self.n_pop,
                    self.params.seats,
                    self.params.min_surplus,
                    hopefuls=sorted(state.hopefuls),
                )
            except ValueError:
                self._models[key] = None
        return self._models[key]

    def _select_check(self, edge: BoundaryEdge):
        state = edge.source
        meta = self.graph.info[state]
        if meta.degenerate or meta.canonical is None:
            return edge, None, "source state degenerate under the CVR"
        tallies = meta.hopeful_tallies
        quota = meta.solution.quota
        action, cand = edge.kind
        options: list[Check] = []
        if action == LOSER:
            can_kind, can_cand = meta.canonical
            if can_kind == LOSER and can_cand != cand:
                margin = tallies[cand] - tallies[can_cand]
                if margin > 0:
                    options.append(Check(state.sort_key(), (CANDIDATE, cand, can_cand), "+", margin))
            best_h = max(sorted(state.hopefuls), key=lambda h: tallies[h])
            quota_margin = tallies[best_h] - quota
            if quota_margin > 0 and self.model_for(state, (QUOTA, best_h)) is not None:
                options.append(Check(state.sort_key(), (QUOTA, best_h), "+", quota_margin))
        else:
            below = quota - tallies[cand]
            if below > 0 and self.model_for(state, (QUOTA, cand)) is not None:
                options.append(Check(state.sort_key(), (QUOTA, cand), "-", below))
            rivals = [h for h in state.hopefuls if h != cand]
            if rivals:
                best_h = max(sorted(rivals), key=lambda h: tallies[h])
                margin = tallies[best_h] - tallies[cand]
                if margin > 0:
                    options.append(Check(state.sort_key(), (CANDIDATE, best_h, cand), "+", margin))
        if not options:
            return edge, None, "no CVR-viable check for this edge"
        return edge, max(options, key=lambda c: c.cvr_margin), ""


def run_rla(bal: Profile, cvr: Profile, graph: AuditGraph, config: AuditConfig,
            params: MeekParams | None = None, context: AuditContext | None = None,
            indices=None) -> AuditResult:
    """Draw one comparison sample and test every boundary-edge local null.

    The global null is rejected (the outcome certified) iff every edge's
    chosen check rejects at level alpha0 with alpha_k spent on the variance
    bounds. Ballot and CVR profiles must pair by index. ``indices`` replaces
    the seed-drawn sample (nested-sample searches pass permutation prefixes).
    """
    if bal.num_voters != cvr.num_voters:
        raise ValueError("ballot and CVR profiles must have equal size")
    if params is None:
        params = MeekParams(seats=graph.seats)
    if context is None:
        context = AuditContext(graph, cvr, params)

    n = config.sample_size
    if indices is None:
        indices = draw_sample(cvr.num_voters, n, config.seed)
    else:
        indices = np.asarray(indices)
        if len(indices) != n:
            raise ValueError("provided indices must match sample_size")
    differing = [int(i) for i in indices if bal.voters[i] != cvr.voters[i]]

    bound_override = None
    if config.variance_strategy == "global":
        ku = _cached_k_upper(len(differing), n, cvr.num_voters, config.alpha_k)
        bound_override = ku / cvr.num_voters

    bal_proj_cache: dict[frozenset, dict[int, Ranking]] = {}
    estimates: dict[tuple, tuple[MarginEstimate | None, str]] = {}
    decisions: list[EdgeDecision] = []

    for edge, check, note in context.edge_checks:
        if check is None:
            decisions.append(EdgeDecision(edge, None, None, rejected=False, note=note))
            continue
        key = (check.state_key, check.kind)
        if key not in estimates:
            estimates[key] = _evaluate_check(
                context, edge.source, check, differing, bal, n, config, bound_override,
                bal_proj_cache,
            )
        estimate, err = estimates[key]
        if estimate is None:
            decisions.append(EdgeDecision(edge, check, None, rejected=False, note=err))
            continue
        if n == 0:
            rejected = False
        elif check.direction == "+":
            rejected = estimate.lower_bound > 0
        else:
            rejected = estimate.upper_bound < 0
        decisions.append(EdgeDecision(edge, check, estimate, rejected))

    rejected_global = bool(decisions) and all(d.rejected for d in decisions) and n > 0
    if not decisions:
        rejected_global = n > 0  # empty boundary: nothing can leave the graph
    return AuditResult(
        rejected_global=rejected_global,
        certified_winners=context.winner_set if rejected_global else None,
        decisions=decisions,
        sample_indices=indices,
        discrepancy_count=len(differing),
    )


def _evaluate_check(context, state, check, differing, bal, n, config, bound_override,
                    bal_proj_cache):
    model = context.model_for(state, check.kind)
    if model is None:
        return None, "margin model unavailable"
    live = context.live_set(state)
    cvr_proj = context.cvr_projections(state)
    cache = bal_proj_cache.setdefault(live, {})
    rows = []
    for i in differing:
        if i not in cache:
            cache[i] = project_ranking(bal.voters[i], live)
        rows.append(assorter_row(model.assorters, cvr_proj[i], cache[i]))
    strategy = "per-parameter" if config.variance_strategy == "per-parameter" else "shared"
    try:
        estimate = estimate_margin(
            model, rows, max(n, 1), context.n_pop, config.alpha0, config.alpha_k,
            bound_override=bound_override, strategy=strategy,
        )
    except DegenerateUnderSampleError as exc:
        return None, f"degenerate under sample: {exc}"
    except SingularEstimateError as exc:
        return None, f"singular estimate: {exc}"
    return estimate, ""


def _cached_k_upper(x, n, population, alpha):
    return k_upper(int(x), int(n), int(population), float(alpha))


def reject_local_null(graph: AuditGraph, cvr: Profile, edge: BoundaryEdge,
                      bal: Profile, config: AuditConfig,
                      params: MeekParams | None = None) -> EdgeDecision:
    """Evaluate a single boundary edge's chosen check; mainly a debugging aid."""
    result = run_rla(bal, cvr, graph, config, params=params)
    for decision in result.decisions:
        if decision.edge == edge:
            return decision
    raise KeyError("edge is not on the graph boundary")


# --- hypercube design verification -------------------------------------------

DESIGN_SCENARIOS = ("P6", "P9-naive", "P9-budgeted", "P9-single-edge")


@dataclass
class DesignResult:
    scenario: str
    trials: int
    errors: int

    @property
    def risk(self) -> float:
        return self.errors / self.trials


def verify_design(scenario: str, trials: int, seed: int = 0) -> DesignResult:
    """Monte Carlo type-I error of the hypercube walk designs at the boundary
    profile (every component has exactly 200 of 1000 ones; samples of 100).

    P6 rejects only when all six local nulls reject (the intersection test);
    P9-naive rejects when any of nine does; P9-budgeted raises each bar to
    pi <= 10; P9-single-edge audits only the first edge.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    if scenario not in DESIGN_SCENARIOS:
        raise ValueError(f"unknown scenario {scenario!r}")
    rng = np.random.default_rng(seed)
    if scenario == "P6":
        comps, threshold, combine = 6, 14, "all"
    elif scenario == "P9-naive":
        comps, threshold, combine = 9, 14, "any"
    elif scenario == "P9-budgeted":
        comps, threshold, combine = 9, 11, "any"
    else:
        comps, threshold, combine = 1, 14, "any"
    draws = rng.hypergeometric(200, 800, 100, size=(trials, comps))
    fired = draws < threshold
    rejected = fired.all(axis=1) if combine == "all" else fired.any(axis=1)
    return DesignResult(scenario, trials, int(rejected.sum()))


def audit_success_rate(cvr: Profile, graph: AuditGraph, config: AuditConfig,
                       trials: int, params: MeekParams | None = None,
                       ghost_count: int = 0) -> float:
    """Fraction of seeded trials whose audit certifies; fresh noise per trial.

    The CVR is expected to already include ghosts; noise applies to the
    ballot-side copy only.
    """
    if params is None:
        params = MeekParams(seats=graph.seats)
    context = AuditContext(graph, cvr, params)
    successes = 0
    for t in range(trials):
        trial_seed = config.seed + 7919 * t
        bal = noise_profile(cvr, config.noise_rate, seed=trial_seed)
        trial_config = AuditConfig(
            sample_size=config.sample_size,
            alpha=config.alpha,
            alpha0=config.alpha0,
            alpha_k=config.alpha_k,
            seed=trial_seed + 1,
            lam=config.lam,
            noise_rate=config.noise_rate,
            ghost_rate=config.ghost_rate,
            variance_strategy=config.variance_strategy,
        )
        result = run_rla(bal, cvr, graph, trial_config, params=params, context=context)
        successes += int(result.rejected_global)
    return successes / trials
