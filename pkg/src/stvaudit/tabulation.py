"""Meek and WIGM tabulation engines, instant keep factors, state classification.

The Meek engine emits one round record per election or elimination, in the
presentation real Meek tabulators use: within a round, previously elected
winners' keep factors are recalibrated until their tallies sit at quota, and
the round either elects the top hopeful (if it reached quota) or eliminates
the bottom one. The winner set always agrees with the eliminations-only
formulation of the rule.
"""

from __future__ import annotations

import enum
import math
from collections import Counter
from dataclasses import dataclass, field

from .ballots import Profile, Ranking, TallyTable, fpv, project_ranking, tally_profile

POSITIVE_ROOT_FLOOR = 1e-12


class Classification(enum.Enum):
    REGULAR = "regular"
    IRREGULAR = "irregular"
    DEGENERATE = "degenerate"


class NonConvergenceError(RuntimeError):
    """Keep-factor calibration hit the iteration cap; carries the last iterate."""

    def __init__(self, factors, tallies, quota, iterations):
        super().__init__(f"keep factors did not converge within {iterations} iterations")
        self.factors = factors
        self.tallies = tallies
        self.quota = quota


class UnsupportedDegreeError(ValueError):
    """Instant keep factors are only solvable for states of degree <= 2."""


class DegenerateStateError(RuntimeError):
    """Extended Meek step refused: the state has no finite positive keep factors."""


@dataclass(frozen=True)
class MeekParams:
    """Seats plus the Meek minimum surplus and convergence tolerance (votes)."""

    seats: int
    min_surplus: float = 1e-6
    tolerance: float = 1e-6
    max_iterations: int = 1000
    irregular_cap: float = 100.0

    def __post_init__(self):
        if self.seats < 1:
            raise ValueError("seats must be >= 1")
        if self.min_surplus <= 0 or self.tolerance <= 0:
            raise ValueError("min_surplus and tolerance must be > 0")


@dataclass
class KeepFactorSolution:
    """Per-winner keep factors with the active-vote total and quota they imply."""

    factors: dict[int, float]
    active_votes: float
    quota: float
    classification: Classification

    @property
    def is_regular(self) -> bool:
        return self.classification is Classification.REGULAR


@dataclass
class RoundRecord:
    round_index: int
    tallies: dict[int, float]
    quota: float
    action: tuple[str, int]  # ("elected" | "eliminated", candidate)
    keep_factors: dict[int, float] = field(default_factory=dict)
    transfer_values: dict[int, float] = field(default_factory=dict)

    def to_json_dict(self, name_of) -> dict:
        payload = {
            "round": self.round_index,
            "tallies": {name_of(c): v for c, v in sorted(self.tallies.items())},
            "quota": self.quota,
            "action": {"kind": self.action[0], "candidate": name_of(self.action[1])},
        }
        if self.keep_factors:
            payload["keep_factors"] = {name_of(c): v for c, v in sorted(self.keep_factors.items())}
        if self.transfer_values:
            payload["transfer_values"] = {name_of(c): v for c, v in sorted(self.transfer_values.items())}
        return payload


def droop_quota(num_voters: int, seats: int) -> int:
    if num_voters < 1 or seats < 1:
        raise ValueError("need at least one voter and one seat")
    return num_voters // (seats + 1) + 1


def _argmax_lex(candidates, tallies):
    return min(candidates, key=lambda c: (-tallies[c], c))


def _argmin_lex(candidates, tallies):
    return min(candidates, key=lambda c: (tallies[c], c))


def run_wigm(profile: Profile, seats: int):
    """Tabulate with the WIGM rule; returns (winner set, round records).

    Ballots transfer once at a fixed value when their candidate is elected,
    and skip already-decided candidates at unchanged weight afterwards.
    """
    n = profile.num_voters
    m_cands = profile.candidate_count
    if seats >= m_cands:
        raise ValueError(f"need more candidates than seats ({m_cands} <= {seats})")
    for i, r in enumerate(profile.voters):
        if not r:
            raise ValueError(f"WIGM requires non-empty ballots; ballot {i} is empty")

    quota = float(droop_quota(n, seats))
    hopefuls = set(range(m_cands))
    winners: list[int] = []
    weights = [1.0] * n
    transfer_values: dict[int, float] = {}
    records: list[RoundRecord] = []
    round_index = 0

    while len(winners) < seats:
        round_index += 1
        tallies = {c: 0.0 for c in hopefuls}
        piles: dict[int, list[int]] = {c: [] for c in hopefuls}
        for i, r in enumerate(profile.voters):
            c = fpv(r, hopefuls)
            if c >= 0:
                tallies[c] += weights[i]
                piles[c].append(i)

        top = _argmax_lex(hopefuls, tallies)
        if tallies[top] >= quota or len(hopefuls) + len(winners) == seats:
            tau = (tallies[top] - quota) / tallies[top] if tallies[top] > 0 else 0.0
            tau = max(tau, 0.0)
            for i in piles[top]:
                weights[i] *= tau
            transfer_values[top] = tau
            hopefuls.remove(top)
            winners.append(top)
            action = ("elected", top)
        else:
            loser = _argmin_lex(hopefuls, tallies)
            hopefuls.remove(loser)
            action = ("eliminated", loser)
        records.append(
            RoundRecord(round_index, tallies, quota, action, transfer_values=dict(transfer_values))
        )
    return set(winners), records


def _weight_pass(type_counts: Counter, factors: dict[int, float]):
    """One Meek tally pass over collapsed ranking types.

    Hopefuls hold keep factor 1 and absorb all remaining weight; winners keep
    k and pass on (1 - k). Returns (tallies, exhausted weight).
    """
    tallies: dict[int, float] = {}
    exhausted = 0.0
    for ranking, count in type_counts.items():
        remaining = 1.0
        for c in ranking:
            k = factors.get(c)
            if k is None:
                tallies[c] = tallies.get(c, 0.0) + remaining * count
                remaining = 0.0
                break
            kept = k * remaining
            tallies[c] = tallies.get(c, 0.0) + kept * count
            remaining -= kept
        exhausted += remaining * count
    return tallies, exhausted


def meek_calibrate(profile: Profile, winners, params: MeekParams, hopefuls=None, trace=None):
    """Iteratively calibrate the winners' keep factors until their tallies
    sit within tolerance of quota.

    ``profile`` is projected onto hopefuls ∪ winners first. Returns
    (KeepFactorSolution, tallies over live candidates). ``trace``, if given,
    collects a keep-factor snapshot per iteration.
    """
    winners = list(winners)
    if hopefuls is None:
        mentioned = {c for r in profile.voters for c in r}
        hopefuls = sorted(mentioned - set(winners))
    live = frozenset(hopefuls) | frozenset(winners)
    type_counts = Counter(project_ranking(r, live) for r in profile.voters)
    n = profile.num_voters
    m1 = params.seats + 1

    factors = {w: 1.0 for w in winners}
    tallies: dict[int, float] = {}
    quota = n / m1 + params.min_surplus
    # converge an order sharper than the reported tolerance so keep factors
    # land within tolerance/quota of the exact solution despite cross-winner
    # coupling
    omega = params.tolerance / 10.0
    for _ in range(params.max_iterations):
        tallies, exhausted = _weight_pass(type_counts, factors)
        quota = (n - exhausted) / m1 + params.min_surplus
        if trace is not None:
            trace.append(dict(factors))
        # converged when every winner sits within tolerance of quota; winners
        # pinned at k=1 stay below quota and are exempt (truncated solution)
        if all(
            tallies.get(w, 0.0) - quota < omega
            and (factors[w] == 1.0 or quota - tallies.get(w, 0.0) < omega)
            for w in winners
        ):
            break
        changed = False
        for w in winners:
            t = tallies.get(w, 0.0)
            if t > 0:
                updated = factors[w] * min(1.0, quota / t)
                changed |= updated != factors[w]
                factors[w] = updated
        if not changed:
            # stationary truncated iterate: nothing can move any further
            break
    else:
        raise NonConvergenceError(factors, tallies, quota, params.max_iterations)

    for c in live:
        tallies.setdefault(c, 0.0)
    # a prescribed winner stuck at k=1 below quota marks an irregular state;
    # the iterative rule truncates where the instant solution would exceed 1
    slack = max(10 * params.tolerance, 1e-9 * n)
    if all(abs(tallies[w] - quota) <= slack for w in winners):
        classification = Classification.REGULAR
    else:
        classification = Classification.IRREGULAR
    active = sum(tallies.values())
    return KeepFactorSolution(dict(factors), active, quota, classification), tallies


def run_meek(profile: Profile, params: MeekParams):
    """Tabulate with the Meek rule; returns (winner set, round records)."""
    m_cands = profile.candidate_count
    seats = params.seats
    if seats >= m_cands:
        raise ValueError(f"need more candidates than seats ({m_cands} <= {seats})")

    hopefuls = set(range(m_cands))
    winners: list[int] = []
    records: list[RoundRecord] = []
    round_index = 0
    while len(winners) < seats:
        round_index += 1
        sol, tallies = meek_calibrate(profile, winners, params, hopefuls=sorted(hopefuls))
        top = _argmax_lex(hopefuls, tallies)
        if tallies[top] >= sol.quota or len(hopefuls) + len(winners) == seats:
            hopefuls.remove(top)
            winners.append(top)
            action = ("elected", top)
        else:
            loser = _argmin_lex(hopefuls, tallies)
            hopefuls.remove(loser)
            action = ("eliminated", loser)
        records.append(
            RoundRecord(round_index, dict(tallies), sol.quota, action, keep_factors=dict(sol.factors))
        )
    return set(winners), records


# --- instant keep factors ---------------------------------------------------


def deg2_coefficients(T1, T2, T12, T21, t1, t2, t12, t21, g, n, m, eps):
    """Quadratic coefficients for the second winner's keep factor.

    The first winner's polynomial is this with the 1/2 indices swapped.
    """
    m1 = m + 1
    a = T2 * t12 - T12 * t2 + T2 * t21 + T21 * t12 + T21 * t2 + T21 * t21 - m1 * (T12 * T21 + T2 * T21)
    b = (
        -T1 * t12
        - T1 * t2
        + T12 * t2
        - T2 * t1
        - T2 * t12
        - T1 * t21
        - T2 * t21
        + (n - g) * (T21 - T12)
        - T21 * t1
        - 2 * (T21 * t12 + T21 * t2 + T21 * t21)
        + m1 * (T1 * T12 + T1 * T2 + T12 * T21 + T2 * T21 - T12 * eps + T21 * eps)
    )
    c = -(T1 + T21) * (n - g - t1 - t12 - t2 - t21 + m1 * eps)
    return a, b, c


def _real_roots(a, b, c):
    """Real roots of a*x^2 + b*x + c, via the numerically stable formula."""
    if a == 0.0:
        if b == 0.0:
            return []
        return [-c / b]
    disc = b * b - 4.0 * a * c
    if disc < 0.0:
        return []
    sq = math.sqrt(disc)
    q = -0.5 * (b + math.copysign(sq, b)) if b != 0.0 else -0.5 * sq
    roots = []
    if a != 0.0 and q != 0.0:
        roots = [q / a, c / q]
    elif q == 0.0:
        roots = [0.0, 0.0]
    return roots


def _deg2_tallies(table: TallyTable, w1: int, w2: int):
    return (
        table.T(w1), table.T(w2), table.T(w1, w2), table.T(w2, w1),
        table.t(w1), table.t(w2), table.t(w1, w2), table.t(w2, w1), table.ghost,
    )


def _deg2_system_residual(k1, k2, tallies, n, m, eps):
    T1, T2, T12, T21, t1, t2, t12, t21, g = tallies
    n_active = n - (g + (1 - k1) * t1 + (1 - k2) * t2 + (1 - k1) * (1 - k2) * (t12 + t21))
    q = n_active / (m + 1) + eps
    r1 = k1 * (T1 + (1 - k2) * T21) - q
    r2 = k2 * (T2 + (1 - k1) * T12) - q
    return max(abs(r1), abs(r2)), n_active, q


def solve_instant_keep(table: TallyTable, winners, params: MeekParams, num_voters: int) -> KeepFactorSolution:
    """Solve the closed-form keep factors for a state of degree <= 2.

    Degree 0 has no factors; degree 1 is the C_u/C_v closed form; degree 2
    takes the least positive consistent roots of the paired quadratics.
    A Degenerate classification (no finite positive solution) is a valid
    return, with an empty factor map.
    """
    winners = tuple(winners)
    degree = len(winners)
    n = num_voters
    m = params.seats
    eps = params.min_surplus
    m1 = m + 1
    g = table.ghost

    if degree == 0:
        active = float(n - g)
        return KeepFactorSolution({}, active, active / m1 + eps, Classification.REGULAR)

    if degree == 1:
        w = winners[0]
        T_w = table.T(w)
        t_w = table.t(w)
        c_u = n - g - t_w + m1 * eps
        c_v = m1 * T_w - t_w
        if c_v <= 0:
            return KeepFactorSolution({}, float(n - g), (n - g) / m1 + eps, Classification.DEGENERATE)
        k = c_u / c_v
        if k <= POSITIVE_ROOT_FLOOR or k >= params.irregular_cap:
            return KeepFactorSolution({}, float(n - g), (n - g) / m1 + eps, Classification.DEGENERATE)
        active = n - g - (1 - k) * t_w
        quota = active / m1 + eps
        cls = Classification.REGULAR if k <= 1.0 else Classification.IRREGULAR
        return KeepFactorSolution({w: k}, active, quota, cls)

    if degree == 2:
        w1, w2 = winners
        tallies = _deg2_tallies(table, w1, w2)
        T1, T2, T12, T21, t1, t2, t12, t21, _ = tallies
        p2 = deg2_coefficients(T1, T2, T12, T21, t1, t2, t12, t21, g, n, m, eps)
        p1 = deg2_coefficients(T2, T1, T21, T12, t2, t1, t21, t12, g, n, m, eps)
        roots2 = [r for r in _real_roots(*p2) if r > POSITIVE_ROOT_FLOOR]
        roots1 = [r for r in _real_roots(*p1) if r > POSITIVE_ROOT_FLOOR]
        tol = 1e-7 * max(1.0, n)
        best = None
        for k2 in roots2:
            for k1 in roots1:
                resid, active, quota = _deg2_system_residual(k1, k2, tallies, n, m, eps)
                if resid < tol and (best is None or k1 + k2 < best[0]):
                    best = (k1 + k2, k1, k2, active, quota)
        if best is None:
            return KeepFactorSolution({}, float(n - g), (n - g) / m1 + eps, Classification.DEGENERATE)
        _, k1, k2, active, quota = best
        if max(k1, k2) >= params.irregular_cap:
            return KeepFactorSolution({}, float(n - g), (n - g) / m1 + eps, Classification.DEGENERATE)
        cls = Classification.REGULAR if max(k1, k2) <= 1.0 else Classification.IRREGULAR
        return KeepFactorSolution({w1: k1, w2: k2}, active, quota, cls)

    raise UnsupportedDegreeError(f"instant keep factors support degree <= 2, got {degree}")


def classify_state(table: TallyTable, winners, params: MeekParams, num_voters: int) -> Classification:
    return solve_instant_keep(table, winners, params, num_voters).classification


def instant_hopeful_tallies(table: TallyTable, winners, sol: KeepFactorSolution, hopefuls) -> dict[int, float]:
    """Calibrated hopeful tallies implied by an instant keep-factor solution."""
    k = sol.factors
    out = {}
    winners = tuple(winners)
    for h in hopefuls:
        total = float(table.T(h))
        for w in winners:
            total += (1.0 - k[w]) * table.T(w, h)
        if len(winners) == 2:
            w1, w2 = winners
            total += (1.0 - k[w1]) * (1.0 - k[w2]) * (table.T(w1, w2, h) + table.T(w2, w1, h))
        out[h] = total
    return out


def extended_meek_step(profile: Profile, hopefuls, winners, params: MeekParams):
    """One extended-Meek transition using instant keep factors.

    Returns (action, tallies, solution) where action is ("elected", c) or
    ("eliminated", c). Raises DegenerateStateError when the state has no
    finite positive keep factors.
    """
    hopefuls = sorted(hopefuls)
    winners = tuple(sorted(winners))
    table = tally_profile(profile, hopefuls, winners)
    sol = solve_instant_keep(table, winners, params, profile.num_voters)
    if sol.classification is Classification.DEGENERATE:
        if len(hopefuls) + len(winners) == params.seats:
            # completion round: every remaining hopeful wins regardless, so an
            # iterative (truncated) calibration is enough to order them
            sol, all_tallies = meek_calibrate(profile, list(winners), params, hopefuls=hopefuls)
            tallies = {h: all_tallies[h] for h in hopefuls}
            top = _argmax_lex(hopefuls, tallies)
            return ("elected", top), tallies, sol
        raise DegenerateStateError(
            f"state (H={hopefuls}, W={list(winners)}) has no finite positive keep factors"
        )
    tallies = instant_hopeful_tallies(table, winners, sol, hopefuls)
    top = _argmax_lex(hopefuls, tallies)
    if (len(winners) < params.seats and tallies[top] >= sol.quota) or (
        len(hopefuls) + len(winners) == params.seats
    ):
        action = ("elected", top)
    else:
        action = ("eliminated", _argmin_lex(hopefuls, tallies))
    return action, tallies, sol


def witness_discriminant(m: int, n: int, x_prime: int, eps: float = 1e-6) -> float:
    """Discriminant of the symmetric two-winner keep polynomial after the swap."""
    return 4.0 * m * x_prime * (m * x_prime - (n + (m + 1) * eps - x_prime))


def degenerate_witness(m: int, n: int, eps: float = 1e-6) -> Profile:
    """Construct the two-insecure-winner profile whose state flips from
    Regular to Degenerate when one ballot of each paired ranking is removed.

    Candidates are 0..m-1; the state of interest is (H = {2..m-1}, W = {0, 1}).
    """
    if m < 3:
        raise ValueError("construction needs m >= 3")
    x = math.ceil(n / (m + 1) + eps)
    y = math.floor(n / (m + 1) - eps)
    rest = n - 2 * x - (m - 3) * y
    if rest < 0:
        raise ValueError(f"infeasible (m={m}, N={n}): 2x + (m-3)y exceeds N")
    voters: list[Ranking] = []
    voters.extend([(0, 1)] * x)
    voters.extend([(1, 0)] * x)
    for j in range(2, m - 1):
        voters.extend([(j,)] * y)
    voters.extend([(m - 1,)] * rest)
    return Profile(tuple(voters), m, label=f"degenerate witness m={m} N={n}")
