"""Hypergeometric bounds, discrepancy assorters, and delta-method margins.

Margin models expose ``point(theta)`` and ``gradient(theta)`` over a fixed
parameter vector of assorter means, so the same object serves the CVR value
(theta = 0), the sampled estimate, and the finite-difference checks in tests.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache
from statistics import NormalDist

import numpy as np

from .ballots import Ranking, TallyTable
from .tabulation import deg2_coefficients

SAMPLE_VARIANCE_THRESHOLD = 20  # nonzero entries before the sample variance is trusted


class SingularEstimateError(RuntimeError):
    """Sampled parameters drove a keep-factor denominator to zero or below."""


class DegenerateUnderSampleError(RuntimeError):
    """Sampled parameters admit no finite positive keep factors; the audit
    graph's LAM must shrink until the state is solidly regular."""


# --- hypergeometric ----------------------------------------------------------


def _log_comb(n: int, k: int) -> float:
    if k < 0 or k > n:
        return float("-inf")
    return math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)


def hypergeom_logpmf(population: int, successes: int, draws: int, k: int) -> float:
    return (
        _log_comb(successes, k)
        + _log_comb(population - successes, draws - k)
        - _log_comb(population, draws)
    )


def hypergeom_pmf(population: int, successes: int, draws: int, k: int) -> float:
    lp = hypergeom_logpmf(population, successes, draws, k)
    return math.exp(lp) if lp > float("-inf") else 0.0


def hypergeom_cdf(population: int, successes: int, draws: int, k: int) -> float:
    """P(X <= k) by stable log-space summation."""
    if k < 0:
        return 0.0
    if k >= min(draws, successes):
        return 1.0
    lo = max(0, draws + successes - population)
    if k < lo:
        return 0.0
    terms = [hypergeom_logpmf(population, successes, draws, i) for i in range(lo, k + 1)]
    peak = max(terms)
    if peak == float("-inf"):
        return 0.0
    total = sum(math.exp(t - peak) for t in terms)
    return min(1.0, math.exp(peak) * total)


@lru_cache(maxsize=200_000)
def k_upper(x: int, draws: int, population: int, alpha: float) -> int:
    """Largest population success count K with P_K(X <= x) >= alpha.

    The cdf is stochastically decreasing in K, so the acceptance regions are
    nested and a binary search applies.
    """
    if not 0 <= x <= draws <= population:
        raise ValueError("need 0 <= x <= draws <= population")
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must be in (0, 1)")
    if hypergeom_cdf(population, population, draws, x) >= alpha:
        return population
    lo = x  # cdf = 1 when K <= x
    hi = population  # known False here
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if hypergeom_cdf(population, mid, draws, x) >= alpha:
            lo = mid
        else:
            hi = mid
    return lo


def normal_quantile(p: float) -> float:
    return NormalDist().inv_cdf(p)


def srswor_factor(population: int, draws: int) -> float:
    """Finite-population correction (N - n) / (N - 1)."""
    if population <= 1:
        return 0.0
    return (population - draws) / (population - 1)


# --- assorters ---------------------------------------------------------------


@dataclass(frozen=True)
class Assorter:
    """A discrepancy score on (CVR, ballot) projection pairs.

    kind "T" compares length-L prefixes (the initially-like tallies), kind
    "t" compares whole rankings (the exactly-like tallies). ``prefixes`` has
    one entry normally, two for the composite winner-pair scores, whose sum
    stays in {-1, 0, +1}.
    """

    kind: str  # "T" | "t"
    prefixes: tuple[Ranking, ...]
    label: str

    def value(self, cvr_proj: Ranking, bal_proj: Ranking) -> int:
        total = 0
        for p in self.prefixes:
            if self.kind == "T":
                length = len(p)
                cvr_hit = cvr_proj[:length] == p
                bal_hit = bal_proj[:length] == p
            else:
                cvr_hit = cvr_proj == p
                bal_hit = bal_proj == p
            total += int(bal_hit) - int(cvr_hit)
        return total


def _delta(prefix: Ranking, names=None) -> Assorter:
    return Assorter("T", (prefix,), "d" + "".join(str(c) for c in prefix))


def _lam(ranking: Ranking) -> Assorter:
    tag = "".join(str(c) for c in ranking) or "0"
    return Assorter("t", (ranking,), "l" + tag)


def _delta_pair(p1: Ranking, p2: Ranking) -> Assorter:
    return Assorter("T", (p1, p2), "d" + "+".join("".join(str(c) for c in p) for p in (p1, p2)))


def assorter_row(assorters, cvr_proj: Ranking, bal_proj: Ranking):
    return tuple(a.value(cvr_proj, bal_proj) for a in assorters)


# --- margin models -----------------------------------------------------------


CANDIDATE = "candidate_vs_candidate"
QUOTA = "candidate_vs_quota"


@dataclass
class MarginEstimate:
    margin_kind: tuple
    point: float
    variance_bound: float
    std_err: float
    lower_bound: float
    upper_bound: float
    parameters_used: int
    discrepancies: int
    ku_over_population: float
    parameter_table: list[dict] = field(default_factory=list)

    def to_json_dict(self) -> dict:
        return {
            "margin_kind": list(self.margin_kind),
            "point": self.point,
            "variance_bound": self.variance_bound,
            "std_err": self.std_err,
            "lower_bound": self.lower_bound,
            "upper_bound": self.upper_bound,
            "parameters_used": self.parameters_used,
            "discrepancies": self.discrepancies,
            "ku_over_population": self.ku_over_population,
            "parameters": self.parameter_table,
        }


class MarginModel:
    """Base: a margin as a smooth function of assorter means."""

    kind: tuple
    assorters: list[Assorter]

    @property
    def dim(self) -> int:
        return len(self.assorters)

    def cvr_margin(self) -> float:
        return self.point([0.0] * self.dim)

    def point(self, theta) -> float:
        raise NotImplementedError

    def gradient(self, theta):
        raise NotImplementedError


class Degree0Candidate(MarginModel):
    def __init__(self, table: TallyTable, c: int, loser: int, n: int):
        self.kind = (CANDIDATE, c, loser)
        self.n = n
        self.tc = table.T(c)
        self.tl = table.T(loser)
        self.assorters = [_delta((c,)), _delta((loser,))]

    def point(self, theta):
        return (self.tc - self.tl) + self.n * (theta[0] - theta[1])

    def gradient(self, theta):
        return np.array([self.n, -self.n], dtype=float)


class Degree0Quota(MarginModel):
    def __init__(self, table: TallyTable, c: int, n: int, m: int, eps: float):
        self.kind = (QUOTA, c)
        self.n = n
        self.m1 = m + 1
        self.eps = eps
        self.tc = table.T(c)
        self.g = table.ghost
        self.assorters = [_delta((c,)), _lam(())]

    def point(self, theta):
        quota = (self.n - (self.g + self.n * theta[1])) / self.m1 + self.eps
        return self.tc + self.n * theta[0] - quota

    def gradient(self, theta):
        return np.array([self.n, self.n / self.m1], dtype=float)


class Degree1Base(MarginModel):
    def __init__(self, table: TallyTable, w: int, n: int, m: int, eps: float):
        self.n = n
        self.m1 = m + 1
        self.w = w
        self.tw = table.T(w)
        self.tw_exact = table.t(w)
        self.g = table.ghost
        self.cu = n - self.g - self.tw_exact + self.m1 * eps
        self.cv = self.m1 * self.tw - self.tw_exact

    def _keep(self, mu_g, nu_w, mu_w):
        u = self.cu - self.n * (mu_g + nu_w)
        v = self.cv + self.n * (self.m1 * mu_w - nu_w)
        if v <= 0:
            raise SingularEstimateError(
                f"keep-factor denominator {v:.6g} <= 0 for winner {self.w}"
            )
        return u, v

    def _keep_partials(self, u, v):
        # d k / d (nu_g, nu_w, mu_w) with k = u / v
        dk_g = -self.n / v
        dk_nw = -self.n * (v - u) / (v * v)
        dk_mw = -u * self.n * self.m1 / (v * v)
        return dk_g, dk_nw, dk_mw


class Degree1Candidate(Degree1Base):
    """theta = (mu_c, mu_l, mu_wc, mu_wl, nu_g, nu_w, mu_w)."""

    def __init__(self, table, w, c, loser, n, m, eps):
        super().__init__(table, w, n, m, eps)
        self.kind = (CANDIDATE, c, loser)
        self.tc = table.T(c)
        self.tl = table.T(loser)
        self.twc = table.T(w, c)
        self.twl = table.T(w, loser)
        self.assorters = [
            _delta((c,)), _delta((loser,)), _delta((w, c)), _delta((w, loser)),
            _lam(()), _lam((w,)), _delta((w,)),
        ]

    def point(self, theta):
        u, v = self._keep(theta[4], theta[5], theta[6])
        k = u / v
        spread = self.twc - self.twl + self.n * (theta[2] - theta[3])
        return (self.tc - self.tl) + self.n * (theta[0] - theta[1]) + (1 - k) * spread

    def gradient(self, theta):
        u, v = self._keep(theta[4], theta[5], theta[6])
        k = u / v
        spread = self.twc - self.twl + self.n * (theta[2] - theta[3])
        dk_g, dk_nw, dk_mw = self._keep_partials(u, v)
        return np.array([
            self.n,
            -self.n,
            (1 - k) * self.n,
            -(1 - k) * self.n,
            -dk_g * spread,
            -dk_nw * spread,
            -dk_mw * spread,
        ])


class Degree1Quota(Degree1Base):
    """theta = (mu_c, mu_wc, nu_g, nu_w, mu_w); margin T_c + T_wc - k (T_wc + T_w)."""

    def __init__(self, table, w, c, n, m, eps):
        super().__init__(table, w, n, m, eps)
        self.kind = (QUOTA, c)
        self.tc = table.T(c)
        self.twc = table.T(w, c)
        self.assorters = [
            _delta((c,)), _delta((w, c)), _lam(()), _lam((w,)), _delta((w,)),
        ]

    def point(self, theta):
        u, v = self._keep(theta[2], theta[3], theta[4])
        k = u / v
        t_c = self.tc + self.n * theta[0]
        t_wc = self.twc + self.n * theta[1]
        t_w = self.tw + self.n * theta[4]
        return t_c + t_wc - k * (t_wc + t_w)

    def gradient(self, theta):
        u, v = self._keep(theta[2], theta[3], theta[4])
        k = u / v
        t_wc = self.twc + self.n * theta[1]
        t_w = self.tw + self.n * theta[4]
        dk_g, dk_nw, dk_mw = self._keep_partials(u, v)
        tail = t_wc + t_w
        return np.array([
            self.n,
            self.n * (1 - k),
            -dk_g * tail,
            -dk_nw * tail,
            -k * self.n - dk_mw * tail,
        ])


def deg2_coefficient_partials(T1, T2, T12, T21, t1, t2, t12, t21, g, n, m, eps):
    """Partials of (A2, B2, C2) with respect to each tally argument."""
    m1 = m + 1
    rest = n - g - t1 - t2 - t12 - t21 + m1 * eps
    d_a = {
        "T1": 0.0,
        "T2": t12 + t21 - m1 * T21,
        "T12": -t2 - m1 * T21,
        "T21": t12 + t2 + t21 - m1 * (T12 + T2),
        "t1": 0.0,
        "t2": -T12 + T21,
        "t12": T2 + T21,
        "t21": T2 + T21,
        "g": 0.0,
    }
    d_b = {
        "T1": -t12 - t2 - t21 + m1 * (T12 + T2),
        "T2": -t1 - t12 - t21 + m1 * (T1 + T21),
        "T12": t2 - (n - g) + m1 * (T1 + T21 - eps),
        "T21": (n - g) - t1 - 2 * (t12 + t2 + t21) + m1 * (T12 + T2 + eps),
        "t1": -T2 - T21,
        "t2": -T1 + T12 - 2 * T21,
        "t12": -T1 - T2 - 2 * T21,
        "t21": -T1 - T2 - 2 * T21,
        "g": T12 - T21,
    }
    d_c = {
        "T1": -rest,
        "T2": 0.0,
        "T12": 0.0,
        "T21": -rest,
        "t1": T1 + T21,
        "t2": T1 + T21,
        "t12": T1 + T21,
        "t21": T1 + T21,
        "g": T1 + T21,
    }
    return d_a, d_b, d_c


_SWAP = {"T1": "T2", "T2": "T1", "T12": "T21", "T21": "T12",
         "t1": "t2", "t2": "t1", "t12": "t21", "t21": "t12", "g": "g"}

TALLY_ORDER = ("g", "T1", "T2", "T12", "T21", "t1", "t2", "t12", "t21")


class Degree2Solver:
    """Shared keep-factor solve + implicit-function-theorem partials for the
    two-winner quadratic system, at sampled tally values."""

    def __init__(self, checked: dict[str, float], n: int, m: int, eps: float):
        self.checked = checked
        self.n = n
        self.m = m
        self.eps = eps

    def tallies_at(self, theta):
        # theta[0..8] correct the tallies in TALLY_ORDER
        vals = {}
        for i, name in enumerate(TALLY_ORDER):
            vals[name] = self.checked[name] + self.n * theta[i]
        return vals

    def solve(self, vals):
        args2 = (vals["T1"], vals["T2"], vals["T12"], vals["T21"],
                 vals["t1"], vals["t2"], vals["t12"], vals["t21"], vals["g"],
                 self.n, self.m, self.eps)
        args1 = (vals["T2"], vals["T1"], vals["T21"], vals["T12"],
                 vals["t2"], vals["t1"], vals["t21"], vals["t12"], vals["g"],
                 self.n, self.m, self.eps)
        p2 = deg2_coefficients(*args2)
        p1 = deg2_coefficients(*args1)
        roots2 = [r for r in _quad_roots(*p2) if r > 1e-12]
        roots1 = [r for r in _quad_roots(*p1) if r > 1e-12]
        tol = 1e-7 * max(1.0, self.n)
        best = None
        for k2 in roots2:
            for k1 in roots1:
                resid = self._residual(k1, k2, vals)
                if resid < tol and (best is None or k1 + k2 < best[0]):
                    best = (k1 + k2, k1, k2)
        if best is None:
            raise DegenerateUnderSampleError(
                "sampled tallies admit no finite positive keep factors; "
                "reduce the LAM until the state is solidly regular"
            )
        _, k1, k2 = best
        return k1, k2, p1, p2

    def _residual(self, k1, k2, vals):
        n_active = self.n - (vals["g"] + (1 - k1) * vals["t1"] + (1 - k2) * vals["t2"]
                             + (1 - k1) * (1 - k2) * (vals["t12"] + vals["t21"]))
        q = n_active / (self.m + 1) + self.eps
        r1 = k1 * (vals["T1"] + (1 - k2) * vals["T21"]) - q
        r2 = k2 * (vals["T2"] + (1 - k1) * vals["T12"]) - q
        return max(abs(r1), abs(r2))

    def keep_partials(self, vals, k1, k2, p1, p2):
        """dk1/dtally and dk2/dtally for each tally name, via the IFT."""
        a2, b2, _ = p2
        a1, b1, _ = p1
        den2 = 2 * a2 * k2 + b2
        den1 = 2 * a1 * k1 + b1
        scale = max(1.0, abs(a2) + abs(b2), abs(a1) + abs(b1))
        if abs(den2) < 1e-12 * scale or abs(den1) < 1e-12 * scale:
            raise DegenerateUnderSampleError(
                "keep-factor polynomial is critically flat at the sampled tallies"
            )
        da2, db2, dc2 = deg2_coefficient_partials(
            vals["T1"], vals["T2"], vals["T12"], vals["T21"],
            vals["t1"], vals["t2"], vals["t12"], vals["t21"], vals["g"],
            self.n, self.m, self.eps)
        swapped = deg2_coefficient_partials(
            vals["T2"], vals["T1"], vals["T21"], vals["T12"],
            vals["t2"], vals["t1"], vals["t21"], vals["t12"], vals["g"],
            self.n, self.m, self.eps)
        da1 = {name: swapped[0][_SWAP[name]] for name in TALLY_ORDER}
        db1 = {name: swapped[1][_SWAP[name]] for name in TALLY_ORDER}
        dc1 = {name: swapped[2][_SWAP[name]] for name in TALLY_ORDER}
        dk1 = {}
        dk2 = {}
        for name in TALLY_ORDER:
            dk2[name] = -(da2[name] * k2 * k2 + db2[name] * k2 + dc2[name]) / den2
            dk1[name] = -(da1[name] * k1 * k1 + db1[name] * k1 + dc1[name]) / den1
        return dk1, dk2


def _quad_roots(a, b, c):
    if a == 0.0:
        return [] if b == 0.0 else [-c / b]
    disc = b * b - 4.0 * a * c
    if disc < 0.0:
        return []
    sq = math.sqrt(disc)
    q = -0.5 * (b + math.copysign(sq, b)) if b != 0.0 else -0.5 * sq
    if q == 0.0:
        return [0.0, 0.0]
    return [q / a, c / q]


def _checked_deg2(table: TallyTable, w1: int, w2: int) -> dict[str, float]:
    return {
        "g": table.ghost,
        "T1": table.T(w1), "T2": table.T(w2),
        "T12": table.T(w1, w2), "T21": table.T(w2, w1),
        "t1": table.t(w1), "t2": table.t(w2),
        "t12": table.t(w1, w2), "t21": table.t(w2, w1),
    }


def _deg2_keep_assorters(w1: int, w2: int):
    return [
        _lam(()),
        _delta((w1,)), _delta((w2,)), _delta((w1, w2)), _delta((w2, w1)),
        _lam((w1,)), _lam((w2,)), _lam((w1, w2)), _lam((w2, w1)),
    ]


class Degree2Candidate(MarginModel):
    """theta = (nu_g, mu_1, mu_2, mu_12, mu_21, nu_1, nu_2, nu_12, nu_21,
    mu_c, mu_l, mu_1c, mu_1l, mu_2c, mu_2l, mu_12c+mu_21c, mu_12l+mu_21l)."""

    def __init__(self, table, w1, w2, c, loser, n, m, eps):
        self.kind = (CANDIDATE, c, loser)
        self.n = n
        self.solver = Degree2Solver(_checked_deg2(table, w1, w2), n, m, eps)
        self.tc = table.T(c)
        self.tl = table.T(loser)
        self.t1c = table.T(w1, c)
        self.t1l = table.T(w1, loser)
        self.t2c = table.T(w2, c)
        self.t2l = table.T(w2, loser)
        self.t12c = table.T(w1, w2, c) + table.T(w2, w1, c)
        self.t12l = table.T(w1, w2, loser) + table.T(w2, w1, loser)
        self.assorters = _deg2_keep_assorters(w1, w2) + [
            _delta((c,)), _delta((loser,)),
            _delta((w1, c)), _delta((w1, loser)),
            _delta((w2, c)), _delta((w2, loser)),
            _delta_pair((w1, w2, c), (w2, w1, c)),
            _delta_pair((w1, w2, loser), (w2, w1, loser)),
        ]

    def _pieces(self, theta):
        vals = self.solver.tallies_at(theta)
        k1, k2, p1, p2 = self.solver.solve(vals)
        e1 = self.t1c - self.t1l + self.n * (theta[11] - theta[12])
        e2 = self.t2c - self.t2l + self.n * (theta[13] - theta[14])
        e12 = self.t12c - self.t12l + self.n * (theta[15] - theta[16])
        return vals, k1, k2, p1, p2, e1, e2, e12

    def point(self, theta):
        _, k1, k2, _, _, e1, e2, e12 = self._pieces(theta)
        return (
            (self.tc - self.tl)
            + self.n * (theta[9] - theta[10])
            + (1 - k1) * e1
            + (1 - k2) * e2
            + (1 - k1) * (1 - k2) * e12
        )

    def gradient(self, theta):
        vals, k1, k2, p1, p2, e1, e2, e12 = self._pieces(theta)
        dm_dk1 = -e1 - (1 - k2) * e12
        dm_dk2 = -e2 - (1 - k1) * e12
        dk1, dk2 = self.solver.keep_partials(vals, k1, k2, p1, p2)
        grad = np.zeros(self.dim)
        for i, name in enumerate(TALLY_ORDER):
            grad[i] = self.n * (dm_dk1 * dk1[name] + dm_dk2 * dk2[name])
        grad[9] = self.n
        grad[10] = -self.n
        grad[11] = (1 - k1) * self.n
        grad[12] = -(1 - k1) * self.n
        grad[13] = (1 - k2) * self.n
        grad[14] = -(1 - k2) * self.n
        grad[15] = (1 - k1) * (1 - k2) * self.n
        grad[16] = -(1 - k1) * (1 - k2) * self.n
        return grad


class Degree2Quota(MarginModel):
    """Quota margin at a two-winner state, using the identity that winners'
    calibrated tallies equal quota: (m - 1) q = sum of hopeful tallies
    + (m + 1) eps. theta = 9 keep parameters then, per hopeful,
    (mu_h, mu_1h, mu_2h, mu_12h+mu_21h)."""

    def __init__(self, table, w1, w2, c, hopefuls, n, m, eps):
        if m - 1 <= 1:
            raise ValueError("degree-2 quota margins need m >= 3")
        self.kind = (QUOTA, c)
        self.n = n
        self.m = m
        self.eps = eps
        self.solver = Degree2Solver(_checked_deg2(table, w1, w2), n, m, eps)
        self.hopefuls = sorted(hopefuls)
        self.c = c
        self.checked_h = {
            h: (
                table.T(h),
                table.T(w1, h),
                table.T(w2, h),
                table.T(w1, w2, h) + table.T(w2, w1, h),
            )
            for h in self.hopefuls
        }
        self.assorters = list(_deg2_keep_assorters(w1, w2))
        for h in self.hopefuls:
            self.assorters.extend([
                _delta((h,)), _delta((w1, h)), _delta((w2, h)),
                _delta_pair((w1, w2, h), (w2, w1, h)),
            ])

    def _coef(self, h):
        return (1.0 if h == self.c else 0.0) - 1.0 / (self.m - 1)

    def _hopeful_tallies(self, theta, k1, k2):
        out = {}
        for j, h in enumerate(self.hopefuls):
            base = 9 + 4 * j
            th, t1h, t2h, t12h = self.checked_h[h]
            out[h] = (
                th + self.n * theta[base]
                + (1 - k1) * (t1h + self.n * theta[base + 1])
                + (1 - k2) * (t2h + self.n * theta[base + 2])
                + (1 - k1) * (1 - k2) * (t12h + self.n * theta[base + 3])
            )
        return out

    def point(self, theta):
        vals = self.solver.tallies_at(theta)
        k1, k2, _, _ = self.solver.solve(vals)
        tallies = self._hopeful_tallies(theta, k1, k2)
        total = sum(self._coef(h) * tallies[h] for h in self.hopefuls)
        return total - (self.m + 1) * self.eps / (self.m - 1)

    def gradient(self, theta):
        vals = self.solver.tallies_at(theta)
        k1, k2, p1, p2 = self.solver.solve(vals)
        dk1, dk2 = self.solver.keep_partials(vals, k1, k2, p1, p2)
        dm_dk1 = 0.0
        dm_dk2 = 0.0
        grad = np.zeros(self.dim)
        for j, h in enumerate(self.hopefuls):
            base = 9 + 4 * j
            a = self._coef(h)
            th, t1h, t2h, t12h = self.checked_h[h]
            s1h = t1h + self.n * theta[base + 1]
            s2h = t2h + self.n * theta[base + 2]
            s12h = t12h + self.n * theta[base + 3]
            dm_dk1 += a * (-s1h - (1 - k2) * s12h)
            dm_dk2 += a * (-s2h - (1 - k1) * s12h)
            grad[base] = a * self.n
            grad[base + 1] = a * (1 - k1) * self.n
            grad[base + 2] = a * (1 - k2) * self.n
            grad[base + 3] = a * (1 - k1) * (1 - k2) * self.n
        for i, name in enumerate(TALLY_ORDER):
            grad[i] = self.n * (dm_dk1 * dk1[name] + dm_dk2 * dk2[name])
        return grad


def margin_model(table: TallyTable, winners, kind: tuple, n: int, m: int, eps: float,
                 hopefuls=None) -> MarginModel:
    """Build the margin model for a state of degree len(winners)."""
    winners = tuple(sorted(winners))
    degree = len(winners)
    style = kind[0]
    if degree == 0:
        if style == CANDIDATE:
            return Degree0Candidate(table, kind[1], kind[2], n)
        return Degree0Quota(table, kind[1], n, m, eps)
    if degree == 1:
        (w,) = winners
        if style == CANDIDATE:
            return Degree1Candidate(table, w, kind[1], kind[2], n, m, eps)
        return Degree1Quota(table, w, kind[1], n, m, eps)
    if degree == 2:
        w1, w2 = winners
        if style == CANDIDATE:
            return Degree2Candidate(table, w1, w2, kind[1], kind[2], n, m, eps)
        if hopefuls is None:
            raise ValueError("degree-2 quota margins need the hopeful set")
        return Degree2Quota(table, w1, w2, kind[1], hopefuls, n, m, eps)
    raise ValueError(f"margins support degree <= 2, got {degree}")


# --- sampling-side estimation ------------------------------------------------


def summarize_rows(rows, dim: int):
    """Accumulate sums, cross-moments, and nonzero counts from sparse rows.

    ``rows`` holds the assorter vectors of sampled pairs that differ; pairs
    that agree contribute zero everywhere and are implicit.
    """
    sums = np.zeros(dim)
    cross = np.zeros((dim, dim))
    nonzero = np.zeros(dim, dtype=int)
    discrepant = 0
    for row in rows:
        vec = np.asarray(row, dtype=float)
        if not vec.any():
            continue
        discrepant += 1
        sums += vec
        cross += np.outer(vec, vec)
        nonzero += vec != 0
    return sums, cross, nonzero, discrepant


def variance_bound_global(rows, dim: int, sample_size: int, population: int,
                          alpha_k: float, bound_b: float = 1.0):
    """Shared per-parameter variance bound from the union discrepancy count.

    Y counts sampled pairs where any tracked assorter fired; the population
    count of such pairs is bounded by K_u at level alpha_k, and every
    parameter's per-ballot second moment by B^2 K_u / N. Returns
    (per-ballot bound, bound on the variance of the sample mean, Y).
    """
    _, _, _, discrepant = summarize_rows(rows, dim)
    ku = k_upper(discrepant, sample_size, population, alpha_k)
    per_ballot = bound_b * bound_b * ku / population
    return per_ballot, per_ballot / sample_size, discrepant


def estimate_margin(
    model: MarginModel,
    rows,
    sample_size: int,
    population: int,
    alpha0: float,
    alpha_k: float,
    bound_override: float | None = None,
    strategy: str = "shared",
) -> MarginEstimate:
    """Delta-method estimate of a margin from sampled assorter rows.

    Per-parameter variances default to the shared hypergeometric bound K_u/N
    induced by the count of discrepant rows (strategy "shared"); strategy
    "per-parameter" instead splits alpha_k evenly and bounds each parameter
    by its own nonzero count. Parameters with more than 20 nonzero entries
    use their sample variance either way, and off-diagonal entries are
    sample covariances. One-sided bounds use z_{1 - alpha0} after the
    without-replacement correction. ``bound_override`` substitutes a
    precomputed shared K_u/N (the profile-wide discrepancy variant).
    """
    if sample_size <= 0:
        raise ValueError("sample_size must be positive")
    if strategy not in ("shared", "per-parameter"):
        raise ValueError("strategy must be 'shared' or 'per-parameter'")
    d = model.dim
    sums, cross, nonzero, discrepant = summarize_rows(rows, d)
    if bound_override is not None:
        bound = bound_override
    elif strategy == "shared":
        ku = k_upper(discrepant, sample_size, population, alpha_k)
        bound = ku / population
    else:
        bound = None  # resolved per parameter below

    means = sums / sample_size
    theta = means.tolist()
    if sample_size > 1:
        sample_cov = (cross - sample_size * np.outer(means, means)) / (sample_size - 1)
    else:
        sample_cov = np.zeros((d, d))
    sigma = sample_cov.copy()
    table_rows = []
    for i, assorter in enumerate(model.assorters):
        if nonzero[i] > SAMPLE_VARIANCE_THRESHOLD:
            source = "sample"
        else:
            if bound is None:
                ku_i = k_upper(int(nonzero[i]), sample_size, population, alpha_k / d)
                sigma[i, i] = ku_i / population
            else:
                sigma[i, i] = bound
            source = "hypergeometric"
        table_rows.append({
            "name": assorter.label,
            "mean": means[i],
            "nonzero": int(nonzero[i]),
            "variance_source": source,
        })

    if bound is None:
        hypergeom_diags = [sigma[i, i] for i in range(d)
                           if table_rows[i]["variance_source"] == "hypergeometric"]
        bound = max(hypergeom_diags, default=0.0)

    point = model.point(theta)
    grad = model.gradient(theta)
    variance = float(grad @ (sigma / sample_size) @ grad)
    variance = max(variance, 0.0)
    fpc = srswor_factor(population, sample_size)
    std_err = math.sqrt(variance * fpc)
    z = normal_quantile(1.0 - alpha0)
    return MarginEstimate(
        margin_kind=model.kind,
        point=point,
        variance_bound=variance,
        std_err=std_err,
        lower_bound=point - z * std_err,
        upper_bound=point + z * std_err,
        parameters_used=d,
        discrepancies=discrepant,
        ku_over_population=bound,
        parameter_table=table_rows,
    )
