"""Development aid: check the synthetic case-study fixture against its targets.

Targets (mirroring the published 2012 Almond & Earn tabulations):
  * first preferences (1112, 892, 444, 628, 369, 244), N = 3689, m = 3
  * WIGM: R1 elect L; R2 elim H; R3 elect A; R4 elim D; R5 elim U (J beats U);
    R6 elect J -> winners {L, A, J}
  * Meek: R1 elect L (quota 922.25); R2 elim H with |T_A - q| < 20 and
    Dundas-Hayton gap >= 40; R3 elect A with T_A - q >= 20; R4 elim D with
    gaps >= 40; R5 elect U with T_U - T_J in [40, 100) -> winners {L, A, U}
  * instant keep factors at ({J,U,D,H}, {L,A}) within 5e-4 of (0.8130, 1.0029)
"""

import sys
from collections import Counter

sys.path.insert(0, "src")

from stvaudit.ballots import Profile, tally_profile
from stvaudit.tabulation import (
    MeekParams, run_meek, run_wigm, solve_instant_keep, instant_hopeful_tallies,
)

L, A, J, U, D, H = range(6)
NAMES = ("Alan Livingstone", "Henry Anderson", "Alan Jack",
         "Wilma Lumsden", "Andrew Dundas", "George Hayton")


def build_profile(counts):
    voters = []
    for ranking, count in counts.items():
        voters.extend([ranking] * count)
    return Profile(tuple(voters), 6, label="Almond and Earn 2012 (synthetic)", names=NAMES)


BALLOTS = {
    # Livingstone pile (1112): second-preference split fixed by the published
    # WIGM/Meek round-2 increments.
    (L, A, U): 51,
    (L, J): 290,
    (L, U, A): 73,
    (L, D): 168,
    (L, H): 141,
    (L,): 389,
    # Anderson pile (892): large Anderson->Lumsden bloc.
    (A, U, J): 500,
    (A, U): 200,
    (A, J): 96,
    (A,): 96,
    # Jack pile (444)
    (J,): 300,
    (J, A, U): 80,
    (J, D): 64,
    # Lumsden pile (628)
    (U, A, J): 400,
    (U, A): 128,
    (U,): 100,
    # Dundas pile (369)
    (D, A, J): 190,
    (D, U): 37,
    (D, A, U): 30,
    (D, A): 40,
    (D,): 72,
    # Hayton pile (244)
    (H, A): 75,
    (H, J): 103,
    (H, U): 32,
    (H, D): 30,
    (H,): 4,
}


def check(counts, verbose=True):
    profile = build_profile(counts)
    n = profile.num_voters
    piles = Counter()
    for r, c in counts.items():
        piles[r[0]] += c
    ok = True

    def report(name, cond, detail=""):
        nonlocal ok
        ok &= bool(cond)
        if verbose or not cond:
            print(f"  [{'ok' if cond else 'FAIL'}] {name} {detail}")

    report("N", n == 3689, f"N={n}")
    report("first prefs", tuple(piles[c] for c in range(6)) == (1112, 892, 444, 628, 369, 244),
           dict(piles))

    wigm_winners, wigm_rounds = run_wigm(profile, 3)
    actions = [(r.action, r.round_index) for r in wigm_rounds]
    if verbose:
        print("  WIGM rounds:")
        for r in wigm_rounds:
            print(f"    R{r.round_index} q={r.quota:.2f} {r.action} " +
                  " ".join(f"{NAMES[c].split()[1]}={v:.2f}" for c, v in sorted(r.tallies.items())))
    report("wigm winners", wigm_winners == {L, A, J}, wigm_winners)
    want = [("elected", L), ("eliminated", H), ("elected", A), ("eliminated", D),
            ("eliminated", U), ("elected", J)]
    report("wigm actions", [a for a, _ in actions] == want, [a for a, _ in actions])

    params = MeekParams(seats=3)
    meek_winners, meek_rounds = run_meek(profile, params)
    if verbose:
        print("  Meek rounds:")
        for r in meek_rounds:
            print(f"    R{r.round_index} q={r.quota:.2f} {r.action} " +
                  " ".join(f"{NAMES[c].split()[1]}={v:.2f}" for c, v in sorted(r.tallies.items())))
    report("meek winners", meek_winners == {L, A, U}, meek_winners)
    mact = [r.action for r in meek_rounds]
    want_m = [("elected", L), ("eliminated", H), ("elected", A), ("eliminated", D), ("elected", U)]
    report("meek actions", mact == want_m, mact)

    r2 = meek_rounds[1]
    report("meek R1 quota", abs(meek_rounds[0].quota - 922.25) < 0.005, f"{meek_rounds[0].quota:.4f}")
    report("meek R2 row (L/A/J/U)", all(abs(r2.tallies[c] - v) < 0.005 for c, v in
                              [(L, 904.07), (A, 901.54), (J, 498.23), (U, 641.65)]),
           {NAMES[c].split()[1]: round(v, 4) for c, v in sorted(r2.tallies.items())})
    report("v2 window |T_A - q| < 20", abs(r2.tallies[A] - r2.quota) < 20,
           f"{r2.tallies[A] - r2.quota:.2f}")
    report("v2 D-H gap in [110, 160]", 110 <= r2.tallies[D] - r2.tallies[H] <= 160,
           f"{r2.tallies[D] - r2.tallies[H]:.2f}")
    report("v2 no other loser edges", min(r2.tallies[J], r2.tallies[U]) - r2.tallies[H] >= 40)

    r3 = meek_rounds[2]
    report("v3b T_A - q in [60, 110]", 60 <= r3.tallies[A] - r3.quota <= 110, f"{r3.tallies[A] - r3.quota:.2f}")
    r4 = meek_rounds[3]
    gaps4 = sorted(r4.tallies[c] for c in (J, U, D))
    report("v4 elim gap >= 40", gaps4[1] - gaps4[0] >= 40, f"{gaps4[1] - gaps4[0]:.2f}")
    report("v4 top below q - 20", r4.quota - max(r4.tallies[c] for c in (J, U)) >= 20)
    r5 = meek_rounds[4]
    gap5 = r5.tallies[U] - r5.tallies[J]
    report("v5 U-J gap in [120, 260]", 120 <= gap5 <= 260, f"{gap5:.2f}")

    # 3a-analog: Anderson elected before Hayton eliminated
    table = tally_profile(profile, [J, U, D, H], [L, A])
    sol = solve_instant_keep(table, (L, A), params, n)
    kL, kA = sol.factors[L], sol.factors[A]
    report("3a keep factors", abs(kL - 0.8130) < 5e-4 and abs(kA - 1.0029) < 5e-4,
           f"kL={kL:.5f} kA={kA:.5f} ({sol.classification})")
    report("3a irregular", sol.classification.value == "irregular")
    h_tal = instant_hopeful_tallies(table, (L, A), sol, [J, U, D, H])
    report("3a D-H gap >= 110", h_tal[D] - h_tal[H] >= 110, f"{h_tal[D] - h_tal[H]:.2f}")
    report("3a canonical elim H", min(h_tal, key=lambda c: (h_tal[c], c)) == H)
    report("3a no winner edges", sol.quota - max(h_tal.values()) >= 20,
           f"q={sol.quota:.2f} top={max(h_tal.values()):.2f}")
    return ok, profile


if __name__ == "__main__":
    ok, profile = check(BALLOTS)
    print("ALL OK" if ok else "FAILURES PRESENT")
