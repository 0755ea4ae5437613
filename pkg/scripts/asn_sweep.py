"""Batch ASN sweep over synthetic profiles, producing the CSV the plotting
package consumes.

    python3 scripts/asn_sweep.py --profiles 30 --out asn_batch.csv
"""

import argparse
import pathlib
import sys

import numpy as np

sys.path.insert(0, str(pathlib.Path(__file__).parent.parent / "src"))

from stvaudit.asn import asn_csv_rows, empirical_asn, greedy_lam_search, write_asn_csv
from stvaudit.audit import AuditConfig
from stvaudit.ballots import Profile
from stvaudit.tabulation import MeekParams


def synthetic_profile(rng, index: int) -> Profile:
    """A random ranked profile with a planted two-bloc structure so margins
    spread over a wide range."""
    m_cands = int(rng.integers(4, 6))
    n = int(rng.integers(500, 1500))
    lead = rng.dirichlet(np.ones(m_cands) * 1.8)
    voters = []
    for _ in range(n):
        first = int(rng.choice(m_cands, p=lead))
        rest = [c for c in rng.permutation(m_cands) if c != first]
        length = int(rng.integers(0, len(rest) + 1))
        voters.append(tuple([first] + rest[:length]))
    return Profile(tuple(voters), m_cands, label=f"synthetic-{index:02d}")


def margin_curve_rows(args):
    """Controlled sweep: two population scales, planted winner margins, zero
    noise. ASN falls monotonically as the auditable margin grows."""
    params = MeekParams(seats=1)
    rows = []
    for n_pop in (800, 3200):
        for frac in np.geomspace(0.02, 0.30, args.profiles // 2):
            margin = max(4, int(round(frac * n_pop / 2)) * 2)
            lead = n_pop // 2 + margin // 2
            voters = [(0,)] * lead + [(1,)] * (n_pop - lead)
            profile = Profile(tuple(voters), 2, label=f"two-bloc-N{n_pop}-m{margin}")
            lam = max(2.0, margin * 0.4)
            found = greedy_lam_search(profile, 1, params, [lam])
            if found is None:
                continue
            lam, graph = found
            config = AuditConfig(sample_size=1, seed=args.seed, lam=lam, noise_rate=0.0)
            result = empirical_asn(profile, graph, config, trials=args.trials, params=params)
            rows.extend(asn_csv_rows(profile.label, n_pop, margin, result, args.trials))
            status = f"n={result.sample_size}" if result.auditable else "not auditable"
            print(f"{profile.label}: {status}")
    return rows


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--profiles", type=int, default=30)
    parser.add_argument("--seats", type=int, default=2)
    parser.add_argument("--eta", type=float, default=0.02)
    parser.add_argument("--trials", type=int, default=10)
    parser.add_argument("--seed", type=int, default=1)
    parser.add_argument("--mode", choices=("random", "curve"), default="random")
    parser.add_argument("--out", default="asn_batch.csv")
    args = parser.parse_args()

    if args.mode == "curve":
        rows = margin_curve_rows(args)
        out = pathlib.Path(args.out)
        out.write_text(write_asn_csv(rows))
        print(f"wrote {len(rows)} rows to {out}")
        return

    rng = np.random.default_rng(args.seed)
    params = MeekParams(seats=args.seats)
    rows = []
    for i in range(args.profiles):
        profile = synthetic_profile(rng, i)
        lam_grid = [round(profile.num_voters * f) for f in (0.005, 0.01, 0.02, 0.04, 0.08)]
        found = greedy_lam_search(profile, args.seats, params, lam_grid)
        if found is None:
            print(f"{profile.label}: unauditable at every grid LAM")
            continue
        lam, graph = found
        config = AuditConfig(sample_size=1, seed=args.seed + i, lam=lam,
                             noise_rate=args.eta)
        result = empirical_asn(profile, graph, config, trials=args.trials, params=params)
        rows.extend(asn_csv_rows(profile.label, profile.num_voters, lam, result, args.trials))
        status = f"n={result.sample_size}" if result.auditable else "not auditable"
        print(f"{profile.label}: N={profile.num_voters} lam={lam} -> {status}")

    out = pathlib.Path(args.out)
    out.write_text(write_asn_csv(rows))
    print(f"wrote {len(rows)} rows to {out}")


if __name__ == "__main__":
    main()
