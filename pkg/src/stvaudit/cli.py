"""Batch command-line surface.

Subcommands: tabulate, graph, audit, asn, verify-design, simulate. Human
summaries go to stdout; artifacts are written only to --out style paths.
Exit codes: 0 success, 2 validation error, 3 audit did not certify.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import asn as asn_mod
from .audit import (
    DESIGN_SCENARIOS,
    AuditConfig,
    add_ghosts,
    noise_profile,
    run_rla,
    verify_design,
)
from .ballots import BltParseError, parse_blt, write_blt
from .graph import build_audit_graph, coherence_check, dump_graph_json, export_dot
from .tabulation import MeekParams, run_meek, run_wigm

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NOT_CERTIFIED = 3

OUT_DIR_ENV = "STVAUDIT_OUT"


class CliError(Exception):
    pass


def _read_config_defaults(path: str) -> dict:
    """key = value lines; keys match long option names (dashes or underscores)."""
    defaults = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise CliError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        defaults[key.strip().replace("-", "_")] = value.strip()
    return defaults


def _resolve_out(path: str | None):
    if path is None:
        return None
    base = os.environ.get(OUT_DIR_ENV)
    p = Path(path)
    if base and not p.is_absolute():
        p = Path(base) / p
    p.parent.mkdir(parents=True, exist_ok=True)
    return p


def _load_profile(path: str):
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise CliError(f"cannot read {path}: {exc}") from None
    try:
        return parse_blt(data)
    except BltParseError as exc:
        raise CliError(f"{path}: {exc}") from None


def _params(args, seats: int) -> MeekParams:
    return MeekParams(seats=seats, min_surplus=args.epsilon, tolerance=args.omega)


def _round_log_payload(rule, seats, profile, winners, rounds):
    return {
        "rule": rule,
        "seats": seats,
        "num_voters": profile.num_voters,
        "label": profile.label,
        "winners": sorted(profile.name_of(c) for c in winners),
        "rounds": [r.to_json_dict(profile.name_of) for r in rounds],
    }


def _human_table(profile, winners, rounds) -> str:
    """Candidates-by-rounds table in the style of published STV abstracts."""
    candidates = sorted({c for r in rounds for c in r.tallies})
    decided: dict[int, tuple[str, int]] = {}
    cells: dict[tuple[int, int], str] = {}
    for idx, record in enumerate(rounds, 1):
        for c in candidates:
            if c in decided and c not in record.tallies:
                cells[(c, idx)] = decided[c][0]
            elif c in decided and decided[c][0] == "Elected":
                # Meek winners stay in the count at their calibrated tallies
                cells[(c, idx)] = f"{record.tallies[c]:.2f} *"
            elif c in record.tallies:
                cells[(c, idx)] = f"{record.tallies[c]:.2f}"
            else:
                cells[(c, idx)] = ""
        kind, cand = record.action
        decided[cand] = ("Elected" if kind == "elected" else "Eliminated", idx)
        if kind == "elected":
            cells[(cand, idx)] = f"{record.tallies[cand]:.2f} *"
    width = max(len(profile.name_of(c)) for c in candidates) + 2
    header = " " * width + "".join(f"Round {i:<4}".rjust(12) for i in range(1, len(rounds) + 1))
    lines = [header]
    for c in candidates:
        row = profile.name_of(c).ljust(width)
        row += "".join(cells[(c, i)].rjust(12) for i in range(1, len(rounds) + 1))
        lines.append(row)
    lines.append("Quota".ljust(width) + "".join(f"{r.quota:.2f}".rjust(12) for r in rounds))
    lines.append("Winners: " + ", ".join(sorted(profile.name_of(c) for c in winners)))
    return "\n".join(lines)


# --- subcommands ---------------------------------------------------------------


def _cmd_tabulate(args) -> int:
    profile, file_seats = _load_profile(args.ballots)
    seats = args.seats or file_seats
    params = _params(args, seats)
    if args.rule == "meek":
        winners, rounds = run_meek(profile, params)
    else:
        winners, rounds = run_wigm(profile, seats)
    print(_human_table(profile, winners, rounds))
    if args.round_log:
        payload = _round_log_payload(args.rule, seats, profile, winners, rounds)
        _resolve_out(args.round_log).write_text(json.dumps(payload, indent=2))
        print(f"round log written to {_resolve_out(args.round_log)}")
    return EXIT_OK


def _cmd_graph(args) -> int:
    profile, file_seats = _load_profile(args.ballots)
    seats = args.seats or file_seats
    if args.ghosts:
        profile = add_ghosts(profile, count=args.ghosts)
    params = _params(args, seats)
    graph = build_audit_graph(
        profile, seats, params, args.lam,
        vertex_cap=args.vertex_cap,
        skip_below_mentions=args.skip_below_mentions,
    )
    ok, winners, witness = coherence_check(graph)
    print(f"states: {len(graph.states)}  edges: {len(graph.edges)}  "
          f"layers: {[len(l) for l in graph.layers]}")
    if ok:
        print("coherent; winner set: " + ", ".join(sorted(graph.name_of(c) for c in winners)))
    else:
        print("INCOHERENT graph; conflicting terminals:")
        if witness:
            for s in witness:
                print("  " + s.describe(graph.name_of))
    if args.dot:
        _resolve_out(args.dot).write_bytes(export_dot(graph))
        print(f"dot written to {_resolve_out(args.dot)}")
    if args.json:
        _resolve_out(args.json).write_bytes(dump_graph_json(graph))
        print(f"graph json written to {_resolve_out(args.json)}")
    return EXIT_OK if ok else EXIT_NOT_CERTIFIED


def _cmd_audit(args) -> int:
    profile, file_seats = _load_profile(args.ballots)
    seats = args.seats or file_seats
    if args.ghosts:
        profile = add_ghosts(profile, count=args.ghosts)
    params = _params(args, seats)
    cvr = profile
    if args.paper_ballots:
        bal, _ = _load_profile(args.paper_ballots)
        if args.ghosts:
            bal = add_ghosts(bal, count=args.ghosts)
    else:
        bal = noise_profile(cvr, args.eta, seed=args.seed + 1)
    config = AuditConfig(
        sample_size=args.sample,
        alpha=args.alpha,
        alpha0=args.alpha0,
        alpha_k=args.alpha_k,
        seed=args.seed,
        lam=args.lam,
        noise_rate=args.eta,
        variance_strategy=args.variance_strategy,
    )
    graph = build_audit_graph(cvr, seats, params, args.lam, vertex_cap=args.vertex_cap)
    result = run_rla(bal, cvr, graph, config, params=params)
    certified = result.rejected_global
    print(f"sampled {len(result.sample_indices)} of {cvr.num_voters} ballots; "
          f"{result.discrepancy_count} discrepancies")
    rejected = sum(d.rejected for d in result.decisions)
    print(f"boundary edges rejected: {rejected}/{len(result.decisions)}")
    if certified:
        names = ", ".join(sorted(cvr.name_of(c) for c in result.certified_winners))
        print(f"AUDIT CERTIFIES winner set: {names}")
    else:
        print("audit did NOT certify (global null not rejected)")
    if args.report:
        _resolve_out(args.report).write_text(
            json.dumps(result.to_json_dict(cvr.name_of), indent=2)
        )
        print(f"report written to {_resolve_out(args.report)}")
    return EXIT_OK if certified else EXIT_NOT_CERTIFIED


def _cmd_asn(args) -> int:
    profile, file_seats = _load_profile(args.ballots)
    seats = args.seats or file_seats
    if args.ghosts:
        profile = add_ghosts(profile, count=args.ghosts)
    params = _params(args, seats)
    lam_grid = [float(x) for x in args.lam_grid.split(",")]
    found = asn_mod.greedy_lam_search(profile, seats, params, lam_grid,
                                      vertex_cap=args.vertex_cap)
    if found is None:
        print("profile not auditable at any grid LAM")
        return EXIT_NOT_CERTIFIED
    lam, graph = found
    config = AuditConfig(sample_size=1, seed=args.seed, lam=lam, noise_rate=args.eta)
    result = asn_mod.empirical_asn(profile, graph, config, trials=args.trials, params=params)
    if result.auditable:
        print(f"lam={lam:g} ASN: n={result.sample_size} "
              f"({result.sample_size / profile.num_voters:.2%}) "
              f"success={result.success_rate:.2f} over {args.trials} trials")
    else:
        print(f"lam={lam:g}: no sample size reached the success target")
    rows = asn_mod.asn_csv_rows(profile.label or args.ballots, profile.num_voters,
                                lam, result, args.trials)
    if args.out:
        _resolve_out(args.out).write_text(asn_mod.write_asn_csv(rows))
        print(f"csv written to {_resolve_out(args.out)}")
    return EXIT_OK if result.auditable else EXIT_NOT_CERTIFIED


def _cmd_verify_design(args) -> int:
    scenarios = [args.scenario] if args.scenario else list(DESIGN_SCENARIOS)
    lines = ["design,trials,errors,risk"]
    for scenario in scenarios:
        result = verify_design(scenario, args.trials, seed=args.seed)
        lines.append(f"{scenario},{result.trials},{result.errors},{result.risk:.6f}")
        print(f"{scenario}: {result.errors}/{result.trials} type-I errors "
              f"(risk {result.risk:.4f})")
    if args.out:
        _resolve_out(args.out).write_text("\n".join(lines) + "\n")
        print(f"csv written to {_resolve_out(args.out)}")
    return EXIT_OK


def _cmd_simulate(args) -> int:
    profile, seats = _load_profile(args.ballots)
    if args.ghosts:
        profile = add_ghosts(profile, count=args.ghosts)
    elif args.ghost_rate:
        profile = add_ghosts(profile, rate=args.ghost_rate)
    noised = noise_profile(profile, args.eta, seed=args.seed)
    out = _resolve_out(args.out)
    out.write_bytes(write_blt(noised, seats))
    changed = sum(a != b for a, b in zip(profile.voters, noised.voters))
    print(f"perturbed {changed} of {noised.num_voters} ballots; wrote {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stvaudit",
        description="Meek/WIGM tabulation and graph-based risk-limiting audits",
    )
    parser.add_argument("--config", help="key=value file preloading any long option")
    parser.add_argument("--jobs", type=int, default=1,
                        help="worker cap for batch subcommands (single-threaded today)")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, ballots=True):
        if ballots:
            p.add_argument("ballots", help="BLT ballot file")
            p.add_argument("--seats", type=int, help="override the BLT seat count")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--epsilon", type=float, default=1e-6, help="Meek minimum surplus")
        p.add_argument("--omega", type=float, default=1e-6, help="Meek tolerance")
        p.add_argument("--vertex-cap", type=int, default=5_000_000)

    p = sub.add_parser("tabulate", help="run one tabulation and print the round table")
    common(p)
    p.add_argument("--rule", choices=("meek", "wigm"), default="meek")
    p.add_argument("--round-log", help="write the round-by-round JSON log here")
    p.set_defaults(func=_cmd_tabulate)

    p = sub.add_parser("graph", help="build the LAM-budget audit graph")
    common(p)
    p.add_argument("--lam", type=float, required=True)
    p.add_argument("--ghosts", type=int, default=0)
    p.add_argument("--skip-below-mentions", type=int, default=None,
                   help="UNVERIFIED shortcut: pre-eliminate rarely mentioned candidates")
    p.add_argument("--dot", help="write Graphviz DOT here")
    p.add_argument("--json", help="write the graph dump here")
    p.set_defaults(func=_cmd_graph)

    p = sub.add_parser("audit", help="run one ballot-comparison audit")
    common(p)
    p.add_argument("--lam", type=float, required=True)
    p.add_argument("--sample", type=int, required=True, help="comparison sample size")
    p.add_argument("--alpha", type=float, default=0.05)
    p.add_argument("--alpha0", type=float, default=0.045)
    p.add_argument("--alpha-k", dest="alpha_k", type=float, default=0.005)
    p.add_argument("--eta", type=float, default=0.0,
                   help="synthetic noise rate when no paper ballot file is given")
    p.add_argument("--ghosts", type=int, default=0)
    p.add_argument("--paper-ballots", help="BLT of the true paper ballots (else synthesized)")
    p.add_argument("--variance-strategy", choices=("per-margin", "per-parameter", "global"),
                   default="per-margin")
    p.add_argument("--report", help="write the audit report JSON here")
    p.set_defaults(func=_cmd_audit)

    p = sub.add_parser("asn", help="greedy LAM search plus empirical ASN")
    common(p)
    p.add_argument("--lam-grid", default="10,20,40,80,160,320",
                   help="comma-separated ascending LAM grid")
    p.add_argument("--eta", type=float, default=0.02)
    p.add_argument("--ghosts", type=int, default=0)
    p.add_argument("--trials", type=int, default=50)
    p.add_argument("--out", help="write the ASN CSV here")
    p.set_defaults(func=_cmd_asn)

    p = sub.add_parser("verify-design", help="hypercube Monte Carlo risk checks")
    p.add_argument("--scenario", choices=DESIGN_SCENARIOS)
    p.add_argument("--trials", type=int, default=50000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", help="write the risk CSV here")
    p.set_defaults(func=_cmd_verify_design)

    p = sub.add_parser("simulate", help="emit a noised copy of a BLT file")
    common(p)
    p.add_argument("--eta", type=float, required=True)
    p.add_argument("--ghosts", type=int, default=0)
    p.add_argument("--ghost-rate", type=float, default=0.0)
    p.add_argument("--out", required=True, help="output BLT path")
    p.set_defaults(func=_cmd_simulate)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    # config files preload defaults; explicit flags still win
    if "--config" in argv:
        try:
            cfg_path = argv[argv.index("--config") + 1]
            defaults = _read_config_defaults(cfg_path)
        except (IndexError, OSError, CliError) as exc:
            print(f"error: bad config file: {exc}", file=sys.stderr)
            return EXIT_VALIDATION
        for action in parser._subparsers._group_actions:
            for sub_parser in getattr(action, "choices", {}).values():
                known = {a.dest for a in sub_parser._actions}
                sub_parser.set_defaults(
                    **{k: _coerce(sub_parser, k, v) for k, v in defaults.items() if k in known}
                )
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_VALIDATION if exc.code not in (0, None) else 0
    try:
        return args.func(args)
    except (CliError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


def _coerce(sub_parser, key, value):
    for action in sub_parser._actions:
        if action.dest == key and action.type is not None:
            return action.type(value)
    return value


if __name__ == "__main__":
    sys.exit(main())
