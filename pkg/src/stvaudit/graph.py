"""Election-state graphs: the universal space, LAM-budget audit graphs,
coherence and boundary computation, DOT/JSON export.

States are (hopefuls, winners) pairs. A state is complete when the winner set
is full or when hopefuls + winners exactly fill the seats (everyone remaining
wins). Graph construction expands states breadth-first by depth = candidates
removed from the hopeful set, including every transition an adversary holding
a budget of lam/2 ballot flips could force; the budget resets at every state.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

from .ballots import Profile, TallyTable, tally_profile
from .tabulation import (
    Classification,
    KeepFactorSolution,
    MeekParams,
    instant_hopeful_tallies,
    solve_instant_keep,
)

WINNER = "elected"
LOSER = "eliminated"

EdgeKind = tuple[str, int]


class PartialGraphError(RuntimeError):
    """Graph expansion exceeded the vertex cap; carries frontier statistics."""

    def __init__(self, vertex_count, depth, frontier_size):
        super().__init__(
            f"vertex cap exceeded: {vertex_count} states at depth {depth} "
            f"(frontier {frontier_size})"
        )
        self.vertex_count = vertex_count
        self.depth = depth
        self.frontier_size = frontier_size


@dataclass(frozen=True)
class ElectionState:
    hopefuls: frozenset[int]
    winners: frozenset[int]

    def __post_init__(self):
        if self.hopefuls & self.winners:
            raise ValueError("hopefuls and winners must be disjoint")

    @property
    def degree(self) -> int:
        return len(self.winners)

    def depth(self, num_candidates: int) -> int:
        return num_candidates - len(self.hopefuls)

    def is_complete(self, seats: int) -> bool:
        return len(self.winners) == seats or len(self.hopefuls) + len(self.winners) == seats

    def winner_set(self, seats: int) -> frozenset[int]:
        if len(self.winners) == seats:
            return self.winners
        if len(self.hopefuls) + len(self.winners) == seats:
            return self.hopefuls | self.winners
        raise ValueError("state is not complete")

    def sort_key(self):
        return (tuple(sorted(self.hopefuls)), tuple(sorted(self.winners)))

    def describe(self, name_of=str) -> str:
        hs = ",".join(name_of(c) for c in sorted(self.hopefuls))
        ws = ",".join(name_of(c) for c in sorted(self.winners))
        return f"H={{{hs}}} W={{{ws}}}"


def universal_neighbors(state: ElectionState, seats: int):
    """All universal-graph successors: elect one hopeful (while seats remain)
    or eliminate one hopeful."""
    out = []
    for c in sorted(state.hopefuls):
        if len(state.winners) < seats:
            out.append((ElectionState(state.hopefuls - {c}, state.winners | {c}), (WINNER, c)))
        out.append((ElectionState(state.hopefuls - {c}, state.winners), (LOSER, c)))
    return out


@dataclass
class StateInfo:
    table: TallyTable
    solution: KeepFactorSolution | None
    hopeful_tallies: dict[int, float]
    canonical: EdgeKind | None
    complete: bool
    degenerate: bool


@dataclass
class AuditGraph:
    seats: int
    num_candidates: int
    lam: float
    root: ElectionState
    layers: list[list[ElectionState]]
    edges: list[tuple[ElectionState, ElectionState, EdgeKind]]
    info: dict[ElectionState, StateInfo]
    names: tuple[str, ...] = ()
    cloud_skipped: tuple[int, ...] = ()

    @property
    def states(self):
        return [s for layer in self.layers for s in layer]

    def out_edges(self, state: ElectionState):
        return [(t, kind) for s, t, kind in self.edges if s == state]

    def terminal_states(self):
        return [s for s in self.states if self.info[s].complete]

    def name_of(self, c: int) -> str:
        if self.names:
            return self.names[c]
        return f"c{c}"


def _plausible_edges(state, tallies, quota, lam, seats):
    """Edge kinds an adversary with lam/2 flips could force from this state.

    A pairwise tally gap closes at 2 votes per flip; a tally-vs-quota margin
    moves at most ~1 vote per flip.
    """
    hopefuls = sorted(state.hopefuls)
    t_max = max(tallies[h] for h in hopefuls)
    t_min = min(tallies[h] for h in hopefuls)
    top = min(hopefuls, key=lambda c: (-tallies[c], c))
    if len(state.winners) < seats and tallies[top] >= quota:
        canonical: EdgeKind = (WINNER, top)
    else:
        canonical = (LOSER, min(hopefuls, key=lambda c: (tallies[c], c)))

    kinds = {canonical}
    if len(state.winners) < seats:
        for h in hopefuls:
            if t_max - tallies[h] < lam and quota - tallies[h] < lam / 2.0:
                kinds.add((WINNER, h))
    elimination_plausible = t_max < quota or t_max - quota < lam / 2.0
    if elimination_plausible:
        for h in hopefuls:
            if tallies[h] - t_min < lam:
                kinds.add((LOSER, h))
    return canonical, kinds


def _apply_edge(state: ElectionState, kind: EdgeKind) -> ElectionState:
    action, c = kind
    if action == WINNER:
        return ElectionState(state.hopefuls - {c}, state.winners | {c})
    return ElectionState(state.hopefuls - {c}, state.winners)


def mention_counts(profile: Profile) -> dict[int, int]:
    counts = {c: 0 for c in range(profile.candidate_count)}
    for r in profile.voters:
        for c in r:
            counts[c] += 1
    return counts


def build_audit_graph(
    cvr: Profile,
    seats: int,
    params: MeekParams,
    lam: float,
    vertex_cap: int = 5_000_000,
    skip_below_mentions: int | None = None,
) -> AuditGraph:
    """Breadth-first LAM-budget expansion from the root state.

    ``skip_below_mentions`` pre-eliminates candidates with fewer total
    mentions than the threshold before expansion starts; that shortcut is not
    statistically justified and is off by default.
    """
    if lam < 0:
        raise ValueError("lam must be >= 0")
    if seats >= cvr.candidate_count:
        raise ValueError("need more candidates than seats")
    n = cvr.num_voters

    skipped: tuple[int, ...] = ()
    live = frozenset(range(cvr.candidate_count))
    if skip_below_mentions is not None:
        counts = mention_counts(cvr)
        skipped = tuple(sorted(c for c in live if counts[c] < skip_below_mentions))
        if len(live) - len(skipped) <= seats:
            raise ValueError("mention threshold would remove too many candidates")
        live = live - set(skipped)

    root = ElectionState(live, frozenset())
    info: dict[ElectionState, StateInfo] = {}
    layers: list[list[ElectionState]] = [[root]]
    edges: list[tuple[ElectionState, ElectionState, EdgeKind]] = []
    seen = {root}
    frontier = [root]
    depth = 0

    while frontier:
        next_frontier: list[ElectionState] = []
        for state in sorted(frontier, key=ElectionState.sort_key):
            table = tally_profile(cvr, state.hopefuls, state.winners)
            if state.is_complete(seats):
                info[state] = StateInfo(table, None, {}, None, complete=True, degenerate=False)
                continue
            sol = solve_instant_keep(table, tuple(sorted(state.winners)), params, n)
            if sol.classification is Classification.DEGENERATE:
                info[state] = StateInfo(table, sol, {}, None, complete=False, degenerate=True)
                continue
            tallies = instant_hopeful_tallies(table, tuple(sorted(state.winners)), sol, state.hopefuls)
            canonical, kinds = _plausible_edges(state, tallies, sol.quota, lam, seats)
            info[state] = StateInfo(table, sol, tallies, canonical, complete=False, degenerate=False)
            for kind in sorted(kinds):
                target = _apply_edge(state, kind)
                edges.append((state, target, kind))
                if target not in seen:
                    seen.add(target)
                    next_frontier.append(target)
                    if len(seen) > vertex_cap:
                        raise PartialGraphError(len(seen), depth + 1, len(next_frontier))
        depth += 1
        if next_frontier:
            layers.append(sorted(next_frontier, key=ElectionState.sort_key))
        frontier = next_frontier

    return AuditGraph(seats, cvr.candidate_count, lam, root, layers, edges, info,
                      names=cvr.names, cloud_skipped=skipped)


def coherence_check(graph: AuditGraph):
    """True iff every complete state shares one winner set.

    Returns (ok, winner_set_or_None, conflicting_pair_or_None).
    """
    terminals = graph.terminal_states()
    if not terminals:
        return False, None, None
    sets = {}
    for s in terminals:
        sets.setdefault(s.winner_set(graph.seats), s)
    if len(sets) == 1:
        return True, next(iter(sets)), None
    (w1, s1), (w2, s2) = list(sets.items())[:2]
    return False, None, (s1, s2)


@dataclass(frozen=True)
class BoundaryEdge:
    source: ElectionState
    target: ElectionState
    kind: EdgeKind


def boundary(graph: AuditGraph) -> list[BoundaryEdge]:
    """Universal edges from included states to excluded ones.

    Complete states contribute nothing; degenerate dead-end states contribute
    every universal edge (they are never expanded).
    """
    included_edges = {(s, kind) for s, _, kind in graph.edges}
    out = []
    for state in graph.states:
        meta = graph.info[state]
        if meta.complete:
            continue
        for target, kind in universal_neighbors(state, graph.seats):
            if (state, kind) not in included_edges:
                out.append(BoundaryEdge(state, target, kind))
    return out


def export_dot(graph: AuditGraph) -> bytes:
    """Deterministic DOT rendering: one rank per layer, action-labelled edges."""
    ids = {}
    for d, layer in enumerate(graph.layers):
        for i, state in enumerate(layer):
            ids[state] = f"s{d}_{i}"
    lines = ["digraph audit {", "  rankdir=TB;", '  node [shape=box, fontsize=10];']
    for d, layer in enumerate(graph.layers):
        lines.append("  { rank = same;")
        for state in layer:
            label = state.describe(graph.name_of).replace('"', "'")
            suffix = ""
            meta = graph.info[state]
            if meta.degenerate:
                suffix = " (degenerate)"
            elif meta.complete:
                suffix = " (terminal)"
            lines.append(f'    {ids[state]} [label="{label}{suffix}"];')
        lines.append("  }")
    for source, target, (action, c) in sorted(
        graph.edges, key=lambda e: (ids[e[0]], ids[e[1]], e[2])
    ):
        verb = "Elect" if action == WINNER else "Eliminate"
        lines.append(f'  {ids[source]} -> {ids[target]} [label="{verb} {graph.name_of(c)}"];')
    lines.append("}")
    return ("\n".join(lines) + "\n").encode("utf-8")


def graph_to_json(graph: AuditGraph) -> dict:
    ids = {s: i for i, s in enumerate(graph.states)}
    states_payload = []
    for s in graph.states:
        meta = graph.info[s]
        entry = {
            "id": ids[s],
            "depth": s.depth(len(graph.root.hopefuls)),
            "hopefuls": sorted(s.hopefuls),
            "winners": sorted(s.winners),
            "complete": meta.complete,
            "degenerate": meta.degenerate,
            "tallies": {str(c): v for c, v in sorted(meta.hopeful_tallies.items())},
        }
        if meta.solution is not None:
            entry["keep_factors"] = {str(c): v for c, v in sorted(meta.solution.factors.items())}
            entry["quota"] = meta.solution.quota
            entry["classification"] = meta.solution.classification.value
        states_payload.append(entry)
    edges_payload = [
        {"source": ids[s], "target": ids[t], "kind": kind[0], "candidate": kind[1]}
        for s, t, kind in graph.edges
    ]
    return {
        "seats": graph.seats,
        "lam": graph.lam,
        "num_candidates": graph.num_candidates,
        "cloud_skipped": list(graph.cloud_skipped),
        "layers": [[ids[s] for s in layer] for layer in graph.layers],
        "states": states_payload,
        "edges": edges_payload,
    }


def dump_graph_json(graph: AuditGraph) -> bytes:
    return json.dumps(graph_to_json(graph), indent=2, sort_keys=True).encode("utf-8")
