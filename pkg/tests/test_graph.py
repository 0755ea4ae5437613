import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stvaudit.ballots import Profile
from stvaudit.graph import (
    AuditGraph,
    ElectionState,
    PartialGraphError,
    boundary,
    build_audit_graph,
    coherence_check,
    dump_graph_json,
    export_dot,
    universal_neighbors,
)
from stvaudit.tabulation import MeekParams, run_meek
from test_ballots import profiles

L, A, J, U, D, H = range(6)
PARAMS = MeekParams(seats=3)


@pytest.fixture(scope="module")
def fig_graph(fixture_profile):
    profile, seats = fixture_profile
    return build_audit_graph(profile, seats, MeekParams(seats=seats), lam=40)


class TestUniversalNeighbors:
    def test_root_like_state(self):
        s = ElectionState(frozenset({0, 1, 2}), frozenset())
        out = universal_neighbors(s, seats=2)
        assert len(out) == 6
        assert sum(1 for _, (kind, _) in out if kind == "elected") == 3

    def test_full_winner_set_blocks_elections(self):
        s = ElectionState(frozenset({0, 1}), frozenset({2, 3}))
        out = universal_neighbors(s, seats=2)
        assert len(out) == 2
        assert all(kind == "eliminated" for _, (kind, _) in out)

    def test_no_hopefuls_no_neighbors(self):
        s = ElectionState(frozenset(), frozenset({0, 1}))
        assert universal_neighbors(s, seats=2) == []


class TestCaseStudyTopology:
    def test_seven_states_and_edges(self, fig_graph):
        assert len(fig_graph.states) == 7
        assert len(fig_graph.edges) == 7

    def test_layer_shape(self, fig_graph):
        assert [len(layer) for layer in fig_graph.layers] == [1, 1, 2, 1, 1, 1]

    def test_branch_at_depth_one_and_reconvergence(self, fig_graph):
        v2 = fig_graph.layers[1][0]
        out = fig_graph.out_edges(v2)
        assert sorted(kind for _, kind in out) == [("elected", A), ("eliminated", H)]
        targets = {t for layer_state in fig_graph.layers[2] for t, _ in fig_graph.out_edges(layer_state)}
        assert len(targets) == 1  # both depth-2 branches land on the same state
        (v4,) = targets
        assert v4.hopefuls == frozenset({J, U, D})
        assert v4.winners == frozenset({L, A})

    def test_coherent_with_meek_winners(self, fig_graph):
        ok, winner_set, _ = coherence_check(fig_graph)
        assert ok
        assert winner_set == frozenset({L, A, U})

    def test_vertex_3a_is_irregular_but_expanded(self, fig_graph):
        (v3a,) = [s for s in fig_graph.layers[2] if s.winners == frozenset({L, A})]
        meta = fig_graph.info[v3a]
        assert meta.solution.classification.value == "irregular"
        assert fig_graph.out_edges(v3a) == [(ElectionState(frozenset({J, U, D}), frozenset({L, A})),
                                            ("eliminated", H))]

    def test_incoherent_at_wider_lam(self, fixture_profile):
        # the final-round gap is ~245 votes; a budget above twice the
        # winner's quota surplus lets the adversary flip the last seat
        profile, seats = fixture_profile
        g = build_audit_graph(profile, seats, MeekParams(seats=seats), lam=300)
        ok, winner_set, pair = coherence_check(g)
        assert not ok and winner_set is None
        sets = {s.winner_set(seats) for s in pair}
        assert sets == {frozenset({L, A, U}), frozenset({L, A, J})}


class TestLamZeroPath:
    def test_single_path_matches_run_meek(self, fixture_profile):
        profile, seats = fixture_profile
        g = build_audit_graph(profile, seats, MeekParams(seats=seats), lam=0)
        assert all(len(layer) == 1 for layer in g.layers)
        _, rounds = run_meek(profile, MeekParams(seats=seats))
        path_kinds = []
        state = g.root
        while g.out_edges(state):
            ((target, kind),) = g.out_edges(state)
            path_kinds.append(kind)
            state = target
        assert path_kinds == [r.action for r in rounds]

    @given(profiles(max_candidates=5, max_voters=50))
    @settings(max_examples=25, deadline=None)
    def test_canonical_containment_random(self, profile):
        seats = 2
        if profile.candidate_count <= seats:
            return
        params = MeekParams(seats=seats)
        try:
            _, rounds = run_meek(profile, params)
            g = build_audit_graph(profile, seats, params, lam=7)
        except Exception:
            return  # degenerate corner profiles are exercised elsewhere
        edge_set = {(s, kind) for s, _, kind in g.edges}
        state = g.root
        for record in rounds:
            if state.is_complete(seats) or g.info[state].degenerate:
                return  # remaining rounds only restate the decided winner set
            assert (state, record.action) in edge_set
            kind, c = record.action
            if kind == "elected":
                state = ElectionState(state.hopefuls - {c}, state.winners | {c})
            else:
                state = ElectionState(state.hopefuls - {c}, state.winners)


class TestMonotonicityAndFullSlice:
    def test_lam_monotone_on_fixture(self, fixture_profile):
        profile, seats = fixture_profile
        params = MeekParams(seats=seats)
        prev_states, prev_edges = None, None
        for lam in (0, 10, 40, 100, 300):
            g = build_audit_graph(profile, seats, params, lam=lam)
            states = set(g.states)
            edges = {(s, kind) for s, _, kind in g.edges}
            if prev_states is not None:
                assert prev_states <= states
                assert prev_edges <= edges
            prev_states, prev_edges = states, edges

    def test_huge_lam_gives_full_reachable_slice(self):
        voters = [(0, 1), (1, 2), (2, 3), (3, 0), (0, 2), (1, 3), (2,), (3,), (0,), (1,)]
        profile = Profile(tuple(voters), 4)
        params = MeekParams(seats=2)
        g = build_audit_graph(profile, 2, params, lam=2 * profile.num_voters)

        # independent enumeration: from the root, follow every universal edge
        # of every non-complete state
        seen = {g.root}
        frontier = [g.root]
        while frontier:
            nxt = []
            for s in frontier:
                if s.is_complete(2):
                    continue
                for t, _ in universal_neighbors(s, 2):
                    if t not in seen:
                        seen.add(t)
                        nxt.append(t)
            frontier = nxt
        assert set(g.states) == seen
        for s in g.states:
            meta = g.info[s]
            if not meta.complete and not meta.degenerate:
                assert len(g.out_edges(s)) == len(universal_neighbors(s, 2))


class TestBoundary:
    def test_disjoint_and_exhaustive(self, fig_graph):
        included = {(s, kind) for s, _, kind in fig_graph.edges}
        bound = {(e.source, e.kind) for e in boundary(fig_graph)}
        assert included.isdisjoint(bound)
        for s in fig_graph.states:
            if fig_graph.info[s].complete:
                continue
            expected = {(s, kind) for _, kind in universal_neighbors(s, fig_graph.seats)}
            got = {(src, kind) for src, kind in (included | bound) if src == s}
            assert got == expected

    def test_counts_on_case_study(self, fig_graph):
        # 12 + 10 + 8 + 8 + 6 + 4 universal edges over the six expanded
        # states, minus the 7 included edges
        assert len(boundary(fig_graph)) == 41

    def test_single_path_count(self, fixture_profile):
        profile, seats = fixture_profile
        g = build_audit_graph(profile, seats, MeekParams(seats=seats), lam=0)
        expected = sum(
            len(universal_neighbors(s, seats)) - 1
            for s in g.states
            if not g.info[s].complete
        )
        assert len(boundary(g)) == expected

    def test_livingstone_loser_edge_on_root_boundary(self, fig_graph):
        root_edges = [e for e in boundary(fig_graph) if e.source == fig_graph.root]
        assert any(e.kind == ("eliminated", L) for e in root_edges)
        assert len(root_edges) == 11


class TestExports:
    def test_dot_deterministic_and_shaped(self, fixture_profile):
        profile, seats = fixture_profile
        params = MeekParams(seats=seats)
        first = export_dot(build_audit_graph(profile, seats, params, lam=40))
        second = export_dot(build_audit_graph(profile, seats, params, lam=40))
        assert first == second
        text = first.decode()
        assert text.count(" -> ") == 7
        assert text.count("Elect ") == 4  # L, A (twice), U
        assert text.count("Eliminate ") == 3

    def test_lam0_dot_is_linear_chain(self, fixture_profile):
        profile, seats = fixture_profile
        dot = export_dot(build_audit_graph(profile, seats, MeekParams(seats=seats), lam=0)).decode()
        assert dot.count(" -> ") == 5

    def test_json_dump(self, fig_graph):
        import json

        payload = json.loads(dump_graph_json(fig_graph))
        assert payload["seats"] == 3
        assert len(payload["states"]) == 7
        assert len(payload["edges"]) == 7
        irregular = [s for s in payload["states"] if s.get("classification") == "irregular"]
        assert len(irregular) == 1


class TestLayerInvariants:
    def test_root_layer_and_distinctness(self, fig_graph):
        assert len(fig_graph.layers[0]) == 1
        assert fig_graph.layers[0][0] == fig_graph.root
        for layer in fig_graph.layers:
            assert len(set(layer)) == len(layer)

    def test_edges_advance_one_layer(self, fig_graph):
        depth = {s: d for d, layer in enumerate(fig_graph.layers) for s in layer}
        for source, target, _ in fig_graph.edges:
            assert depth[target] == depth[source] + 1


class TestGuards:
    def test_vertex_cap(self, fixture_profile):
        profile, seats = fixture_profile
        with pytest.raises(PartialGraphError):
            build_audit_graph(profile, seats, MeekParams(seats=seats), lam=10_000, vertex_cap=5)

    def test_cloud_skip_removes_unmentioned_candidate(self):
        voters = [(0,)] * 4 + [(1, 0)] * 3 + [(2, 1)] * 2
        profile = Profile(tuple(voters), 4)  # candidate 3 never mentioned
        g = build_audit_graph(profile, 1, MeekParams(seats=1), lam=0, skip_below_mentions=1)
        assert g.cloud_skipped == (3,)
        assert g.root.hopefuls == frozenset({0, 1, 2})

    def test_negative_lam_rejected(self, fixture_profile):
        profile, seats = fixture_profile
        with pytest.raises(ValueError):
            build_audit_graph(profile, seats, MeekParams(seats=seats), lam=-1)
