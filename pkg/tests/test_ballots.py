import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from stvaudit.ballots import (
    BltParseError,
    Profile,
    first_restrict,
    fpv,
    parse_blt,
    parse_ranking_csv,
    project_ranking,
    tally_profile,
    write_blt,
)
from oracles import brute_force_tallies


def rankings(max_candidates=8, max_len=None):
    def build(draw):
        m = draw(st.integers(1, max_candidates))
        top = max_len if max_len is not None else m
        length = draw(st.integers(0, min(m, top)))
        perm = draw(st.permutations(range(m)))
        return tuple(perm[:length]), m

    return st.composite(build)()


@st.composite
def profiles(draw, max_candidates=6, max_voters=60):
    m = draw(st.integers(2, max_candidates))
    n = draw(st.integers(1, max_voters))
    voters = []
    for _ in range(n):
        length = draw(st.integers(0, m))
        perm = draw(st.permutations(range(m)))
        voters.append(tuple(perm[:length]))
    return Profile(tuple(voters), m)


class TestProjection:
    def test_erase_and_shift(self):
        assert project_ranking((5, 3, 12), {5, 12, 7}) == (5, 12)

    def test_empty_ranking_fixed_point(self):
        assert project_ranking((), {1, 2, 3}) == ()

    def test_identity(self):
        assert project_ranking((0, 1, 2), {0, 1, 2}) == (0, 1, 2)

    @given(rankings())
    def test_idempotent(self, rm):
        r, m = rm
        keep = set(range(0, m, 2))
        once = project_ranking(r, keep)
        assert project_ranking(once, keep) == once

    @given(rankings(), st.data())
    def test_functorial_on_nested_sets(self, rm, data):
        r, m = rm
        outer = set(data.draw(st.sets(st.integers(0, m - 1))))
        inner = set(data.draw(st.sets(st.sampled_from(sorted(outer) or [0]))))
        inner &= outer
        via = project_ranking(project_ranking(r, outer), inner)
        direct = project_ranking(r, inner)
        assert via == direct


class TestFpvAndRestrict:
    @pytest.mark.parametrize(
        "r,hopefuls,expected",
        [((3, 1, 4), {1, 4}, 1), ((3, 1, 4), {9}, -1), ((), {0, 1, 2}, -1)],
    )
    def test_fpv(self, r, hopefuls, expected):
        assert fpv(r, hopefuls) == expected

    @pytest.mark.parametrize(
        "r,length,expected",
        [((2, 7, 1), 2, (2, 7)), ((2, 7, 1), 5, (2, 7, 1)), ((), 3, ())],
    )
    def test_first_restrict(self, r, length, expected):
        assert first_restrict(r, length) == expected


class TestTallyProfile:
    def test_single_ballot(self):
        profile = Profile(((1, 0),), 2)
        table = tally_profile(profile, hopefuls=[0], winners=[1])
        assert table.T(1) == 1
        assert table.T(1, 0) == 1
        assert table.t(1) == 0
        assert table.ghost == 0

    def test_length_one_totals_plus_ghosts(self):
        profile = Profile(((0, 1), (1,), (), (2,)), 3)
        table = tally_profile(profile, hopefuls=[0, 1], winners=[])
        # candidate 2 is neither hopeful nor winner: its ballot projects empty
        assert table.T(0) + table.T(1) + table.ghost == profile.num_voters

    @given(profiles(), st.data())
    @settings(max_examples=60, deadline=None)
    def test_matches_per_ballot_classifier(self, profile, data):
        m = profile.candidate_count
        winners = data.draw(st.sets(st.integers(0, m - 1), max_size=2))
        hopefuls = set(range(m)) - winners
        table = tally_profile(profile, hopefuls, winners)
        init, exact, ghost = brute_force_tallies(profile.voters, hopefuls, winners)
        for key in set(table.initially_like) | set(init):
            assert table.initially_like.get(key, 0) == init.get(key, 0), key
        for key in set(table.exactly_like) | set(exact):
            assert table.exactly_like.get(key, 0) == exact.get(key, 0), key
        assert table.ghost == ghost

    def test_depth_cap(self):
        profile = Profile(((0, 1, 2),), 4)
        with pytest.raises(ValueError, match="degree-2 cap"):
            tally_profile(profile, [3], [0, 1, 2], max_prefix_depth=3)


class TestBlt:
    def test_header_and_single_ballot(self):
        data = b'6 3\n1 1 2 0\n0\n"a"\n"b"\n"c"\n"d"\n"e"\n"f"\n"t"\n'
        profile, seats = parse_blt(data)
        assert profile.candidate_count == 6
        assert seats == 3
        assert profile.voters == ((0, 1),)

    def test_weight_expansion(self):
        data = b'4 1\n3 4 0\n0\n"a"\n"b"\n"c"\n"d"\n"t"\n'
        profile, _ = parse_blt(data)
        assert profile.voters == ((3,), (3,), (3,))

    @given(profiles(max_candidates=5, max_voters=25), st.integers(1, 3))
    @settings(max_examples=40, deadline=None)
    def test_round_trip(self, profile, seats):
        back, seats_back = parse_blt(write_blt(profile, seats))
        assert back.voters == profile.voters
        assert back.candidate_count == profile.candidate_count
        assert seats_back == seats

    def test_fixture_round_trip(self, fixture_profile):
        profile, seats = fixture_profile
        back, _ = parse_blt(write_blt(profile, seats))
        assert back.voters == profile.voters

    @pytest.mark.parametrize(
        "data,fragment",
        [
            (b"6\n0\n", "header"),
            (b'2 1\n1 5 0\n0\n"a"\n"b"\n"t"\n', "out of range"),
            (b"2 1\n1 1 2\n", "end with 0"),
            (b"2 1\n1 1 0\n", "terminating"),
            (b'2 1\n1 1 1 0\n0\n"a"\n"b"\n"t"\n', "duplicate"),
        ],
    )
    def test_errors_carry_line_numbers(self, data, fragment):
        with pytest.raises(BltParseError, match=fragment) as err:
            parse_blt(data)
        assert err.value.lineno >= 1


class TestCsv:
    def test_indices(self):
        profile = parse_ranking_csv("rank1,rank2\n1,2\n2,\n", candidate_count=3)
        assert profile.voters == ((0, 1), (1,))

    def test_names(self):
        profile = parse_ranking_csv("alice,bob\nbob,\n", names=("alice", "bob"))
        assert profile.voters == ((0, 1), (1,))
