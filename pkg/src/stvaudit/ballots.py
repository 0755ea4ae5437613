"""Rankings, profiles, projection/tally machinery, and ballot file ingestion.

Candidates are dense integer indices ``0..M-1``; display names live in a side
map on the profile. A ranking is an ordered tuple of distinct candidate
indices; the empty tuple is the (valid) empty ranking.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

Ranking = tuple[int, ...]

NONE_CANDIDATE = -1

# Prefix tallies deeper than this are never needed: degree-2 audits track
# winner prefixes of length <= 2 plus one hopeful extension.
MAX_PREFIX_DEPTH = 2


class BltParseError(ValueError):
    """Malformed BLT input; carries the 1-based line number."""

    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


def validate_ranking(entries: Ranking, candidate_count: int) -> Ranking:
    seen = set()
    for c in entries:
        if not 0 <= c < candidate_count:
            raise ValueError(f"candidate index {c} out of range [0, {candidate_count})")
        if c in seen:
            raise ValueError(f"duplicate candidate {c} in ranking {entries}")
        seen.add(c)
    return tuple(entries)


@dataclass(frozen=True)
class Profile:
    """An ordered sequence of voter rankings over ``candidate_count`` candidates."""

    voters: tuple[Ranking, ...]
    candidate_count: int
    label: str = ""
    names: tuple[str, ...] = ()

    def __post_init__(self):
        for r in self.voters:
            validate_ranking(r, self.candidate_count)
        if self.names and len(self.names) != self.candidate_count:
            raise ValueError("names must match candidate_count")

    @property
    def num_voters(self) -> int:
        return len(self.voters)

    def name_of(self, c: int) -> str:
        if self.names:
            return self.names[c]
        return f"c{c}"

    def with_voters(self, voters) -> "Profile":
        return Profile(tuple(voters), self.candidate_count, self.label, self.names)


def project_ranking(r: Ranking, keep) -> Ranking:
    """Erase entries outside ``keep`` and shift the rest left, preserving order."""
    return tuple(c for c in r if c in keep)


def fpv(r: Ranking, hopefuls) -> int:
    """First entry of the projection onto ``hopefuls``, or NONE_CANDIDATE."""
    for c in r:
        if c in hopefuls:
            return c
    return NONE_CANDIDATE


def first_restrict(r: Ranking, length: int) -> Ranking:
    """Truncate a ranking to its first ``length`` positions."""
    if length < 0:
        raise ValueError("length must be >= 0")
    return r[:length]


@dataclass
class TallyTable:
    """Prefix and exact-ranking counts of a profile projected onto a state.

    ``initially_like[s]`` counts ballots whose projected ranking starts with
    the prefix ``s`` (prefixes over the winner set, optionally extended by one
    hopeful). ``exactly_like[s]`` counts ballots whose entire projected
    ranking is ``s``, for rankings over the winner set only. ``ghost`` is the
    count of ballots with empty projection (= ``exactly_like[()]``).
    """

    initially_like: dict[Ranking, int] = field(default_factory=dict)
    exactly_like: dict[Ranking, int] = field(default_factory=dict)
    ghost: int = 0

    def T(self, *prefix: int) -> int:
        return self.initially_like.get(tuple(prefix), 0)

    def t(self, *ranking: int) -> int:
        return self.exactly_like.get(tuple(ranking), 0)


def _winner_prefixes(winners, max_depth: int):
    """All injective sequences over ``winners`` of length 0..max_depth."""
    out = [()]
    frontier = [()]
    for _ in range(max_depth):
        nxt = []
        for p in frontier:
            for w in winners:
                if w not in p:
                    nxt.append(p + (w,))
        out.extend(nxt)
        frontier = nxt
    return out


def tally_profile(profile: Profile, hopefuls, winners, max_prefix_depth: int | None = None) -> TallyTable:
    """Tally prefix and exact counts of ``profile`` projected onto H ∪ W.

    Tracks T_s for every winner prefix s of length <= max_prefix_depth,
    optionally extended by one hopeful, and t_s for every ranking made of
    winners only (the exhaust-relevant classes), with g = t_∅.
    """
    if max_prefix_depth is None:
        max_prefix_depth = min(len(winners), MAX_PREFIX_DEPTH)
    if max_prefix_depth > MAX_PREFIX_DEPTH:
        raise ValueError(
            f"max_prefix_depth {max_prefix_depth} exceeds the degree-2 cap of {MAX_PREFIX_DEPTH}"
        )
    hopefuls = frozenset(hopefuls)
    winners = frozenset(winners)
    if hopefuls & winners:
        raise ValueError("hopefuls and winners must be disjoint")
    live = hopefuls | winners

    tracked = set()
    for p in _winner_prefixes(winners, max_prefix_depth):
        tracked.add(p)
        for h in hopefuls:
            tracked.add(p + (h,))

    table = TallyTable()
    init = {p: 0 for p in tracked}
    exact: dict[Ranking, int] = {}
    for r in profile.voters:
        proj = project_ranking(r, live)
        for depth in range(min(len(proj), max_prefix_depth + 1) + 1):
            p = proj[:depth]
            if p in init:
                init[p] += 1
        if all(c in winners for c in proj):
            exact[proj] = exact.get(proj, 0) + 1
    table.initially_like = init
    table.exactly_like = exact
    table.ghost = exact.get((), 0)
    return table


def parse_blt(data: bytes | str):
    """Parse a BLT file into a (Profile, seats) pair.

    Format: header ``M m``; ballot lines ``w c1 c2 ... ck 0`` (weight,
    1-based candidate numbers, zero terminator); a lone ``0`` ends the
    ballots; then M quoted candidate names and one quoted title. Weighted
    lines are expanded to unit ballots.
    """
    if isinstance(data, bytes):
        text = data.decode("utf-8")
    else:
        text = data
    lines = text.splitlines()
    idx = 0

    def next_content_line():
        nonlocal idx
        while idx < len(lines):
            raw = lines[idx]
            idx += 1
            stripped = raw.split("#", 1)[0].strip()
            if stripped:
                return idx, stripped
        return idx, None

    lineno, header = next_content_line()
    if header is None:
        raise BltParseError(lineno, "empty BLT file")
    parts = header.split()
    if len(parts) != 2:
        raise BltParseError(lineno, f"header must be 'M m', got {header!r}")
    try:
        m_candidates, seats = int(parts[0]), int(parts[1])
    except ValueError:
        raise BltParseError(lineno, f"non-integer header {header!r}") from None
    if m_candidates < 1 or seats < 1:
        raise BltParseError(lineno, "candidate count and seats must be >= 1")

    voters: list[Ranking] = []
    terminated = False
    while True:
        lineno, line = next_content_line()
        if line is None:
            raise BltParseError(lineno, "missing terminating '0' ballot line")
        if line == "0":
            terminated = True
            break
        fields = line.split()
        try:
            numbers = [int(f) for f in fields]
        except ValueError:
            raise BltParseError(lineno, f"non-integer ballot token in {line!r}") from None
        if numbers[-1] != 0:
            raise BltParseError(lineno, "ballot line must end with 0")
        weight, raw_prefs = numbers[0], numbers[1:-1]
        if weight < 1:
            raise BltParseError(lineno, f"ballot weight must be >= 1, got {weight}")
        entries = []
        seen = set()
        for p in raw_prefs:
            if not 1 <= p <= m_candidates:
                raise BltParseError(lineno, f"candidate number {p} out of range 1..{m_candidates}")
            c = p - 1
            if c in seen:
                raise BltParseError(lineno, f"duplicate candidate {p} in ballot")
            seen.add(c)
            entries.append(c)
        ranking = tuple(entries)
        voters.extend([ranking] * weight)
    assert terminated

    names = []
    for _ in range(m_candidates):
        lineno, line = next_content_line()
        if line is None:
            raise BltParseError(lineno, "missing candidate name line")
        names.append(line.strip().strip('"'))
    lineno, title = next_content_line()
    title = (title or "").strip().strip('"')

    profile = Profile(tuple(voters), m_candidates, label=title, names=tuple(names))
    return profile, seats


def write_blt(profile: Profile, seats: int) -> bytes:
    """Serialize a profile to BLT bytes; one unit-weight line per ballot."""
    out = io.StringIO()
    out.write(f"{profile.candidate_count} {seats}\n")
    for r in profile.voters:
        prefs = " ".join(str(c + 1) for c in r)
        out.write(f"1 {prefs} 0\n".replace("  ", " "))
    out.write("0\n")
    for c in range(profile.candidate_count):
        out.write(f'"{profile.name_of(c)}"\n')
    out.write(f'"{profile.label}"\n')
    return out.getvalue().encode("utf-8")


def parse_ranking_csv(data: bytes | str, candidate_count: int | None = None,
                      names: tuple[str, ...] = (), label: str = "") -> Profile:
    """Parse the alternative CSV ballot format: one ballot per row, columns
    rank1..rankK, blank cell = no further preference.

    Cells hold candidate names when ``names`` is given, else 1-based indices.
    """
    if isinstance(data, bytes):
        data = data.decode("utf-8")
    reader = csv.reader(io.StringIO(data))
    rows = [row for row in reader if any(cell.strip() for cell in row)]
    if rows and rows[0] and rows[0][0].strip().lower().startswith("rank"):
        rows = rows[1:]
    name_to_idx = {n: i for i, n in enumerate(names)}
    voters = []
    max_idx = -1
    for row in rows:
        entries = []
        for cell in row:
            cell = cell.strip()
            if not cell:
                break
            if names:
                if cell not in name_to_idx:
                    raise ValueError(f"unknown candidate name {cell!r}")
                c = name_to_idx[cell]
            else:
                c = int(cell) - 1
            entries.append(c)
            max_idx = max(max_idx, c)
        voters.append(tuple(entries))
    if candidate_count is None:
        candidate_count = len(names) if names else max_idx + 1
    return Profile(tuple(voters), candidate_count, label=label, names=tuple(names))
