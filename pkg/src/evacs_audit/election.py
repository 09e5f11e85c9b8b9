"""Synthetic polling-place sessions and the published, pindex-sorted vote format."""

from __future__ import annotations

import csv
import io
import json
import logging
import random
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .prng import DEFAULT_PROFILE, GeneratorProfile, MtState, Seed32, seed_from_time, time_for_seed

log = logging.getLogger(__name__)

PINDEX_RANGE = 1_000_000
CSV_HEADER = ("electorate", "batch", "pindex", "rank", "party", "candidate")

TAG_PUBLISHED = "published"
TAG_TEST_VOTE = "miss:test-vote"
TAG_ABANDONED = "miss:abandoned"
TAG_DUPLICATE = "miss:duplicate-redraw"
MISS_TAGS = (TAG_TEST_VOTE, TAG_ABANDONED, TAG_DUPLICATE)

# 2020-09-28 08:00 AEST, first day of early voting
DEFAULT_FIRST_START_NS = 1_601_244_000 * 10**9
DAY_NS = 86_400 * 10**9

DEMO_PARTIES = {
    "ALP": ("ALP1", "ALP2", "ALP3", "ALP4", "ALP5"),
    "LIB": ("LIB1", "LIB2", "LIB3", "LIB4", "LIB5"),
    "GRN": ("GRN1", "GRN2", "GRN3"),
    "IND": ("IND1", "IND2"),
    "SUS": ("SUS1", "SUS2"),
}


class ScenarioError(ValueError):
    pass


class DatasetError(ValueError):
    pass


@dataclass(frozen=True)
class Preference:
    rank: int
    party_code: str
    candidate_code: str


@dataclass(frozen=True)
class BallotRecord:
    electorate: str
    batch_id: str
    pindex: int
    preferences: tuple[Preference, ...]
    cast_position: int


@dataclass
class PollingPlaceScenario:
    """One polling location over one or more days.

    A day with ``k`` server starts splits its votes evenly across them (earlier
    starts get the remainder). ``start_times`` holds one nanosecond timestamp
    per server start; when empty, times are drawn from the meta seed, optionally
    confined so every seed lands inside ``seed_window``.
    """

    name: str = "Belconnen"
    days: int = 1
    restarts_per_day: list[int] = field(default_factory=lambda: [1])
    votes_per_day: list[int] = field(default_factory=lambda: [100])
    miss_rate: float = 0.0
    start_times: list[int] = field(default_factory=list)
    electorate: str = "Ginninderra"
    batch_seq: int = 1
    seed_window: tuple[int, int] | None = None

    @property
    def batch_id(self) -> str:
        return f"{electorate_code(self.electorate)}{self.batch_seq:02d}000"

    @property
    def server_starts(self) -> int:
        return sum(self.restarts_per_day)

    def validate(self) -> None:
        if self.days < 1:
            raise ScenarioError("days must be positive")
        if len(self.restarts_per_day) != self.days or len(self.votes_per_day) != self.days:
            raise ScenarioError(
                f"restarts_per_day and votes_per_day need {self.days} entries, got "
                f"{len(self.restarts_per_day)} and {len(self.votes_per_day)}"
            )
        if any(r < 1 for r in self.restarts_per_day):
            raise ScenarioError("every day needs at least one server start")
        if any(v < 0 for v in self.votes_per_day):
            raise ScenarioError("vote counts cannot be negative")
        if not 0.0 <= self.miss_rate < 1.0:
            raise ScenarioError(f"miss_rate must be in [0, 1), got {self.miss_rate}")
        if sum(self.votes_per_day) >= PINDEX_RANGE:
            raise ScenarioError(
                f"{sum(self.votes_per_day)} votes in one batch cannot get distinct pindex "
                f"values from a space of {PINDEX_RANGE}; split the batch"
            )
        if self.start_times and len(self.start_times) != self.server_starts:
            raise ScenarioError(
                f"expected {self.server_starts} start times, got {len(self.start_times)}"
            )
        if self.seed_window is not None:
            lo, hi = self.seed_window
            if not 0 <= lo < hi <= 1 << 32 or hi - lo < 8:
                raise ScenarioError(f"bad seed window {self.seed_window}")


def electorate_code(name: str) -> str:
    letters = "".join(ch for ch in name.upper() if ch.isalpha())
    return (letters[:3] or "XXX").ljust(3, "X")


@dataclass
class Draw:
    value: int
    tag: str


@dataclass
class ServerStart:
    day: int
    restart: int
    start_time_ns: int
    seed: Seed32
    draws: list[Draw] = field(default_factory=list)

    def published_values(self) -> list[int]:
        return [d.value for d in self.draws if d.tag == TAG_PUBLISHED]

    def effective_misses(self) -> int:
        """Misses a full replay meets before the session's last published value."""
        last = max((i for i, d in enumerate(self.draws) if d.tag == TAG_PUBLISHED), default=-1)
        return sum(1 for d in self.draws[:last] if d.tag != TAG_PUBLISHED)


@dataclass
class TruthLog:
    """Ground truth for one batch: every server start and every draw it made."""

    batch_id: str
    electorate: str
    starts: list[ServerStart] = field(default_factory=list)

    @property
    def seeds(self) -> list[Seed32]:
        return [s.seed for s in self.starts]

    def published_sequence(self) -> list[int]:
        return [v for s in self.starts for v in s.published_values()]

    def to_dict(self) -> dict:
        return {
            "batch": self.batch_id,
            "electorate": self.electorate,
            "starts": [
                {
                    "day": s.day,
                    "restart": s.restart,
                    "start_time_ns": s.start_time_ns,
                    "seed": s.seed,
                    "draws": [[d.value, d.tag] for d in s.draws],
                }
                for s in self.starts
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TruthLog":
        starts = [
            ServerStart(
                day=s["day"],
                restart=s["restart"],
                start_time_ns=s["start_time_ns"],
                seed=s["seed"],
                draws=[Draw(v, t) for v, t in s["draws"]],
            )
            for s in data["starts"]
        ]
        return cls(data["batch"], data["electorate"], starts)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=1)


def _start_times(scenario: PollingPlaceScenario, rng: random.Random) -> list[int]:
    if scenario.start_times:
        return list(scenario.start_times)
    times = []
    for day, restarts in enumerate(scenario.restarts_per_day):
        t = DEFAULT_FIRST_START_NS + day * DAY_NS + rng.randrange(3600 * 10**9)
        for _ in range(restarts):
            if scenario.seed_window is not None:
                lo, hi = scenario.seed_window
                seed = rng.randrange(-(-lo // 8) * 8, hi, 8)
                t = time_for_seed(seed, t)
            times.append(t)
            t += rng.randrange(3600 * 10**9, 4 * 3600 * 10**9)
    return times


def _split(total: int, parts: int) -> list[int]:
    q, r = divmod(total, parts)
    return [q + (1 if i < r else 0) for i in range(parts)]


def _demo_preferences(rng: random.Random) -> tuple[Preference, ...]:
    pool = [(party, cand) for party, cands in DEMO_PARTIES.items() for cand in cands]
    depth = rng.randint(1, 7)
    picks = rng.sample(pool, depth)
    return tuple(Preference(i + 1, party, cand) for i, (party, cand) in enumerate(picks))


def simulate(
    scenario: PollingPlaceScenario,
    meta_seed: int,
    profile: GeneratorProfile = DEFAULT_PROFILE,
) -> tuple[TruthLog, list[BallotRecord]]:
    """Run the voting server for every start in the scenario.

    Each voter takes one ``next_in_range(1_000_000)`` draw. Before a voter, the
    server may burn draws on test votes or abandoned sessions (each draw is such
    a miss with probability ``miss_rate``). A value already handed out in this
    batch is tagged a duplicate and drawn again. ``meta_seed`` drives everything
    except the generator itself: times, misses and preferences.
    """
    scenario.validate()
    rng = random.Random(meta_seed)
    times = _start_times(scenario, rng)
    truth = TruthLog(scenario.batch_id, scenario.electorate)
    ballots: list[BallotRecord] = []
    used: set[int] = set()
    position = 0
    start_index = 0

    for day, (restarts, votes) in enumerate(zip(scenario.restarts_per_day, scenario.votes_per_day)):
        for restart, n_votes in enumerate(_split(votes, restarts)):
            t = times[start_index]
            start_index += 1
            seed = seed_from_time(t)
            session = ServerStart(day + 1, restart + 1, t, seed)
            truth.starts.append(session)
            state = MtState.from_seed(seed, profile)

            def fresh(tag: str) -> int:
                while True:
                    value = state.next_in_range(PINDEX_RANGE)
                    if value in used:
                        session.draws.append(Draw(value, TAG_DUPLICATE))
                        continue
                    used.add(value)
                    session.draws.append(Draw(value, tag))
                    return value

            for _ in range(n_votes):
                while scenario.miss_rate and rng.random() < scenario.miss_rate:
                    fresh(TAG_TEST_VOTE if rng.random() < 0.5 else TAG_ABANDONED)
                pindex = fresh(TAG_PUBLISHED)
                position += 1
                ballots.append(
                    BallotRecord(
                        scenario.electorate, scenario.batch_id, pindex,
                        _demo_preferences(rng), position,
                    )
                )
    log.debug("simulated %s: %d starts, %d ballots", scenario.batch_id, len(truth.starts), len(ballots))
    return truth, ballots


@dataclass(frozen=True)
class PublishedRow:
    electorate: str
    batch: str
    pindex: int
    rank: int
    party: str
    candidate: str


@dataclass
class PublishedDataset:
    """Rows in published order. ``warnings`` is parse-time metadata, not data."""

    rows: list[PublishedRow] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list, compare=False)

    def batches(self) -> list[str]:
        seen: dict[str, None] = {}
        for row in self.rows:
            seen.setdefault(row.batch, None)
        return list(seen)

    def electronic_batches(self) -> list[str]:
        return [b for b in self.batches() if is_electronic(b)]

    def groups(self, batch: str) -> dict[int, list[PublishedRow]]:
        """Rows of one batch keyed by pindex, in published order."""
        out: dict[int, list[PublishedRow]] = {}
        for row in self.rows:
            if row.batch == batch:
                out.setdefault(row.pindex, []).append(row)
        return out

    def pindexes(self, batch: str) -> set[int]:
        return {row.pindex for row in self.rows if row.batch == batch}

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(CSV_HEADER)
        for r in self.rows:
            writer.writerow((r.electorate, r.batch, r.pindex, r.rank, r.party, r.candidate))
        return buf.getvalue()


def is_electronic(batch_id: str) -> bool:
    return batch_id.endswith("000")


def export_published(ballots: Iterable[BallotRecord]) -> PublishedDataset:
    """Flatten ballots to one row per preference, sorted by (batch, pindex, rank)."""
    seen: set[tuple[str, int]] = set()
    rows = []
    for b in ballots:
        key = (b.batch_id, b.pindex)
        if key in seen:
            raise DatasetError(f"pindex {b.pindex} appears twice in batch {b.batch_id}")
        seen.add(key)
        for p in b.preferences:
            rows.append(PublishedRow(b.electorate, b.batch_id, b.pindex, p.rank, p.party_code, p.candidate_code))
    rows.sort(key=lambda r: (r.batch, r.pindex, r.rank))
    return PublishedDataset(rows)


def parse_published(csv_text: str) -> PublishedDataset:
    """Parse the published CSV. Ordering problems become warnings, bad rows errors."""
    reader = csv.reader(io.StringIO(csv_text))
    try:
        header = next(reader)
    except StopIteration:
        raise DatasetError("line 1: missing header row") from None
    if tuple(h.strip() for h in header) != CSV_HEADER:
        raise DatasetError(f"line 1: expected header {','.join(CSV_HEADER)}, got {','.join(header)}")

    rows: list[PublishedRow] = []
    for fields in reader:
        line = reader.line_num
        if not fields:
            continue
        if len(fields) != len(CSV_HEADER):
            raise DatasetError(f"line {line}: expected {len(CSV_HEADER)} fields, got {len(fields)}")
        electorate, batch, pindex, rank, party, candidate = fields
        try:
            pindex_i = int(pindex)
            rank_i = int(rank)
        except ValueError:
            raise DatasetError(f"line {line}: pindex and rank must be integers, got {pindex!r}, {rank!r}") from None
        rows.append(PublishedRow(electorate, batch, pindex_i, rank_i, party, candidate))

    return PublishedDataset(rows, _order_warnings(rows))


def _order_warnings(rows: Sequence[PublishedRow]) -> list[str]:
    warnings = []
    last: dict[str, int] = {}
    closed: set[tuple[str, int]] = set()
    current: tuple[str, int] | None = None
    for i, row in enumerate(rows, start=2):
        key = (row.batch, row.pindex)
        if key != current:
            if key in closed:
                warnings.append(f"line {i}: pindex {row.pindex} in batch {row.batch} is not contiguous")
            prev = last.get(row.batch)
            if prev is not None and row.pindex < prev:
                warnings.append(f"line {i}: batch {row.batch} not sorted by pindex ({row.pindex} after {prev})")
            if current is not None:
                closed.add(current)
            current = key
            last[row.batch] = row.pindex
    return warnings
