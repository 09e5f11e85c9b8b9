"""Recover generator seeds from a published pindex set and rebuild cast order.

The scan has two phases. Phase 1 replays every candidate seed for only
``prefilter_depth + miss_threshold`` draws, vectorized over blocks of seeds,
and keeps the ``prefilter_top_k`` best. Phase 2 replays those few in full with
the scalar engine and applies the exact miss-threshold rule.
"""

from __future__ import annotations

import logging
import math
import multiprocessing
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Collection, Iterable, Iterator, Sequence

import numpy as np

from .election import PINDEX_RANGE, PublishedDataset, PublishedRow
from .prng import (
    DEFAULT_PROFILE,
    N as MT_WORDS,
    SEED_STRIDE,
    TWO32,
    GeneratorProfile,
    Seed32,
    draw_prefix,
    iter_stream,
    map_prefix,
    range_params,
)

log = logging.getLogger(__name__)

# Largest phase-1 prefix; leaves room for rejected raw draws within one twist.
MAX_PREFIX = 600
LUT_LIMIT = 1 << 27


class RecoveryError(Exception):
    pass


class SeedNotFound(RecoveryError):
    pass


class AmbiguousSeed(RecoveryError):
    def __init__(self, candidates: Sequence["RecoveryResult"]):
        self.candidates = list(candidates)
        seeds = ", ".join(str(c.seed) for c in self.candidates)
        super().__init__(f"{len(self.candidates)} seeds fully explain the pindex set: {seeds}")


@dataclass(frozen=True)
class RecoveryConfig:
    """Scan parameters. ``miss_threshold=None`` means ``max(8, ceil(5% of |set|))``."""

    miss_threshold: int | None = None
    seed_stride: int = SEED_STRIDE
    prefilter_depth: int = 10
    prefilter_top_k: int = 1024
    seed_range: tuple[int, int] = (0, TWO32)
    worker_count: int = 1
    min_segment: int = 10
    value_range: int = PINDEX_RANGE
    profile: GeneratorProfile = DEFAULT_PROFILE
    block_size: int = 1 << 14

    def __post_init__(self) -> None:
        lo, hi = self.seed_range
        if self.miss_threshold is not None and self.miss_threshold < 1:
            raise ValueError("miss_threshold must be at least 1")
        if self.seed_stride < 1:
            raise ValueError("seed_stride must be positive")
        if not 0 <= lo < hi <= TWO32:
            raise ValueError(f"seed range must satisfy 0 <= lo < hi <= 2**32, got {self.seed_range}")
        if lo % self.seed_stride:
            raise ValueError(f"seed range start {lo} is not a multiple of the stride {self.seed_stride}")
        if self.prefilter_depth < 1 or self.prefilter_top_k < 1:
            raise ValueError("prefilter depth and top_k must be positive")
        if self.worker_count < 1:
            raise ValueError("worker_count must be positive")
        if self.min_segment < 1:
            raise ValueError("min_segment must be positive")
        range_params(self.value_range)

    def threshold_for(self, set_size: int) -> int:
        if self.miss_threshold is not None:
            return self.miss_threshold
        return max(8, math.ceil(0.05 * set_size))

    @property
    def exhaustive(self) -> bool:
        """Whether the configured range is the whole 32-bit seed space."""
        return self.seed_range == (0, TWO32)

    @property
    def seed_count(self) -> int:
        lo, hi = self.seed_range
        return -(-(hi - lo) // self.seed_stride)


@dataclass(frozen=True)
class SeedScore:
    matched: int
    misses: int
    order: tuple[int, ...]


@dataclass(frozen=True)
class RecoveryResult:
    seed: Seed32
    ordered_pindexes: tuple[int, ...]
    miss_count: int
    matched_count: int
    exhaustive: bool


@dataclass(frozen=True)
class SegmentedResult:
    segments: tuple[RecoveryResult, ...]
    uncovered_pindexes: frozenset[int]


@dataclass
class ScanStats:
    seeds_scanned: int
    elapsed: float
    candidates: list[tuple[int, Seed32]] = field(default_factory=list)

    @property
    def seeds_per_second(self) -> float:
        return self.seeds_scanned / self.elapsed if self.elapsed > 0 else float("inf")


def _check_values(pindexes: Collection[int], n: int) -> None:
    bad = [v for v in pindexes if not 0 <= v < n]
    if bad:
        raise ValueError(f"pindex values outside [0, {n}): {sorted(bad)[:5]}")


def _replay(draws: Iterable[int], unseen: set[int], threshold: int) -> SeedScore:
    """Algorithm core: consume draws until the set is exhausted or misses hit the threshold."""
    order = []
    misses = 0
    if unseen:
        for r in draws:
            if r in unseen:
                unseen.discard(r)
                order.append(r)
                if not unseen:
                    break
            else:
                misses += 1
                if misses >= threshold:
                    break
    return SeedScore(len(order), misses, tuple(order))


def score_seed(seed: Seed32, pindexes: Collection[int], config: RecoveryConfig) -> SeedScore:
    """Replay ``seed`` against the set with the exact miss-threshold rule."""
    _check_values(pindexes, config.value_range)
    threshold = config.threshold_for(len(pindexes))
    return _replay(iter_stream(seed, config.value_range, config.profile), set(pindexes), threshold)


# ---------------------------------------------------------------------------
# phase 1


@dataclass(frozen=True)
class _ScanJob:
    lo: int
    hi: int
    stride: int
    members: np.ndarray
    set_size: int
    n: int
    depth: int
    threshold: int
    top_k: int
    block: int
    profile: GeneratorProfile


def _raw_budget(n: int, need: int) -> int:
    limit, _ = range_params(n)
    reject = 1 - limit / TWO32
    extra = 8 + math.ceil(3 * need * reject / max(1e-12, 1 - reject))
    return min(MT_WORDS, need + extra)


def _membership(job: _ScanJob, values: np.ndarray) -> np.ndarray:
    if job.members.dtype == np.bool_:
        return job.members[values]
    pos = np.searchsorted(job.members, values)
    np.minimum(pos, job.members.size - 1, out=pos)
    return job.members[pos] == values


def _prefix_score_exact(seed: int, job: _ScanJob) -> int:
    values = np.fromiter(
        (v for v, _ in zip(iter_stream(seed, job.n, job.profile), range(job.depth))),
        dtype=np.int64, count=job.depth,
    )
    hit = _membership(job, values)
    misses = np.cumsum(~hit)
    return min(int((hit & (misses < job.threshold)).sum()), job.set_size)


def _select(scores: np.ndarray, seeds: np.ndarray, k: int) -> tuple[np.ndarray, np.ndarray]:
    """Top ``k`` by score, ties to the lowest seed; zero scores dropped."""
    keep = scores > 0
    scores, seeds = scores[keep], seeds[keep]
    if scores.size > k:
        kth = np.partition(scores, scores.size - k)[scores.size - k]
        keep = scores >= kth
        scores, seeds = scores[keep], seeds[keep]
    order = np.lexsort((seeds, -scores))[:k]
    return scores[order], seeds[order]


def _scan(job: _ScanJob) -> tuple[np.ndarray, np.ndarray, int]:
    # Duplicate draws within the prefix count as hits here; phase 2 is exact.
    raw_count = _raw_budget(job.n, job.depth)
    best_scores = np.empty(0, np.int64)
    best_seeds = np.empty(0, np.int64)
    scanned = 0
    for start in range(job.lo, job.hi, job.block * job.stride):
        stop = min(job.hi, start + job.block * job.stride)
        seeds = np.arange(start, stop, job.stride, dtype=np.int64)
        raw = draw_prefix(seeds.astype(np.uint32), raw_count)
        values, complete = map_prefix(raw, job.n, job.depth, job.profile)
        hit = _membership(job, values)
        scores = np.zeros(seeds.size, dtype=np.int64)
        live = np.flatnonzero(hit.any(axis=0))
        if live.size:
            h = hit[:, live]
            misses = np.cumsum(~h, axis=0, dtype=np.int32)
            scores[live] = np.minimum((h & (misses < job.threshold)).sum(axis=0), job.set_size)
        for j in np.flatnonzero(~complete):
            scores[j] = _prefix_score_exact(int(seeds[j]), job)
        best_scores, best_seeds = _select(
            np.concatenate([best_scores, scores]), np.concatenate([best_seeds, seeds]), job.top_k
        )
        scanned += seeds.size
    return best_scores, best_seeds, scanned


def _partition(lo: int, hi: int, stride: int, parts: int) -> list[tuple[int, int]]:
    """Split the stride-aligned seeds of ``[lo, hi)`` into contiguous, near-equal chunks."""
    count = -(-(hi - lo) // stride)
    parts = max(1, min(parts, count))
    q, r = divmod(count, parts)
    bounds = []
    start = lo
    for i in range(parts):
        size = q + (1 if i < r else 0)
        stop = min(hi, start + size * stride)
        bounds.append((start, stop))
        start = stop
    return bounds


def scan_candidates(pindexes: Collection[int], config: RecoveryConfig,
                    threshold: int | None = None) -> ScanStats:
    """Phase 1 over ``config.seed_range``: best-scoring seeds, best first."""
    _check_values(pindexes, config.value_range)
    if threshold is None:
        threshold = config.threshold_for(len(pindexes))
    n = config.value_range
    values = np.fromiter(sorted(pindexes), dtype=np.int64, count=len(pindexes))
    if n <= LUT_LIMIT:
        members = np.zeros(n, dtype=bool)
        members[values] = True
    else:
        members = values
    depth = min(MAX_PREFIX, config.prefilter_depth + threshold)
    lo, hi = config.seed_range
    jobs = [
        _ScanJob(a, b, config.seed_stride, members, len(pindexes), n, depth, threshold,
                 config.prefilter_top_k, config.block_size, config.profile)
        for a, b in _partition(lo, hi, config.seed_stride, config.worker_count)
    ]
    t0 = time.perf_counter()
    if len(jobs) == 1:
        parts = [_scan(jobs[0])]
    else:
        ctx = multiprocessing.get_context("fork")
        with ProcessPoolExecutor(max_workers=len(jobs), mp_context=ctx) as pool:
            parts = list(pool.map(_scan, jobs))
    elapsed = time.perf_counter() - t0
    scores, seeds = _select(
        np.concatenate([p[0] for p in parts]), np.concatenate([p[1] for p in parts]),
        config.prefilter_top_k,
    )
    scanned = sum(p[2] for p in parts)
    log.info("scanned %d seeds in %.1fs (%.0f seeds/s), %d candidates",
             scanned, elapsed, scanned / max(elapsed, 1e-9), scores.size)
    return ScanStats(scanned, elapsed, [(int(s), int(x)) for s, x in zip(scores, seeds)])


# ---------------------------------------------------------------------------
# phase 2


class _CachedStream:
    """Lazily extended draw list for one seed, so rescoring never regenerates."""

    def __init__(self, seed: int, n: int, profile: GeneratorProfile):
        self.seed = seed
        self._source: Iterator[int] = iter_stream(seed, n, profile)
        self._values: list[int] = []

    def __iter__(self) -> Iterator[int]:
        i = 0
        while True:
            if i == len(self._values):
                self._values.append(next(self._source))
            yield self._values[i]
            i += 1


def _not_found_message(size: int, config: RecoveryConfig, threshold: int) -> str:
    lo, hi = config.seed_range
    return (
        f"no seed in [{lo:#x}, {hi:#x}) with stride {config.seed_stride} generates all "
        f"{size} pindex values within {threshold} misses. Either the seed lies outside the "
        f"scanned range, the generator profile ({config.profile.range_mapping.value} mapping) "
        f"does not match the one that produced the data, or the miss threshold is too small."
    )


def recover_seed(pindexes: Collection[int], config: RecoveryConfig = RecoveryConfig()) -> RecoveryResult:
    """Find the unique seed whose stream contains the whole set.

    Raises :class:`SeedNotFound` or :class:`AmbiguousSeed`.
    """
    if not pindexes:
        raise ValueError("need at least one pindex value")
    target = set(pindexes)
    threshold = config.threshold_for(len(target))
    stats = scan_candidates(target, config, threshold)
    full = []
    for _, seed in stats.candidates:
        score = _replay(iter_stream(seed, config.value_range, config.profile), set(target), threshold)
        if score.matched == len(target):
            full.append(RecoveryResult(seed, score.order, score.misses, score.matched, config.exhaustive))
    if not full:
        raise SeedNotFound(_not_found_message(len(target), config, threshold))
    if len(full) > 1:
        raise AmbiguousSeed(sorted(full, key=lambda r: r.seed))
    return full[0]


def recover_segments(pindexes: Collection[int], config: RecoveryConfig = RecoveryConfig()) -> SegmentedResult:
    """Peel off, largest first, the seed runs that explain parts of the set.

    One phase-1 scan supplies the candidates; after each segment is removed the
    survivors are rescored against what is left. A candidate's match count can
    only shrink as values are removed, so anything under ``min_segment`` is
    dropped for good.
    """
    if not pindexes:
        raise ValueError("need at least one pindex value")
    remaining = set(pindexes)
    threshold = config.threshold_for(len(remaining))
    stats = scan_candidates(remaining, config, threshold)
    live = [_CachedStream(seed, config.value_range, config.profile) for _, seed in stats.candidates]
    segments = []
    while remaining and live:
        scored = [(_replay(stream, set(remaining), threshold), stream) for stream in live]
        scored = [(s, st) for s, st in scored if s.matched >= config.min_segment]
        if not scored:
            break
        best, stream = max(scored, key=lambda item: (item[0].matched, -item[1].seed))
        segments.append(RecoveryResult(stream.seed, best.order, best.misses, best.matched, config.exhaustive))
        remaining.difference_update(best.order)
        live = [st for _, st in scored if st is not stream]
    return SegmentedResult(tuple(segments), frozenset(remaining))


# ---------------------------------------------------------------------------
# reordering and reports


@dataclass(frozen=True)
class OrderedBallot:
    segment: int
    seed: Seed32
    position: int
    pindex: int
    rows: tuple[PublishedRow, ...]


def _segments_of(result: RecoveryResult | SegmentedResult) -> tuple[RecoveryResult, ...]:
    if isinstance(result, SegmentedResult):
        return result.segments
    return (result,)


def reorder_votes(result: RecoveryResult | SegmentedResult, data: PublishedDataset,
                  batch: str | None = None) -> list[OrderedBallot]:
    """List the batch's ballots in recovered cast order, numbered from 1 per segment."""
    if batch is None:
        batches = data.electronic_batches() or data.batches()
        if len(batches) != 1:
            raise ValueError(f"dataset has {len(batches)} candidate batches; say which one to reorder")
        batch = batches[0]
    groups = data.groups(batch)
    listing = []
    for index, seg in enumerate(_segments_of(result), start=1):
        for position, pindex in enumerate(seg.ordered_pindexes, start=1):
            if pindex not in groups:
                raise KeyError(f"pindex {pindex} from the recovery result is not in batch {batch}")
            listing.append(OrderedBallot(index, seg.seed, position, pindex, tuple(groups[pindex])))
    return listing


def result_report(batch: str, result: RecoveryResult | SegmentedResult) -> dict:
    """JSON-ready report for one batch."""
    segments = _segments_of(result)
    order = [v for seg in segments for v in seg.ordered_pindexes]
    report = {
        "batch": batch,
        "status": "recovered",
        "seeds": [seg.seed for seg in segments],
        "matched": sum(seg.matched_count for seg in segments),
        "misses": sum(seg.miss_count for seg in segments),
        "exhaustive": all(seg.exhaustive for seg in segments) if segments else False,
        "order": order,
        "positions": [p for seg in segments for p in range(1, len(seg.ordered_pindexes) + 1)],
        "segments": [
            {
                "seed": seg.seed,
                "matched": seg.matched_count,
                "misses": seg.miss_count,
                "order": list(seg.ordered_pindexes),
            }
            for seg in segments
        ],
    }
    if len(segments) == 1 and not isinstance(result, SegmentedResult):
        report["seed"] = segments[0].seed
    if isinstance(result, SegmentedResult):
        report["uncovered"] = sorted(result.uncovered_pindexes)
    return report


def result_from_report(report: dict) -> RecoveryResult | SegmentedResult:
    segments = tuple(
        RecoveryResult(s["seed"], tuple(s["order"]), s["misses"], s["matched"], report.get("exhaustive", False))
        for s in report["segments"]
    )
    if "uncovered" in report:
        return SegmentedResult(segments, frozenset(report["uncovered"]))
    if len(segments) != 1:
        raise ValueError(f"report for batch {report.get('batch')} has no single recovered seed")
    return segments[0]
