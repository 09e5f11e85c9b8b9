"""MT19937 engine with time-based 32-bit seeding, range mapping and state recovery.

The scalar :class:`MtState` is the reference engine used everywhere a single
stream is replayed. :func:`draw_prefix` computes the first few outputs of many
seeds at once and exists only to make exhaustive seed scans affordable.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

N = 624
M = 397
MATRIX_A = 0x9908B0DF
UPPER_MASK = 0x80000000
LOWER_MASK = 0x7FFFFFFF
INIT_MULT = 1812433253
MASK32 = 0xFFFFFFFF
TWO32 = 1 << 32

TEMPER_B = 0x9D2C5680
TEMPER_C = 0xEFC60000

# Only the low 32 bits of the nanosecond clock survive into the seed, and the
# low 3 of those are always zero.
SEED_PERIOD_NS = TWO32
SEED_ZERO_BITS = 3
SEED_STRIDE = 1 << SEED_ZERO_BITS

Seed32 = int


class RangeMapping(enum.Enum):
    """How an accepted 32-bit draw is folded onto ``[0, n)``."""

    SCALED = "scaled"
    MODULO = "modulo"


class ByteProjection(enum.Enum):
    LOW_BYTE = "low_byte"


@dataclass(frozen=True)
class GeneratorProfile:
    """Mapping choices layered on top of the raw generator.

    Both the simulator and the attacker must use the same profile; swapping it
    is the hook for a bit-exact model of some other runtime library.
    """

    range_mapping: RangeMapping = RangeMapping.SCALED
    raw_to_byte: ByteProjection = ByteProjection.LOW_BYTE


DEFAULT_PROFILE = GeneratorProfile()


def seed_from_time(t_ns: int) -> Seed32:
    """Seed derived from a nanosecond timestamp: wraps every 2**32 ns (~4.3 s)."""
    if t_ns < 0:
        raise ValueError(f"timestamp must be non-negative, got {t_ns}")
    return (t_ns % SEED_PERIOD_NS) & ~(SEED_STRIDE - 1) & MASK32


def time_for_seed(seed: Seed32, not_before_ns: int) -> int:
    """Earliest timestamp ``>= not_before_ns`` whose time-derived seed is ``seed``."""
    if seed % SEED_STRIDE:
        raise ValueError(f"seed {seed} cannot come from the clock (low bits set)")
    base = not_before_ns - not_before_ns % SEED_PERIOD_NS
    t = base + seed
    if t < not_before_ns:
        t += SEED_PERIOD_NS
    return t


def temper(y):
    """MT19937 output transform. Works on ints and on uint32 numpy arrays."""
    y = y ^ (y >> 11)
    y = y ^ ((y << 7) & TEMPER_B)
    y = y ^ ((y << 15) & TEMPER_C)
    return y ^ (y >> 18)


def _undo_right(y, shift):
    x = y
    for _ in range(32 // shift):
        x = y ^ (x >> shift)
    return x


def _undo_left(y, shift, mask):
    x = y
    for _ in range(32 // shift):
        x = y ^ ((x << shift) & mask)
    return x


def untemper(z):
    """Inverse of :func:`temper`."""
    z = _undo_right(z, 18)
    z = _undo_left(z, 15, TEMPER_C)
    z = _undo_left(z, 7, TEMPER_B)
    return _undo_right(z, 11)


def _init_words(seed: int) -> np.ndarray:
    words = [seed & MASK32]
    x = words[0]
    for i in range(1, N):
        x = (INIT_MULT * (x ^ (x >> 30)) + i) & MASK32
        words.append(x)
    return np.array(words, dtype=np.uint32)


@dataclass
class MtState:
    """Single-owner generator state: 624 words and a read cursor.

    ``cursor == 624`` means the next draw regenerates the word array first.
    """

    words: np.ndarray
    cursor: int = N
    profile: GeneratorProfile = field(default=DEFAULT_PROFILE)

    def __post_init__(self) -> None:
        self.words = np.asarray(self.words, dtype=np.uint32)
        if self.words.shape != (N,):
            raise ValueError(f"MT state needs {N} words, got {self.words.shape}")
        if not 0 <= self.cursor <= N:
            raise ValueError(f"cursor out of range: {self.cursor}")

    @classmethod
    def from_seed(cls, seed: Seed32, profile: GeneratorProfile = DEFAULT_PROFILE) -> "MtState":
        return cls(_init_words(seed), N, profile)

    def copy(self) -> "MtState":
        return MtState(self.words.copy(), self.cursor, self.profile)

    def next_u32(self) -> int:
        if self.cursor >= N:
            self.words = _twist(self.words)
            self.cursor = 0
        y = int(self.words[self.cursor])
        self.cursor += 1
        return temper(y)

    def next_u32_many(self, count: int) -> np.ndarray:
        """``count`` consecutive draws, identical to calling :meth:`next_u32` repeatedly."""
        out = np.empty(count, dtype=np.uint32)
        filled = 0
        while filled < count:
            if self.cursor >= N:
                self.words = _twist(self.words)
                self.cursor = 0
            take = min(count - filled, N - self.cursor)
            out[filled:filled + take] = self.words[self.cursor:self.cursor + take]
            self.cursor += take
            filled += take
        return temper(out)

    def next_in_range(self, n: int) -> int:
        """Unbiased draw from ``[0, n)`` by rejecting the top ``2**32 mod n`` raw values."""
        limit, bucket = range_params(n)
        while True:
            u = self.next_u32()
            if u < limit:
                return _map_accepted(u, n, bucket, self.profile)

    def next_in_range_many(self, n: int, count: int) -> np.ndarray:
        limit, bucket = range_params(n)
        parts = []
        got = 0
        while got < count:
            raw = self.next_u32_many(count - got).astype(np.uint64)
            raw = raw[raw < limit]
            parts.append(raw)
            got += raw.size
        accepted = np.concatenate(parts) if parts else np.empty(0, np.uint64)
        if self.profile.range_mapping is RangeMapping.SCALED:
            return (accepted // np.uint64(bucket)).astype(np.int64)
        return (accepted % np.uint64(n)).astype(np.int64)

    def next_biased_column(self, p: int) -> int:
        """Column pick that reduces to a byte first, then takes it modulo ``p``."""
        if not 1 <= p <= 256:
            raise ValueError(f"column count must be in 1..256, got {p}")
        return (self.next_u32() & 0xFF) % p

    def next_biased_column_many(self, p: int, count: int) -> np.ndarray:
        if not 1 <= p <= 256:
            raise ValueError(f"column count must be in 1..256, got {p}")
        return ((self.next_u32_many(count) & np.uint32(0xFF)) % np.uint32(p)).astype(np.int64)


def range_params(n: int) -> tuple[int, int]:
    """Return ``(limit, bucket)``: raw draws ``>= limit`` are rejected."""
    if not 1 <= n <= TWO32:
        raise ValueError(f"range size must be in 1..2**32, got {n}")
    bucket = TWO32 // n
    return bucket * n, bucket


def _map_accepted(u: int, n: int, bucket: int, profile: GeneratorProfile) -> int:
    if profile.range_mapping is RangeMapping.SCALED:
        return u // bucket
    return u % n


def mt_init(seed: Seed32, profile: GeneratorProfile = DEFAULT_PROFILE) -> MtState:
    return MtState.from_seed(seed, profile)


def next_u32(state: MtState) -> int:
    return state.next_u32()


def next_in_range(state: MtState, n: int) -> int:
    return state.next_in_range(n)


def next_biased_column(state: MtState, p: int) -> int:
    return state.next_biased_column(p)


def recover_state(outputs: Sequence[int], profile: GeneratorProfile = DEFAULT_PROFILE) -> MtState:
    """Clone a generator from 624 consecutive raw outputs.

    The clone sits exactly where the source generator is after producing them.
    """
    if len(outputs) != N:
        raise ValueError(f"need exactly {N} consecutive outputs, got {len(outputs)}")
    words = untemper(np.asarray(outputs, dtype=np.uint32))
    return MtState(words, N, profile)


def draw_prefix(seeds: np.ndarray, count: int) -> np.ndarray:
    """First ``count`` raw outputs for every seed; shape ``(count, len(seeds))``.

    Runs the seeding recurrence once across all seeds in lock-step. For
    ``count <= 227`` only the words feeding the first twisted outputs are kept.
    """
    if not 1 <= count <= N:
        raise ValueError(f"prefix length must be in 1..{N}, got {count}")
    x = np.array(seeds, dtype=np.uint32)
    width = x.size
    mult = np.uint32(INIT_MULT)
    tmp = np.empty_like(x)
    if count <= N - M:
        lo = np.empty((count + 1, width), np.uint32)
        hi = np.empty((count, width), np.uint32)
        lo[0] = x
        for i in range(1, M + count):
            np.right_shift(x, 30, out=tmp)
            np.bitwise_xor(x, tmp, out=x)
            np.multiply(x, mult, out=x)
            np.add(x, np.uint32(i), out=x)
            if i <= count:
                lo[i] = x
            if i >= M:
                hi[i - M] = x
        y = (lo[:-1] & np.uint32(UPPER_MASK)) | (lo[1:] & np.uint32(LOWER_MASK))
        words = hi ^ (y >> np.uint32(1)) ^ ((y & np.uint32(1)) * np.uint32(MATRIX_A))
        return temper(words)

    mt = np.empty((N, width), np.uint32)
    mt[0] = x
    for i in range(1, N):
        np.right_shift(x, 30, out=tmp)
        np.bitwise_xor(x, tmp, out=x)
        np.multiply(x, mult, out=x)
        np.add(x, np.uint32(i), out=x)
        mt[i] = x
    new = _twist(mt)
    return temper(new[:count])


def _twist(mt: np.ndarray) -> np.ndarray:
    """Regenerate all 624 words along axis 0, blocked so each slice reads finished words."""
    new = np.empty_like(mt)
    a = np.uint32(MATRIX_A)

    def mix(cur, nxt, far):
        y = (cur & np.uint32(UPPER_MASK)) | (nxt & np.uint32(LOWER_MASK))
        return far ^ (y >> np.uint32(1)) ^ ((y & np.uint32(1)) * a)

    k = N - M
    new[:k] = mix(mt[:k], mt[1:k + 1], mt[M:])
    for start in range(k, N - 1, k):
        stop = min(start + k, N - 1)
        new[start:stop] = mix(mt[start:stop], mt[start + 1:stop + 1], new[start - k:stop - k])
    new[N - 1] = mix(mt[N - 1], new[0], new[M - 1])
    return new


def map_prefix(raw: np.ndarray, n: int, need: int,
               profile: GeneratorProfile = DEFAULT_PROFILE) -> tuple[np.ndarray, np.ndarray]:
    """Apply rejection mapping column-wise to a raw prefix block.

    Returns ``(values, complete)`` where ``values`` has shape ``(need, width)``
    and ``complete[j]`` is False when column ``j`` had too many rejections to
    yield ``need`` accepted values (those columns hold garbage).
    """
    limit, bucket = range_params(n)
    if limit == TWO32:
        accepted = np.ones(raw.shape, dtype=bool)
    else:
        accepted = raw < np.uint32(limit)
    if profile.range_mapping is RangeMapping.SCALED:
        mapped = raw // np.uint32(bucket) if bucket < TWO32 else np.zeros_like(raw)
    else:
        mapped = raw % np.uint32(n) if n < TWO32 else raw
    head_ok = accepted[:need].all(axis=0)
    values = mapped[:need].astype(np.int64)
    complete = head_ok.copy()
    bad = np.flatnonzero(~head_ok)
    if bad.size:
        # stable sort puts accepted draws first, in draw order
        order = np.argsort(~accepted[:, bad], axis=0, kind="stable")[:need]
        values[:, bad] = np.take_along_axis(mapped[:, bad], order, axis=0)
        complete[bad] = accepted[:, bad].sum(axis=0) >= need
    return values, complete


def iter_stream(seed: Seed32, n: int, profile: GeneratorProfile = DEFAULT_PROFILE) -> Iterator[int]:
    """Endless ``next_in_range(n)`` values from a fresh generator seeded with ``seed``."""
    state = MtState.from_seed(seed, profile)
    limit, bucket = range_params(n)
    while True:
        for u in state.next_u32_many(N).tolist():
            if u < limit:
                yield _map_accepted(u, n, bucket, profile)
