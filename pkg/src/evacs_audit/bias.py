"""Modulo bias in the initial ballot-column pick, and the unbiased alternative."""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

import numpy as np
from scipy import stats

from .prng import TWO32, GeneratorProfile, MtState, RangeMapping, range_params

BYTE_VALUES = 256


@dataclass(frozen=True)
class ElectorateConfig:
    name: str
    columns: int
    column_labels: tuple[str, ...] = ()

    def __post_init__(self) -> None:
        if self.columns < 1:
            raise ValueError(f"{self.name}: need at least one column")
        if not self.column_labels:
            object.__setattr__(self, "column_labels", tuple(f"Column {chr(65 + i) if i < 26 else i + 1}"
                                                            for i in range(self.columns)))
        if len(self.column_labels) != self.columns:
            raise ValueError(f"{self.name}: {self.columns} columns but {len(self.column_labels)} labels")


# Column counts on the 2020 ballots. Party order within each ballot is not
# modelled, so labels are positional.
ELECTORATES_2020 = (
    ElectorateConfig("Brindabella", 8),
    ElectorateConfig("Ginninderra", 11),
    ElectorateConfig("Kurrajong", 9),
    ElectorateConfig("Murrumbidgee", 9),
    ElectorateConfig("Yerrabi", 9),
)


@dataclass(frozen=True)
class BiasReport:
    p: int
    counts: tuple[int, ...]
    favored: frozenset[int]
    bias_metric: Fraction

    @property
    def percent(self) -> float:
        return float(self.bias_metric) * 100


def _check_columns(p: int) -> None:
    if not 1 <= p <= BYTE_VALUES:
        raise ValueError(f"column count must be in 1..{BYTE_VALUES}, got {p}")


def exact_column_distribution(p: int) -> BiasReport:
    """Count, over every byte value ``r``, how often ``r % p`` picks each column."""
    _check_columns(p)
    counts = [0] * p
    for r in range(BYTE_VALUES):
        counts[r % p] += 1
    floor = BYTE_VALUES // p
    favored = frozenset(c for c, k in enumerate(counts) if k > floor)
    return BiasReport(p, tuple(counts), favored, Fraction(BYTE_VALUES % p, BYTE_VALUES))


@dataclass(frozen=True)
class EmpiricalReport:
    p: int
    trials: int
    counts: tuple[int, ...]
    expected: tuple[float, ...]
    chi_square: float
    p_value: float


def _goodness_of_fit(counts: np.ndarray, probs: np.ndarray, trials: int) -> tuple[float, float]:
    expected = probs * trials
    if counts.size == 1:
        return 0.0, 1.0
    res = stats.chisquare(counts, expected)
    return float(res.statistic), float(res.pvalue)


def empirical_distribution(p: int, trials: int, seed: int) -> EmpiricalReport:
    """Sample the biased pipeline and test the counts against the exact enumeration."""
    _check_columns(p)
    if trials < 1:
        raise ValueError("trials must be positive")
    cols = MtState.from_seed(seed).next_biased_column_many(p, trials)
    counts = np.bincount(cols, minlength=p)
    exact = exact_column_distribution(p)
    probs = np.array(exact.counts, dtype=float) / BYTE_VALUES
    chi2, pval = _goodness_of_fit(counts, probs, trials)
    return EmpiricalReport(p, trials, tuple(int(c) for c in counts), tuple(probs * trials), chi2, pval)


@dataclass(frozen=True)
class UnbiasedReport:
    p: int
    trials: int
    acceptance_counts: tuple[int, ...]
    analytic_equal: bool
    counts: tuple[int, ...]
    chi_square: float
    p_value: float


def acceptance_counts(p: int, mapping: RangeMapping = RangeMapping.SCALED) -> tuple[int, ...]:
    """Number of accepted raw 32-bit values that land on each column."""
    limit, bucket = range_params(p)
    if mapping is RangeMapping.SCALED:
        return tuple(min(limit, (c + 1) * bucket) - c * bucket for c in range(p))
    return tuple((limit - c + p - 1) // p for c in range(p))


def unbiased_column_check(p: int, trials: int, seed: int,
                          mapping: RangeMapping = RangeMapping.SCALED) -> UnbiasedReport:
    """Check the rejection-sampled column pick both analytically and by sampling."""
    if p < 1 or p > TWO32:
        raise ValueError(f"column count must be in 1..2**32, got {p}")
    if trials < 1:
        raise ValueError("trials must be positive")
    accepted = acceptance_counts(p, mapping)
    state = MtState.from_seed(seed, GeneratorProfile(range_mapping=mapping))
    cols = state.next_in_range_many(p, trials)
    counts = np.bincount(cols, minlength=p)
    chi2, pval = _goodness_of_fit(counts, np.full(p, 1.0 / p), trials)
    return UnbiasedReport(p, trials, accepted, len(set(accepted)) == 1,
                          tuple(int(c) for c in counts), chi2, pval)


@dataclass(frozen=True)
class BiasRow:
    electorate: str
    columns: int
    bias_metric: Fraction
    favored_labels: tuple[str, ...]

    def to_dict(self) -> dict:
        return {
            "electorate": self.electorate,
            "columns": self.columns,
            "bias": f"{int(self.bias_metric * BYTE_VALUES)}/{BYTE_VALUES}",
            "bias_percent": round(float(self.bias_metric) * 100, 2),
            "favored": list(self.favored_labels),
        }


def report_2020(configs: Sequence[ElectorateConfig] = ELECTORATES_2020) -> list[BiasRow]:
    if not configs:
        raise ValueError("need at least one electorate")
    rows = []
    for cfg in configs:
        rep = exact_column_distribution(cfg.columns)
        labels = tuple(cfg.column_labels[c] for c in sorted(rep.favored))
        rows.append(BiasRow(cfg.name, cfg.columns, rep.bias_metric, labels))
    return rows


def format_table(rows: Sequence[BiasRow]) -> str:
    header = ("electorate", "columns", "bias", "percent", "favored")
    body = [
        (r.electorate, str(r.columns), f"{int(r.bias_metric * BYTE_VALUES)}/256",
         f"{float(r.bias_metric) * 100:.1f}%", ", ".join(r.favored_labels) or "-")
        for r in rows
    ]
    widths = [max(len(line[i]) for line in [header, *body]) for i in range(len(header))]
    lines = ["  ".join(cell.ljust(w) for cell, w in zip(line, widths)).rstrip() for line in [header, *body]]
    return "\n".join(lines)


def rows_to_json(rows: Sequence[BiasRow]) -> str:
    return json.dumps([r.to_dict() for r in rows], indent=2)


def load_electorates(text: str) -> list[ElectorateConfig]:
    """Electorate list from JSON: ``[{"name": ..., "columns": p, "column_labels": [...]}, ...]``."""
    data = json.loads(text)
    return [ElectorateConfig(e["name"], int(e["columns"]), tuple(e.get("column_labels", ()))) for e in data]
