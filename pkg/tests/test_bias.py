import json
import math
from fractions import Fraction

import numpy as np
import pytest

from evacs_audit.bias import (
    ELECTORATES_2020,
    ElectorateConfig,
    acceptance_counts,
    empirical_distribution,
    exact_column_distribution,
    format_table,
    load_electorates,
    report_2020,
    rows_to_json,
    unbiased_column_check,
)
from evacs_audit.prng import RangeMapping, mt_init


def brute_counts(p):
    return [sum(1 for r in range(256) if r % p == c) for c in range(p)]


def test_full_sweep_matches_enumeration():
    for p in range(1, 257):
        rep = exact_column_distribution(p)
        floor = 256 // p
        assert list(rep.counts) == brute_counts(p)
        assert rep.bias_metric == Fraction(256 % p, 256)
        assert rep.favored == {c for c in range(p) if c < 256 % p}
        assert all(k == floor + (c < 256 % p) for c, k in enumerate(rep.counts))


def test_eight_columns_unbiased():
    rep = exact_column_distribution(8)
    assert rep.counts == (32,) * 8 and rep.bias_metric == 0 and not rep.favored


def test_eleven_columns():
    rep = exact_column_distribution(11)
    assert rep.counts == (24,) * 3 + (23,) * 8
    assert rep.bias_metric == Fraction(3, 256)
    assert round(rep.percent, 1) == 1.2
    assert rep.favored == {0, 1, 2}


def test_nine_columns():
    rep = exact_column_distribution(9)
    assert rep.counts == (29,) * 4 + (28,) * 5
    assert rep.bias_metric == Fraction(4, 256)
    assert round(rep.percent, 1) == 1.6


def test_ten_columns():
    assert exact_column_distribution(10).counts == (26,) * 6 + (25,) * 4


@pytest.mark.parametrize("p", [0, 257, -3])
def test_column_range(p):
    with pytest.raises(ValueError):
        exact_column_distribution(p)


def test_empirical_single_column():
    rep = empirical_distribution(1, 1000, 3)
    assert rep.counts == (1000,) and rep.p_value == 1.0


def test_empirical_ten_columns_fits_exact():
    rep = empirical_distribution(10, 10**6, 2020)
    assert rep.p_value > 0.01


def test_empirical_nine_columns_within_three_sigma():
    n = 10**6
    rep = empirical_distribution(9, n, 77)
    for c, k in enumerate(rep.counts):
        prob = (29 if c < 4 else 28) / 256
        assert abs(k - n * prob) < 3 * math.sqrt(n * prob * (1 - prob))


@pytest.mark.parametrize("mapping", list(RangeMapping))
@pytest.mark.parametrize("p", [1, 9, 10, 11, 1_000_000])
def test_acceptance_counts_equal(p, mapping):
    counts = acceptance_counts(p, mapping)
    assert len(set(counts)) == 1 and counts[0] == 2**32 // p


def test_unbiased_fix_passes_chi_square():
    rep = unbiased_column_check(11, 10**6, 5)
    assert rep.analytic_equal and rep.p_value > 0.01
    assert sum(rep.counts) == 10**6


def test_unbiased_single_column():
    rep = unbiased_column_check(1, 100, 5)
    assert rep.counts == (100,) and rep.analytic_equal


def test_report_2020_rows():
    rows = {r.electorate: r for r in report_2020()}
    assert rows["Brindabella"].bias_metric == 0 and rows["Brindabella"].favored_labels == ()
    assert rows["Ginninderra"].bias_metric == Fraction(3, 256)
    assert len(rows["Ginninderra"].favored_labels) == 3
    for name in ("Kurrajong", "Murrumbidgee", "Yerrabi"):
        assert rows[name].bias_metric == Fraction(4, 256)
        assert rows[name].favored_labels == ("Column A", "Column B", "Column C", "Column D")


def test_report_needs_rows():
    with pytest.raises(ValueError):
        report_2020([])


def test_labels_must_match_columns():
    with pytest.raises(ValueError):
        ElectorateConfig("X", 3, ("a", "b"))


def test_json_and_table():
    rows = report_2020(ELECTORATES_2020)
    data = json.loads(rows_to_json(rows))
    assert data[1] == {"electorate": "Ginninderra", "columns": 11, "bias": "3/256", "bias_percent": 1.17,
                       "favored": ["Column A", "Column B", "Column C"]}
    table = format_table(rows).splitlines()
    assert table[0].split() == ["electorate", "columns", "bias", "percent", "favored"]
    assert "4/256" in table[-1] and "1.6%" in table[-1]


def test_load_electorates():
    cfgs = load_electorates(json.dumps([{"name": "Tiny", "columns": 2, "column_labels": ["L", "R"]}]))
    assert cfgs == [ElectorateConfig("Tiny", 2, ("L", "R"))]
    assert report_2020(cfgs)[0].bias_metric == 0


def test_trivial_p1_row():
    row = report_2020([ElectorateConfig("One", 1)])[0]
    assert row.bias_metric == 0 and row.favored_labels == ()


def test_biased_stream_reference():
    # the biased column is the low byte of the raw output, reduced mod p
    bg = np.random.MT19937()
    bg._legacy_seeding(2020)
    raw = bg.random_raw(2000)
    assert mt_init(2020).next_biased_column_many(9, 2000).tolist() == ((raw & 0xFF) % 9).tolist()
