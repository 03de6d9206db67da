from __future__ import annotations

from datetime import date, datetime, timezone
from pathlib import Path

import pytest
from dateutil.relativedelta import relativedelta
from hypothesis import given, settings
from hypothesis import strategies as st

from radfollow.temporal import (
    FAILURE_CODES,
    INVERTED_RANGE,
    NormalizedTimeFrame,
    UNSUPPORTED_PHRASE,
    add_duration,
    format_timeframe,
    parse_timeframe,
    project_date,
)

GOLDEN = Path(__file__).parent / "data" / "timeframes_golden.tsv"


def load_golden():
    cases = []
    for line in GOLDEN.read_text(encoding="utf-8").splitlines():
        if line.startswith("#") or not line.strip("\n"):
            continue
        phrase, expected = line.split("\t", 1)
        cases.append((phrase, expected))
    return cases


def describe(result) -> str:
    if not result.ok:
        return result.code
    return result.hi if result.lo == result.hi else f"{result.lo}..{result.hi}"


@pytest.mark.parametrize("phrase,expected", load_golden())
def test_golden(phrase, expected):
    assert describe(parse_timeframe(phrase)) == expected


def test_golden_file_size():
    assert len(load_golden()) >= 40


def test_range_kinds():
    r = parse_timeframe("4-5 weeks")
    assert r.kind == "range" and (r.lo, r.hi) == ("P4W", "P5W")
    assert parse_timeframe("3 months").kind == "point"


def test_failure_keeps_raw_text():
    r = parse_timeframe("second trimester")
    assert not r.ok and r.raw == "second trimester" and r.to_dict()["error"] == UNSUPPORTED_PHRASE


def test_non_string_input_is_a_failure():
    assert parse_timeframe(None).code == UNSUPPORTED_PHRASE
    assert parse_timeframe(3).code == UNSUPPORTED_PHRASE


def test_inverted_range_code():
    assert parse_timeframe("12 to 6 months").code == INVERTED_RANGE


@given(st.text(max_size=40))
@settings(max_examples=400, deadline=None)
def test_never_raises(s):
    r = parse_timeframe(s)
    assert r.ok or r.code in FAILURE_CODES


points = st.builds(
    lambda unit, lo, span: NormalizedTimeFrame("", "point" if span == 0 else "range", unit, lo, lo + span),
    st.sampled_from("DWMY"), st.integers(1, 60), st.integers(0, 24),
)


@given(points)
def test_format_round_trip(tf):
    back = parse_timeframe(format_timeframe(tf))
    assert back.ok
    assert (back.unit, back.lo_value, back.hi_value, back.kind) == (tf.unit, tf.lo_value, tf.hi_value, tf.kind)


@given(st.sampled_from("DWMY"), st.integers(1, 40), st.integers(1, 40))
def test_day_equivalents_monotone(unit, a, b):
    ta = parse_timeframe(f"{a} {'days weeks months years'.split()['DWMY'.index(unit)]}")
    tb = parse_timeframe(f"{b} {'days weeks months years'.split()['DWMY'.index(unit)]}")
    assert (a <= b) == (ta.hi_days() <= tb.hi_days())


@given(st.dates(min_value=date(1990, 1, 1), max_value=date(2040, 12, 31)), st.integers(1, 36),
       st.sampled_from("DWMY"))
def test_add_duration_matches_relativedelta(base, n, unit):
    delta = {"D": relativedelta(days=n), "W": relativedelta(weeks=n), "M": relativedelta(months=n),
             "Y": relativedelta(years=n)}[unit]
    assert add_duration(base, n, unit) == base + delta


@pytest.mark.parametrize("base,n,unit,expected", [
    (date(2020, 1, 31), 1, "M", date(2020, 2, 29)),
    (date(2019, 1, 31), 1, "M", date(2019, 2, 28)),
    (date(2020, 2, 29), 1, "Y", date(2021, 2, 28)),
    (date(2020, 8, 31), 3, "M", date(2020, 11, 30)),
    (date(2020, 12, 15), 1, "M", date(2021, 1, 15)),
])
def test_month_end_clamping(base, n, unit, expected):
    assert add_duration(base, n, unit) == expected


def test_projection_uses_range_end():
    ts = datetime(2015, 3, 10, 9, 0, tzinfo=timezone.utc)
    assert project_date(ts, parse_timeframe("6 to 12 months")) == date(2016, 3, 10)
    assert project_date(ts, parse_timeframe("4-5 weeks")) == date(2015, 4, 14)


def test_unknown_unit_rejected():
    with pytest.raises(ValueError):
        add_duration(date(2020, 1, 1), 1, "Q")
