"""Normalise follow-up time-frame phrases to ISO-8601 durations and project due dates.

Accepted forms (case-insensitive, surrounding punctuation ignored, an
optional leading ``in``/``within``/``after``/``about``/``approximately``/``every``):

    <n> <unit>            "3 months", "one year", "6-week"
    <n>-<m> <unit>        "4-5 weeks"
    <n> to <m> <unit>     "6 to 12 months"
    annual | annually | yearly
    P<n><D|W|M|Y>         already-normalised values

Numbers are digits or the words one..twenty. Anything else is returned as
a :class:`TimeFrameFailure` carrying one of the stable codes below; the
parser never raises on string input.
"""
from __future__ import annotations

import calendar
import re
from dataclasses import dataclass
from datetime import date, datetime, timedelta

UNSUPPORTED_PHRASE = "UNSUPPORTED_PHRASE"
NO_NUMBER = "NO_NUMBER"
NO_UNIT = "NO_UNIT"
INVERTED_RANGE = "INVERTED_RANGE"
FAILURE_CODES = (UNSUPPORTED_PHRASE, NO_NUMBER, NO_UNIT, INVERTED_RANGE)

# ordering only; never used for date projection
DAY_EQUIVALENT = {"D": 1, "W": 7, "M": 30, "Y": 365}
UNIT_NAMES = {"D": "day", "W": "week", "M": "month", "Y": "year"}

NUMBER_WORDS = {
    w: i
    for i, w in enumerate(
        "one two three four five six seven eight nine ten eleven twelve thirteen fourteen "
        "fifteen sixteen seventeen eighteen nineteen twenty".split(),
        start=1,
    )
}
UNIT_SYNONYMS = {
    "day": "D", "days": "D",
    "week": "W", "weeks": "W", "wk": "W", "wks": "W",
    "month": "M", "months": "M", "mo": "M", "mos": "M",
    "year": "Y", "years": "Y", "yr": "Y", "yrs": "Y",
}
ANNUAL = {"annual", "annually", "yearly"}

_NUM = r"(?:\d+|" + "|".join(sorted(NUMBER_WORDS, key=len, reverse=True)) + r")"
_UNIT = r"(?:" + "|".join(sorted(UNIT_SYNONYMS, key=len, reverse=True)) + r")"
_PHRASE = re.compile(
    rf"^(?:(?:in|within|after|about|approximately|approx|every)\s+)?"
    rf"(?P<a>{_NUM})(?:\s*(?:-|–|to)\s*(?P<b>{_NUM}))?\s*-?\s*(?P<unit>{_UNIT})$"
)
_ISO = re.compile(r"^p(\d+)([dwmy])$")
_HAS_NUM = re.compile(rf"\b{_NUM}\b")
_HAS_UNIT = re.compile(rf"\b{_UNIT}\b")
_STRIP = " \t\r\n.,;:!?()[]{}\"'"


@dataclass(frozen=True)
class NormalizedTimeFrame:
    raw: str
    kind: str  # "point" | "range"
    unit: str  # D | W | M | Y
    lo_value: int
    hi_value: int

    ok = True

    @property
    def lo(self) -> str:
        return f"P{self.lo_value}{self.unit}"

    @property
    def hi(self) -> str:
        return f"P{self.hi_value}{self.unit}"

    def lo_days(self) -> int:
        return self.lo_value * DAY_EQUIVALENT[self.unit]

    def hi_days(self) -> int:
        return self.hi_value * DAY_EQUIVALENT[self.unit]

    def to_dict(self) -> dict:
        return {"text": self.raw, "ok": True, "kind": self.kind, "lo": self.lo, "hi": self.hi}


@dataclass(frozen=True)
class TimeFrameFailure:
    raw: str
    code: str

    ok = False

    def to_dict(self) -> dict:
        return {"text": self.raw, "ok": False, "error": self.code}


def _number(tok: str) -> int:
    return int(tok) if tok.isdigit() else NUMBER_WORDS[tok]


def parse_timeframe(text: str) -> NormalizedTimeFrame | TimeFrameFailure:
    if not isinstance(text, str):
        return TimeFrameFailure(repr(text), UNSUPPORTED_PHRASE)
    s = re.sub(r"\s+", " ", text.strip(_STRIP).lower())
    if s in ANNUAL:
        return NormalizedTimeFrame(text, "point", "Y", 1, 1)
    m = _ISO.match(s)
    if m:
        n = int(m.group(1))
        if n == 0:
            return TimeFrameFailure(text, UNSUPPORTED_PHRASE)
        return NormalizedTimeFrame(text, "point", m.group(2).upper(), n, n)
    m = _PHRASE.match(s)
    if m:
        unit = UNIT_SYNONYMS[m.group("unit")]
        lo = _number(m.group("a"))
        hi = _number(m.group("b")) if m.group("b") else lo
        if lo == 0 or hi == 0:
            return TimeFrameFailure(text, UNSUPPORTED_PHRASE)
        if hi < lo:
            return TimeFrameFailure(text, INVERTED_RANGE)
        return NormalizedTimeFrame(text, "point" if lo == hi else "range", unit, lo, hi)
    has_num = _HAS_NUM.search(s) is not None
    has_unit = _HAS_UNIT.search(s) is not None
    if has_num and not has_unit:
        return TimeFrameFailure(text, NO_UNIT)
    if has_unit and not has_num:
        return TimeFrameFailure(text, NO_NUMBER)
    return TimeFrameFailure(text, UNSUPPORTED_PHRASE)


def format_timeframe(tf: NormalizedTimeFrame) -> str:
    """Canonical phrase that parses back to ``tf``."""
    name = UNIT_NAMES[tf.unit]
    if tf.kind == "point":
        return f"{tf.hi_value} {name}{'s' if tf.hi_value != 1 else ''}"
    return f"{tf.lo_value} to {tf.hi_value} {name}s"


def add_duration(base: date, amount: int, unit: str) -> date:
    """Calendar addition; month/year steps clamp to the end of the target month."""
    if unit == "D":
        return base + timedelta(days=amount)
    if unit == "W":
        return base + timedelta(days=7 * amount)
    months = amount if unit == "M" else 12 * amount
    if unit not in ("M", "Y"):
        raise ValueError(f"unknown unit {unit!r}")
    y, m0 = divmod(base.month - 1 + months, 12)
    year, month = base.year + y, m0 + 1
    day = min(base.day, calendar.monthrange(year, month)[1])
    return date(year, month, day)


def project_date(base: date | datetime, tf: NormalizedTimeFrame) -> date:
    """Due date for a follow-up: base date plus the end of the range."""
    if isinstance(base, datetime):
        base = base.date()
    return add_duration(base, tf.hi_value, tf.unit)
