"""Patient timelines and follow-up adherence analyses.

Two analyses over per-patient report timelines:

* same-modality: a recommendation report counts as followed when the same
  patient has any strictly later report of the same modality;
* timed: each recommendation with a normalised time frame gets a due date
  (report date plus the end of the range). It is censored when the due date
  falls after ``dataset_end``; otherwise the first strictly later
  same-modality report decides early (on or before due + grace), late
  (after), or no follow-up (none at all). Reports aggregate their
  recommendations: all censored -> censored, else any no-follow-up ->
  no_followup, else any late -> late, else early.
"""
from __future__ import annotations

import csv
from bisect import bisect_right
from collections import defaultdict
from dataclasses import dataclass, field
from datetime import date, datetime, timedelta
from typing import Iterable, Mapping, Sequence, TextIO

from .corpus import Modality
from .temporal import NormalizedTimeFrame, project_date

NO_FOLLOWUP, EARLY, LATE, CENSORED = "no_followup", "early", "late", "censored"
OUTCOMES = (NO_FOLLOWUP, EARLY, LATE, CENSORED)


@dataclass(frozen=True, order=True)
class TimelineEntry:
    timestamp: datetime
    report_id: str
    modality: Modality
    patient_id: str = field(compare=False, default="")


@dataclass
class Timeline:
    patient_id: str
    entries: list[TimelineEntry]
    # per modality: sorted timestamps, for first-later lookups
    _by_modality: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.entries.sort()
        by_mod = defaultdict(list)
        for e in self.entries:
            by_mod[e.modality].append(e)
        self._by_modality = {m: ([e.timestamp for e in es], es) for m, es in by_mod.items()}

    def next_same_modality(self, entry: TimelineEntry) -> TimelineEntry | None:
        """First report of the same modality strictly after ``entry``'s timestamp."""
        stamps, entries = self._by_modality[entry.modality]
        i = bisect_right(stamps, entry.timestamp)
        return entries[i] if i < len(entries) else None


def build_timelines(reports: Iterable) -> dict[str, Timeline]:
    """Group reports (anything with patient_id/report_id/modality/timestamp) by patient.

    Entries are sorted by timestamp, ties broken by report id.
    """
    grouped: dict[str, list[TimelineEntry]] = defaultdict(list)
    for r in reports:
        grouped[r.patient_id].append(TimelineEntry(r.timestamp, r.report_id, r.modality, r.patient_id))
    return {pid: Timeline(pid, entries) for pid, entries in sorted(grouped.items())}


def _index(timelines: Mapping[str, Timeline]) -> dict[str, tuple[Timeline, TimelineEntry]]:
    return {e.report_id: (tl, e) for tl in timelines.values() for e in tl.entries}


@dataclass
class SameModalityResult:
    counts: dict[Modality, dict[str, int]]
    followed: dict[str, bool]


def analyze_same_modality(timelines: Mapping[str, Timeline], rec_report_ids: Iterable[str]) -> SameModalityResult:
    index = _index(timelines)
    counts = {m: {"with_followup": 0, "without_followup": 0} for m in Modality}
    followed = {}
    for rid in sorted(set(rec_report_ids)):
        tl, entry = index[rid]
        ok = tl.next_same_modality(entry) is not None
        followed[rid] = ok
        counts[entry.modality]["with_followup" if ok else "without_followup"] += 1
    return SameModalityResult(counts, followed)


@dataclass
class RecommendationOutcome:
    timeframe: str
    projected: date
    status: str
    followup_report_id: str | None = None


@dataclass
class AdherenceRecord:
    report_id: str
    patient_id: str
    modality: Modality
    recommendations: list[RecommendationOutcome]
    outcome: str


def aggregate_outcome(statuses: Sequence[str]) -> str:
    live = [s for s in statuses if s != CENSORED]
    if not live:
        return CENSORED
    if NO_FOLLOWUP in live:
        return NO_FOLLOWUP
    if LATE in live:
        return LATE
    return EARLY


def recommendation_status(
    tl: Timeline, entry: TimelineEntry, tf: NormalizedTimeFrame, dataset_end: date, grace_days: int = 0
) -> RecommendationOutcome:
    projected = project_date(entry.timestamp, tf)
    if projected > dataset_end:
        return RecommendationOutcome(tf.hi, projected, CENSORED)
    nxt = tl.next_same_modality(entry)
    if nxt is None:
        return RecommendationOutcome(tf.hi, projected, NO_FOLLOWUP)
    status = EARLY if nxt.timestamp.date() <= projected + timedelta(days=grace_days) else LATE
    return RecommendationOutcome(tf.hi, projected, status, nxt.report_id)


@dataclass
class TimedResult:
    counts: dict[Modality, dict[str, int]]
    records: list[AdherenceRecord]


def analyze_timed(
    timelines: Mapping[str, Timeline],
    timed_recs: Mapping[str, Sequence[NormalizedTimeFrame]],
    dataset_end: date,
    grace_days: int = 0,
) -> TimedResult:
    """Timed adherence; only reports with at least one normalised time frame take part."""
    if isinstance(dataset_end, datetime):
        dataset_end = dataset_end.date()
    index = _index(timelines)
    counts = {m: {o: 0 for o in OUTCOMES} for m in Modality}
    records = []
    for rid in sorted(timed_recs):
        tfs = timed_recs[rid]
        if not tfs:
            continue
        tl, entry = index[rid]
        recs = [recommendation_status(tl, entry, tf, dataset_end, grace_days) for tf in tfs]
        outcome = aggregate_outcome([r.status for r in recs])
        counts[entry.modality][outcome] += 1
        records.append(AdherenceRecord(rid, tl.patient_id, entry.modality, recs, outcome))
    return TimedResult(counts, records)


def default_dataset_end(timelines: Mapping[str, Timeline]) -> date:
    return max(e.timestamp for tl in timelines.values() for e in tl.entries).date()


# -- tables -------------------------------------------------------------------

def _share(n: int, d: int) -> str:
    return f"{n / d:.2f}" if d else "0.00"


def write_table9(counts: Mapping[Modality, Mapping[str, int]], out: TextIO) -> None:
    """Same-modality table; shares are fractions of each row's report count."""
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["modality", "n_reports", "without_followup", "with_followup", "without_share", "with_share"])
    tot = {"without_followup": 0, "with_followup": 0}
    for m in Modality:
        c = counts.get(m, {})
        wo, wi = c.get("without_followup", 0), c.get("with_followup", 0)
        tot["without_followup"] += wo
        tot["with_followup"] += wi
        w.writerow([m.value, wo + wi, wo, wi, _share(wo, wo + wi), _share(wi, wo + wi)])
    wo, wi = tot["without_followup"], tot["with_followup"]
    w.writerow(["Total", wo + wi, wo, wi, _share(wo, wo + wi), _share(wi, wo + wi)])


def write_table10(counts: Mapping[Modality, Mapping[str, int]], out: TextIO) -> None:
    """Timed table; ``n_reports`` counts uncensored reports, as the shares do."""
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["modality", "n_reports", "no_followup", "early", "late", "censored",
                "no_followup_share", "early_share", "late_share"])
    tot = {o: 0 for o in OUTCOMES}
    rows = [(m.value, counts.get(m, {})) for m in Modality]
    for _, c in rows:
        for o in OUTCOMES:
            tot[o] += c.get(o, 0)
    for name, c in rows + [("Total", tot)]:
        no, ea, la, ce = (c.get(o, 0) for o in OUTCOMES)
        n = no + ea + la
        w.writerow([name, n, no, ea, la, ce, _share(no, n), _share(ea, n), _share(la, n)])


def write_records(records: Iterable[AdherenceRecord], out: TextIO) -> None:
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["report_id", "patient_id", "modality", "outcome", "n_recommendations", "projected_dates", "statuses"])
    for r in records:
        w.writerow([
            r.report_id, r.patient_id, r.modality.value, r.outcome, len(r.recommendations),
            ";".join(x.projected.isoformat() for x in r.recommendations),
            ";".join(x.status for x in r.recommendations),
        ])
