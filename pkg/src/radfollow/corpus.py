"""Report records, JSONL ingestion, BRAT standoff I/O and the keyword prefilter."""
from __future__ import annotations

import io
import json
import logging
import re
from dataclasses import dataclass, field
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path
from typing import Iterable, Iterator, TextIO

log = logging.getLogger(__name__)


class Modality(str, Enum):
    ANGIOGRAPHY = "Angiography"
    CT = "CT"
    FLUOROSCOPY = "Fluoroscopy"
    MRI = "MRI"
    MAMMOGRAM = "Mammogram"
    NUCLEAR_MEDICINE = "NuclearMedicine"
    PORTABLE_RADIOGRAPHY = "PortableRadiography"
    PET = "PET"
    ULTRASOUND = "Ultrasound"
    XRAY = "XRay"

    @classmethod
    def parse(cls, value: str) -> "Modality":
        # exact, case-sensitive match on the file string
        try:
            return cls(value)
        except ValueError:
            raise ValueError(f"unknown modality {value!r}") from None


ENTITY_KINDS = ("reason", "test", "timeframe")
REC_LABEL = "recommendation"
TIMESTAMP_FORMAT = "%Y-%m-%dT%H:%M:%SZ"

DEFAULT_KEYWORDS = (
    "recommend",
    "follow-up",
    "follow up",
    "suggested",
    "advised",
    "further evaluation",
)


@dataclass(frozen=True)
class Report:
    report_id: str
    patient_id: str
    institution: str
    modality: Modality
    timestamp: datetime
    text: str

    def __post_init__(self):
        if not self.text:
            raise ValueError(f"report {self.report_id}: empty text")

    def to_json(self) -> str:
        return json.dumps(
            {
                "report_id": self.report_id,
                "patient_id": self.patient_id,
                "institution": self.institution,
                "modality": self.modality.value,
                "timestamp": format_timestamp(self.timestamp),
                "text": self.text,
            },
            ensure_ascii=False,
        )


@dataclass(frozen=True, order=True)
class EntitySpan:
    begin: int
    end: int
    kind: str
    text: str

    def __post_init__(self):
        if self.kind not in ENTITY_KINDS:
            raise ValueError(f"unknown entity kind {self.kind!r}")
        if not 0 <= self.begin < self.end:
            raise ValueError(f"bad span [{self.begin}, {self.end})")
        if len(self.text) != self.end - self.begin:
            raise ValueError(f"span text length does not match [{self.begin}, {self.end})")

    @classmethod
    def from_text(cls, text: str, kind: str, begin: int, end: int) -> "EntitySpan":
        if end > len(text):
            raise ValueError(f"span [{begin}, {end}) beyond text of length {len(text)}")
        return cls(begin, end, kind, text[begin:end])

    def key(self) -> tuple[str, int, int]:
        return (self.kind, self.begin, self.end)


@dataclass
class AnnotatedReport:
    report: Report
    rec_sentence_spans: list[tuple[int, int]] = field(default_factory=list)
    entities: list[EntitySpan] = field(default_factory=list)

    def validate(self) -> None:
        text = self.report.text
        spans = sorted(self.rec_sentence_spans)
        for b, e in spans:
            if not 0 <= b < e <= len(text):
                raise ValueError(f"{self.report.report_id}: sentence span ({b}, {e}) out of bounds")
        for (_, e1), (b2, _) in zip(spans, spans[1:]):
            if b2 < e1:
                raise ValueError(f"{self.report.report_id}: overlapping recommendation spans")
        last_end: dict[str, int] = {}
        for ent in sorted(self.entities):
            if ent.end > len(text) or text[ent.begin : ent.end] != ent.text:
                raise ValueError(f"{self.report.report_id}: entity {ent.key()} does not match text")
            if not any(b <= ent.begin and ent.end <= e for b, e in spans):
                raise ValueError(f"{self.report.report_id}: entity {ent.key()} outside recommendation sentences")
            if ent.begin < last_end.get(ent.kind, -1):
                raise ValueError(f"{self.report.report_id}: overlapping {ent.kind} entities")
            last_end[ent.kind] = ent.end


# -- timestamps ---------------------------------------------------------------

def parse_timestamp(value: str) -> datetime:
    return datetime.strptime(value, TIMESTAMP_FORMAT).replace(tzinfo=timezone.utc)


def format_timestamp(ts: datetime) -> str:
    if ts.tzinfo is not None:
        ts = ts.astimezone(timezone.utc)
    return ts.strftime(TIMESTAMP_FORMAT)


# -- JSONL ingestion ----------------------------------------------------------

class ReportFormatError(ValueError):
    def __init__(self, line_no: int, field_name: str | None, message: str):
        self.line_no = line_no
        self.field = field_name
        where = f"line {line_no}" + (f", field {field_name!r}" if field_name else "")
        super().__init__(f"{where}: {message}")


_STRING_FIELDS = ("report_id", "patient_id", "institution", "modality", "timestamp", "text")


def report_from_record(record: dict, line_no: int = 0) -> Report:
    if not isinstance(record, dict):
        raise ReportFormatError(line_no, None, "expected a JSON object")
    for name in _STRING_FIELDS:
        if not isinstance(record.get(name), str):
            raise ReportFormatError(line_no, name, "missing or not a string")
    try:
        modality = Modality.parse(record["modality"])
    except ValueError as exc:
        raise ReportFormatError(line_no, "modality", str(exc)) from None
    try:
        ts = parse_timestamp(record["timestamp"])
    except ValueError:
        raise ReportFormatError(line_no, "timestamp", f"expected YYYY-MM-DDThh:mm:ssZ, got {record['timestamp']!r}") from None
    if not record["text"]:
        raise ReportFormatError(line_no, "text", "empty text")
    return Report(record["report_id"], record["patient_id"], record["institution"], modality, ts, record["text"])


def _open_lines(source) -> Iterator[str]:
    if isinstance(source, (str, Path)):
        with open(source, encoding="utf-8") as fh:
            yield from fh
    else:
        yield from source


def load_reports(source: str | Path | TextIO | Iterable[str], on_error: str = "raise") -> Iterator[Report]:
    """Yield reports lazily from a JSONL path, open file or iterable of lines.

    ``on_error`` is ``"raise"`` (abort at the first bad record) or ``"skip"``
    (log and continue). Blank lines are ignored. Duplicate ids are not
    checked here since that would need corpus-sized state.
    """
    if on_error not in ("raise", "skip"):
        raise ValueError("on_error must be 'raise' or 'skip'")
    for line_no, line in enumerate(_open_lines(source), start=1):
        if not line.strip():
            continue
        try:
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ReportFormatError(line_no, None, f"malformed JSON ({exc.msg})") from None
            yield report_from_record(record, line_no)
        except ReportFormatError as exc:
            if on_error == "raise":
                raise
            log.warning("skipping record: %s", exc)


def write_reports(reports: Iterable[Report], out: TextIO) -> int:
    n = 0
    for r in reports:
        out.write(r.to_json() + "\n")
        n += 1
    return n


# -- BRAT standoff ------------------------------------------------------------

class BratError(ValueError):
    pass


@dataclass
class BratAnnotations:
    rec_sentence_spans: list[tuple[int, int]]
    entities: list[EntitySpan]


_T_LINE = re.compile(r"^(T\d+)\t(\S+) (\d+) (\d+)\t(.*)$")


def _surface(s: str) -> str:
    # surfaces are single-line in the .ann file
    return s.replace("\r", " ").replace("\n", " ")


def read_brat(txt: str, ann: str) -> BratAnnotations:
    """Parse text-bound annotations; other record types are ignored."""
    rec_spans: list[tuple[int, int]] = []
    entities: list[EntitySpan] = []
    for line_no, line in enumerate(ann.splitlines(), start=1):
        if not line.strip() or not line.startswith("T"):
            continue
        m = _T_LINE.match(line)
        if m is None:
            raise BratError(f"ann line {line_no}: malformed or discontinuous annotation {line!r}")
        _, label, b, e, surface = m.groups()
        begin, end = int(b), int(e)
        if not 0 <= begin < end <= len(txt):
            raise BratError(f"ann line {line_no}: offsets ({begin}, {end}) out of bounds for text of length {len(txt)}")
        if _surface(txt[begin:end]) != surface:
            raise BratError(f"ann line {line_no}: surface {surface!r} does not match text {txt[begin:end]!r}")
        if label == REC_LABEL:
            rec_spans.append((begin, end))
        elif label in ENTITY_KINDS:
            entities.append(EntitySpan(begin, end, label, txt[begin:end]))
        else:
            raise BratError(f"ann line {line_no}: unknown label {label!r}")
    return BratAnnotations(rec_spans, entities)


def write_brat(annotated: AnnotatedReport) -> tuple[str, str]:
    text = annotated.report.text
    buf = io.StringIO()
    items = [(b, e, REC_LABEL) for b, e in annotated.rec_sentence_spans]
    items += [(ent.begin, ent.end, ent.kind) for ent in annotated.entities]
    for i, (b, e, label) in enumerate(items, start=1):
        buf.write(f"T{i}\t{label} {b} {e}\t{_surface(text[b:e])}\n")
    return text, buf.getvalue()


def annotated_from_brat(report: Report, ann: str) -> AnnotatedReport:
    frag = read_brat(report.text, ann)
    return AnnotatedReport(report, frag.rec_sentence_spans, frag.entities)


def write_brat_dir(annotated: Iterable[AnnotatedReport], directory: str | Path) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    for ar in annotated:
        txt, ann = write_brat(ar)
        base = directory / ar.report.report_id
        base.with_suffix(".txt").write_text(txt, encoding="utf-8", newline="")
        base.with_suffix(".ann").write_text(ann, encoding="utf-8", newline="")
        written += [base.with_suffix(".txt"), base.with_suffix(".ann")]
    return written


def load_annotated(reports_path: str | Path, brat_dir: str | Path) -> Iterator[AnnotatedReport]:
    """Join a reports JSONL with ``<report_id>.ann`` files (missing .ann = unannotated)."""
    brat_dir = Path(brat_dir)
    for report in load_reports(reports_path):
        ann_path = brat_dir / f"{report.report_id}.ann"
        ann = ann_path.read_text(encoding="utf-8") if ann_path.exists() else ""
        yield annotated_from_brat(report, ann)


# -- prefilter ----------------------------------------------------------------

def prefilter(report: Report | str, keywords: Iterable[str] = DEFAULT_KEYWORDS) -> bool:
    """True when any keyword occurs in the report text, ignoring case."""
    kws = [k.lower() for k in keywords]
    if not kws:
        raise ValueError("prefilter needs at least one keyword")
    text = (report.text if isinstance(report, Report) else report).lower()
    return any(k in text for k in kws)
