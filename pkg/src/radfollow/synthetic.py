"""Deterministic synthetic radiology corpus with known spans and known adherence.

Reports are assembled from sentence templates so every recommendation
sentence and entity offset is known by construction. Each patient's
reports are laid out as per-modality chains (one modality per chain, never
reused within a patient), and the gap to the next report in a chain is
chosen to realise the outcome sampled from ``adherence_profile``:

* early: next same-modality report on or before the earliest due date
* late: next report after the earliest due date
* no_followup: chain ends at this report
* censored: chain starts (and ends) with this report, placed so every due
  date falls after ``dataset_end``

Targets that cannot be realised (quota or chain length exhausted, due date
beyond the window) fall back to recommendations without time frames.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from datetime import date, datetime, timedelta, timezone
from typing import Iterator

import numpy as np

from .corpus import AnnotatedReport, EntitySpan, Modality, Report
from .temporal import add_duration

OUTCOME_NAMES = ("no_followup", "early", "late", "censored")

# (phrase, unit, lo, hi) for phrases the normaliser accepts
TIMEFRAMES = [
    ("3 months", "M", 3, 3), ("6 months", "M", 6, 6), ("12 months", "M", 12, 12),
    ("6 to 12 months", "M", 6, 12), ("4-5 weeks", "W", 4, 5), ("1-3 weeks", "W", 1, 3),
    ("one year", "Y", 1, 1), ("six months", "M", 6, 6), ("2 weeks", "W", 2, 2),
    ("1 year", "Y", 1, 1), ("3-6 months", "M", 3, 6), ("two years", "Y", 2, 2),
    ("10 days", "D", 10, 10), ("4 weeks", "W", 4, 4), ("3 to 4 months", "M", 3, 4),
]
UNSUPPORTED_TIMEFRAMES = ["early second trimester", "a few weeks", "the next available appointment"]

TESTS = [
    "ultrasound", "CT scan of the chest", "MRI", "diagnostic mammogram", "pelvic ultrasound",
    "MRI of the liver", "contrast-enhanced CT", "chest radiograph", "bone scan", "CT of the abdomen",
    "breast MRI", "thyroid ultrasound",
]
REASONS = [
    "to evaluate fetal growth and complete anatomic survey", "for further evaluation of this lesion",
    "to exclude recurrence", "to assess interval stability", "to confirm resolution",
    "for characterization of the nodule", "to evaluate for malignancy", "to exclude possible recurrence of lymphoma",
]

T, TF, R = "{TEST}", "{TIME}", "{REASON}"
TIMED_TEMPLATES = [
    ["Recommend repeat ", T, " in ", TF, " ", R, "."],
    ["Follow-up ", T, " is recommended in ", TF, " ", R, "."],
    ["Given family history, would recommend repeat ", T, " in ", TF, " ", R, "."],
    ["Suggest follow-up ", T, " in ", TF, "."],
    ["A ", T, " is advised in ", TF, " ", R, "."],
    ["Recommend ", T, " in ", TF, "."],
    ["Normal interval follow-up ", T, " is recommended in ", TF, "."],
]
UNTIMED_TEMPLATES = [
    [T, " is recommended ", R, "."],
    ["Dedicated ", T, " would be helpful ", R, "."],
    ["Recommend ", T, " ", R, "."],
    ["Further evaluation with ", T, " is suggested."],
]
NEGATIVE_SENTENCES = [
    "No acute fracture or dislocation.", "The liver is normal in size and echotexture.",
    "Heart size is within normal limits.", "There is no pleural effusion or pneumothorax.",
    "Mild degenerative changes of the lumbar spine.", "The kidneys are unremarkable.",
    "No suspicious mass or calcification.", "Stable postoperative changes.",
    "Lungs are clear bilaterally.", "Singleton pregnancy.", "Size consistent with dates.",
    "Findings were discussed with Dr. Smith at the time of the study.",
    "The gallbladder is decompressed.", "No free fluid in the pelvis.", "Small hiatal hernia.",
    "Bones are diffusely osteopenic.", "There is a 4 mm nodule in the right upper lobe.",
    "The aorta is normal in caliber.", "No evidence of intracranial hemorrhage.",
    "Scattered fibroglandular densities are present.", "Comparison is made to the study from 2 years ago.",
    "Anatomic survey limited by maternal body habitus and fetal position.",
    "Inadequate views of fetal heart and spine.", "Vascular structures are patent.",
    "Appearance is unchanged from the prior exam, i.e. stable.", "The spleen measures 11 cm in length.",
    "Mediastinal contours are normal.", "There is trace bibasilar atelectasis.",
]


@dataclass
class SyntheticConfig:
    n_reports: int = 500
    positive_rate: float = 0.05
    patients: int = 150
    modality_mix: dict[str, float] = field(default_factory=lambda: {m.value: 1.0 for m in Modality})
    adherence_profile: dict[str, float] = field(
        default_factory=lambda: {"no_followup": 0.3, "early": 0.3, "late": 0.3, "censored": 0.1}
    )
    sentences_per_report: float = 10.0
    timeframe_rate: float = 0.7
    unsupported_timeframe_rate: float = 0.1
    reason_rate: float = 0.8
    start: date = date(2008, 1, 1)
    dataset_end: date = date(2018, 12, 31)
    chain_start_years: int = 3
    max_chain: int = 3
    max_late_days: int = 90
    institutions: tuple[str, ...] = ("UWMC", "HMC")

    def validate(self) -> None:
        if self.n_reports < 1:
            raise ValueError("n_reports must be >= 1")
        if self.patients < 1:
            raise ValueError("patients must be >= 1")
        for name in ("positive_rate", "timeframe_rate", "unsupported_timeframe_rate", "reason_rate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must be in [0, 1], got {v}")
        if self.sentences_per_report < 1:
            raise ValueError("sentences_per_report must be >= 1")
        if not self.modality_mix or any(w < 0 for w in self.modality_mix.values()) or sum(self.modality_mix.values()) <= 0:
            raise ValueError("modality_mix needs non-negative weights with a positive sum")
        for m in self.modality_mix:
            Modality.parse(m)
        if set(self.adherence_profile) - set(OUTCOME_NAMES):
            raise ValueError(f"adherence_profile keys must be among {OUTCOME_NAMES}")
        if any(w < 0 for w in self.adherence_profile.values()) or sum(self.adherence_profile.values()) <= 0:
            raise ValueError("adherence_profile needs non-negative weights with a positive sum")
        if self.dataset_end <= self.start or self.max_chain < 1:
            raise ValueError("invalid time window or chain length")

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticConfig":
        d = dict(d)
        for k in ("start", "dataset_end"):
            if isinstance(d.get(k), str):
                d[k] = date.fromisoformat(d[k])
        if "institutions" in d:
            d["institutions"] = tuple(d["institutions"])
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ValueError(f"unknown synthetic config keys: {sorted(unknown)}")
        cfg = cls(**d)
        cfg.validate()
        return cfg


@dataclass(frozen=True)
class GoldOutcome:
    report_id: str
    patient_id: str
    modality: Modality
    has_recommendation: bool
    followed_same_modality: bool | None
    timed_outcome: str | None


@dataclass
class SyntheticCorpus:
    reports: list[AnnotatedReport]
    gold: list[GoldOutcome]


@dataclass
class _Content:
    text: str
    rec_spans: list[tuple[int, int]]
    entities: list[EntitySpan]
    due: list[tuple[str, int]]  # normalisable time frames as (unit, hi)
    n_recs: int


class _Builder:
    def __init__(self, cfg: SyntheticConfig, rng: np.random.Generator):
        self.cfg = cfg
        self.rng = rng
        self.parts: list[str] = []
        self.pos = 0

    def add(self, s: str) -> tuple[int, int]:
        b = self.pos
        self.parts.append(s)
        self.pos += len(s)
        return b, self.pos

    def text(self) -> str:
        return "".join(self.parts)


def _pick(rng, seq):
    return seq[int(rng.integers(len(seq)))]


def _rec_sentence(b: _Builder, allow_timed: bool, entities: list, due: list) -> tuple[int, int]:
    cfg, rng = b.cfg, b.rng
    timed = allow_timed and rng.random() < cfg.timeframe_rate
    templates = TIMED_TEMPLATES if timed else UNTIMED_TEMPLATES
    tpl = _pick(rng, templates)
    if R in tpl and rng.random() >= cfg.reason_rate:
        # drop the reason slot and the separator before it
        i = tpl.index(R)
        prev = tpl[i - 1].rstrip()
        tpl = tpl[: i - 1] + ([prev] if prev else []) + tpl[i + 1 :]
    start = b.pos
    for j, part in enumerate(tpl):
        if part == T:
            surface = _pick(rng, TESTS)
            if b.pos == start:
                surface = surface[0].upper() + surface[1:]
            s, e = b.add(surface)
            entities.append(EntitySpan(s, e, "test", surface))
        elif part == TF:
            if rng.random() < cfg.unsupported_timeframe_rate:
                surface = _pick(rng, UNSUPPORTED_TIMEFRAMES)
            else:
                surface, unit, _, hi = _pick(rng, TIMEFRAMES)
                due.append((unit, hi))
            s, e = b.add(surface)
            entities.append(EntitySpan(s, e, "timeframe", surface))
        elif part == R:
            surface = _pick(rng, REASONS)
            s, e = b.add(surface)
            entities.append(EntitySpan(s, e, "reason", surface))
        else:
            b.add(part)
    return start, b.pos


def _content(cfg: SyntheticConfig, rng: np.random.Generator, allow_timed: bool, counts=None) -> tuple[_Content, tuple[int, int]]:
    if counts is None:
        n_s = 1 + int(rng.poisson(cfg.sentences_per_report - 1))
        k = int(rng.binomial(n_s, cfg.positive_rate))
    else:
        n_s, k = counts
    n_neg = n_s - k
    n_imp_neg = min(n_neg, 1 + int(rng.integers(2)))
    n_find = n_neg - n_imp_neg
    impression = ["neg"] * n_imp_neg + ["rec"] * k
    order = rng.permutation(len(impression))
    impression = [impression[i] for i in order]

    b = _Builder(cfg, rng)
    rec_spans, entities, due = [], [], []
    if n_find:
        b.add("FINDINGS:\n")
        for i in range(n_find):
            if i:
                b.add(" ")
            b.add(_pick(rng, NEGATIVE_SENTENCES))
        b.add("\n\n")
    b.add("IMPRESSION:\n")
    for i, kind in enumerate(impression):
        if i:
            b.add(" ")
        if kind == "neg":
            b.add(_pick(rng, NEGATIVE_SENTENCES))
        else:
            rec_spans.append(_rec_sentence(b, allow_timed, entities, due))
    b.add("\n")
    return _Content(b.text(), rec_spans, entities, due, k), (n_s, k)


def _stamp(d: date, rng) -> datetime:
    return datetime(d.year, d.month, d.day, int(rng.integers(7, 20)), int(rng.integers(60)), int(rng.integers(60)),
                    tzinfo=timezone.utc)


def _due_dates(d: date, due: list[tuple[str, int]]) -> list[date]:
    return [add_duration(d, hi, unit) for unit, hi in due]


def iter_synthetic(cfg: SyntheticConfig, seed: int) -> Iterator[tuple[AnnotatedReport, GoldOutcome]]:
    """Yield ``(annotated_report, gold)`` pairs, patient by patient."""
    cfg.validate()
    rng = np.random.default_rng(seed)
    modalities = [Modality.parse(m) for m in sorted(cfg.modality_mix)]
    mod_weights = np.array([cfg.modality_mix[m.value] for m in modalities], dtype=float)
    profile = {o: float(cfg.adherence_profile.get(o, 0.0)) for o in OUTCOME_NAMES}
    base, extra = divmod(cfg.n_reports, cfg.patients)
    report_no = 0
    window_days = (cfg.dataset_end - cfg.start).days
    start_span = min(window_days, 365 * cfg.chain_start_years)

    def sample_target(allowed: set[str]) -> str | None:
        names = [o for o in OUTCOME_NAMES if o in allowed and profile[o] > 0]
        if not names:
            return None
        w = np.array([profile[o] for o in names])
        return names[int(rng.choice(len(names), p=w / w.sum()))]

    for p in range(cfg.patients):
        quota = base + (1 if p < extra else 0)
        pid_base = f"P{p:05d}"
        pid, spill = pid_base, 0
        used: set[Modality] = set()
        while quota > 0:
            free = [i for i, m in enumerate(modalities) if m not in used and mod_weights[i] > 0]
            if not free:
                spill += 1
                pid = f"{pid_base}-{spill}"
                used = set()
                continue
            w = mod_weights[free]
            modality = modalities[free[int(rng.choice(len(free), p=w / w.sum()))]]
            used.add(modality)
            institution = cfg.institutions[int(rng.integers(len(cfg.institutions)))]
            day = cfg.start + timedelta(days=int(rng.integers(start_span + 1)))
            position = 0
            while quota > 0:
                content, counts = _content(cfg, rng, allow_timed=True)
                can_continue = position < cfg.max_chain - 1 and quota > 1
                target = None
                if content.due:
                    allowed = {"no_followup"}
                    if position == 0:
                        allowed.add("censored")
                    if can_continue:
                        allowed |= {"early", "late"}
                    target = sample_target(allowed)
                    next_day = None
                    if target == "censored":
                        for back in range(int(rng.integers(0, 31)), -1, -1):
                            cand = cfg.dataset_end - timedelta(days=back)
                            if all(x > cfg.dataset_end for x in _due_dates(cand, content.due)):
                                day = cand
                                break
                    else:
                        dues = _due_dates(day, content.due)
                        first_due = min(dues)
                        if max(dues) > cfg.dataset_end:
                            target = None
                        elif target == "early":
                            next_day = day + timedelta(days=int(rng.integers(1, (first_due - day).days + 1)))
                        elif target == "late":
                            next_day = first_due + timedelta(days=int(rng.integers(1, cfg.max_late_days + 1)))
                        if next_day is not None and next_day > cfg.dataset_end:
                            target = None
                    if target is None:
                        # keep the sentence/recommendation counts, drop the time frames
                        content, _ = _content(cfg, rng, allow_timed=False, counts=counts)
                if target is None:
                    gap = int(rng.integers(20, 400))
                    next_day = day + timedelta(days=gap)
                    if next_day > cfg.dataset_end:
                        can_continue = False
                closes = target in ("no_followup", "censored") or not can_continue

                rid = f"R{report_no:07d}"
                report_no += 1
                report = Report(rid, pid, institution, modality, _stamp(day, rng), content.text)
                ar = AnnotatedReport(report, content.rec_spans, content.entities)
                has_rec = content.n_recs > 0
                gold = GoldOutcome(
                    rid, pid, modality, has_rec,
                    (not closes) if has_rec else None,
                    target,
                )
                yield ar, gold
                quota -= 1
                position += 1
                if closes:
                    break
                day = next_day


def generate_synthetic(cfg: SyntheticConfig, seed: int) -> SyntheticCorpus:
    reports, gold = [], []
    for ar, g in iter_synthetic(cfg, seed):
        reports.append(ar)
        gold.append(g)
    return SyntheticCorpus(reports, gold)
