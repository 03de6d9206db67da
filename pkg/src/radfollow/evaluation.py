"""Precision/recall/F1, token- and span-level entity scoring, kappa, folds."""
from __future__ import annotations

import csv
from collections import Counter
from dataclasses import dataclass
from typing import Hashable, Iterable, NamedTuple, Sequence, TextIO

import numpy as np

ENTITY_TYPES = ("reason", "test", "timeframe")


@dataclass(frozen=True)
class ConfusionCounts:
    tp: int = 0
    tn: int = 0
    fp: int = 0
    fn: int = 0

    def __post_init__(self):
        if min(self.tp, self.tn, self.fp, self.fn) < 0:
            raise ValueError("confusion counts must be non-negative")

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(self.tp + other.tp, self.tn + other.tn, self.fp + other.fp, self.fn + other.fn)


@dataclass(frozen=True)
class Metrics:
    precision: float
    recall: float
    f1: float
    support: int = 0
    degenerate: bool = False


def confusion_to_metrics(c: ConfusionCounts) -> Metrics:
    """Zero denominators give 0 and set ``degenerate`` instead of raising."""
    degenerate = False
    if c.tp + c.fp:
        p = c.tp / (c.tp + c.fp)
    else:
        p, degenerate = 0.0, True
    if c.tp + c.fn:
        r = c.tp / (c.tp + c.fn)
    else:
        r, degenerate = 0.0, True
    if p + r > 0:
        f1 = 2 * p * r / (p + r)
    else:
        f1, degenerate = 0.0, True
    return Metrics(p, r, f1, support=c.tp + c.fn, degenerate=degenerate)


def binary_confusion(gold: Sequence[int], pred: Sequence[int]) -> ConfusionCounts:
    if len(gold) != len(pred):
        raise ValueError(f"length mismatch: {len(gold)} gold vs {len(pred)} predicted")
    tp = tn = fp = fn = 0
    for g, p in zip(gold, pred):
        if g and p:
            tp += 1
        elif g:
            fn += 1
        elif p:
            fp += 1
        else:
            tn += 1
    return ConfusionCounts(tp, tn, fp, fn)


def tag_type(tag: str) -> str | None:
    """Collapse a BIOES tag to its entity type; ``O`` maps to None."""
    return None if tag == "O" else tag.split("-", 1)[1]


def token_confusions(gold_tags: Sequence[str], pred_tags: Sequence[str], types=ENTITY_TYPES) -> dict[str, ConfusionCounts]:
    if len(gold_tags) != len(pred_tags):
        raise ValueError(f"length mismatch: {len(gold_tags)} gold vs {len(pred_tags)} predicted tags")
    counts = {t: Counter() for t in types}
    for g, p in zip(gold_tags, pred_tags):
        gt, pt = tag_type(g), tag_type(p)
        for t in types:
            if gt == t and pt == t:
                counts[t]["tp"] += 1
            elif gt == t:
                counts[t]["fn"] += 1
            elif pt == t:
                counts[t]["fp"] += 1
            else:
                counts[t]["tn"] += 1
    return {t: ConfusionCounts(**c) for t, c in counts.items()}


def _flatten(seqs):
    if seqs and not isinstance(seqs[0], str):
        return [t for s in seqs for t in s]
    return list(seqs)


def token_level_eval(gold_tags, pred_tags, types=ENTITY_TYPES) -> dict[str, Metrics]:
    """Per-type token scores with BIOES collapsed to entity type.

    Accepts flat tag lists or lists of per-sentence lists (which must align
    sentence by sentence). The ``"micro"`` entry pools the per-type counts.
    """
    if gold_tags and not isinstance(gold_tags[0], str):
        if len(gold_tags) != len(pred_tags) or any(len(g) != len(p) for g, p in zip(gold_tags, pred_tags)):
            raise ValueError("gold and predicted tag sequences are not aligned")
    conf = token_confusions(_flatten(gold_tags), _flatten(pred_tags), types)
    out = {t: confusion_to_metrics(c) for t, c in conf.items()}
    out["micro"] = confusion_to_metrics(sum(conf.values(), ConfusionCounts()))
    return out


def span_confusions(gold: Iterable[Hashable], pred: Iterable[Hashable]) -> ConfusionCounts:
    g, p = set(gold), set(pred)
    return ConfusionCounts(tp=len(g & p), fp=len(p - g), fn=len(g - p))


def span_level_eval(gold_spans, pred_spans, types=ENTITY_TYPES) -> dict[str, Metrics]:
    """Exact-match scoring of spans given as ``(doc_id, kind, begin, end)`` tuples.

    Objects with a ``key()`` method (``EntitySpan``) are accepted when all
    spans come from one document.
    """
    def norm(spans):
        return {s.key() if hasattr(s, "key") else tuple(s) for s in spans}

    def kind_of(s):
        return s[-3]

    g, p = norm(gold_spans), norm(pred_spans)
    out = {}
    total = ConfusionCounts()
    for t in types:
        c = span_confusions({s for s in g if kind_of(s) == t}, {s for s in p if kind_of(s) == t})
        out[t] = confusion_to_metrics(c)
        total = total + c
    out["micro"] = confusion_to_metrics(total)
    return out


def pairwise_f1(annotator_a, annotator_b) -> Metrics:
    """Agreement F1 treating ``a`` as gold and ``b`` as prediction (exact match)."""
    return confusion_to_metrics(span_confusions(annotator_a, annotator_b))


class Kappa(NamedTuple):
    kappa: float
    degenerate: bool


def cohens_kappa(labels_a: Sequence[Hashable], labels_b: Sequence[Hashable]) -> Kappa:
    if len(labels_a) != len(labels_b) or not labels_a:
        raise ValueError("kappa needs two aligned, non-empty label sequences")
    n = len(labels_a)
    p_o = sum(a == b for a, b in zip(labels_a, labels_b)) / n
    ca, cb = Counter(labels_a), Counter(labels_b)
    p_e = sum(ca[k] * cb[k] for k in ca) / (n * n)
    if p_e >= 1.0:
        return Kappa(1.0 if p_o == 1.0 else 0.0, True)
    return Kappa((p_o - p_e) / (1.0 - p_e), False)


def kfold_split(report_ids: Sequence[str], k: int, seed: int) -> list[list[str]]:
    """Shuffle report ids and deal them into ``k`` folds whose sizes differ by at most one."""
    if k < 1:
        raise ValueError("k must be >= 1")
    if k > len(report_ids):
        raise ValueError(f"cannot make {k} folds from {len(report_ids)} reports")
    ids = sorted(report_ids)
    order = np.random.default_rng(seed).permutation(len(ids))
    shuffled = [ids[i] for i in order]
    return [list(chunk) for chunk in np.array_split(np.array(shuffled, dtype=object), k)]


def write_metrics_csv(rows: dict[str, Metrics], out: TextIO) -> None:
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["entity_or_task", "precision", "recall", "f1", "support"])
    for name, m in rows.items():
        w.writerow([name, f"{m.precision:.4f}", f"{m.recall:.4f}", f"{m.f1:.4f}", m.support])
