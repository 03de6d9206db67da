"""Command-line entry point: ``radfollow <command> [options]``.

Exit codes: 0 ok, 2 configuration or input error, 3 degenerate training
data, 4 model/vocabulary mismatch, 5 predictions that do not join to
reports, 6 gold and predictions that do not align.
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import io
import json
import logging
import sys
from collections import Counter
from contextlib import ExitStack
from datetime import date
from pathlib import Path
from typing import Iterable, Iterator

from . import adherence as adh
from .config import ConfigError, PipelineConfig, dump_config, load_config
from .corpus import (
    EntitySpan,
    Modality,
    ReportFormatError,
    format_timestamp,
    load_annotated,
    load_reports,
    write_brat,
)
from .embed import build_vocab, read_embeddings, train_skipgram, write_embeddings
from .evaluation import (
    ENTITY_TYPES,
    binary_confusion,
    confusion_to_metrics,
    span_level_eval,
    token_level_eval,
    write_metrics_csv,
)
from .han import DegenerateCorpusError, HanModel, examples_from_annotated as han_examples, train_han
from .modelio import ModelMismatchError
from .ner import NerModel, decode_spans, encode_tags, examples_from_annotated as ner_examples, fit_ner, train_ner
from .synthetic import iter_synthetic
from .temporal import parse_timeframe
from .text import split_sentences, tokenize

log = logging.getLogger("radfollow")

EXIT_OK, EXIT_CONFIG, EXIT_DEGENERATE, EXIT_MODEL, EXIT_JOIN, EXIT_ALIGN = 0, 2, 3, 4, 5, 6


class JoinError(ValueError):
    pass


class AlignmentError(ValueError):
    pass


# -- manifests ---------------------------------------------------------------------

def sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


def _entry(out_dir: Path, path: Path) -> dict:
    rel = path.relative_to(out_dir).as_posix()
    if path.is_dir():
        files = sorted(p for p in path.rglob("*") if p.is_file())
        h = hashlib.sha256()
        for f in files:
            h.update(f"{f.relative_to(path).as_posix()}\t{sha256_file(f)}\n".encode())
        return {"path": rel + "/", "sha256": h.hexdigest(), "files": len(files)}
    return {"path": rel, "sha256": sha256_file(path), "bytes": path.stat().st_size}


def write_manifest(out_dir: Path, command: str, cfg: PipelineConfig, outputs: Iterable[Path],
                   inputs: Iterable[Path] = (), stats: dict | None = None) -> Path:
    manifest = {
        "command": command,
        "seed": cfg.seed,
        "config_sha256": hashlib.sha256(dump_config(cfg).encode()).hexdigest(),
        "inputs": [{"name": p.name, "sha256": _entry(p.parent, p)["sha256"]} for p in inputs],
        "outputs": sorted((_entry(out_dir, p) for p in outputs), key=lambda e: e["path"]),
        "stats": stats or {},
    }
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, sort_keys=True, indent=1) + "\n", encoding="utf-8")
    return path


def _out_dir(args, cfg: PipelineConfig) -> Path:
    out = Path(args.out) if args.out else cfg.path("out_dir")
    if out is None:
        raise ConfigError("no output directory (pass --out or set paths.out_dir)")
    out.mkdir(parents=True, exist_ok=True)
    return out


# -- record formats ----------------------------------------------------------------

def prediction_record(report, sentences: list[dict], entities, timeframes: list[dict]) -> dict:
    return {
        "report_id": report.report_id,
        "patient_id": report.patient_id,
        "modality": report.modality.value,
        "timestamp": format_timestamp(report.timestamp),
        "sentences": sentences,
        "entities": [{"report_id": report.report_id, "kind": e.kind, "begin": e.begin, "end": e.end, "text": e.text}
                     for e in entities],
        "timeframes": timeframes,
    }


def timeframe_records(entities) -> list[dict]:
    out = []
    for e in entities:
        if e.kind == "timeframe":
            d = parse_timeframe(e.text).to_dict()
            d.update(begin=e.begin, end=e.end)
            out.append(d)
    return out


def _dumps(rec: dict) -> str:
    return json.dumps(rec, sort_keys=True, separators=(",", ":"))


def _read_jsonl(path: Path) -> Iterator[dict]:
    with open(path, encoding="utf-8") as fh:
        for n, line in enumerate(fh, 1):
            if line.strip():
                try:
                    yield json.loads(line)
                except json.JSONDecodeError as e:
                    raise ConfigError(f"{path}:{n}: {e}") from e


# -- commands ----------------------------------------------------------------------

def cmd_generate(args, cfg: PipelineConfig) -> int:
    seed = cfg.require_seed()
    out = _out_dir(args, cfg)
    brat_dir = out / "brat"
    write_brat_files = not args.no_brat
    if write_brat_files:
        brat_dir.mkdir(exist_ok=True)
    counts9 = {m: {"with_followup": 0, "without_followup": 0} for m in Modality}
    counts10 = {m: {o: 0 for o in adh.OUTCOMES} for m in Modality}
    n = n_rec = 0
    with ExitStack() as stack:
        rep_fh = stack.enter_context(open(out / "reports.jsonl", "w", encoding="utf-8"))
        gold_fh = stack.enter_context(open(out / "gold_outcomes.csv", "w", encoding="utf-8", newline=""))
        pred_fh = stack.enter_context(open(out / "gold_predictions.jsonl", "w", encoding="utf-8"))
        gw = csv.writer(gold_fh, lineterminator="\n")
        gw.writerow(["report_id", "patient_id", "modality", "has_recommendation", "followed_same_modality", "timed_outcome"])
        for ar, g in iter_synthetic(cfg.synthetic, seed):
            r = ar.report
            rep_fh.write(r.to_json() + "\n")
            if write_brat_files:
                txt, ann = write_brat(ar)
                (brat_dir / f"{r.report_id}.txt").write_text(txt, encoding="utf-8")
                (brat_dir / f"{r.report_id}.ann").write_text(ann, encoding="utf-8")
            sents = [s for s in split_sentences(r.text, r.report_id) if s.tokens]
            labels = [int(any(s.begin < e and b < s.end for b, e in ar.rec_sentence_spans)) for s in sents]
            sent_recs = [{"index": i, "begin": s.begin, "end": s.end, "p": float(y), "label": y}
                         for i, (s, y) in enumerate(zip(sents, labels))]
            ents = sorted(ar.entities)
            pred_fh.write(_dumps(prediction_record(r, sent_recs, ents, timeframe_records(ents))) + "\n")
            gw.writerow([g.report_id, g.patient_id, g.modality.value, int(g.has_recommendation),
                         "" if g.followed_same_modality is None else int(g.followed_same_modality),
                         g.timed_outcome or ""])
            if g.has_recommendation:
                n_rec += 1
                counts9[g.modality]["with_followup" if g.followed_same_modality else "without_followup"] += 1
            if g.timed_outcome:
                counts10[g.modality][g.timed_outcome] += 1
            n += 1
    with open(out / "gold_table9.csv", "w", encoding="utf-8", newline="") as fh:
        adh.write_table9(counts9, fh)
    with open(out / "gold_table10.csv", "w", encoding="utf-8", newline="") as fh:
        adh.write_table10(counts10, fh)
    outputs = [out / n_ for n_ in ("reports.jsonl", "gold_outcomes.csv", "gold_predictions.jsonl",
                                   "gold_table9.csv", "gold_table10.csv")]
    if write_brat_files:
        outputs.append(brat_dir)
    write_manifest(out, "generate", cfg, outputs, stats={"reports": n, "reports_with_recommendation": n_rec})
    print(f"generated {n} reports ({n_rec} with recommendations) in {out}")
    return EXIT_OK


def _report_sentences(path: Path) -> Iterator[list[str]]:
    for r in load_reports(path):
        for s in split_sentences(r.text, r.report_id):
            if s.tokens:
                yield [t.norm for t in s.tokens]


def cmd_train_embeddings(args, cfg: PipelineConfig) -> int:
    seed = cfg.require_seed()
    reports = cfg.require_input("reports", args.reports)
    out = _out_dir(args, cfg)
    sentences = list(_report_sentences(reports))
    vocab = build_vocab((t for s in sentences for t in s), cfg.embeddings.min_count)
    try:
        result = train_skipgram(sentences, vocab, cfg.embeddings.skipgram(seed))
    except ValueError as e:
        raise DegenerateCorpusError(str(e)) from e
    emb_path = out / "embeddings.txt"
    with open(emb_path, "w", encoding="utf-8") as fh:
        write_embeddings(vocab, result.vectors, fh)
    hist = out / "embedding_history.csv"
    with open(hist, "w", encoding="utf-8") as fh:
        fh.write("epoch,loss\n")
        for i, loss in enumerate(result.epoch_losses, 1):
            fh.write(f"{i},{loss:.6f}\n")
    write_manifest(out, "train-embeddings", cfg, [emb_path, hist], [reports],
                   {"vocabulary": len(vocab), "sentences": len(sentences)})
    print(f"trained {len(vocab)} x {result.vectors.shape[1]} embeddings; final loss {result.epoch_losses[-1]:.4f}")
    return EXIT_OK


def _load_pretrained(cfg: PipelineConfig, args):
    path = Path(args.embeddings) if getattr(args, "embeddings", None) else cfg.path("embeddings")
    if path is None:
        return None, None, []
    if not path.exists():
        raise ConfigError(f"paths.embeddings: {path} does not exist")
    vocab, matrix = read_embeddings(path)
    return vocab, matrix, [path]


def _annotated(cfg: PipelineConfig, args):
    reports = cfg.require_input("reports", args.reports)
    brat = cfg.require_input("brat_dir", args.brat_dir)
    return list(load_annotated(reports, brat)), [reports]


def cmd_train_sentence(args, cfg: PipelineConfig) -> int:
    seed = cfg.require_seed()
    annotated, inputs = _annotated(cfg, args)
    out = _out_dir(args, cfg)
    examples = han_examples(annotated)
    vocab, matrix, emb_inputs = _load_pretrained(cfg, args)
    hcfg = cfg.han
    if matrix is not None:
        hcfg.embedding_dim = matrix.shape[1]
    else:
        vocab = build_vocab((t for ex in examples for s in ex.sentences for t in s), cfg.embeddings.min_count)
    model, history = train_han(examples, vocab, hcfg, seed, matrix)
    files = model.save(out, "sentence_model")
    hist = out / "sentence_history.csv"
    with open(hist, "w", encoding="utf-8") as fh:
        history.write_csv(fh)
    write_manifest(out, "train-sentence", cfg, files + [hist], inputs + emb_inputs,
                   {"epochs": len(history.epochs), "best_epoch": history.best_epoch,
                    "best_val_f1": round(history.best_f1, 6)})
    if history.stopped_early:
        print(f"early stopping after epoch {len(history.epochs)}; best epoch {history.best_epoch}")
    print(f"best epoch {history.best_epoch}: validation F1 {history.best_f1:.4f}")
    return EXIT_OK


def cmd_train_ner(args, cfg: PipelineConfig) -> int:
    seed = cfg.require_seed()
    annotated, inputs = _annotated(cfg, args)
    out = _out_dir(args, cfg)
    examples = ner_examples(annotated)
    vocab, matrix, emb_inputs = _load_pretrained(cfg, args)
    ncfg = cfg.ner
    if matrix is not None:
        ncfg.word_dim = matrix.shape[1]
    else:
        vocab = build_vocab((t.norm for ex in examples for t in ex.tokens), cfg.embeddings.min_count)
    outputs = []
    stats = {}
    folds = cfg.ner_cv.folds
    if folds:
        try:
            cv = train_ner(examples, vocab, ncfg, seed, folds, matrix)
        except ValueError as e:
            if isinstance(e, DegenerateCorpusError):
                raise
            raise DegenerateCorpusError(str(e)) from e
        for name, metrics in (("ner_cv_token_metrics.csv", cv.token_metrics), ("ner_cv_span_metrics.csv", cv.span_metrics)):
            p = out / name
            with open(p, "w", encoding="utf-8") as fh:
                write_metrics_csv({t: metrics[t] for t in ENTITY_TYPES}, fh)
            outputs.append(p)
        stats["cv_span_micro_f1"] = round(cv.span_metrics["micro"].f1, 6)
        print("cross-validated token F1: " + ", ".join(f"{t} {cv.token_metrics[t].f1:.4f}" for t in ENTITY_TYPES))
    model, history = fit_ner(examples, vocab, ncfg, seed, matrix)
    outputs += model.save(out, "ner_model")
    hist = out / "ner_history.csv"
    with open(hist, "w", encoding="utf-8") as fh:
        history.write_csv(fh)
    outputs.append(hist)
    stats.update(epochs=len(history.epochs), best_epoch=history.best_epoch, best_val_span_f1=round(history.best_f1, 6))
    write_manifest(out, "train-ner", cfg, outputs, inputs + emb_inputs, stats)
    if history.stopped_early:
        print(f"early stopping after epoch {len(history.epochs)}; best epoch {history.best_epoch}")
    print(f"best epoch {history.best_epoch}: validation span F1 {history.best_f1:.4f}")
    return EXIT_OK


def _chunks(it: Iterable, size: int) -> Iterator[list]:
    buf = []
    for x in it:
        buf.append(x)
        if len(buf) == size:
            yield buf
            buf = []
    if buf:
        yield buf


def extract_records(reports: Iterable, han: HanModel, ner: NerModel, chunk_size: int = 256,
                    threshold: float | None = None, mode: str | None = None) -> Iterator[dict]:
    """Stream per-report prediction records, processing ``chunk_size`` reports at a time."""
    for chunk in _chunks(reports, chunk_size):
        sents = [[s for s in split_sentences(r.text, r.report_id) if s.tokens] for r in chunk]
        live = [i for i, ss in enumerate(sents) if ss]
        preds = han.classify_reports([[[t.norm for t in s.tokens] for s in sents[i]] for i in live], threshold,
                                     [[(s.begin, s.end) for s in sents[i]] for i in live])
        by_report = dict(zip(live, preds))
        positives = [(i, s) for i in live for s, p in zip(sents[i], by_report[i]) if p.label == 1]
        tags = ner.tag_sentences([[t.surface for t in s.tokens] for _, s in positives], mode)
        ents: dict[int, list] = {}
        for (i, s), t in zip(positives, tags):
            ents.setdefault(i, []).extend(decode_spans(t, s.tokens, chunk[i].text))
        for i, r in enumerate(chunk):
            sp = [{"index": p.index, "begin": p.begin, "end": p.end, "p": round(p.p, 6), "label": p.label}
                  for p in by_report.get(i, [])]
            e = ents.get(i, [])
            yield prediction_record(r, sp, e, timeframe_records(e))


def cmd_extract(args, cfg: PipelineConfig) -> int:
    reports = cfg.require_input("reports", args.reports)
    han_path = cfg.require_input("sentence_model", args.sentence_model)
    ner_path = cfg.require_input("ner_model", args.ner_model)
    out = _out_dir(args, cfg)
    han = HanModel.load(han_path)
    ner = NerModel.load(ner_path)
    pred_path = out / "predictions.jsonl"
    stats = Counter()
    with open(pred_path, "w", encoding="utf-8") as fh:
        for rec in extract_records(load_reports(reports), han, ner, cfg.extract.chunk_size,
                                   cfg.extract.threshold, cfg.extract.decode):
            stats["reports"] += 1
            stats["recommendation_sentences"] += sum(s["label"] for s in rec["sentences"])
            stats["entities"] += len(rec["entities"])
            fh.write(_dumps(rec) + "\n")
    write_manifest(out, "extract", cfg, [pred_path], [reports], dict(sorted(stats.items())))
    print(f"extracted {stats['recommendation_sentences']} recommendation sentences from {stats['reports']} reports")
    return EXIT_OK


class _Meta:
    __slots__ = ("report_id", "patient_id", "modality", "timestamp")

    def __init__(self, report_id, patient_id, modality, timestamp):
        self.report_id, self.patient_id, self.modality, self.timestamp = report_id, patient_id, modality, timestamp


def _report_metadata(path: Path) -> Iterator[_Meta]:
    for r in load_reports(path):
        yield _Meta(r.report_id, r.patient_id, r.modality, r.timestamp)


def cmd_analyze(args, cfg: PipelineConfig) -> int:
    preds = cfg.require_input("predictions", args.predictions)
    reports = cfg.require_input("reports", args.reports)
    out = _out_dir(args, cfg)
    grace = args.grace_days if args.grace_days is not None else cfg.adherence.grace_days
    if grace < 0:
        raise ConfigError("--grace-days must be >= 0")
    timelines = adh.build_timelines(_report_metadata(reports))
    known = {e.report_id for tl in timelines.values() for e in tl.entries}
    if args.dataset_end:
        try:
            end = date.fromisoformat(args.dataset_end)
        except ValueError as e:
            raise ConfigError(f"--dataset-end: {e}") from e
    else:
        end = cfg.adherence.dataset_end or adh.default_dataset_end(timelines)
    rec_ids: list[str] = []
    timed: dict[str, list] = {}
    attrition = Counter()
    failures = Counter()
    for rec in _read_jsonl(preds):
        rid = rec.get("report_id")
        if rid not in known:
            raise JoinError(f"prediction for report {rid!r} has no matching report")
        attrition["reports"] += 1
        n_pos = sum(int(s.get("label", 0)) for s in rec.get("sentences", []))
        if not n_pos:
            continue
        attrition["recommendation_sentences"] += n_pos
        attrition["reports_with_recommendation"] += 1
        rec_ids.append(rid)
        tfs = rec.get("timeframes", [])
        attrition["timeframe_mentions"] += len(tfs)
        if tfs:
            attrition["reports_with_timeframe"] += 1
        normalized = []
        for tf in tfs:
            parsed = parse_timeframe(tf["text"])
            if parsed.ok:
                normalized.append(parsed)
            else:
                failures[parsed.code] += 1
        attrition["normalized_timeframes"] += len(normalized)
        if normalized:
            timed[rid] = normalized
    same = adh.analyze_same_modality(timelines, rec_ids)
    timed_result = adh.analyze_timed(timelines, timed, end, grace)
    attrition["reports_with_normalized_timeframe"] = len(timed_result.records)
    attrition["censored_reports"] = sum(r.outcome == adh.CENSORED for r in timed_result.records)
    attrition["uncensored_reports"] = len(timed_result.records) - attrition["censored_reports"]
    files = []
    for name, writer, arg in (("table9.csv", adh.write_table9, same.counts),
                              ("table10.csv", adh.write_table10, timed_result.counts),
                              ("adherence_records.csv", adh.write_records, timed_result.records)):
        p = out / name
        with open(p, "w", encoding="utf-8", newline="") as fh:
            writer(arg, fh)
        files.append(p)
    p = out / "attrition.csv"
    with open(p, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["stage", "count"])
        for key in ("reports", "reports_with_recommendation", "recommendation_sentences", "reports_with_timeframe",
                    "timeframe_mentions", "normalized_timeframes", "reports_with_normalized_timeframe",
                    "censored_reports", "uncensored_reports"):
            w.writerow([key, attrition[key]])
        for code in sorted(failures):
            w.writerow([f"failed_{code}", failures[code]])
    files.append(p)
    write_manifest(out, "analyze", cfg, files, [preds, reports],
                   {"dataset_end": end.isoformat(), "grace_days": grace})
    print(f"{attrition['reports_with_recommendation']} reports with recommendations; "
          f"{attrition['uncensored_reports']} timed and uncensored")
    return EXIT_OK


def _index_predictions(path: Path) -> dict[str, dict]:
    out = {}
    for rec in _read_jsonl(path):
        rid = rec.get("report_id")
        if rid in out:
            raise AlignmentError(f"{path.name}: duplicate report {rid!r}")
        out[rid] = rec
    return out


def evaluate_files(gold_path: Path, pred_path: Path, mode: str, reports_path: Path | None = None) -> dict:
    gold, pred = _index_predictions(gold_path), _index_predictions(pred_path)
    if set(gold) != set(pred):
        missing, extra = sorted(set(gold) - set(pred)), sorted(set(pred) - set(gold))
        raise AlignmentError(f"report sets differ: {len(missing)} missing, {len(extra)} unexpected predictions")
    ids = sorted(gold)
    if mode == "sentence":
        g_lab, p_lab = [], []
        for rid in ids:
            gs, ps = gold[rid]["sentences"], pred[rid]["sentences"]
            if [(s["begin"], s["end"]) for s in gs] != [(s["begin"], s["end"]) for s in ps]:
                raise AlignmentError(f"sentence spans of report {rid!r} do not align")
            g_lab += [int(s["label"]) for s in gs]
            p_lab += [int(s["label"]) for s in ps]
        return {"sentence": confusion_to_metrics(binary_confusion(g_lab, p_lab))}

    def spans(rec):
        return [(rec["report_id"], e["kind"], e["begin"], e["end"]) for e in rec["entities"]]

    if mode == "span":
        m = span_level_eval([s for r in ids for s in spans(gold[r])], [s for r in ids for s in spans(pred[r])])
        return {k: m[k] for k in ENTITY_TYPES + ("micro",)}
    if mode == "token":
        if reports_path is None:
            raise ConfigError("token mode needs --reports for tokenisation")
        texts = {r.report_id: r.text for r in load_reports(reports_path) if r.report_id in gold}
        if set(texts) != set(ids):
            raise AlignmentError("some evaluated reports are missing from --reports")
        g_tags, p_tags = [], []
        for rid in ids:
            toks = tokenize(texts[rid])
            for src, acc in ((gold, g_tags), (pred, p_tags)):
                ents = [EntitySpan.from_text(texts[rid], e["kind"], e["begin"], e["end"]) for e in src[rid]["entities"]]
                acc.append(encode_tags(toks, ents))
        m = token_level_eval(g_tags, p_tags)
        return {k: m[k] for k in ENTITY_TYPES + ("micro",)}
    raise ConfigError(f"unknown evaluation mode {mode!r}")


def cmd_evaluate(args, cfg: PipelineConfig) -> int:
    gold, pred = Path(args.gold), Path(args.pred)
    if not gold.exists() or not pred.exists():
        raise ConfigError("--gold and --pred must name existing files")
    reports = Path(args.reports) if args.reports else None
    rows = evaluate_files(gold, pred, args.mode, reports)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    buf = io.StringIO()
    write_metrics_csv(rows, buf)
    out.write_text(buf.getvalue(), encoding="utf-8")
    for name, m in rows.items():
        print(f"{name}: P {m.precision:.4f} R {m.recall:.4f} F1 {m.f1:.4f}")
    return EXIT_OK


# -- argument parsing -----------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="radfollow", description="Follow-up recommendation extraction and adherence analysis.")
    ap.add_argument("-v", "--verbose", action="count", default=0)
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, out_help="output directory"):
        p.add_argument("--config", help="YAML configuration file")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                       help="override a config key, e.g. han.lr=0.002 (repeatable)")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help=out_help)

    p = sub.add_parser("generate", help="write a synthetic annotated corpus with gold adherence outcomes")
    common(p)
    p.add_argument("--no-brat", action="store_true", help="skip the per-report BRAT files")
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train-embeddings", help="train skip-gram word vectors on report text")
    common(p)
    p.add_argument("--reports")
    p.set_defaults(func=cmd_train_embeddings)

    for name, func in (("train-sentence", cmd_train_sentence), ("train-ner", cmd_train_ner)):
        p = sub.add_parser(name)
        common(p)
        p.add_argument("--reports")
        p.add_argument("--brat-dir")
        p.add_argument("--embeddings")
        p.set_defaults(func=func)

    p = sub.add_parser("extract", help="predict recommendation sentences, entities and time frames")
    common(p)
    p.add_argument("--reports")
    p.add_argument("--sentence-model")
    p.add_argument("--ner-model")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("analyze", help="same-modality and timed adherence tables")
    common(p)
    p.add_argument("--predictions")
    p.add_argument("--reports")
    p.add_argument("--grace-days", type=int)
    p.add_argument("--dataset-end", help="YYYY-MM-DD; default: latest report date")
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("evaluate", help="score predictions against gold records")
    p.add_argument("--config")
    p.add_argument("--set", action="append", default=[])
    p.add_argument("--gold", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--mode", choices=("sentence", "token", "span"), required=True)
    p.add_argument("--reports", help="report JSONL (token mode)")
    p.add_argument("--out", required=True, help="metrics CSV path")
    p.set_defaults(func=cmd_evaluate, seed=None)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, args.set)
        if args.seed is not None:
            cfg.seed = args.seed
        return args.func(args, cfg)
    except (ConfigError, ReportFormatError, FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except DegenerateCorpusError as e:
        print(f"degenerate training data: {e}", file=sys.stderr)
        return EXIT_DEGENERATE
    except ModelMismatchError as e:
        print(f"model mismatch: {e}", file=sys.stderr)
        return EXIT_MODEL
    except JoinError as e:
        print(f"join failure: {e}", file=sys.stderr)
        return EXIT_JOIN
    except AlignmentError as e:
        print(f"alignment failure: {e}", file=sys.stderr)
        return EXIT_ALIGN


if __name__ == "__main__":
    sys.exit(main())
