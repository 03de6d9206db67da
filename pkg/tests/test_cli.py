from __future__ import annotations

import csv
import json
import subprocess
import sys
from pathlib import Path

import pytest
import yaml

from radfollow.cli import main
from radfollow.config import ConfigError, apply_override, build_config, load_config

TINY = {
    "seed": 7,
    "synthetic": {"n_reports": 60, "patients": 20, "positive_rate": 0.5, "sentences_per_report": 4.0},
    "han": {"embedding_dim": 8, "word_hidden": 6, "sent_hidden": 6, "max_epochs": 3, "patience": 2, "lr": 0.01},
    "ner": {"word_dim": 8, "char_dim": 4, "char_hidden": 4, "token_hidden": 8, "max_epochs": 3, "patience": 2},
    "ner_cv": {"folds": 2},
    "extract": {"chunk_size": 7},
}


def write_config(path: Path, raw: dict) -> Path:
    path.write_text(yaml.safe_dump(raw), encoding="utf-8")
    return path


def read_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    root = tmp_path_factory.mktemp("pipe")
    cfg = str(write_config(root / "tiny.yaml", TINY))
    data, sent, ner, ext, ana = (root / d for d in ("data", "sent", "ner", "ext", "ana"))
    assert main(["generate", "--config", cfg, "--out", str(data)]) == 0
    common = ["--config", cfg, "--reports", str(data / "reports.jsonl"), "--brat-dir", str(data / "brat")]
    assert main(["train-sentence", *common, "--out", str(sent)]) == 0
    assert main(["train-ner", *common, "--out", str(ner)]) == 0
    assert main(["extract", "--config", cfg, "--reports", str(data / "reports.jsonl"),
                 "--sentence-model", str(sent / "sentence_model.json"), "--ner-model", str(ner / "ner_model.json"),
                 "--out", str(ext)]) == 0
    assert main(["analyze", "--config", cfg, "--predictions", str(ext / "predictions.jsonl"),
                 "--reports", str(data / "reports.jsonl"), "--dataset-end", "2018-12-31", "--out", str(ana)]) == 0
    return {"root": root, "cfg": cfg, "data": data, "sent": sent, "ner": ner, "ext": ext, "ana": ana}


def test_generate_outputs_and_manifest(pipeline):
    data = pipeline["data"]
    for name in ("reports.jsonl", "gold_outcomes.csv", "gold_predictions.jsonl", "gold_table9.csv",
                 "gold_table10.csv", "manifest.json"):
        assert (data / name).exists()
    m = json.loads((data / "manifest.json").read_text())
    assert m["command"] == "generate" and m["seed"] == 7
    paths = [o["path"] for o in m["outputs"]]
    assert paths == sorted(paths) and "brat/" in paths
    assert m["stats"]["reports"] == 60
    assert "time" not in json.dumps(m).lower()


def test_generate_deterministic_and_creates_dirs(pipeline, tmp_path):
    out = tmp_path / "a" / "b" / "c"
    assert main(["generate", "--config", pipeline["cfg"], "--out", str(out)]) == 0
    assert (out / "manifest.json").read_bytes() == (pipeline["data"] / "manifest.json").read_bytes()


def test_generate_no_brat(pipeline, tmp_path):
    assert main(["generate", "--config", pipeline["cfg"], "--no-brat", "--out", str(tmp_path)]) == 0
    assert not (tmp_path / "brat").exists()
    assert (tmp_path / "reports.jsonl").read_bytes() == (pipeline["data"] / "reports.jsonl").read_bytes()


def test_training_outputs(pipeline):
    sent, ner = pipeline["sent"], pipeline["ner"]
    assert {"sentence_model.json", "sentence_model.tensors.json", "sentence_history.csv"} <= {p.name for p in sent.iterdir()}
    for name in ("ner_cv_token_metrics.csv", "ner_cv_span_metrics.csv"):
        rows = read_csv(ner / name)
        assert [r["entity_or_task"] for r in rows] == ["reason", "test", "timeframe"]
        assert list(rows[0]) == ["entity_or_task", "precision", "recall", "f1", "support"]
    hist = read_csv(ner / "ner_history.csv")
    assert hist and set(hist[0]) == {"epoch", "train_loss", "val_span_f1"}


def test_extract_records(pipeline):
    recs = [json.loads(l) for l in (pipeline["ext"] / "predictions.jsonl").read_text().splitlines()]
    assert len(recs) == 60
    text = {json.loads(l)["report_id"]: json.loads(l)["text"]
            for l in (pipeline["data"] / "reports.jsonl").read_text().splitlines()}
    for r in recs:
        assert set(r) == {"report_id", "patient_id", "modality", "timestamp", "sentences", "entities", "timeframes"}
        for s in r["sentences"]:
            assert 0.0 <= s["p"] <= 1.0 and s["label"] in (0, 1)
        for e in r["entities"]:
            assert text[r["report_id"]][e["begin"] : e["end"]] == e["text"]
        assert len(r["timeframes"]) == sum(e["kind"] == "timeframe" for e in r["entities"])


def test_chunk_size_does_not_change_output(pipeline, tmp_path):
    p = pipeline
    assert main(["extract", "--config", p["cfg"], "--set", "extract.chunk_size=1000",
                 "--reports", str(p["data"] / "reports.jsonl"),
                 "--sentence-model", str(p["sent"]), "--ner-model", str(p["ner"]), "--out", str(tmp_path)]) == 0
    assert (tmp_path / "predictions.jsonl").read_bytes() == (p["ext"] / "predictions.jsonl").read_bytes()


def test_analyze_gold_predictions_reproduce_gold_tables(pipeline, tmp_path):
    data = pipeline["data"]
    assert main(["analyze", "--config", pipeline["cfg"], "--predictions", str(data / "gold_predictions.jsonl"),
                 "--reports", str(data / "reports.jsonl"), "--dataset-end", "2018-12-31", "--out", str(tmp_path)]) == 0
    assert (tmp_path / "table9.csv").read_text() == (data / "gold_table9.csv").read_text()
    assert (tmp_path / "table10.csv").read_text() == (data / "gold_table10.csv").read_text()
    stages = {r["stage"]: int(r["count"]) for r in read_csv(tmp_path / "attrition.csv")}
    assert stages["reports"] == 60
    assert stages["censored_reports"] + stages["uncensored_reports"] == stages["reports_with_normalized_timeframe"]


def test_dataset_end_before_everything_censors(pipeline, tmp_path):
    data = pipeline["data"]
    assert main(["analyze", "--config", pipeline["cfg"], "--predictions", str(data / "gold_predictions.jsonl"),
                 "--reports", str(data / "reports.jsonl"), "--dataset-end", "1990-01-01", "--out", str(tmp_path)]) == 0
    total = read_csv(tmp_path / "table10.csv")[-1]
    assert int(total["censored"]) > 0
    assert int(total["no_followup"]) == int(total["early"]) == int(total["late"]) == 0


def test_evaluate_gold_against_itself(pipeline, tmp_path):
    data = pipeline["data"]
    gold = str(data / "gold_predictions.jsonl")
    for mode in ("sentence", "span", "token"):
        out = tmp_path / f"{mode}.csv"
        args = ["evaluate", "--gold", gold, "--pred", gold, "--mode", mode, "--out", str(out)]
        if mode == "token":
            args += ["--reports", str(data / "reports.jsonl")]
        assert main(args) == 0
        assert all(float(r["f1"]) == 1.0 for r in read_csv(out) if int(r["support"]) > 0)


def test_evaluate_reported_sentence_scores(tmp_path):
    # 574 TP, 11711 TN, 75 FP, 22 FN spread over reports of 100 sentences
    labels = [(1, 1)] * 574 + [(0, 0)] * 11711 + [(0, 1)] * 75 + [(1, 0)] * 22
    gold_fh, pred_fh = open(tmp_path / "g.jsonl", "w"), open(tmp_path / "p.jsonl", "w")
    for k in range(0, len(labels), 100):
        chunk = labels[k : k + 100]
        base = {"report_id": f"R{k}", "entities": []}
        for fh, side in ((gold_fh, 0), (pred_fh, 1)):
            sents = [{"index": i, "begin": 10 * i, "end": 10 * i + 9, "p": float(y[side]), "label": y[side]}
                     for i, y in enumerate(chunk)]
            fh.write(json.dumps({**base, "sentences": sents}) + "\n")
    gold_fh.close()
    pred_fh.close()
    out = tmp_path / "m.csv"
    assert main(["evaluate", "--gold", str(tmp_path / "g.jsonl"), "--pred", str(tmp_path / "p.jsonl"),
                 "--mode", "sentence", "--out", str(out)]) == 0
    (row,) = read_csv(out)
    assert (round(float(row["precision"]), 2), round(float(row["recall"]), 2), round(float(row["f1"]), 2)) == (0.88, 0.96, 0.92)


def test_empty_extract_input(pipeline, tmp_path):
    empty = tmp_path / "empty.jsonl"
    empty.write_text("")
    out = tmp_path / "out"
    assert main(["extract", "--config", pipeline["cfg"], "--reports", str(empty),
                 "--sentence-model", str(pipeline["sent"]), "--ner-model", str(pipeline["ner"]), "--out", str(out)]) == 0
    assert (out / "predictions.jsonl").read_text() == ""


# -- exit codes --------------------------------------------------------------------

def test_exit_config_errors(tmp_path, capsys):
    bad = write_config(tmp_path / "bad.yaml", {"seed": 1, "han": {"hidden": 3}})
    assert main(["generate", "--config", str(bad), "--out", str(tmp_path / "x")]) == 2
    assert main(["generate", "--out", str(tmp_path / "y")]) == 2  # no seed
    assert main(["extract", "--reports", str(tmp_path / "missing.jsonl"), "--sentence-model", "a",
                 "--ner-model", "b", "--out", str(tmp_path)]) == 2
    assert main(["generate", "--seed", "1", "--set", "synthetic.positive_rate=2", "--out", str(tmp_path / "z")]) == 2
    assert "error" in capsys.readouterr().err


def test_exit_bad_report_record(pipeline, tmp_path):
    bad = tmp_path / "r.jsonl"
    bad.write_text(json.dumps({"report_id": "R", "patient_id": "P", "institution": "I", "modality": "CAT-SCAN",
                               "timestamp": "2015-01-01T00:00:00Z", "text": "x"}) + "\n")
    assert main(["extract", "--config", pipeline["cfg"], "--reports", str(bad), "--sentence-model",
                 str(pipeline["sent"]), "--ner-model", str(pipeline["ner"]), "--out", str(tmp_path / "o")]) == 2


def test_exit_degenerate(tmp_path):
    raw = {**TINY, "synthetic": {**TINY["synthetic"], "positive_rate": 0.0}}
    cfg = str(write_config(tmp_path / "c.yaml", raw))
    data = tmp_path / "d"
    assert main(["generate", "--config", cfg, "--out", str(data)]) == 0
    common = ["--config", cfg, "--reports", str(data / "reports.jsonl"), "--brat-dir", str(data / "brat")]
    assert main(["train-sentence", *common, "--out", str(tmp_path / "s")]) == 3
    assert main(["train-ner", *common, "--out", str(tmp_path / "n")]) == 3


def test_exit_model_mismatch(pipeline, tmp_path):
    p = pipeline
    # the models swapped: each sidecar has the wrong kind
    assert main(["extract", "--config", p["cfg"], "--reports", str(p["data"] / "reports.jsonl"),
                 "--sentence-model", str(p["ner"] / "ner_model.json"),
                 "--ner-model", str(p["sent"] / "sentence_model.json"), "--out", str(tmp_path)]) == 4


def test_exit_join_failure(pipeline, tmp_path):
    preds = tmp_path / "p.jsonl"
    preds.write_text(json.dumps({"report_id": "NOPE", "sentences": [], "timeframes": []}) + "\n")
    assert main(["analyze", "--config", pipeline["cfg"], "--predictions", str(preds),
                 "--reports", str(pipeline["data"] / "reports.jsonl"), "--out", str(tmp_path / "o")]) == 5


def test_exit_alignment_failure(pipeline, tmp_path):
    gold = pipeline["data"] / "gold_predictions.jsonl"
    short = tmp_path / "short.jsonl"
    short.write_text("\n".join(gold.read_text().splitlines()[:-1]) + "\n")
    assert main(["evaluate", "--gold", str(gold), "--pred", str(short), "--mode", "span",
                 "--out", str(tmp_path / "m.csv")]) == 6


def test_console_script_help():
    r = subprocess.run([sys.executable, "-m", "radfollow.cli", "--help"], capture_output=True, text=True)
    assert r.returncode == 0 and "generate" in r.stdout


# -- configuration -------------------------------------------------------------------

def test_example_config_loads():
    cfg = load_config(Path(__file__).parents[1] / "configs" / "synthetic.yaml")
    assert cfg.seed == 13 and cfg.han.word_hidden == 64
    assert cfg.path("reports").is_absolute()


def test_overrides():
    raw = {"seed": 1}
    apply_override(raw, "han.lr=0.002")
    apply_override(raw, "ner.decode=viterbi")
    cfg = build_config(raw)
    assert cfg.han.lr == 0.002 and cfg.ner.decode == "viterbi"
    with pytest.raises(ConfigError):
        apply_override(raw, "no-equals-sign")
    with pytest.raises(ConfigError):
        build_config({"seed": 1, "bogus": {}})
    with pytest.raises(ConfigError):
        build_config({"seed": 1, "ner_cv": {"folds": 1}})
