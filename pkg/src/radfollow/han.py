"""Hierarchical attention network that labels each sentence of a report.

Word level: a BiGRU over each sentence's tokens, pooled by attention into a
sentence vector. Sentence level: a BiGRU over the sentence vectors of one
report, pooled by attention into a report vector. Each sentence is classified
from ``[sentence vector; sentence-encoder state; report vector]``.
"""
from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field, fields
from typing import Iterable, Sequence

import numpy as np

from .corpus import AnnotatedReport
from .embed import PAD, UNK, Vocabulary
from .evaluation import ConfusionCounts, binary_confusion, confusion_to_metrics
from .modelio import ModelMismatchError, load_model_files, save_model_files
from .nn import (
    GRU,
    ParamSet,
    attention_pool,
    attention_pool_backward,
    bidi_encode,
    bidi_encode_backward,
    dropout,
    dropout_backward,
    init_attention,
    init_bidi,
    init_dense,
    make_optimizer,
    softmax,
    softmax_xent,
)
from .nn.params import xavier_uniform
from .text import split_sentences

log = logging.getLogger(__name__)

MODEL_KIND = "han"


class DegenerateCorpusError(ValueError):
    """Training data lacks one of the classes (or is otherwise unusable)."""


@dataclass
class HanConfig:
    embedding_dim: int = 50
    word_hidden: int = 300
    sent_hidden: int = 300
    # attention projection widths; 0 means "twice the hidden size"
    word_attention: int = 0
    sent_attention: int = 0
    dropout: float = 0.4
    optimizer: str = "adam"
    lr: float = 1e-3
    max_grad_norm: float | None = 5.0
    max_epochs: int = 50
    patience: int = 15
    val_fraction: float = 0.1
    threshold: float = 0.5
    pos_weight: float = 1.0
    max_sentence_tokens: int = 120
    max_report_sentences: int = 200
    train_embeddings: bool = False
    inference_batch: int = 32

    def validate(self) -> None:
        for name in ("embedding_dim", "word_hidden", "sent_hidden", "max_epochs", "patience",
                     "max_sentence_tokens", "max_report_sentences", "inference_batch"):
            if getattr(self, name) < 1:
                raise ValueError(f"han.{name} must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("han.dropout must be in [0, 1)")
        if not 0.0 < self.val_fraction < 1.0:
            raise ValueError("han.val_fraction must be in (0, 1)")
        if not 0.0 <= self.threshold <= 1.0:
            raise ValueError("han.threshold must be in [0, 1]")
        if self.pos_weight <= 0 or self.lr <= 0:
            raise ValueError("han.pos_weight and han.lr must be positive")

    @classmethod
    def from_dict(cls, d: dict) -> "HanConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown han settings: {sorted(unknown)}")
        cfg = cls(**d)
        cfg.validate()
        return cfg

    @property
    def word_att(self) -> int:
        return self.word_attention or 2 * self.word_hidden

    @property
    def sent_att(self) -> int:
        return self.sent_attention or 2 * self.sent_hidden


@dataclass(frozen=True)
class SentencePrediction:
    index: int
    begin: int
    end: int
    p: float
    label: int

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"probability {self.p} outside [0, 1]")


@dataclass
class HanExample:
    """One report as normalised tokens per sentence, with sentence labels and spans."""
    report_id: str
    sentences: list[list[str]]
    labels: list[int]
    spans: list[tuple[int, int]] = field(default_factory=list)


def sentence_labels(spans: Sequence[tuple[int, int]], rec_spans: Sequence[tuple[int, int]]) -> list[int]:
    """1 for each sentence span that overlaps a gold recommendation span."""
    return [int(any(b < re and rb < e for rb, re in rec_spans)) for b, e in spans]


def examples_from_annotated(annotated: Iterable[AnnotatedReport], abbreviations=None) -> list[HanExample]:
    out = []
    for a in annotated:
        sents = [s for s in split_sentences(a.report.text, a.report.report_id, abbreviations) if s.tokens]
        spans = [(s.begin, s.end) for s in sents]
        out.append(HanExample(
            a.report.report_id,
            [[t.norm for t in s.tokens] for s in sents],
            sentence_labels(spans, a.rec_sentence_spans),
            spans,
        ))
    return out


class HanModel:
    """Parameters plus forward/backward passes over batches of reports."""

    def __init__(self, config: HanConfig, vocab: Vocabulary, embeddings: np.ndarray | None = None, seed: int = 0):
        config.validate()
        self.config = config
        self.vocab = vocab
        rng = np.random.default_rng(seed)
        if embeddings is None:
            embeddings = xavier_uniform(rng, len(vocab), config.embedding_dim)
            embeddings[vocab.pad_index] = 0.0
        if embeddings.shape != (len(vocab), config.embedding_dim):
            raise ValueError(f"embedding matrix {embeddings.shape} does not match vocab {len(vocab)} x {config.embedding_dim}")
        c = config
        ps = ParamSet()
        ps.add("emb", embeddings, frozen=not c.train_embeddings)
        init_bidi(ps, "wenc.", GRU, c.embedding_dim, c.word_hidden, rng)
        init_attention(ps, "watt.", 2 * c.word_hidden, c.word_att, rng)
        init_bidi(ps, "senc.", GRU, 2 * c.word_hidden, c.sent_hidden, rng)
        init_attention(ps, "satt.", 2 * c.sent_hidden, c.sent_att, rng)
        init_dense(ps, "head.", self.head_width, 2, rng)
        self.params = ps

    @property
    def head_width(self) -> int:
        return 2 * self.config.word_hidden + 4 * self.config.sent_hidden

    # -- batching -----------------------------------------------------------

    def encode_ids(self, sentences: Sequence[Sequence[str]]) -> list[np.ndarray]:
        """Vocabulary ids per sentence, truncated to the configured bounds."""
        c = self.config
        if len(sentences) > c.max_report_sentences:
            log.warning("truncating report from %d to %d sentences", len(sentences), c.max_report_sentences)
        out = []
        for toks in sentences[: c.max_report_sentences]:
            if len(toks) > c.max_sentence_tokens:
                log.debug("truncating sentence of %d tokens", len(toks))
            out.append(np.array(self.vocab.encode(toks[: c.max_sentence_tokens]), dtype=np.int64))
        return out

    @staticmethod
    def _pack(reports: Sequence[Sequence[np.ndarray]]):
        sents = [s for r in reports for s in r]
        if not sents:
            raise ValueError("no sentences to encode")
        if any(len(s) == 0 for s in sents):
            raise ValueError("empty sentence")
        T = max(len(s) for s in sents)
        ids = np.zeros((len(sents), T), dtype=np.int64)
        wmask = np.zeros((len(sents), T))
        for i, s in enumerate(sents):
            ids[i, : len(s)] = s
            wmask[i, : len(s)] = 1.0
        S = max(len(r) for r in reports)
        smask = np.zeros((len(reports), S))
        for i, r in enumerate(reports):
            smask[i, : len(r)] = 1.0
        return ids, wmask, smask

    # -- forward / backward ---------------------------------------------------

    def forward(self, reports: Sequence[Sequence[np.ndarray]], training: bool = False, rng=None):
        """Logits ``(R, S, 2)`` for a batch of reports given as id arrays per sentence."""
        if any(len(r) == 0 for r in reports):
            raise ValueError("report with zero sentences")
        p, c = self.params, self.config
        ids, wmask, smask = self._pack(reports)
        E = p["emb"][ids]
        Ed, m_emb = dropout(E, c.dropout, training, rng)
        Hw, c_wenc = bidi_encode(GRU, Ed, wmask, p, "wenc.")
        v, alpha_w, c_watt = attention_pool(Hw, wmask, p["watt.W"], p["watt.b"], p["watt.ctx"])
        sel = smask > 0
        V = np.zeros(smask.shape + (v.shape[1],))
        V[sel] = v
        Hs, c_senc = bidi_encode(GRU, V, smask, p, "senc.")
        d, alpha_s, c_satt = attention_pool(Hs, smask, p["satt.W"], p["satt.b"], p["satt.ctx"])
        D = np.broadcast_to(d[:, None, :], Hs.shape[:2] + (d.shape[1],))
        Z = np.concatenate([V, Hs, D], axis=-1)
        Zd, m_head = dropout(Z, c.dropout, training, rng)
        logits = Zd @ p["head.W"] + p["head.b"]
        cache = (ids, wmask, smask, m_emb, c_wenc, c_watt, c_senc, c_satt, m_head, Zd, v.shape[1], Hs.shape[2])
        return logits, (alpha_w, alpha_s), cache

    def backward(self, dlogits: np.ndarray, cache) -> None:
        """Accumulate parameter gradients into ``self.params.grads``."""
        ids, wmask, smask, m_emb, c_wenc, c_watt, c_senc, c_satt, m_head, Zd, kv, ks = cache
        p, g = self.params.params, self.params.grads
        g["head.W"] += Zd.reshape(-1, Zd.shape[-1]).T @ dlogits.reshape(-1, 2)
        g["head.b"] += dlogits.reshape(-1, 2).sum(axis=0)
        dZ = dropout_backward(dlogits @ p["head.W"].T, m_head)
        dV = dZ[..., :kv].copy()
        dHs = dZ[..., kv : kv + ks].copy()
        dd = dZ[..., kv + ks :].sum(axis=1)
        dHs += attention_pool_backward(dd, c_satt, p["satt.W"], p["satt.ctx"], g, "satt.")
        dV += bidi_encode_backward(dHs, c_senc, p, g)
        dv = dV[smask > 0]
        dHw = attention_pool_backward(dv, c_watt, p["watt.W"], p["watt.ctx"], g, "watt.")
        dEd = bidi_encode_backward(dHw, c_wenc, p, g)
        if "emb" not in self.params.frozen:
            dE = dropout_backward(dEd, m_emb)
            np.add.at(g["emb"], ids[wmask > 0], dE[wmask > 0])

    def loss(self, logits: np.ndarray, labels: np.ndarray, smask: np.ndarray) -> tuple[float, np.ndarray]:
        weights = np.array([1.0, self.config.pos_weight])
        return softmax_xent(logits, labels, weights, smask)

    # -- inference ------------------------------------------------------------

    def encode_sentence(self, tokens: Sequence[str]) -> tuple[np.ndarray, np.ndarray]:
        """Sentence vector and word attention weights for one token list."""
        ids = self.encode_ids([tokens])[0]
        if len(ids) == 0:
            raise ValueError("cannot encode an empty sentence")
        p = self.params
        E = p["emb"][ids][None]
        Hw, _ = bidi_encode(GRU, E, None, p, "wenc.")
        v, alpha, _ = attention_pool(Hw, None, p["watt.W"], p["watt.b"], p["watt.ctx"])
        return v[0], alpha[0]

    def predict_proba(self, reports: Sequence[Sequence[Sequence[str]]]) -> list[np.ndarray]:
        """Positive-class probabilities per sentence for each report (token lists)."""
        out: list[np.ndarray] = []
        batch = self.config.inference_batch
        encoded = [self.encode_ids(r) for r in reports]
        for i in range(0, len(encoded), batch):
            chunk = encoded[i : i + batch]
            logits, _, _ = self.forward(chunk)
            probs = softmax(logits)[..., 1]
            out.extend(probs[j, : len(r)].copy() for j, r in enumerate(chunk))
        return out

    def classify_report(self, sentences: Sequence[Sequence[str]], threshold: float | None = None,
                        spans: Sequence[tuple[int, int]] | None = None) -> list[SentencePrediction]:
        if not sentences:
            raise ValueError("report with zero sentences")
        return self.classify_reports([sentences], threshold, [spans] if spans is not None else None)[0]

    def classify_reports(self, reports, threshold: float | None = None, spans=None) -> list[list[SentencePrediction]]:
        thr = self.config.threshold if threshold is None else threshold
        probs = self.predict_proba(reports)
        out = []
        for k, pr in enumerate(probs):
            sp = spans[k] if spans is not None else [(0, 0)] * len(pr)
            out.append([SentencePrediction(i, sp[i][0], sp[i][1], float(np.clip(x, 0.0, 1.0)), int(x >= thr))
                        for i, x in enumerate(pr)])
        return out

    # -- persistence ----------------------------------------------------------

    def save(self, directory, name: str = "sentence_model"):
        return save_model_files(directory, name, MODEL_KIND, asdict(self.config),
                                {"words": self.vocab.itos}, self.params.copy_params())

    @classmethod
    def load(cls, path) -> "HanModel":
        cfg_d, vocabs, tensors = load_model_files(path, MODEL_KIND)
        cfg = HanConfig.from_dict(cfg_d)
        vocab = Vocabulary(vocabs["words"])
        if vocab.itos[:2] != [PAD, UNK]:
            raise ModelMismatchError("word vocabulary must start with PAD and UNK")
        model = cls(cfg, vocab, tensors["emb"])
        if set(tensors) != set(model.params.params):
            raise ModelMismatchError("checkpoint parameter names do not match the configuration")
        try:
            model.params.load_params(tensors)
        except ValueError as e:
            raise ModelMismatchError(str(e)) from e
        return model


# -- training -----------------------------------------------------------------

@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_f1: float
    val_precision: float
    val_recall: float


@dataclass
class TrainingHistory:
    epochs: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    best_f1: float = 0.0
    stopped_early: bool = False

    def write_csv(self, out) -> None:
        out.write("epoch,train_loss,val_f1,val_precision,val_recall\n")
        for r in self.epochs:
            out.write(f"{r.epoch},{r.train_loss:.6f},{r.val_f1:.6f},{r.val_precision:.6f},{r.val_recall:.6f}\n")


def split_train_val(n: int, val_fraction: float, seed: int) -> tuple[list[int], list[int]]:
    """Report-level split; validation gets round(n * fraction) reports, at least one."""
    if n < 2:
        raise DegenerateCorpusError("need at least two reports to hold out a validation split")
    order = np.random.default_rng(seed).permutation(n)
    n_val = min(n - 1, max(1, int(round(n * val_fraction))))
    return sorted(order[n_val:].tolist()), sorted(order[:n_val].tolist())


def _check_classes(examples: Sequence[HanExample]) -> None:
    labels = {y for ex in examples for y in ex.labels}
    if labels != {0, 1}:
        raise DegenerateCorpusError(f"training corpus needs both classes, found {sorted(labels)}")


def evaluate_sentence_model(model: HanModel, examples: Sequence[HanExample], threshold: float | None = None) -> ConfusionCounts:
    thr = model.config.threshold if threshold is None else threshold
    probs = model.predict_proba([ex.sentences for ex in examples if ex.sentences])
    gold, pred = [], []
    for ex, pr in zip([ex for ex in examples if ex.sentences], probs):
        n = len(pr)
        gold.extend(ex.labels[:n])
        pred.extend(int(x >= thr) for x in pr)
    return binary_confusion(gold, pred)


def train_han(
    examples: Sequence[HanExample],
    vocab: Vocabulary,
    config: HanConfig,
    seed: int,
    embeddings: np.ndarray | None = None,
) -> tuple[HanModel, TrainingHistory]:
    """Train with one report per step; keep the weights of the best validation epoch.

    Validation F1 is the positive-class F1 at ``config.threshold``. Training
    stops once ``patience`` epochs pass without a strict improvement.
    """
    examples = [ex for ex in examples if ex.sentences]
    _check_classes(examples)
    train_idx, val_idx = split_train_val(len(examples), config.val_fraction, seed)
    train = [examples[i] for i in train_idx]
    val = [examples[i] for i in val_idx]
    model = HanModel(config, vocab, embeddings, seed)
    opt = make_optimizer(config.optimizer, config.lr, config.max_grad_norm)
    rng = np.random.default_rng(seed + 1)
    encoded = [(model.encode_ids(ex.sentences), np.array(ex.labels[: config.max_report_sentences])) for ex in train]
    history = TrainingHistory()
    best = model.params.copy_params()
    best_f1 = -1.0
    for epoch in range(1, config.max_epochs + 1):
        total = 0.0
        for k in rng.permutation(len(encoded)):
            ids, y = encoded[k]
            model.params.zero_grad()
            logits, _, cache = model.forward([ids], training=True, rng=rng)
            loss, dlogits = model.loss(logits, y[None, :], cache[2])
            model.backward(dlogits, cache)
            opt.step(model.params)
            total += loss
        m = confusion_to_metrics(evaluate_sentence_model(model, val))
        history.epochs.append(EpochRecord(epoch, total / max(1, len(encoded)), m.f1, m.precision, m.recall))
        log.info("epoch %d loss %.4f val F1 %.4f", epoch, total / max(1, len(encoded)), m.f1)
        if m.f1 > best_f1:
            best_f1, history.best_epoch = m.f1, epoch
            best = model.params.copy_params()
        elif epoch - history.best_epoch >= config.patience:
            history.stopped_early = True
            break
    history.best_f1 = max(best_f1, 0.0)
    model.params.load_params(best)
    return model, history
