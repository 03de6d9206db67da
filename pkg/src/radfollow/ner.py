"""Reason/test/time-frame tagging inside recommendation sentences.

Tokens are represented by a character BiLSTM encoding concatenated with a
word embedding; a token-level BiLSTM feeds a 13-way BIOES projection.
Decoding is either per-token argmax followed by table-driven repair, or
Viterbi over log-softmax emissions with BIOES-constrained transitions.
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import asdict, dataclass, field, fields
from typing import Iterable, Sequence

import numpy as np

from .corpus import ENTITY_KINDS, AnnotatedReport, EntitySpan
from .embed import PAD, UNK, Vocabulary
from .evaluation import Metrics, kfold_split, span_level_eval, token_level_eval
from .han import DegenerateCorpusError, SentencePrediction, split_train_val
from .modelio import ModelMismatchError, load_model_files, save_model_files
from .nn import (
    LSTM,
    ParamSet,
    bidi_encode,
    bidi_encode_backward,
    dropout,
    dropout_backward,
    init_bidi,
    init_dense,
    log_softmax,
    make_optimizer,
    softmax_xent,
)
from .nn.params import xavier_uniform
from .text import Sentence, Token, split_sentences

log = logging.getLogger(__name__)

MODEL_KIND = "ner"
TAGS: tuple[str, ...] = ("O",) + tuple(f"{p}-{k}" for k in ENTITY_KINDS for p in "BIES")
TAG_INDEX = {t: i for i, t in enumerate(TAGS)}
N_TAGS = len(TAGS)
ARGMAX, VITERBI = "argmax", "viterbi"


def _split_tag(tag: str) -> tuple[str, str | None]:
    if tag == "O":
        return "O", None
    prefix, kind = tag.split("-", 1)
    if prefix not in "BIES" or kind not in ENTITY_KINDS:
        raise ValueError(f"unknown tag {tag!r}")
    return prefix, kind


# -- gold encoding --------------------------------------------------------------

def encode_tags(tokens: Sequence[Token], spans: Iterable[EntitySpan]) -> list[str]:
    """BIOES tags for ``tokens``; a token overlapping a span at all belongs to it.

    When spans of different kinds compete for a token, the earlier span wins.
    """
    tags = ["O"] * len(tokens)
    for span in sorted(spans):
        idx = [i for i, t in enumerate(tokens) if t.begin < span.end and span.begin < t.end and tags[i] == "O"]
        if not idx:
            continue
        # keep the covered run contiguous
        idx = list(range(idx[0], idx[-1] + 1))
        if any(tags[i] != "O" for i in idx):
            continue
        if len(idx) == 1:
            tags[idx[0]] = f"S-{span.kind}"
        else:
            tags[idx[0]] = f"B-{span.kind}"
            for i in idx[1:-1]:
                tags[i] = f"I-{span.kind}"
            tags[idx[-1]] = f"E-{span.kind}"
    return tags


# -- decoding -------------------------------------------------------------------

# (relation of the open span to the incoming tag, tag prefix) -> actions.
# relation: "none" (nothing open), "same" (open span of the tag's type), "other".
REPAIR_TABLE: dict[tuple[str, str], tuple[str, ...]] = {
    ("none", "O"): (),
    ("same", "O"): ("close",),
    ("other", "O"): ("close",),
    ("none", "B"): ("open",),
    ("same", "B"): ("close", "open"),
    ("other", "B"): ("close", "open"),
    ("none", "I"): ("open",),              # R1
    ("same", "I"): ("extend",),
    ("other", "I"): ("close", "open"),     # R2 closes, R1 reopens
    ("none", "E"): ("single",),            # R1
    ("same", "E"): ("extend", "close"),
    ("other", "E"): ("close", "single"),   # R2, R1
    ("none", "S"): ("single",),
    ("same", "S"): ("close", "single"),
    ("other", "S"): ("close", "single"),
}


def decode_spans(tags: Sequence[str], tokens: Sequence[Token], text: str) -> list[EntitySpan]:
    """Spans from a tag sequence, repairing invalid BIOES with ``REPAIR_TABLE``.

    An open span that is never closed by ``E`` ends at its last token of the
    same type. Offsets run from the first token's begin to the last token's end.
    """
    if len(tags) != len(tokens):
        raise ValueError(f"{len(tags)} tags for {len(tokens)} tokens")
    out: list[EntitySpan] = []
    open_kind: str | None = None
    start = last = 0

    def emit(kind, i, j):
        out.append(EntitySpan.from_text(text, kind, tokens[i].begin, tokens[j].end))

    for i, tag in enumerate(tags):
        prefix, kind = _split_tag(tag)
        if open_kind is None:
            rel = "none"
        else:
            rel = "same" if kind == open_kind else "other"
        for action in REPAIR_TABLE[(rel, prefix)]:
            if action == "close":
                emit(open_kind, start, last)
                open_kind = None
            elif action == "open":
                open_kind, start, last = kind, i, i
            elif action == "extend":
                last = i
            elif action == "single":
                emit(kind, i, i)
    if open_kind is not None:
        emit(open_kind, start, last)
    return out


def allowed_transition(prev: str | None, cur: str | None) -> bool:
    """BIOES adjacency; ``None`` stands for the sequence start (prev) or end (cur)."""
    p_prefix, p_kind = ("O", None) if prev is None else _split_tag(prev)
    if cur is None:
        return p_prefix in ("O", "E", "S")
    c_prefix, c_kind = _split_tag(cur)
    if p_prefix in ("B", "I"):
        return c_prefix in ("I", "E") and c_kind == p_kind
    return c_prefix in ("O", "B", "S")


def transition_mask() -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Boolean masks ``(start (K,), trans (K, K), end (K,))`` of allowed moves."""
    start = np.array([allowed_transition(None, t) for t in TAGS])
    trans = np.array([[allowed_transition(a, b) for b in TAGS] for a in TAGS])
    end = np.array([allowed_transition(t, None) for t in TAGS])
    return start, trans, end


def viterbi(emissions: np.ndarray, transitions: np.ndarray, allowed=None) -> list[int]:
    """Best tag path maximising sum of emission and transition scores.

    Disallowed starts, transitions and ends score -inf.
    """
    T, K = emissions.shape
    if T == 0:
        return []
    a_start, a_trans, a_end = allowed if allowed is not None else transition_mask()
    trans = np.where(a_trans, transitions, -np.inf)
    score = np.where(a_start, emissions[0], -np.inf)
    back = np.zeros((T, K), dtype=np.int64)
    for t in range(1, T):
        cand = score[:, None] + trans
        back[t] = cand.argmax(axis=0)
        score = cand[back[t], np.arange(K)] + emissions[t]
    score = np.where(a_end, score, -np.inf)
    path = [int(score.argmax())]
    for t in range(T - 1, 0, -1):
        path.append(int(back[t, path[-1]]))
    return path[::-1]


def path_score(path: Sequence[int], emissions: np.ndarray, transitions: np.ndarray, allowed=None) -> float:
    a_start, a_trans, a_end = allowed if allowed is not None else transition_mask()
    if not a_start[path[0]] or not a_end[path[-1]]:
        return -np.inf
    s = emissions[0, path[0]]
    for t in range(1, len(path)):
        if not a_trans[path[t - 1], path[t]]:
            return -np.inf
        s += transitions[path[t - 1], path[t]] + emissions[t, path[t]]
    return float(s)


def brute_force_path(emissions: np.ndarray, transitions: np.ndarray) -> list[int]:
    allowed = transition_mask()
    best, best_s = None, -np.inf
    for path in itertools.product(range(emissions.shape[1]), repeat=emissions.shape[0]):
        s = path_score(path, emissions, transitions, allowed)
        if s > best_s:
            best, best_s = list(path), s
    return best


def estimate_transitions(tag_seqs: Iterable[Sequence[str]], smoothing: float = 1.0) -> np.ndarray:
    """Log bigram probabilities over allowed transitions, add-``smoothing``."""
    _, a_trans, _ = transition_mask()
    counts = np.where(a_trans, smoothing, 0.0)
    for seq in tag_seqs:
        for a, b in zip(seq, seq[1:]):
            counts[TAG_INDEX[a], TAG_INDEX[b]] += 1.0
    probs = counts / counts.sum(axis=1, keepdims=True)
    with np.errstate(divide="ignore"):
        out = np.log(probs)
    # stored finite; the allowed mask re-imposes -inf at decode time
    return np.where(a_trans, out, 0.0)


# -- model ---------------------------------------------------------------------

@dataclass
class NerConfig:
    word_dim: int = 50
    char_dim: int = 25
    char_hidden: int = 25
    token_hidden: int = 100
    dropout: float = 0.5
    optimizer: str = "adam"
    lr: float = 5e-3
    max_grad_norm: float | None = 5.0
    batch_size: int = 8
    max_epochs: int = 50
    patience: int = 10
    val_fraction: float = 0.1
    max_token_chars: int = 40
    train_word_embeddings: bool = False
    decode: str = ARGMAX

    def validate(self) -> None:
        for name in ("word_dim", "char_dim", "char_hidden", "token_hidden", "batch_size",
                     "max_epochs", "patience", "max_token_chars"):
            if getattr(self, name) < 1:
                raise ValueError(f"ner.{name} must be >= 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ValueError("ner.dropout must be in [0, 1)")
        if not 0.0 < self.val_fraction < 1.0:
            raise ValueError("ner.val_fraction must be in (0, 1)")
        if self.decode not in (ARGMAX, VITERBI):
            raise ValueError(f"ner.decode must be {ARGMAX!r} or {VITERBI!r}")

    @classmethod
    def from_dict(cls, d: dict) -> "NerConfig":
        unknown = set(d) - {f.name for f in fields(cls)}
        if unknown:
            raise ValueError(f"unknown ner settings: {sorted(unknown)}")
        cfg = cls(**d)
        cfg.validate()
        return cfg


def build_char_vocab(surfaces: Iterable[str]) -> Vocabulary:
    chars = sorted({c for s in surfaces for c in s})
    return Vocabulary([PAD, UNK] + chars)


class NerModel:
    def __init__(self, config: NerConfig, words: Vocabulary, chars: Vocabulary,
                 embeddings: np.ndarray | None = None, seed: int = 0):
        config.validate()
        self.config, self.words, self.chars = config, words, chars
        rng = np.random.default_rng(seed)
        c = config
        if embeddings is None:
            embeddings = xavier_uniform(rng, len(words), c.word_dim)
            embeddings[words.pad_index] = 0.0
        if embeddings.shape != (len(words), c.word_dim):
            raise ValueError(f"embedding matrix {embeddings.shape} does not match vocab {len(words)} x {c.word_dim}")
        ps = ParamSet()
        ps.add("wemb", embeddings, frozen=not c.train_word_embeddings)
        cemb = xavier_uniform(rng, len(chars), c.char_dim)
        cemb[chars.pad_index] = 0.0
        ps.add("cemb", cemb)
        init_bidi(ps, "cenc.", LSTM, c.char_dim, c.char_hidden, rng)
        init_bidi(ps, "tenc.", LSTM, c.word_dim + 2 * c.char_hidden, c.token_hidden, rng)
        init_dense(ps, "out.", 2 * c.token_hidden, N_TAGS, rng)
        ps.add("trans", np.zeros((N_TAGS, N_TAGS)), frozen=True)
        self.params = ps
        self._allowed = transition_mask()

    # -- forward -------------------------------------------------------------

    def _char_ids(self, surfaces: Sequence[str]) -> tuple[np.ndarray, np.ndarray]:
        L = min(self.config.max_token_chars, max(len(s) for s in surfaces))
        ids = np.zeros((len(surfaces), L), dtype=np.int64)
        mask = np.zeros((len(surfaces), L))
        for i, s in enumerate(surfaces):
            s = s[:L]
            ids[i, : len(s)] = self.chars.encode(s)
            mask[i, : len(s)] = 1.0
        return ids, mask

    def _char_forward(self, surfaces: Sequence[str]):
        if any(len(s) == 0 for s in surfaces):
            raise ValueError("empty token")
        p = self.params
        ids, mask = self._char_ids(surfaces)
        H, cache = bidi_encode(LSTM, p["cemb"][ids], mask, p, "cenc.")
        h = self.config.char_hidden
        # forward state after the last real char; backward state after the first
        out = np.concatenate([H[:, -1, :h], H[:, 0, h:]], axis=1)
        return out, (ids, mask, cache, H.shape)

    def _char_backward(self, dout, cache) -> None:
        ids, mask, enc_cache, shape = cache
        h = self.config.char_hidden
        dH = np.zeros(shape)
        dH[:, -1, :h] = dout[:, :h]
        dH[:, 0, h:] = dout[:, h:]
        dx = bidi_encode_backward(dH, enc_cache, self.params.params, self.params.grads)
        sel = mask > 0
        np.add.at(self.params.grads["cemb"], ids[sel], dx[sel])

    def char_encode(self, surface: str) -> np.ndarray:
        if not surface:
            raise ValueError("empty token")
        return self._char_forward([surface])[0][0]

    def forward(self, sentences: Sequence[Sequence[str]], training: bool = False, rng=None):
        """Logits ``(N, T, 13)`` for token-surface lists."""
        if not sentences or any(len(s) == 0 for s in sentences):
            raise ValueError("empty sentence")
        p, c = self.params, self.config
        N, T = len(sentences), max(len(s) for s in sentences)
        tmask = np.zeros((N, T))
        wids = np.zeros((N, T), dtype=np.int64)
        flat = []
        for i, s in enumerate(sentences):
            tmask[i, : len(s)] = 1.0
            wids[i, : len(s)] = self.words.encode(t.lower() for t in s)
            flat.extend(s)
        cvec, ccache = self._char_forward(flat)
        sel = tmask > 0
        C = np.zeros((N, T, cvec.shape[1]))
        C[sel] = cvec
        X = np.concatenate([p["wemb"][wids], C], axis=-1)
        Xd, m_in = dropout(X, c.dropout, training, rng)
        H, tcache = bidi_encode(LSTM, Xd, tmask, p, "tenc.")
        Hd, m_out = dropout(H, c.dropout, training, rng)
        logits = Hd @ p["out.W"] + p["out.b"]
        return logits, (wids, tmask, ccache, m_in, tcache, m_out, Hd)

    def backward(self, dlogits, cache) -> None:
        wids, tmask, ccache, m_in, tcache, m_out, Hd = cache
        p, g = self.params.params, self.params.grads
        g["out.W"] += Hd.reshape(-1, Hd.shape[-1]).T @ dlogits.reshape(-1, N_TAGS)
        g["out.b"] += dlogits.reshape(-1, N_TAGS).sum(axis=0)
        dH = dropout_backward(dlogits @ p["out.W"].T, m_out)
        dX = dropout_backward(bidi_encode_backward(dH, tcache, p, g), m_in)
        sel = tmask > 0
        wd = self.config.word_dim
        if "wemb" not in self.params.frozen:
            np.add.at(g["wemb"], wids[sel], dX[..., :wd][sel])
        self._char_backward(dX[..., wd:][sel], ccache)

    # -- inference -----------------------------------------------------------

    def tag_sentences(self, sentences: Sequence[Sequence[str]], mode: str | None = None) -> list[list[str]]:
        mode = mode or self.config.decode
        if mode not in (ARGMAX, VITERBI):
            raise ValueError(f"unknown decode mode {mode!r}")
        if not sentences:
            return []
        out = []
        for i in range(0, len(sentences), 64):
            chunk = sentences[i : i + 64]
            logp = log_softmax(self.forward(chunk)[0])
            for j, s in enumerate(chunk):
                em = logp[j, : len(s)]
                if mode == ARGMAX:
                    path = em.argmax(axis=1).tolist()
                else:
                    path = viterbi(em, self.params["trans"], self._allowed)
                out.append([TAGS[k] for k in path])
        return out

    def tag_sentence(self, tokens: Sequence[str], mode: str | None = None) -> list[str]:
        if not tokens:
            raise ValueError("empty token list")
        return self.tag_sentences([tokens], mode)[0]

    # -- persistence ---------------------------------------------------------

    def save(self, directory, name: str = "ner_model"):
        return save_model_files(directory, name, MODEL_KIND, asdict(self.config),
                                {"words": self.words.itos, "chars": self.chars.itos}, self.params.copy_params())

    @classmethod
    def load(cls, path) -> "NerModel":
        cfg_d, vocabs, tensors = load_model_files(path, MODEL_KIND)
        cfg = NerConfig.from_dict(cfg_d)
        model = cls(cfg, Vocabulary(vocabs["words"]), Vocabulary(vocabs["chars"]), tensors["wemb"])
        if set(tensors) != set(model.params.params):
            raise ModelMismatchError("checkpoint parameter names do not match the configuration")
        try:
            model.params.load_params(tensors)
        except ValueError as e:
            raise ModelMismatchError(str(e)) from e
        return model


# -- data preparation ------------------------------------------------------------

@dataclass
class NerExample:
    report_id: str
    text: str
    tokens: list[Token]
    tags: list[str]

    @property
    def surfaces(self) -> list[str]:
        return [t.surface for t in self.tokens]


def examples_from_annotated(annotated: Iterable[AnnotatedReport], abbreviations=None) -> list[NerExample]:
    """One example per segmented sentence that overlaps a gold recommendation span."""
    out = []
    for a in annotated:
        text = a.report.text
        for s in split_sentences(text, a.report.report_id, abbreviations):
            if not s.tokens or not any(s.begin < e and b < s.end for b, e in a.rec_sentence_spans):
                continue
            ents = [x for x in a.entities if s.begin < x.end and x.begin < s.end]
            out.append(NerExample(a.report.report_id, text, s.tokens, encode_tags(s.tokens, ents)))
    return out


def gold_spans(examples: Iterable[NerExample]) -> list[tuple]:
    return [(ex.report_id,) + sp.key() for ex in examples for sp in decode_spans(ex.tags, ex.tokens, ex.text)]


def predict_spans(model: NerModel, examples: Sequence[NerExample], mode: str | None = None) -> tuple[list[list[str]], list[tuple]]:
    tags = model.tag_sentences([ex.surfaces for ex in examples], mode)
    spans = [(ex.report_id,) + sp.key() for ex, t in zip(examples, tags) for sp in decode_spans(t, ex.tokens, ex.text)]
    return tags, spans


# -- training ------------------------------------------------------------------

@dataclass
class NerEpoch:
    epoch: int
    train_loss: float
    val_span_f1: float


@dataclass
class NerHistory:
    epochs: list[NerEpoch] = field(default_factory=list)
    best_epoch: int = 0
    best_f1: float = 0.0
    stopped_early: bool = False

    def write_csv(self, out) -> None:
        out.write("epoch,train_loss,val_span_f1\n")
        for r in self.epochs:
            out.write(f"{r.epoch},{r.train_loss:.6f},{r.val_span_f1:.6f}\n")


def _by_report(examples: Sequence[NerExample]) -> dict[str, list[NerExample]]:
    grouped: dict[str, list[NerExample]] = {}
    for ex in examples:
        grouped.setdefault(ex.report_id, []).append(ex)
    return grouped


def fit_ner(examples: Sequence[NerExample], words: Vocabulary, config: NerConfig, seed: int,
            embeddings: np.ndarray | None = None, chars: Vocabulary | None = None) -> tuple[NerModel, NerHistory]:
    """Train one tagger, early-stopping on validation span F1 (report-level split)."""
    if not any(t != "O" for ex in examples for t in ex.tags):
        raise DegenerateCorpusError("no entity annotations in the training sentences")
    grouped = _by_report(examples)
    rids = sorted(grouped)
    tr_idx, va_idx = split_train_val(len(rids), config.val_fraction, seed)
    train = [ex for i in tr_idx for ex in grouped[rids[i]]]
    val = [ex for i in va_idx for ex in grouped[rids[i]]]
    chars = chars or build_char_vocab(t.surface for ex in examples for t in ex.tokens)
    model = NerModel(config, words, chars, embeddings, seed)
    model.params.params["trans"][...] = estimate_transitions(ex.tags for ex in train)
    opt = make_optimizer(config.optimizer, config.lr, config.max_grad_norm)
    rng = np.random.default_rng(seed + 1)
    gold_val = gold_spans(val)
    history = NerHistory()
    best, best_f1 = model.params.copy_params(), -1.0
    for epoch in range(1, config.max_epochs + 1):
        order = rng.permutation(len(train))
        total = 0.0
        for s in range(0, len(order), config.batch_size):
            batch = [train[k] for k in order[s : s + config.batch_size]]
            model.params.zero_grad()
            logits, cache = model.forward([ex.surfaces for ex in batch], training=True, rng=rng)
            y = np.zeros(logits.shape[:2], dtype=np.int64)
            for i, ex in enumerate(batch):
                y[i, : len(ex.tags)] = [TAG_INDEX[t] for t in ex.tags]
            loss, dlogits = softmax_xent(logits, y, None, cache[1])
            model.backward(dlogits, cache)
            opt.step(model.params)
            total += loss * len(batch)
        f1 = span_level_eval(gold_val, predict_spans(model, val)[1])["micro"].f1 if val else 0.0
        history.epochs.append(NerEpoch(epoch, total / max(1, len(train)), f1))
        log.info("ner epoch %d loss %.4f val span F1 %.4f", epoch, total / max(1, len(train)), f1)
        if f1 > best_f1:
            best_f1, history.best_epoch, best = f1, epoch, model.params.copy_params()
        elif epoch - history.best_epoch >= config.patience:
            history.stopped_early = True
            break
    history.best_f1 = max(best_f1, 0.0)
    model.params.load_params(best)
    return model, history


@dataclass
class CrossValidation:
    folds: list[list[str]]
    models: list[NerModel]
    token_metrics: dict[str, Metrics]
    span_metrics: dict[str, Metrics]


def train_ner(examples: Sequence[NerExample], words: Vocabulary, config: NerConfig, seed: int,
              folds: int = 5, embeddings: np.ndarray | None = None) -> CrossValidation:
    """k-fold cross-validation with report-level folds; metrics pool all held-out folds."""
    grouped = _by_report(examples)
    if len(grouped) < folds:
        raise ValueError(f"cannot make {folds} folds from {len(grouped)} reports")
    split = kfold_split(sorted(grouped), folds, seed)
    chars = build_char_vocab(t.surface for ex in examples for t in ex.tokens)
    models, gold_tags, pred_tags, gold_sp, pred_sp = [], [], [], [], []
    for k, held in enumerate(split):
        held_set = set(held)
        train = [ex for ex in examples if ex.report_id not in held_set]
        test = [ex for ex in examples if ex.report_id in held_set]
        model, _ = fit_ner(train, words, config, seed + k, embeddings, chars)
        tags, spans = predict_spans(model, test)
        models.append(model)
        gold_tags.extend(ex.tags for ex in test)
        pred_tags.extend(tags)
        gold_sp.extend(gold_spans(test))
        pred_sp.extend(spans)
    return CrossValidation(split, models, token_level_eval(gold_tags, pred_tags), span_level_eval(gold_sp, pred_sp))


# -- extraction ------------------------------------------------------------------

def extract_entities(text: str, sentences: Sequence[Sentence], predictions: Sequence[SentencePrediction],
                     model: NerModel, mode: str | None = None) -> list[EntitySpan]:
    """Entities from the sentences predicted positive; others contribute nothing."""
    chosen = [s for s, p in zip(sentences, predictions) if p.label == 1 and s.tokens]
    if not chosen:
        return []
    tags = model.tag_sentences([[t.surface for t in s.tokens] for s in chosen], mode)
    return [sp for s, t in zip(chosen, tags) for sp in decode_spans(t, s.tokens, text)]
