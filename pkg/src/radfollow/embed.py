"""Vocabulary construction and skip-gram (negative sampling) word embeddings."""
from __future__ import annotations

import hashlib
import logging
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence, TextIO

import numpy as np

from .nn.functional import sigmoid

log = logging.getLogger(__name__)

PAD, UNK = "<pad>", "<unk>"


@dataclass
class Vocabulary:
    itos: list[str]
    counts: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        self.stoi = {w: i for i, w in enumerate(self.itos)}
        if len(self.stoi) != len(self.itos):
            raise ValueError("duplicate vocabulary entries")

    pad_index = 0
    unk_index = 1

    def __len__(self) -> int:
        return len(self.itos)

    def __contains__(self, token: str) -> bool:
        return token in self.stoi

    def index(self, token: str) -> int:
        return self.stoi.get(token, self.unk_index)

    def encode(self, tokens: Iterable[str]) -> list[int]:
        return [self.stoi.get(t, self.unk_index) for t in tokens]

    def hash(self) -> str:
        return hashlib.sha256("\n".join(self.itos).encode("utf-8")).hexdigest()


def build_vocab(tokens: Iterable[str], min_count: int = 2) -> Vocabulary:
    """Tokens ordered by descending count, ties lexicographically; PAD and UNK first."""
    if min_count < 1:
        raise ValueError("min_count must be >= 1")
    counts = Counter(tokens)
    counts.pop(PAD, None)
    counts.pop(UNK, None)
    kept = sorted((w for w, c in counts.items() if c >= min_count), key=lambda w: (-counts[w], w))
    return Vocabulary([PAD, UNK] + kept, {w: counts[w] for w in kept})


@dataclass
class SkipGramConfig:
    dim: int = 50
    window: int = 5
    negatives: int = 5
    epochs: int = 5
    lr: float = 0.025
    min_lr: float = 1e-4
    batch_size: int = 256
    seed: int = 0


@dataclass
class SkipGramResult:
    vectors: np.ndarray
    epoch_losses: list[float]


def _pairs(sentences: Sequence[Sequence[int]], window: int) -> tuple[np.ndarray, np.ndarray]:
    centers, contexts = [], []
    for ids in sentences:
        n = len(ids)
        for i, c in enumerate(ids):
            lo, hi = max(0, i - window), min(n, i + window + 1)
            for j in range(lo, hi):
                if j != i:
                    centers.append(c)
                    contexts.append(ids[j])
    return np.array(centers, dtype=np.int64), np.array(contexts, dtype=np.int64)


def _noise_distribution(vocab: Vocabulary, sentences) -> np.ndarray:
    counts = np.zeros(len(vocab))
    for ids in sentences:
        np.add.at(counts, ids, 1)
    counts[vocab.pad_index] = 0
    p = counts**0.75
    return p / p.sum()


def _neg_loss(W_in, W_out, c, o, neg) -> float:
    v = W_in[c]
    pos = np.einsum("bd,bd->b", v, W_out[o])
    negs = np.einsum("bd,bkd->bk", v, W_out[neg])
    return float(-(np.log(sigmoid(pos) + 1e-12).sum() + np.log(sigmoid(-negs) + 1e-12).sum()) / len(c))


def train_skipgram(sentences: Sequence[Sequence[str]], vocab: Vocabulary, cfg: SkipGramConfig = SkipGramConfig()) -> SkipGramResult:
    """Skip-gram with negative sampling, single-threaded and seeded.

    Out-of-vocabulary tokens train the UNK row. The learning rate decays
    linearly to ``min_lr``. ``epoch_losses`` is the negative-sampling
    objective on all pairs with one fixed set of noise words, evaluated after
    each epoch, so values are comparable across epochs.
    """
    if cfg.dim < 2:
        raise ValueError("embedding dimension must be >= 2")
    ids = [vocab.encode(s) for s in sentences if len(s)]
    n_tokens = sum(len(s) for s in ids)
    if n_tokens <= cfg.window:
        raise ValueError(f"corpus of {n_tokens} tokens is shorter than the window ({cfg.window})")
    rng = np.random.default_rng(cfg.seed)
    V, d = len(vocab), cfg.dim
    W_in = rng.uniform(-0.5 / d, 0.5 / d, size=(V, d))
    W_in[vocab.pad_index] = 0.0
    W_out = np.zeros((V, d))
    centers, contexts = _pairs(ids, cfg.window)
    if len(centers) == 0:
        raise ValueError("no training pairs; sentences are too short")
    noise = _noise_distribution(vocab, ids)
    eval_neg = np.random.default_rng(cfg.seed + 1).choice(V, size=(len(centers), cfg.negatives), p=noise)
    total_steps = cfg.epochs * int(np.ceil(len(centers) / cfg.batch_size))
    step = 0
    losses = []
    for epoch in range(cfg.epochs):
        order = rng.permutation(len(centers))
        for s in range(0, len(order), cfg.batch_size):
            idx = order[s : s + cfg.batch_size]
            c, o = centers[idx], contexts[idx]
            neg = rng.choice(V, size=(len(idx), cfg.negatives), p=noise)
            lr = cfg.lr - (cfg.lr - cfg.min_lr) * step / max(1, total_steps)
            step += 1
            v = W_in[c]
            u_o = W_out[o]
            u_n = W_out[neg]
            g_o = sigmoid(np.einsum("bd,bd->b", v, u_o)) - 1.0
            g_n = sigmoid(np.einsum("bd,bkd->bk", v, u_n))
            dv = g_o[:, None] * u_o + np.einsum("bk,bkd->bd", g_n, u_n)
            np.add.at(W_out, o, -lr * g_o[:, None] * v)
            np.add.at(W_out, neg.reshape(-1), -lr * (g_n[:, :, None] * v[:, None, :]).reshape(-1, d))
            np.add.at(W_in, c, -lr * dv)
        losses.append(_neg_loss(W_in, W_out, centers, contexts, eval_neg))
        log.info("skip-gram epoch %d loss %.6f", epoch + 1, losses[-1])
    W_in[vocab.pad_index] = 0.0
    return SkipGramResult(W_in, losses)


def write_embeddings(vocab: Vocabulary, vectors: np.ndarray, out: TextIO) -> None:
    """Text format: header ``N d`` then ``token v1 ... vd`` per line."""
    n, d = vectors.shape
    out.write(f"{n} {d}\n")
    for tok, row in zip(vocab.itos, vectors):
        out.write(tok + " " + " ".join(repr(float(x)) for x in row) + "\n")


def read_embeddings(path: str | Path) -> tuple[Vocabulary, np.ndarray]:
    with open(path, encoding="utf-8") as fh:
        header = fh.readline().split()
        n, d = int(header[0]), int(header[1])
        itos, rows = [], []
        for line in fh:
            parts = line.rstrip("\n").split(" ")
            if len(parts) != d + 1:
                raise ValueError(f"embedding line for {parts[0]!r} has {len(parts) - 1} values, expected {d}")
            itos.append(parts[0])
            rows.append([float(x) for x in parts[1:]])
    if len(itos) != n:
        raise ValueError(f"embedding header says {n} rows, found {len(itos)}")
    if itos[:2] != [PAD, UNK]:
        raise ValueError("embedding file must start with the PAD and UNK rows")
    return Vocabulary(itos), np.array(rows, dtype=np.float64).reshape(n, d)


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    return float(a @ b / (np.linalg.norm(a) * np.linalg.norm(b) + 1e-12))
