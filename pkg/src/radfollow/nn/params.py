"""Named parameter sets, initialisation, optimisers and tensor checkpoints."""
from __future__ import annotations

import base64
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

CHECKPOINT_FORMAT = "radfollow.tensors"
CHECKPOINT_VERSION = 1


class ParamSet:
    """Named float arrays with matching gradient buffers and Adam moments."""

    def __init__(self, params: dict[str, np.ndarray] | None = None, dtype=np.float64):
        self.dtype = dtype
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.t = 0
        self.frozen: set[str] = set()
        for name, value in (params or {}).items():
            self.add(name, value)

    def add(self, name: str, value: np.ndarray, frozen: bool = False) -> None:
        arr = np.array(value, dtype=self.dtype)
        if not np.all(np.isfinite(arr)):
            raise ValueError(f"non-finite values in parameter {name!r}")
        self.params[name] = arr
        self.grads[name] = np.zeros_like(arr)
        self.m[name] = np.zeros_like(arr)
        self.v[name] = np.zeros_like(arr)
        if frozen:
            self.frozen.add(name)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.params[name]

    def __contains__(self, name: str) -> bool:
        return name in self.params

    def names(self) -> list[str]:
        return sorted(self.params)

    def zero_grad(self) -> None:
        for g in self.grads.values():
            g.fill(0.0)

    def trainable(self) -> list[str]:
        return [n for n in self.names() if n not in self.frozen]

    def size(self) -> int:
        return sum(p.size for p in self.params.values())

    def copy_params(self) -> dict[str, np.ndarray]:
        return {k: v.copy() for k, v in self.params.items()}

    def load_params(self, values: dict[str, np.ndarray]) -> None:
        for k, v in values.items():
            if self.params[k].shape != v.shape:
                raise ValueError(f"shape mismatch for {k}: {self.params[k].shape} vs {v.shape}")
            self.params[k][...] = v

    def clip_grad_norm(self, max_norm: float) -> float:
        total = float(np.sqrt(sum(float((self.grads[n] ** 2).sum()) for n in self.trainable())))
        if total > max_norm > 0:
            scale = max_norm / (total + 1e-12)
            for n in self.trainable():
                self.grads[n] *= scale
        return total


def xavier_uniform(rng: np.random.Generator, fan_in: int, fan_out: int, shape=None) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape or (fan_in, fan_out))


def init_dense(ps: ParamSet, prefix: str, n_in: int, n_out: int, rng: np.random.Generator) -> None:
    ps.add(prefix + "W", xavier_uniform(rng, n_in, n_out))
    ps.add(prefix + "b", np.zeros(n_out))


def init_cell(ps: ParamSet, prefix: str, kind: str, n_in: int, hidden: int, rng: np.random.Generator) -> None:
    gates = 3 if kind == "gru" else 4
    # one Glorot block per gate
    Wx = np.concatenate([xavier_uniform(rng, n_in, hidden) for _ in range(gates)], axis=1)
    Wh = np.concatenate([xavier_uniform(rng, hidden, hidden) for _ in range(gates)], axis=1)
    ps.add(prefix + "Wx", Wx)
    ps.add(prefix + "Wh", Wh)
    ps.add(prefix + "b", np.zeros(gates * hidden))


def init_bidi(ps: ParamSet, prefix: str, kind: str, n_in: int, hidden: int, rng: np.random.Generator) -> None:
    init_cell(ps, prefix + "f.", kind, n_in, hidden, rng)
    init_cell(ps, prefix + "b.", kind, n_in, hidden, rng)


def init_attention(ps: ParamSet, prefix: str, n_in: int, n_att: int, rng: np.random.Generator) -> None:
    ps.add(prefix + "W", xavier_uniform(rng, n_in, n_att))
    ps.add(prefix + "b", np.zeros(n_att))
    ps.add(prefix + "ctx", xavier_uniform(rng, n_att, 1).ravel())


@dataclass
class AdamConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


def adam_step(params, grads, state, cfg: AdamConfig, t: int) -> None:
    """In-place bias-corrected Adam update of ``params``.

    ``state`` is ``(m, v)``: dicts keyed like ``params``. ``t`` counts from 1.
    """
    if t < 1:
        raise ValueError("Adam step counter starts at 1")
    m, v = state
    c1 = 1.0 - cfg.beta1**t
    c2 = 1.0 - cfg.beta2**t
    for name, g in grads.items():
        m[name] *= cfg.beta1
        m[name] += (1.0 - cfg.beta1) * g
        v[name] *= cfg.beta2
        v[name] += (1.0 - cfg.beta2) * g * g
        params[name] -= cfg.lr * (m[name] / c1) / (np.sqrt(v[name] / c2) + cfg.eps)


@dataclass
class Adam:
    config: AdamConfig = field(default_factory=AdamConfig)
    max_grad_norm: float | None = None

    def step(self, ps: ParamSet) -> None:
        if self.max_grad_norm:
            ps.clip_grad_norm(self.max_grad_norm)
        ps.t += 1
        names = ps.trainable()
        adam_step(
            {n: ps.params[n] for n in names},
            {n: ps.grads[n] for n in names},
            ({n: ps.m[n] for n in names}, {n: ps.v[n] for n in names}),
            self.config,
            ps.t,
        )


@dataclass
class SGD:
    lr: float = 0.1
    max_grad_norm: float | None = None

    def step(self, ps: ParamSet) -> None:
        if self.max_grad_norm:
            ps.clip_grad_norm(self.max_grad_norm)
        ps.t += 1
        for n in ps.trainable():
            ps.params[n] -= self.lr * ps.grads[n]


def make_optimizer(name: str, lr: float, max_grad_norm: float | None = None):
    if name.lower() == "adam":
        return Adam(AdamConfig(lr=lr), max_grad_norm)
    if name.lower() == "sgd":
        return SGD(lr, max_grad_norm)
    raise ValueError(f"unknown optimizer {name!r}")


# -- checkpoints ------------------------------------------------------------

def tensors_to_json(tensors: dict[str, np.ndarray]) -> str:
    """Serialise named tensors; float64 little-endian payloads, base64 encoded.

    Output is byte-stable for equal inputs (sorted keys, no timestamps).
    """
    payload = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "tensors": {
            name: {
                "shape": list(arr.shape),
                "dtype": "<f8",
                "data": base64.b64encode(np.ascontiguousarray(arr, dtype="<f8").tobytes()).decode("ascii"),
            }
            for name, arr in sorted(tensors.items())
        },
    }
    return json.dumps(payload, sort_keys=True, indent=1) + "\n"


def tensors_from_json(text: str) -> dict[str, np.ndarray]:
    payload = json.loads(text)
    if payload.get("format") != CHECKPOINT_FORMAT:
        raise ValueError("not a radfollow tensor checkpoint")
    if payload.get("version") != CHECKPOINT_VERSION:
        raise ValueError(f"unsupported checkpoint version {payload.get('version')}")
    out = {}
    for name, rec in payload["tensors"].items():
        arr = np.frombuffer(base64.b64decode(rec["data"]), dtype=rec["dtype"]).astype(np.float64)
        out[name] = arr.reshape(rec["shape"])
    return out


def save_tensors(path: str | Path, tensors: dict[str, np.ndarray]) -> None:
    Path(path).write_text(tensors_to_json(tensors), encoding="utf-8")


def load_tensors(path: str | Path) -> dict[str, np.ndarray]:
    return tensors_from_json(Path(path).read_text(encoding="utf-8"))
