"""Cross-entropy loss, Adam and step-decay learning-rate schedule."""
from __future__ import annotations

import dataclasses

import numpy as np


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_xent(logits: np.ndarray, labels):
    """Mean of -log softmax(logits)[label] and its gradient w.r.t. logits.

    Accepts a single logit vector with a scalar label, or a batch (N, B)
    with N integer labels (0-based class indices).
    """
    single = logits.ndim == 1
    lg = np.atleast_2d(logits)
    lab = np.atleast_1d(np.asarray(labels))
    B = lg.shape[1]
    if lab.shape != (lg.shape[0],):
        raise ValueError(f"labels {lab.shape} do not match logits {lg.shape}")
    if np.any(lab < 0) or np.any(lab >= B):
        raise ValueError(f"label out of range 0..{B - 1}")
    z = lg - lg.max(axis=1, keepdims=True)
    logsum = np.log(np.exp(z).sum(axis=1))
    rows = np.arange(len(lab))
    loss = float(np.mean(logsum - z[rows, lab]))
    grad = np.exp(z - logsum[:, None])
    grad[rows, lab] -= 1.0
    grad /= len(lab)
    return loss, (grad[0] if single else grad)


@dataclasses.dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict = dataclasses.field(default_factory=dict)
    v: dict = dataclasses.field(default_factory=dict)


def adam_step(params: dict, grads: dict, state: AdamState) -> None:
    """Bias-corrected Adam update, in place on ``params`` and ``state``."""
    state.step += 1
    t = state.step
    c1 = 1 - state.beta1 ** t
    c2 = 1 - state.beta2 ** t
    for name, p in params.items():
        g = grads[name]
        if g.shape != p.shape:
            raise ValueError(f"{name}: grad {g.shape} vs param {p.shape}")
        m = state.m.setdefault(name, np.zeros_like(p))
        v = state.v.setdefault(name, np.zeros_like(p))
        m *= state.beta1
        m += (1 - state.beta1) * g
        v *= state.beta2
        v += (1 - state.beta2) * g * g
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


@dataclasses.dataclass(frozen=True)
class TrainConfig:
    epochs: int = 80
    batch_size: int = 32
    lr: float = 0.01
    decay_gamma: float = 0.01
    decay_every_epochs: int = 20
    seed: int = 0

    def __post_init__(self):
        if min(self.epochs, self.batch_size, self.decay_every_epochs) < 1:
            raise ValueError("epochs, batch_size and decay_every_epochs must be >= 1")
        if not (self.lr > 0 and self.decay_gamma > 0):
            raise ValueError("lr and decay_gamma must be > 0")
        if self.seed < 0:
            raise ValueError("seed must be >= 0")

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def lr_schedule(epoch: int, cfg: TrainConfig) -> float:
    if epoch < 0:
        raise ValueError("epoch must be >= 0")
    return cfg.lr * cfg.decay_gamma ** (epoch // cfg.decay_every_epochs)
