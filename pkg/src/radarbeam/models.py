"""Beam predictors: beam hold, transmitter-identification LSTM and the
end-to-end CNN-LSTM, plus the shared training loop.

Beam indices are 1-based at this module's boundary; class index = beam - 1.
"""
from __future__ import annotations

import dataclasses
import logging
import math
from typing import Protocol, Sequence

import numpy as np

from . import nn
from .nn.lstm import LstmCellParams

log = logging.getLogger(__name__)


class TrainingDivergedError(RuntimeError):
    def __init__(self, epoch: int):
        super().__init__(f"training loss became non-finite in epoch {epoch}")
        self.epoch = epoch


# -- baseline and ranking ---------------------------------------------------

def beam_hold_predict(initial_beam: int, k: int, n_beams: int = 64) -> list[int]:
    """Ranked beams b, b-1, b+1, b-2, b+2, ... truncated to k.

    At the codebook edges missing neighbours are replaced by the next
    in-range beams in the same distance-then-lower-first order.
    """
    if k not in (1, 3, 5):
        raise ValueError(f"k must be 1, 3 or 5, got {k}")
    if not 1 <= initial_beam <= n_beams:
        raise ValueError(f"beam {initial_beam} outside 1..{n_beams}")
    ranked = [initial_beam]
    d = 1
    while len(ranked) < k:
        for b in (initial_beam - d, initial_beam + d):
            if 1 <= b <= n_beams and len(ranked) < k:
                ranked.append(b)
        d += 1
    return ranked


def predict_topk(logits: np.ndarray, k: int) -> np.ndarray:
    """Beams (1-based) of the k largest logits, descending; ties -> lower index."""
    logits = np.asarray(logits)
    if k > logits.shape[-1]:
        raise ValueError(f"k={k} exceeds {logits.shape[-1]} classes")
    order = np.argsort(-logits, axis=-1, kind="stable")
    return order[..., :k] + 1


# -- parameter initialisation ----------------------------------------------

def _uniform(rng, shape, fan_in):
    bound = 1.0 / math.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


def _lstm_params(params: dict, prefix: str) -> LstmCellParams:
    return LstmCellParams(params[f"{prefix}.Wx"], params[f"{prefix}.Wh"], params[f"{prefix}.b"])


class _Model:
    params: dict

    def zero(self):
        for p in self.params.values():
            p[...] = 0.0
        return self

    def astype(self, dtype):
        self.params = {k: v.astype(dtype) for k, v in self.params.items()}
        return self

    @property
    def dtype(self):
        return next(iter(self.params.values())).dtype

    def loss_and_grads(self, inputs, labels):
        logits, cache = self.forward(inputs)
        loss, dlogits = nn.softmax_xent(logits, np.asarray(labels) - 1)
        return loss, self.backward(dlogits, cache)

    def logits(self, inputs) -> np.ndarray:
        return self.forward(inputs)[0]


# -- transmitter-identification model --------------------------------------

@dataclasses.dataclass(frozen=True)
class TxIdModelConfig:
    input_dim: int = 3
    lstm_hidden: int = 64
    fc_hidden: int = 64
    n_beams: int = 64

    @property
    def fc_dims(self) -> tuple[int, int]:
        return (self.fc_hidden, self.n_beams)


class TxIdModel(_Model):
    """LSTM over normalised transmitter states -> FC(ReLU) -> FC(B)."""

    kind = "txid"

    def __init__(self, cfg: TxIdModelConfig = TxIdModelConfig(), seed: int = 0):
        self.cfg = cfg
        rng = np.random.default_rng(seed)
        D, H, F, B = cfg.input_dim, cfg.lstm_hidden, cfg.fc_hidden, cfg.n_beams
        self.params = {
            "lstm.Wx": _uniform(rng, (4 * H, D), D + H),
            "lstm.Wh": _uniform(rng, (4 * H, H), D + H),
            "lstm.b": _uniform(rng, (4 * H,), D + H),
            "fc1.W": _uniform(rng, (F, H), H),
            "fc1.b": _uniform(rng, (F,), H),
            "fc2.W": _uniform(rng, (B, F), F),
            "fc2.b": _uniform(rng, (B,), F),
        }

    def forward(self, x: np.ndarray):
        x = np.asarray(x, dtype=self.dtype)
        if x.ndim != 3 or x.shape[1] == 0 or x.shape[2] != self.cfg.input_dim:
            raise ValueError(f"expected states (N, T>=1, {self.cfg.input_dim}), got {x.shape}")
        p = self.params
        lp = _lstm_params(p, "lstm")
        hs, lcache = nn.lstm_sequence(x, lp)
        a1, c1 = nn.dense(hs[:, -1], p["fc1.W"], p["fc1.b"])
        r1, m1 = nn.relu(a1)
        logits, c2 = nn.dense(r1, p["fc2.W"], p["fc2.b"])
        return logits, (hs.shape, lp, lcache, c1, m1, c2)

    def backward(self, dlogits, cache) -> dict:
        hs_shape, lp, lcache, c1, m1, c2 = cache
        g = {}
        dr1, g["fc2.W"], g["fc2.b"] = nn.dense_grad(dlogits, c2)
        dh, g["fc1.W"], g["fc1.b"] = nn.dense_grad(nn.relu_grad(dr1, m1), c1)
        dhs = np.zeros(hs_shape, dtype=dh.dtype)
        dhs[:, -1] = dh
        _, (g["lstm.Wx"], g["lstm.Wh"], g["lstm.b"]) = nn.lstm_sequence_grad(dhs, lcache, lp)
        return g


# -- end-to-end model -------------------------------------------------------

@dataclasses.dataclass(frozen=True)
class E2EModelConfig:
    map_shape: tuple[int, int] = (256, 128)
    conv_channels: tuple[int, ...] = (8, 16, 32, 32, 32)
    kernel: int = 3
    lstm_hidden: int = 128
    fc_hidden: tuple[int, int] = (128, 64)
    n_beams: int = 64

    @property
    def fc_dims(self) -> tuple[int, ...]:
        return (*self.fc_hidden, self.n_beams)

    def feature_dim(self) -> int:
        h, w = self.map_shape
        for _ in self.conv_channels:
            h, w = (h + 1) // 2, (w + 1) // 2
        return self.conv_channels[-1] * h * w


@dataclasses.dataclass
class MapBatch:
    """A batch of map sequences that may share frames.

    ``pool`` holds U distinct preprocessed maps (U, H, W); ``index`` (N, T)
    selects the pool entry for each sequence step, so a frame used by many
    overlapping windows goes through the conv stack once per batch.
    """
    pool: np.ndarray
    index: np.ndarray
    initial_beams: np.ndarray  # (N,), 1-based

    @classmethod
    def from_sequences(cls, maps: np.ndarray, initial_beams) -> "MapBatch":
        N, T = maps.shape[:2]
        return cls(maps.reshape((N * T,) + maps.shape[2:]),
                   np.arange(N * T).reshape(N, T), np.asarray(initial_beams))


class E2EModel(_Model):
    """Shared conv stack per map -> LSTM -> [h_T, one-hot(initial beam)] -> 3 FC."""

    kind = "e2e"

    def __init__(self, cfg: E2EModelConfig = E2EModelConfig(), seed: int = 0):
        self.cfg = cfg
        rng = np.random.default_rng(seed)
        p = {}
        c_in, k = 1, cfg.kernel
        for i, c_out in enumerate(cfg.conv_channels):
            p[f"conv{i}.K"] = _uniform(rng, (c_out, c_in, k, k), c_in * k * k)
            p[f"conv{i}.b"] = _uniform(rng, (c_out,), c_in * k * k)
            c_in = c_out
        D, H = cfg.feature_dim(), cfg.lstm_hidden
        p["lstm.Wx"] = _uniform(rng, (4 * H, D), D + H)
        p["lstm.Wh"] = _uniform(rng, (4 * H, H), D + H)
        p["lstm.b"] = _uniform(rng, (4 * H,), D + H)
        fan = H + cfg.n_beams
        for j, out in enumerate(cfg.fc_dims):
            p[f"fc{j}.W"] = _uniform(rng, (out, fan), fan)
            p[f"fc{j}.b"] = _uniform(rng, (out,), fan)
            fan = out
        self.params = p

    def _check_inputs(self, pool, beams):
        if pool.shape[1:] != tuple(self.cfg.map_shape):
            raise ValueError(f"maps {pool.shape[1:]} do not match config {self.cfg.map_shape}")
        if np.any(beams < 1) or np.any(beams > self.cfg.n_beams):
            raise ValueError("initial beam out of range")

    def _conv_stack(self, pool: np.ndarray, keep_cache: bool):
        x = pool[None]  # (1, U, H, W)
        caches = []
        for i in range(len(self.cfg.conv_channels)):
            y, cc = nn.conv2d(x, self.params[f"conv{i}.K"], self.params[f"conv{i}.b"])
            r, m = nn.relu(y)
            x, pc = nn.avgpool2(r)
            if keep_cache:
                caches.append((cc, m, pc))
        return x, caches

    def _head(self, seq: np.ndarray, beams: np.ndarray):
        cfg, p = self.cfg, self.params
        lp = _lstm_params(p, "lstm")
        hs, lcache = nn.lstm_sequence(seq, lp)
        onehot = np.zeros((len(beams), cfg.n_beams), dtype=self.dtype)
        onehot[np.arange(len(beams)), beams - 1] = 1.0
        a = np.concatenate([hs[:, -1], onehot], axis=1)
        fc_caches = []
        n_fc = len(cfg.fc_dims)
        for j in range(n_fc):
            a, dc = nn.dense(a, p[f"fc{j}.W"], p[f"fc{j}.b"])
            mask = None
            if j < n_fc - 1:
                a, mask = nn.relu(a)
            fc_caches.append((dc, mask))
        return a, (hs.shape, lp, lcache, fc_caches)

    def forward(self, batch: MapBatch):
        pool = np.asarray(batch.pool, dtype=self.dtype)
        beams = np.asarray(batch.initial_beams)
        self._check_inputs(pool, beams)
        x, conv_caches = self._conv_stack(pool, keep_cache=True)
        feat_shape = x.shape  # (C, U, h, w)
        feats = x.transpose(1, 0, 2, 3).reshape(len(pool), -1)
        logits, head_cache = self._head(feats[batch.index], beams)
        return logits, (conv_caches, feat_shape, batch.index, *head_cache)

    def encode(self, maps: np.ndarray, chunk: int = 256) -> np.ndarray:
        """Per-map conv features (U, D) for inference, computed in chunks."""
        maps = np.asarray(maps, dtype=self.dtype)
        self._check_inputs(maps, np.ones(1, dtype=int))
        out = []
        for start in range(0, len(maps), chunk):
            x, _ = self._conv_stack(maps[start:start + chunk], keep_cache=False)
            out.append(x.transpose(1, 0, 2, 3).reshape(x.shape[1], -1))
        return np.concatenate(out) if out else np.zeros((0, self.cfg.feature_dim()), self.dtype)

    def logits_from_features(self, feats: np.ndarray, index: np.ndarray, initial_beams) -> np.ndarray:
        """Logits for sequences ``feats[index]`` given precomputed :meth:`encode` output."""
        beams = np.asarray(initial_beams)
        if np.any(beams < 1) or np.any(beams > self.cfg.n_beams):
            raise ValueError("initial beam out of range")
        return self._head(np.asarray(feats, dtype=self.dtype)[index], beams)[0]

    def backward(self, dlogits, cache) -> dict:
        conv_caches, feat_shape, index, hs_shape, lp, lcache, fc_caches = cache
        g = {}
        da = dlogits
        for j in reversed(range(len(fc_caches))):
            dc, mask = fc_caches[j]
            if mask is not None:
                da = nn.relu_grad(da, mask)
            da, g[f"fc{j}.W"], g[f"fc{j}.b"] = nn.dense_grad(da, dc)
        dhs = np.zeros(hs_shape, dtype=da.dtype)
        dhs[:, -1] = da[:, :self.cfg.lstm_hidden]
        dseq, (g["lstm.Wx"], g["lstm.Wh"], g["lstm.b"]) = nn.lstm_sequence_grad(dhs, lcache, lp)
        dfeat = np.zeros((feat_shape[1], dseq.shape[-1]), dtype=dseq.dtype)
        np.add.at(dfeat, index, dseq)
        C, U, h, w = feat_shape
        dx = np.ascontiguousarray(dfeat.reshape(U, C, h, w).transpose(1, 0, 2, 3))
        for i in reversed(range(len(conv_caches))):
            cc, m, pc = conv_caches[i]
            dx = nn.relu_grad(nn.avgpool2_grad(dx, pc), m)
            dx, g[f"conv{i}.K"], g[f"conv{i}.b"] = nn.conv2d_grad(dx, cc, need_input_grad=i > 0)
        return g


def preprocess_map(values: np.ndarray, out_shape: tuple[int, int] | None = None) -> np.ndarray:
    """log10(1 + x), optional block-mean downsampling, then per-map standardisation."""
    x = np.asarray(values, dtype=float)
    if out_shape is not None and tuple(out_shape) != x.shape:
        fr, fd = x.shape[0] // out_shape[0], x.shape[1] // out_shape[1]
        if fr * out_shape[0] != x.shape[0] or fd * out_shape[1] != x.shape[1]:
            raise ValueError(f"cannot block-reduce {x.shape} to {out_shape}")
        x = x.reshape(out_shape[0], fr, out_shape[1], fd).mean(axis=(1, 3))
    x = np.log10(1.0 + x)
    sd = x.std()
    return (x - x.mean()) / (sd if sd > 0 else 1.0)


# -- training ---------------------------------------------------------------

class TrainingSet(Protocol):
    max_len: int

    def __len__(self) -> int: ...

    def batch(self, indices: np.ndarray, t_obs: int):
        """Return (inputs, labels) using the last ``t_obs`` steps of each window."""


def _batches(data, batch_size: int, rng) -> list[np.ndarray]:
    """Shuffle samples (or the set's ``groups`` of samples) into mini-batches.

    A training set may expose ``groups``, a list of index arrays that should
    stay together (e.g. overlapping windows sharing frames); whole groups are
    shuffled and packed until a batch holds at least ``batch_size`` samples.
    """
    groups = getattr(data, "groups", None)
    if groups is None:
        order = rng.permutation(len(data))
        return [order[i:i + batch_size] for i in range(0, len(order), batch_size)]
    out, cur, n = [], [], 0
    for g in rng.permutation(len(groups)):
        cur.append(np.asarray(groups[g]))
        n += len(groups[g])
        if n >= batch_size:
            out.append(np.concatenate(cur))
            cur, n = [], 0
    if cur:
        out.append(np.concatenate(cur))
    return out


@dataclasses.dataclass
class TrainResult:
    params: dict
    loss_curve: list  # of (epoch, lr, mean_loss)


def default_train_config(kind: str, **overrides) -> nn.TrainConfig:
    base = {"txid": dict(epochs=80, batch_size=32, lr=0.01, decay_gamma=0.01, decay_every_epochs=20),
            "e2e": dict(epochs=80, batch_size=32, lr=0.001, decay_gamma=0.1, decay_every_epochs=40)}
    if kind not in base:
        raise ValueError(f"unknown model kind {kind!r}")
    return nn.TrainConfig(**{**base[kind], **overrides})


def train(model: _Model, data: TrainingSet, cfg: nn.TrainConfig,
          t_obs: int | Sequence[int] | None = None) -> TrainResult:
    """Mini-batch Adam on mean cross-entropy with step-decayed learning rate.

    ``t_obs`` fixes the observation length; a sequence (or None for
    1..max_len) draws one length per mini-batch from the seeded generator, so
    a single model serves every observation interval.
    """
    if len(data) == 0:
        raise ValueError("empty training set")
    rng = np.random.default_rng(cfg.seed)
    lengths = (list(range(1, data.max_len + 1)) if t_obs is None
               else [t_obs] if isinstance(t_obs, int) else list(t_obs))
    state = nn.AdamState(lr=cfg.lr)
    curve = []
    for epoch in range(cfg.epochs):
        state.lr = nn.lr_schedule(epoch, cfg)
        total, count = 0.0, 0
        for idx in _batches(data, cfg.batch_size, rng):
            T = lengths[rng.integers(len(lengths))]
            inputs, labels = data.batch(idx, T)
            loss, grads = model.loss_and_grads(inputs, labels)
            if not math.isfinite(loss):
                raise TrainingDivergedError(epoch)
            nn.adam_step(model.params, grads, state)
            total += loss * len(idx)
            count += len(idx)
        curve.append((epoch, state.lr, total / count))
        log.info("epoch %d lr %.3g loss %.4f", epoch, state.lr, total / count)
    return TrainResult(model.params, curve)
