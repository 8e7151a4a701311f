"""Top-k accuracy, confusion matrices and accuracy-versus-T_o reports.

A *ranker* is any callable ``rank(samples, t_obs) -> (N, k_max)`` array of
1-based beams in descending preference, evaluated on windows truncated to
their last ``t_obs`` frames.
"""
from __future__ import annotations

import csv
import dataclasses
import json
import os
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .data import E2ETrainingSet, SequenceSample, TxIdTrainingSet
from .models import E2EModel, TxIdModel, beam_hold_predict, predict_topk

KS = (1, 3, 5)
Ranker = Callable[[Sequence[SequenceSample], int], np.ndarray]


def topk_accuracy(predictions, labels, ks: Sequence[int] = KS) -> dict[int, float]:
    """Fraction of samples whose label is among the first k ranked predictions."""
    labels = list(labels)
    predictions = list(predictions)
    if len(predictions) != len(labels):
        raise ValueError(f"{len(predictions)} predictions for {len(labels)} labels")
    if not labels:
        return {k: 0.0 for k in ks}
    return {k: sum(int(y in list(p)[:k]) for p, y in zip(predictions, labels)) / len(labels)
            for k in ks}


def confusion_matrix(predicted, labels, n_beams: int) -> np.ndarray:
    """Entry (i, j) counts samples with label beam i+1 predicted as beam j+1."""
    predicted, labels = np.asarray(predicted, dtype=int), np.asarray(labels, dtype=int)
    if predicted.shape != labels.shape:
        raise ValueError("predicted and labels differ in length")
    for arr in (predicted, labels):
        if arr.size and (arr.min() < 1 or arr.max() > n_beams):
            raise ValueError(f"beam index outside 1..{n_beams}")
    cm = np.zeros((n_beams, n_beams), dtype=np.int64)
    np.add.at(cm, (labels - 1, predicted - 1), 1)
    return cm


@dataclasses.dataclass
class EvalReport:
    """Accuracy per model, observation interval and k, plus confusion matrices."""
    accuracy: dict          # model -> {t_obs -> {k -> acc}}
    confusion: dict         # model -> B x B nested list
    confusion_t_obs: int
    n_test: int
    n_beams: int
    class_counts: list      # label counts per beam at confusion_t_obs

    def to_dict(self) -> dict:
        return {
            "accuracy": {m: {str(t): {str(k): a for k, a in per_k.items()}
                             for t, per_k in per_t.items()}
                         for m, per_t in self.accuracy.items()},
            "confusion": self.confusion,
            "confusion_t_obs": self.confusion_t_obs,
            "n_test": self.n_test,
            "n_beams": self.n_beams,
            "class_counts": self.class_counts,
            "ks": list(KS),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    def validate(self) -> None:
        for m, per_t in self.accuracy.items():
            for t, per_k in per_t.items():
                for k, a in per_k.items():
                    if not 0.0 <= a <= 1.0:
                        raise ValueError(f"accuracy {a} out of [0, 1] for {m} T_o={t} k={k}")
        for m, cm in self.confusion.items():
            if sum(map(sum, cm)) != self.n_test:
                raise ValueError(f"confusion total for {m} differs from test size")

    def write(self, directory: str | os.PathLike) -> dict[str, Path]:
        self.validate()
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        paths = {"report": directory / "report.json",
                 "accuracy": directory / "accuracy_vs_to.csv",
                 "confusion": directory / "confusion.csv"}
        paths["report"].write_text(self.to_json())
        with open(paths["accuracy"], "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["model", "t_obs", "k", "accuracy"])
            for m in sorted(self.accuracy):
                for t in sorted(self.accuracy[m]):
                    for k in sorted(self.accuracy[m][t]):
                        w.writerow([m, t, k, repr(self.accuracy[m][t][k])])
        with open(paths["confusion"], "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["model", "t_obs", "label_beam", "predicted_beam", "count"])
            for m in sorted(self.confusion):
                for i, row in enumerate(self.confusion[m], start=1):
                    for j, c in enumerate(row, start=1):
                        if c:
                            w.writerow([m, self.confusion_t_obs, i, j, c])
        return paths


def accuracy_vs_To(samples: Sequence[SequenceSample], rankers: Mapping[str, Ranker],
                   t_obs: Sequence[int] = tuple(range(1, 11)), n_beams: int = 64,
                   confusion_t_obs: int | None = None) -> EvalReport:
    """Evaluate every ranker on every observation interval (last-T_o truncation)."""
    t_obs = sorted(set(int(t) for t in t_obs))
    if confusion_t_obs is None:
        confusion_t_obs = 5 if 5 in t_obs else t_obs[-1]
    labels = [s.label for s in samples]
    accuracy, confusion = {}, {}
    for name, rank in rankers.items():
        accuracy[name] = {}
        for t in sorted(set(t_obs) | {confusion_t_obs}):
            ranked = np.asarray(rank(samples, t)) if samples else np.zeros((0, max(KS)), int)
            if t in t_obs:
                accuracy[name][t] = topk_accuracy(ranked, labels)
            if t == confusion_t_obs:
                top1 = ranked[:, 0] if len(ranked) else np.zeros(0, int)
                confusion[name] = confusion_matrix(top1, labels, n_beams).tolist()
    counts = np.bincount(np.asarray(labels, dtype=int) - 1, minlength=n_beams) if labels \
        else np.zeros(n_beams, int)
    return EvalReport(accuracy, confusion, confusion_t_obs, len(samples), n_beams,
                      [int(c) for c in counts])


# -- rankers --------------------------------------------------------------------

def hold_ranker(n_beams: int = 64, k: int = max(KS)) -> Ranker:
    def rank(samples, t):
        return np.array([beam_hold_predict(s.beams[-t], k, n_beams) for s in samples])
    return rank


def txid_ranker(model: TxIdModel, states: TxIdTrainingSet, k: int = max(KS)) -> Ranker:
    """Ranks with the TxID model; ``states`` must wrap the evaluated samples."""
    pos = {s.sequence_id: i for i, s in enumerate(states.samples)}

    def rank(samples, t):
        x, _ = states.batch([pos[s.sequence_id] for s in samples], t)
        return predict_topk(model.logits(x), k)
    return rank


def e2e_ranker(model: E2EModel, maps: np.ndarray, k: int = max(KS), batch: int = 512) -> Ranker:
    """Ranks with the E2E model; conv features of the needed frames are cached."""
    cache: dict[int, np.ndarray] = {}

    def rank(samples, t):
        need = sorted({f for s in samples for f in s.frame_ids[-t:]} - cache.keys())
        if need:
            for fid, feat in zip(need, model.encode(maps[need])):
                cache[fid] = feat
        out = []
        for start in range(0, len(samples), batch):
            chunk = samples[start:start + batch]
            ids = np.array([s.frame_ids[-t:] for s in chunk])
            uniq, inv = np.unique(ids, return_inverse=True)
            feats = np.stack([cache[int(f)] for f in uniq])
            beams = np.array([s.beams[-t] for s in chunk])
            out.append(predict_topk(model.logits_from_features(feats, inv.reshape(ids.shape), beams), k))
        return np.concatenate(out)
    return rank


def write_loss_curve(curve, path: str | os.PathLike) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["epoch", "lr", "mean_loss"])
        for epoch, lr, loss in curve:
            w.writerow([epoch, repr(float(lr)), repr(float(loss))])


__all__ = ["EvalReport", "E2ETrainingSet", "accuracy_vs_To", "confusion_matrix", "e2e_ranker",
           "hold_ranker", "topk_accuracy", "txid_ranker", "write_loss_curve"]
