"""Central finite-difference verification of analytic gradients."""
from __future__ import annotations

import math

import numpy as np


def rel_error(a, b) -> np.ndarray:
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return np.abs(a - b) / np.maximum(np.maximum(np.abs(a), np.abs(b)), 1e-8)


def grad_check(model, inputs, labels, fraction: float = 0.01, step: float = 1e-5,
               seed: int = 0) -> float:
    """Max relative error between analytic and numerical parameter gradients.

    ``model`` exposes ``params`` (name -> float64 array, perturbed in place)
    and ``loss_and_grads(inputs, labels) -> (loss, grads)``.  A random
    ``fraction`` of every parameter tensor is checked, at least one entry
    per tensor.
    """
    for name, p in model.params.items():
        if p.dtype != np.float64:
            raise TypeError(f"grad_check needs float64 parameters ({name} is {p.dtype})")
    rng = np.random.default_rng(seed)
    _, grads = model.loss_and_grads(inputs, labels)
    worst = 0.0
    for name in sorted(model.params):
        p = model.params[name]
        flat = p.reshape(-1)
        n = max(1, math.ceil(fraction * flat.size))
        for idx in rng.choice(flat.size, size=n, replace=False):
            old = flat[idx]
            flat[idx] = old + step
            lp, _ = model.loss_and_grads(inputs, labels)
            flat[idx] = old - step
            lm, _ = model.loss_and_grads(inputs, labels)
            flat[idx] = old
            num = (lp - lm) / (2 * step)
            worst = max(worst, float(rel_error(grads[name].reshape(-1)[idx], num)))
    return worst


def numerical_grad(f, x: np.ndarray, step: float = 1e-5) -> np.ndarray:
    """Central-difference gradient of scalar ``f()`` w.r.t. array ``x`` (in place)."""
    g = np.zeros_like(x)
    flat, gflat = x.reshape(-1), g.reshape(-1)
    for i in range(flat.size):
        old = flat[i]
        flat[i] = old + step
        fp = f()
        flat[i] = old - step
        fm = f()
        flat[i] = old
        gflat[i] = (fp - fm) / (2 * step)
    return g
