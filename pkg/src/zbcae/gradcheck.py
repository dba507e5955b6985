"""Finite-difference verification harness.

Checks the analytic auto-encoder and SVM gradients against central finite
differences on small seed-fixed instances and reports the maximum relative
error per parameter group, using rel = |a - n| / max(|a|, |n|, 1e-8).
"""

from __future__ import annotations

import numpy as np

from .cae import BIAS_TRAIN_THEN_ZERO, init_model, loss_gradients, reconstruction_loss
from .svm import squared_hinge_objective

EPS = 1e-6
GUARD = 1e-8


def _central_diff(f, arr, eps=EPS):
    grad = np.zeros_like(arr)
    it = np.nditer(arr, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        orig = arr[idx]
        arr[idx] = orig + eps
        up = f()
        arr[idx] = orig - eps
        dn = f()
        arr[idx] = orig
        grad[idx] = (up - dn) / (2.0 * eps)
    return grad


def _max_rel(analytic, numeric) -> float:
    a = np.asarray(analytic).ravel()
    n = np.asarray(numeric).ravel()
    denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), GUARD)
    return float((np.abs(a - n) / denom).max()) if a.size else 0.0


def gradcheck_report(
    seed: int = 0,
    cae_filters: int = 3,
    cae_channels: int = 2,
    cae_extent: int = 5,
    cae_batch: int = 2,
    svm_samples: int = 12,
    svm_features: int = 5,
    svm_classes: int = 3,
) -> dict:
    """Max relative errors for the four parameter groups, as a dict with
    keys cae_weights, cae_biases, svm_weights, svm_biases."""
    rng = np.random.default_rng(seed)

    model = init_model(cae_filters, cae_channels, 3, seed=seed)
    model.b_e = rng.normal(0.0, 0.3, size=cae_filters)
    model.b_d = rng.normal(0.0, 0.3, size=cae_channels)
    batch = [rng.normal(size=(cae_channels, cae_extent, cae_extent)) for _ in range(cae_batch)]
    grads = loss_gradients(model, batch, BIAS_TRAIN_THEN_ZERO)

    def cae_loss():
        return reconstruction_loss(model, batch, zero_bias=False)

    cae_weights = _max_rel(grads.dw_e, _central_diff(cae_loss, model.w_e))
    cae_biases = max(
        _max_rel(grads.db_e, _central_diff(cae_loss, model.b_e)),
        _max_rel(grads.db_d, _central_diff(cae_loss, model.b_d)),
    )

    x = rng.normal(size=(svm_samples, svm_features))
    y = rng.permutation(np.arange(svm_samples) % svm_classes)
    w = rng.normal(0.0, 0.5, size=(svm_classes, svm_features))
    b = rng.normal(0.0, 0.5, size=svm_classes)
    _, dw, db = squared_hinge_objective(w, b, x, y, lam=1.0)

    def svm_loss():
        return squared_hinge_objective(w, b, x, y, lam=1.0)[0]

    svm_weights = _max_rel(dw, _central_diff(svm_loss, w))
    svm_biases = _max_rel(db, _central_diff(svm_loss, b))

    return {
        "cae_weights": cae_weights,
        "cae_biases": cae_biases,
        "svm_weights": svm_weights,
        "svm_biases": svm_biases,
    }
