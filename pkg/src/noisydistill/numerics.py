"""Numeric substrate: activations, the multi-label cross entropy, Adam and a
central-difference gradient checker.

Vectors and matrices are plain float64 numpy arrays.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import expit

LOG_CLAMP = 1e-12
_LOG_FLOOR = np.log(LOG_CLAMP)


class DimensionError(ValueError):
    pass


class NumericError(ArithmeticError):
    pass


def sigmoid(a):
    """Logistic function, stable for large |a| (scalar or array)."""
    out = expit(np.asarray(a, dtype=np.float64))
    if np.ndim(out) == 0:
        return float(out)
    return out


def bce_terms(target, logits):
    """Per-element binary cross entropy with clamped log arguments."""
    target = np.asarray(target, dtype=np.float64)
    logits = np.asarray(logits, dtype=np.float64)
    if target.shape != logits.shape:
        raise DimensionError(f"target shape {target.shape} != logits shape {logits.shape}")
    # log(1 - sigmoid(z)) = -softplus(z), log sigmoid(z) = z - softplus(z);
    # clamping the log at log(1e-12) equals clamping the probability
    sp = np.logaddexp(0.0, logits)
    log_p = np.maximum(logits - sp, _LOG_FLOOR)
    log_q = np.maximum(-sp, _LOG_FLOOR)
    return -(target * log_p + (1.0 - target) * log_q)


def bce_loss(target, logits) -> float:
    """Summed binary cross entropy of one label vector (soft targets allowed)."""
    return float(np.sum(bce_terms(target, logits)))


def bce_grad_logits(target, logits):
    """d bce / d logits; exact wherever the clamp is inactive."""
    return sigmoid(logits) - np.asarray(target, dtype=np.float64)


@dataclass
class AdamState:
    m: np.ndarray
    v: np.ndarray
    step: int = 0

    @classmethod
    def zeros_like(cls, params: np.ndarray) -> "AdamState":
        return cls(np.zeros_like(params, dtype=np.float64), np.zeros_like(params, dtype=np.float64), 0)


def adam_step(params, grads, state: AdamState, lr: float,
              beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
    """One bias-corrected Adam update. Returns ``(new_params, new_state)``;
    inputs are not modified."""
    params = np.asarray(params, dtype=np.float64)
    grads = np.asarray(grads, dtype=np.float64)
    if params.shape != grads.shape or state.m.shape != params.shape or state.v.shape != params.shape:
        raise DimensionError("params, grads and Adam moments must share one shape")
    if not lr > 0:
        raise ValueError("lr must be positive")
    t = state.step + 1
    m = beta1 * state.m + (1.0 - beta1) * grads
    v = beta2 * state.v + (1.0 - beta2) * grads * grads
    m_hat = m / (1.0 - beta1 ** t)
    v_hat = v / (1.0 - beta2 ** t)
    new_params = params - lr * m_hat / (np.sqrt(v_hat) + eps)
    return new_params, AdamState(m, v, t)


def finite_difference_grad(loss_fn, params, h: float = 1e-5) -> np.ndarray:
    params = np.array(params, dtype=np.float64)
    g = np.zeros_like(params)
    for i in range(params.size):
        orig = params.flat[i]
        params.flat[i] = orig + h
        up = loss_fn(params)
        params.flat[i] = orig - h
        down = loss_fn(params)
        params.flat[i] = orig
        if not (np.isfinite(up) and np.isfinite(down)):
            raise NumericError(f"non-finite loss while probing coordinate {i}")
        g.flat[i] = (up - down) / (2.0 * h)
    return g


def grad_check(loss_fn, grad_fn, params, h: float = 1e-5) -> float:
    """Max over coordinates of |analytic - fd| / max(1, |fd|).

    ``grad_fn`` maps params to the analytic gradient.
    """
    if not 1e-7 <= h <= 1e-3:
        raise ValueError("h must lie in [1e-7, 1e-3]")
    params = np.asarray(params, dtype=np.float64)
    base = loss_fn(params.copy())
    if not np.isfinite(base):
        raise NumericError("loss is not finite at params")
    fd = finite_difference_grad(loss_fn, params, h)
    analytic = np.asarray(grad_fn(params.copy()), dtype=np.float64)
    if analytic.shape != fd.shape:
        raise DimensionError("analytic gradient shape does not match params")
    err = np.abs(analytic - fd) / np.maximum(1.0, np.abs(fd))
    return float(err.max()) if err.size else 0.0
