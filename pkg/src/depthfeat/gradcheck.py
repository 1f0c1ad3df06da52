"""Central finite-difference gradient checking."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from .tensor import Tensor


class EvaluationError(ArithmeticError):
    """Forward value was not finite."""


@dataclass
class GradReport:
    analytic: np.ndarray
    numeric: np.ndarray
    abs_error: np.ndarray
    rel_error: np.ndarray

    @property
    def max_abs_error(self) -> float:
        return float(self.abs_error.max(initial=0.0))

    @property
    def max_rel_error(self) -> float:
        return float(self.rel_error.max(initial=0.0))


def _scalar(fn, t):
    val = fn(t)
    v = float(val.data) if isinstance(val, Tensor) else float(val)
    if not np.isfinite(v):
        raise EvaluationError(f"non-finite forward value {v}")
    return val, v


def grad_check(fn: Callable[[Tensor], Tensor], point, epsilon: float = 1e-6,
               mask: np.ndarray | None = None, abs_floor: float = 1e-8) -> GradReport:
    """Compare the tape gradient of scalar ``fn`` at ``point`` with central differences.

    ``mask`` (same shape as point) excludes entries, e.g. kink points. The
    relative error is ``|a - n| / max(|a|, |n|, abs_floor)``.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    x0 = np.array(point.data if isinstance(point, Tensor) else point, dtype=np.float64)
    t = Tensor(x0.copy(), requires_grad=True)
    out, _ = _scalar(fn, t)
    out.backward()
    analytic = np.zeros_like(x0) if t.grad is None else t.grad.copy()

    numeric = np.zeros_like(x0)
    flat = x0.reshape(-1)
    for i in range(flat.size):
        if mask is not None and not mask.reshape(-1)[i]:
            continue
        xp, xm = flat.copy(), flat.copy()
        xp[i] += epsilon
        xm[i] -= epsilon
        _, fp = _scalar(fn, Tensor(xp.reshape(x0.shape)))
        _, fm = _scalar(fn, Tensor(xm.reshape(x0.shape)))
        numeric.reshape(-1)[i] = (fp - fm) / (2 * epsilon)

    abs_err = np.abs(analytic - numeric)
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), abs_floor)
    rel = abs_err / denom
    if mask is not None:
        abs_err = np.where(mask, abs_err, 0.0)
        rel = np.where(mask, rel, 0.0)
    return GradReport(analytic, numeric, abs_err, rel)
