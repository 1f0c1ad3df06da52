"""Minimum-reprojection selection and stationary-pixel automasking."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .losses import warp_cost_map
from .tensor import Tensor

PREV, NEXT = -1, 1


@dataclass
class PixelSelection:
    chosen_k: np.ndarray        # [1,1,H,W] in {-1, +1}
    mask: np.ndarray | None = None


def min_reprojection(err_prev, err_next):
    """Per-pixel minimum of the two support errors; ties pick the previous frame.

    Returns (fused error tensor, PixelSelection). Gradient flows only through
    the selected branch.
    """
    err_prev, err_next = T.as_tensor(err_prev), T.as_tensor(err_next)
    fused = T.minimum(err_prev, err_next)
    chosen = np.where(err_prev.data <= err_next.data, PREV, NEXT).astype(np.int8)
    return fused, PixelSelection(chosen)


def select(chosen_k: np.ndarray, a_prev, a_next) -> Tensor:
    """Gather per-pixel values by a previous selection."""
    return T.where(chosen_k == PREV, a_prev, a_next)


def unwarped_error(target, supports, alpha: float = 0.85) -> np.ndarray:
    with T.no_grad():
        errs = [warp_cost_map(target, s, alpha).data for s in supports]
    return np.minimum.reduce(errs)


def automask(target, supports, warped, alpha: float = 0.85) -> np.ndarray:
    """Keep pixels whose best warped error beats the best unwarped error.

    Ties are masked out. Returns a bool [1,1,H,W] array (no gradient).
    """
    with T.no_grad():
        best_warped = np.minimum.reduce([warp_cost_map(target, w, alpha).data for w in warped])
    return unwarped_error(target, supports, alpha) > best_warped
