"""Differentiable bilinear sampling at correspondence coordinates."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from . import tensor as T
from .camgeo import CorrespondenceMap
from .tensor import Tensor


@dataclass
class WarpResult:
    warped: Tensor          # [1, C, H, W]
    validity: np.ndarray    # [1, 1, H, W] bool


def sample(source, coords) -> Tensor:
    """Bilinearly sample source[1,C,H,W] at coords[1,2,Ho,Wo] (u, v).

    Out-of-range coordinates are clamped to the border and receive no
    coordinate gradient.
    """
    source, coords = T.as_tensor(source), T.as_tensor(coords)
    if source.ndim != 4 or coords.ndim != 4 or coords.shape[1] != 2:
        raise T.ShapeError("sample expects source [1,C,H,W] and coords [1,2,H,W]")
    src = source.data[0]
    u, v = coords.data[0, 0], coords.data[0, 1]
    out = kernels.bilinear_forward(src, u, v)[None]

    def bw(g):
        gs, gu, gv = kernels.bilinear_backward(g[0], src, u, v)
        return gs[None], np.stack([gu, gv])[None]

    return T.apply_op("bilinear", out, (source, coords), bw)


def bilinear_sample(source, cmap: CorrespondenceMap) -> WarpResult:
    if T.as_tensor(source).shape[-2:] != cmap.shape:
        raise T.ShapeError("source and correspondence map sizes differ")
    return WarpResult(sample(source, cmap.coords), cmap.in_bounds.copy())
