"""Training objectives: SSIM/L1 warp cost, contrastive loss, smoothness."""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from . import tensor as T
from .camgeo import CorrespondenceMap
from .tensor import Tensor

SSIM_C1 = 0.01 ** 2
SSIM_C2 = 0.03 ** 2
LOCAL_WINDOW = 25

POSITIVE, NEGATIVE, IGNORE = 1, 0, -1


class EmptyMaskWarning(RuntimeWarning):
    pass


class MiningError(ValueError):
    pass


@dataclass
class LossWeights:
    alpha: float = 0.85
    smooth_lambda: float = 0.001
    margin: float = 0.5
    w_P: float = 1.0
    w_F: float = 1.0
    w_C: float = 1.0

    def __post_init__(self):
        if not 0 <= self.alpha <= 1:
            raise ValueError("alpha must be in [0, 1]")
        if self.margin <= 0:
            raise ValueError("margin must be positive")
        if min(self.w_P, self.w_F, self.w_C, self.smooth_lambda) < 0:
            raise ValueError("loss weights must be non-negative")


def ssim(x, y) -> Tensor:
    """Per-pixel SSIM over 3x3 windows (truncated at the border), same shape as inputs."""
    x, y = T.as_tensor(x), T.as_tensor(y)
    if x.shape != y.shape:
        raise T.ShapeError(f"ssim shape mismatch {x.shape} vs {y.shape}")
    mx, my = T.box3(x), T.box3(y)
    mxx, myy, mxy = T.mul(mx, mx), T.mul(my, my), T.mul(mx, my)
    sx = T.sub(T.box3(T.mul(x, x)), mxx)
    sy = T.sub(T.box3(T.mul(y, y)), myy)
    sxy = T.sub(T.box3(T.mul(x, y)), mxy)
    num = T.mul(T.add(T.scalar_mul(mxy, 2.0), SSIM_C1), T.add(T.scalar_mul(sxy, 2.0), SSIM_C2))
    den = T.mul(T.add(T.add(mxx, myy), SSIM_C1), T.add(T.add(sx, sy), SSIM_C2))
    return T.div(num, den)


def warp_cost_map(x, y, alpha: float = 0.85) -> Tensor:
    """Per-pixel alpha*clip((1-SSIM)/2, 0, 1) + (1-alpha)*|x-y|, averaged over channels -> [1,1,H,W]."""
    x, y = T.as_tensor(x), T.as_tensor(y)
    l1 = T.tabs(T.sub(x, y))
    if alpha == 0:
        per = l1
    else:
        # rounding can push SSIM a hair past 1, which would let a near-identity
        # warp beat the exact-zero unwarped error in the automask
        dssim = T.minimum(T.maximum(T.scalar_mul(T.sub(1.0, ssim(x, y)), 0.5), 0.0), 1.0)
        dssim = T.scalar_mul(dssim, alpha)
        per = T.add(dssim, T.scalar_mul(l1, 1.0 - alpha))
    return T.mean(per, axis=1, keepdims=True)


def masked_mean(m, valid=None) -> Tensor:
    m = T.as_tensor(m)
    if valid is None:
        return T.mean(m)
    valid = np.broadcast_to(np.asarray(valid, bool), m.shape)
    n = int(valid.sum())
    if n == 0:
        warnings.warn("empty validity mask, loss defined as 0", EmptyMaskWarning, stacklevel=2)
        return T.scalar_mul(T.tsum(m), 0.0)
    return T.scalar_mul(T.tsum(T.mul(m, valid.astype(np.float64))), 1.0 / n)


def warp_cost(x, y, alpha: float = 0.85, valid=None) -> Tensor:
    """Scalar warp cost: per-pixel cost averaged over valid pixels."""
    return masked_mean(warp_cost_map(x, y, alpha), valid)


def photometric_loss(target, warped, valid=None, alpha: float = 0.85) -> Tensor:
    return warp_cost(target, warped, alpha, valid)


def feature_loss(feat, warped_feat, valid=None, alpha: float = 0.85) -> Tensor:
    return warp_cost(feat, warped_feat, alpha, valid)


def contrastive_pair(y: int, f1, f2, margin: float) -> float:
    d = float(np.linalg.norm(np.asarray(f1, float) - np.asarray(f2, float)))
    if y == POSITIVE:
        return 0.5 * d * d
    if y == NEGATIVE:
        return 0.5 * max(0.0, margin - d) ** 2
    return 0.0


@dataclass
class LabelMask:
    """Labelled pixel pairs as parallel arrays of flat pixel indices.

    ``src`` indexes the target map, ``dst`` the support map.
    """

    src: np.ndarray
    dst: np.ndarray
    label: np.ndarray
    shape: tuple

    def __len__(self):
        return len(self.label)

    def counts(self):
        return {k: int((self.label == v).sum()) for k, v in
                (("positive", POSITIVE), ("negative", NEGATIVE), ("ignore", IGNORE))}

    def ignore_sources(self, bad_src: np.ndarray) -> "LabelMask":
        """Relabel positives whose source pixel is flagged in ``bad_src`` (flat bool)."""
        lab = self.label.copy()
        lab[(lab == POSITIVE) & bad_src[self.src]] = IGNORE
        return LabelMask(self.src, self.dst, lab, self.shape)


def _sample_offsets(rng, n, lo_u, hi_u, lo_v, hi_v, cu, cv, radius, max_iter=64):
    u = rng.integers(lo_u, hi_u + 1)
    v = rng.integers(lo_v, hi_v + 1)
    for _ in range(max_iter):
        bad = (u - cu) ** 2 + (v - cv) ** 2 <= radius ** 2
        if not bad.any():
            return u, v
        k = int(bad.sum())
        u[bad] = rng.integers(lo_u[bad], hi_u[bad] + 1, size=k)
        v[bad] = rng.integers(lo_v[bad], hi_v[bad] + 1, size=k)
    raise MiningError("could not place negatives outside the exclusion disc")


def mine_negatives(cmap: CorrespondenceMap, strategy: str = "global", ratio: int = 4,
                   exclusion_radius: float = 3, rng=None, window: int = LOCAL_WINDOW,
                   valid: np.ndarray | None = None) -> LabelMask:
    """Positives from rounded in-bounds correspondences plus ``ratio`` negatives each.

    Negatives avoid a disc of ``exclusion_radius`` around the true match:
    ``global`` samples the whole support image, ``local`` a window of
    Chebyshev radius ``window`` around the match, ``global-local`` splits
    the ratio between the two.
    """
    if ratio < 1:
        raise MiningError("ratio must be >= 1")
    if strategy not in ("global", "local", "global-local"):
        raise MiningError(f"unknown strategy {strategy!r}")
    if strategy != "global" and window <= exclusion_radius:
        raise MiningError("local window must be larger than the exclusion disc")
    rng = np.random.default_rng() if rng is None else rng
    h, w = cmap.shape
    ok = cmap.in_bounds.reshape(-1).copy()
    if valid is not None:
        ok &= np.asarray(valid, bool).reshape(-1)
    src = np.flatnonzero(ok)
    cu = np.rint(cmap.coords.data[0, 0].reshape(-1)[src]).astype(np.int64)
    cv = np.rint(cmap.coords.data[0, 1].reshape(-1)[src]).astype(np.int64)
    n = len(src)

    n_local = {"global": 0, "local": ratio, "global-local": ratio // 2}[strategy]
    neg_u, neg_v = [], []
    for j in range(ratio):
        if j < n_local:
            lo_u, hi_u = np.maximum(cu - window, 0), np.minimum(cu + window, w - 1)
            lo_v, hi_v = np.maximum(cv - window, 0), np.minimum(cv + window, h - 1)
        else:
            lo_u, hi_u = np.zeros(n, np.int64), np.full(n, w - 1)
            lo_v, hi_v = np.zeros(n, np.int64), np.full(n, h - 1)
        nu, nv = _sample_offsets(rng, n, lo_u, hi_u, lo_v, hi_v, cu, cv, exclusion_radius)
        neg_u.append(nu)
        neg_v.append(nv)

    # layout: for each positive, the positive pair then its negatives
    dst_pos = cv * w + cu
    dst = np.column_stack([dst_pos] + [nv * w + nu for nu, nv in zip(neg_u, neg_v)]).reshape(-1)
    srcs = np.repeat(src, ratio + 1)
    label = np.tile(np.array([POSITIVE] + [NEGATIVE] * ratio, np.int8), n)
    return LabelMask(srcs, dst, label, (h, w))


def pixelwise_contrastive(feat_t, feat_s, labels: LabelMask, margin: float = 0.5) -> Tensor:
    """Mean pair loss over non-ignored pairs of ``labels``."""
    keep = labels.label != IGNORE
    if not keep.any():
        warnings.warn("empty label mask, contrastive loss defined as 0", EmptyMaskWarning, stacklevel=2)
        return T.scalar_mul(T.tsum(T.as_tensor(feat_t)), 0.0)
    lab = labels.label[keep]
    f1 = T.gather_pixels(feat_t, labels.src[keep])
    f2 = T.gather_pixels(feat_s, labels.dst[keep])
    diff = T.sub(f1, f2)
    sq = T.tsum(T.mul(diff, diff), axis=0)               # d^2 per pair
    pos = (lab == POSITIVE).astype(np.float64)
    neg = (lab == NEGATIVE).astype(np.float64)
    d = T.tsqrt(T.add(sq, 1e-24))
    hinge = T.relu(T.sub(margin, d))
    per = T.add(T.mul(sq, pos), T.mul(T.mul(hinge, hinge), neg))
    return T.scalar_mul(T.tsum(per), 0.5 / len(lab))


def _grad_x(a):
    return T.sub(a[..., :, 1:], a[..., :, :-1])


def _grad_y(a):
    return T.sub(a[..., 1:, :], a[..., :-1, :])


def smoothness(depth, image, smooth_lambda: float = 0.001, use_disparity: bool = False) -> Tensor:
    """Edge-aware first-order smoothness of depth (or mean-normalised inverse depth).

    Image edge strength is the channel-mean absolute difference; N is the
    pixel count and both directions are summed.
    """
    depth, image = T.as_tensor(depth), T.as_tensor(image)
    h, w = depth.shape[-2:]
    d = depth
    if use_disparity:
        inv = T.div(1.0, depth)
        d = T.div(inv, T.add(T.mean(inv, axis=(2, 3), keepdims=True), 1e-7))
    img = image.data
    ex = np.exp(-np.abs(img[..., :, 1:] - img[..., :, :-1]).mean(axis=1, keepdims=True))
    ey = np.exp(-np.abs(img[..., 1:, :] - img[..., :-1, :]).mean(axis=1, keepdims=True))
    tx = T.tsum(T.mul(T.tabs(_grad_x(d)), ex))
    ty = T.tsum(T.mul(T.tabs(_grad_y(d)), ey))
    return T.scalar_mul(T.add(tx, ty), smooth_lambda / (h * w))
