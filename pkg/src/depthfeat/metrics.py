"""Depth error/inlier metrics and feature-space matching metrics."""
from __future__ import annotations

import csv
from dataclasses import astuple, dataclass, fields

import numpy as np

LOCAL_WINDOW = 25


class EvaluationError(ValueError):
    pass


@dataclass
class DepthMetrics:
    abs_rel: float
    sq_rel: float
    rmse: float
    rmse_log: float
    a1: float
    a2: float
    a3: float

    @classmethod
    def columns(cls):
        return [f.name for f in fields(cls)]

    def row(self):
        return list(astuple(self))

    @classmethod
    def average(cls, items):
        return cls(*np.mean([m.row() for m in items], axis=0).tolist())


def depth_metrics(pred, gt, median_scale: bool = True, valid=None) -> DepthMetrics:
    """Standard monocular depth errors over pixels with gt > 0 (and ``valid``)."""
    pred = np.asarray(pred, float).reshape(-1)
    gt = np.asarray(gt, float).reshape(-1)
    mask = gt > 0
    if valid is not None:
        mask &= np.asarray(valid, bool).reshape(-1)
    if not mask.any():
        raise EvaluationError("no valid ground-truth pixels")
    p, g = pred[mask], gt[mask]
    if median_scale:
        p = p * (np.median(g) / np.median(p))
    thresh = np.maximum(p / g, g / p)
    diff = p - g
    return DepthMetrics(
        abs_rel=float(np.mean(np.abs(diff) / g)),
        sq_rel=float(np.mean(diff ** 2 / g)),
        rmse=float(np.sqrt(np.mean(diff ** 2))),
        rmse_log=float(np.sqrt(np.mean((np.log(p) - np.log(g)) ** 2))),
        a1=float(np.mean(thresh < 1.25)),
        a2=float(np.mean(thresh < 1.25 ** 2)),
        a3=float(np.mean(thresh < 1.25 ** 3)),
    )


@dataclass
class FeatureMetrics:
    mu_pos: float
    mu_neg_global: float
    auc_global: float
    mu_neg_local: float
    auc_local: float

    @classmethod
    def columns(cls):
        return [f.name for f in fields(cls)]

    def row(self):
        return list(astuple(self))

    @classmethod
    def average(cls, items):
        return cls(*np.mean([m.row() for m in items], axis=0).tolist())


def _sample_negatives(rng, n, h, w, du, dv, n_neg, window):
    """``n_neg`` distinct-from-match pixels per positive, globally or in a window."""
    if window is None:
        lo_u, hi_u = np.zeros(n, np.int64), np.full(n, w - 1)
        lo_v, hi_v = np.zeros(n, np.int64), np.full(n, h - 1)
    else:
        lo_u, hi_u = np.maximum(du - window, 0), np.minimum(du + window, w - 1)
        lo_v, hi_v = np.maximum(dv - window, 0), np.minimum(dv + window, h - 1)
    if np.any((hi_u - lo_u + 1) * (hi_v - lo_v + 1) < 2):
        raise EvaluationError("window contains no negative candidates")
    lo_u, hi_u = lo_u[:, None], hi_u[:, None]
    lo_v, hi_v = lo_v[:, None], hi_v[:, None]
    nu = rng.integers(lo_u, hi_u + 1, size=(n, n_neg))
    nv = rng.integers(lo_v, hi_v + 1, size=(n, n_neg))
    for _ in range(100):
        same = (nu == du[:, None]) & (nv == dv[:, None])
        if not same.any():
            break
        rows = np.nonzero(same)[0]
        nu[same] = rng.integers(lo_u[rows, 0], hi_u[rows, 0] + 1)
        nv[same] = rng.integers(lo_v[rows, 0], hi_v[rows, 0] + 1)
    return nv * w + nu


def feature_metrics(f1, f2, src, dst_uv, n_negatives: int = 32, window: int = LOCAL_WINDOW,
                    rng=None) -> FeatureMetrics:
    """Distances and AUC for ground-truth pairs.

    ``src`` are flat pixel indices into ``f1``; ``dst_uv`` the matching
    (u, v) coordinates in ``f2`` (rounded to pixels). AUC is the fraction of
    (positive, negative) comparisons where the negative is farther.
    """
    rng = np.random.default_rng(0) if rng is None else rng
    a = np.asarray(f1, float)[0]
    b = np.asarray(f2, float)[0]
    c, h, w = a.shape
    A = a.reshape(c, -1)
    B = b.reshape(c, -1)
    src = np.asarray(src, np.int64)
    if len(src) == 0:
        raise EvaluationError("no ground-truth correspondences")
    du = np.clip(np.rint(dst_uv[0]).astype(np.int64), 0, w - 1)
    dv = np.clip(np.rint(dst_uv[1]).astype(np.int64), 0, h - 1)
    dst = dv * w + du
    fa = A[:, src]
    d_pos = np.linalg.norm(fa - B[:, dst], axis=0)
    out = [float(d_pos.mean())]
    for win in (None, window):
        neg = _sample_negatives(rng, len(src), h, w, du, dv, n_negatives, win)
        d_neg = np.linalg.norm(fa[:, :, None] - B[:, neg], axis=0)
        out += [float(d_neg.mean()), float(np.mean(d_neg > d_pos[:, None]))]
    return FeatureMetrics(out[0], out[1], out[2], out[3], out[4])


def exhaustive_auc(f1, f2, src, dst_uv, window=None) -> float:
    """All-pairs AUC (every pixel other than the match is a negative)."""
    a = np.asarray(f1, float)[0]
    b = np.asarray(f2, float)[0]
    c, h, w = a.shape
    A, B = a.reshape(c, -1), b.reshape(c, -1)
    du = np.clip(np.rint(dst_uv[0]).astype(np.int64), 0, w - 1)
    dv = np.clip(np.rint(dst_uv[1]).astype(np.int64), 0, h - 1)
    vv, uu = np.divmod(np.arange(h * w), w)
    wins, total = 0, 0
    for s, u, v in zip(src, du, dv):
        d = np.linalg.norm(B - A[:, [s]], axis=0)
        cand = np.ones(h * w, bool)
        cand[v * w + u] = False
        if window is not None:
            cand &= (np.abs(uu - u) <= window) & (np.abs(vv - v) <= window)
        wins += int((d[cand] > d[v * w + u]).sum())
        total += int(cand.sum())
    return wins / total


def write_csv(path, columns, rows):
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(columns)
        for r in rows:
            wr.writerow([f"{x:.6f}" if isinstance(x, float) else x for x in r])
