"""Depth and feature evaluation over held-out synthetic sequences."""
from __future__ import annotations

import numpy as np

from . import tensor as T
from .camgeo import correspondence_map, disp_to_depth
from .metrics import DepthMetrics, FeatureMetrics, depth_metrics, feature_metrics


def predict_depth(disp_net, image) -> np.ndarray:
    """Full-resolution depth [1,1,H,W] from the finest disparity head."""
    with T.no_grad():
        return disp_to_depth(disp_net(T.Tensor(image))[0]).data


def depth_rows(sequences, predictor, median_scale: bool = True):
    """Per-image (name, domain, DepthMetrics, pred) for every target frame."""
    rows = []
    for seq in sequences:
        for t in seq.targets:
            gt = seq.depths[t][None]
            pred = predictor(seq.images[t][None], gt)
            rows.append((f"{seq.name}/{t:03d}", seq.domain, depth_metrics(pred, gt, median_scale), pred))
    return rows


def summarize(rows) -> DepthMetrics:
    return DepthMetrics.average([r[2] for r in rows])


def gt_correspondences(seq, t: int, k: int = 1):
    """Ground-truth target->support pixel matches (flat src, (u, v)) for frame t."""
    depth = seq.depths[t][None]
    cmap = correspondence_map(depth, seq.relative_pose(t, t + k), seq.intrinsics)
    ok = cmap.in_bounds.reshape(-1)
    src = np.flatnonzero(ok)
    uv = cmap.coords.data[0].reshape(2, -1)[:, src]
    return src, uv


def feature_rows(sequences, featurize, n_negatives: int = 32, max_pairs: int = 2000, seed: int = 0):
    """Per-image feature metrics on forward-neighbour ground-truth matches."""
    rows = []
    for seq in sequences:
        for t in seq.targets:
            rng = np.random.default_rng([seed, t, len(rows)])
            src, uv = gt_correspondences(seq, t, 1)
            if len(src) > max_pairs:
                pick = np.sort(rng.choice(len(src), max_pairs, replace=False))
                src, uv = src[pick], uv[:, pick]
            f1 = featurize(seq.images[t][None])
            f2 = featurize(seq.images[t + 1][None])
            rows.append((f"{seq.name}/{t:03d}", seq.domain,
                         feature_metrics(f1, f2, src, uv, n_negatives, rng=rng)))
    return rows


def summarize_features(rows) -> FeatureMetrics:
    return FeatureMetrics.average([r[2] for r in rows])


def net_featurizer(feat_net):
    def run(image):
        with T.no_grad():
            return feat_net(T.Tensor(image)).data
    return run
