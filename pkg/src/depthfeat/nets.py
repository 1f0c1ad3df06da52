"""Desk-scale disparity, pose and feature networks.

All three are small strided-conv encoders with skip-connected decoders.
DispNet emits sigmoid disparities at four scales, PoseNet six pose numbers
(axis-angle, raw translation) and FeatNet an L2-normalised dense feature map
whose bottleneck passes through a four-level spatial pyramid pool.
"""
from __future__ import annotations

from collections import Counter
from functools import lru_cache

import numpy as np

from . import tensor as T
from .camgeo import Pose
from .tensor import Tensor

#: forward() calls per network class name
FORWARD_COUNTS: Counter = Counter()

_MEAN, _STD = 0.45, 0.225


class ConfigurationError(ValueError):
    pass


class Module:
    def named_parameters(self, prefix=""):
        for name, val in vars(self).items():
            full = f"{prefix}{name}"
            if isinstance(val, Tensor) and val.requires_grad:
                yield full, val
            elif isinstance(val, Module):
                yield from val.named_parameters(full + ".")
            elif isinstance(val, list):
                for i, item in enumerate(val):
                    if isinstance(item, Module):
                        yield from item.named_parameters(f"{full}.{i}.")

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None


class Conv(Module):
    def __init__(self, rng, cin, cout, k=3, stride=1, act="elu", gain=None):
        std = (gain if gain is not None else np.sqrt(2.0)) / np.sqrt(cin * k * k)
        self.weight = Tensor(rng.normal(0, std, (cout, cin, k, k)), requires_grad=True)
        self.bias = Tensor(np.zeros(cout), requires_grad=True)
        self.stride, self.pad, self.act = stride, k // 2, act

    def __call__(self, x):
        y = T.conv2d(x, self.weight, self.bias, self.stride, self.pad)
        if self.act == "elu":
            return T.elu(y)
        if self.act == "relu":
            return T.relu(y)
        return y


class ResBlock(Module):
    """conv-conv residual block; strided blocks project the shortcut with a 1x1 conv."""

    def __init__(self, rng, cin, cout, stride=1):
        self.c1 = Conv(rng, cin, cout, 3, stride, "relu")
        self.c2 = Conv(rng, cout, cout, 3, 1, None, gain=0.5)
        self.short = Conv(rng, cin, cout, 1, stride, None, gain=1.0) if (stride != 1 or cin != cout) else None

    def __call__(self, x):
        s = self.short(x) if self.short is not None else x
        return T.relu(T.add(self.c2(self.c1(x)), s))


# -- resampling matrices -------------------------------------------------
@lru_cache(maxsize=None)
def bilinear_matrix(n_out: int, n_in: int) -> np.ndarray:
    """Half-pixel aligned linear interpolation (align_corners=False)."""
    m = np.zeros((n_out, n_in))
    scale = n_in / n_out
    for i in range(n_out):
        src = min(max((i + 0.5) * scale - 0.5, 0.0), n_in - 1.0)
        lo = int(np.floor(src))
        hi = min(lo + 1, n_in - 1)
        f = src - lo
        m[i, lo] += 1 - f
        m[i, hi] += f
    m.setflags(write=False)
    return m


@lru_cache(maxsize=None)
def nearest_matrix(n_out: int, n_in: int) -> np.ndarray:
    m = np.zeros((n_out, n_in))
    m[np.arange(n_out), (np.arange(n_out) * n_in) // n_out] = 1.0
    m.setflags(write=False)
    return m


@lru_cache(maxsize=None)
def adaptive_pool_matrix(n_out: int, n_in: int) -> np.ndarray:
    m = np.zeros((n_out, n_in))
    for i in range(n_out):
        a = (i * n_in) // n_out
        b = -((-(i + 1) * n_in) // n_out)
        m[i, a:b] = 1.0 / (b - a)
    m.setflags(write=False)
    return m


def upsample(x, h, w, mode="nearest"):
    fn = nearest_matrix if mode == "nearest" else bilinear_matrix
    return T.resize(x, fn(h, x.shape[-2]), fn(w, x.shape[-1]))


def adaptive_avg_pool(x, h, w):
    return T.resize(x, adaptive_pool_matrix(h, x.shape[-2]), adaptive_pool_matrix(w, x.shape[-1]))


def _check_input(x, name, mult=8):
    if x.ndim != 4 or x.shape[0] != 1:
        raise T.ShapeError(f"{name} expects a [1,C,H,W] image")
    if x.shape[2] % mult or x.shape[3] % mult:
        raise T.ShapeError(f"{name} needs H and W divisible by {mult}, got {x.shape[2:]}")


def _normalize(x):
    return T.scalar_mul(T.sub(x, _MEAN), 1.0 / _STD)


class Encoder(Module):
    """Four stride-2 residual stages."""

    def __init__(self, rng, cin, chans=(16, 32, 64, 128)):
        self.stages = []
        prev = cin
        for c in chans:
            self.stages.append(ResBlock(rng, prev, c, stride=2))
            prev = c
        self.chans = chans

    def __call__(self, x):
        feats = []
        for st in self.stages:
            x = st(x)
            feats.append(x)
        return feats


class DispNet(Module):
    """Encoder-decoder with a sigmoid disparity head at each of four scales.

    Head biases start at logit(INIT_DISP) so the untrained net predicts a
    few metres of depth rather than the 0.2 that a zero bias gives.
    """

    INIT_DISP = 0.02

    def __init__(self, rng, chans=(16, 32, 64, 128)):
        self.encoder = Encoder(rng, 3, chans)
        dec = (16,) + tuple(chans[:-1])       # output channels per decoder level 0..3
        self.up = []
        self.fuse = []
        self.heads = []
        prev = chans[-1]
        for lvl in (3, 2, 1, 0):
            skip = chans[lvl - 1] if lvl > 0 else 0
            self.up.append(Conv(rng, prev, dec[lvl], 3))
            self.fuse.append(Conv(rng, dec[lvl] + skip, dec[lvl], 3))
            self.heads.append(Conv(rng, dec[lvl], 1, 3, act=None, gain=0.1))
            self.heads[-1].bias.data[:] = np.log(self.INIT_DISP / (1.0 - self.INIT_DISP))
            prev = dec[lvl]

    def __call__(self, image):
        """Returns disparities [scale0 (full res), scale1, scale2, scale3]."""
        FORWARD_COUNTS["DispNet"] += 1
        _check_input(image, "DispNet")
        feats = self.encoder(_normalize(image))
        x = feats[-1]
        outs = {}
        for i, lvl in enumerate((3, 2, 1, 0)):
            x = self.up[i](x)
            h, w = image.shape[2] >> lvl, image.shape[3] >> lvl
            x = upsample(x, h, w)
            if lvl > 0:
                x = T.concat([x, feats[lvl - 1]], axis=1)
            x = self.fuse[i](x)
            outs[lvl] = T.sigmoid(self.heads[i](x))
        return [outs[s] for s in range(4)]


class PoseNet(Module):
    """Pair encoder followed by a 4-layer conv decoder and spatial mean.

    Fixed output gains put the six numbers on their natural scales: radians
    for the rotation, raw (x1000) units for the translation. A half-metre
    step is 500 raw units, so unit-scale activations can express it.
    """

    ROT_GAIN, TRANS_GAIN = 0.01, 1000.0

    def __init__(self, rng, chans=(16, 32, 64, 128)):
        self.encoder = Encoder(rng, 6, chans)
        c = chans[-1]
        self.dec = [Conv(rng, c, 64, 1, act="relu"), Conv(rng, 64, 64, 3, act="relu"),
                    Conv(rng, 64, 64, 3, act="relu"), Conv(rng, 64, 6, 1, act=None, gain=0.01)]

    def raw(self, target, support) -> Tensor:
        FORWARD_COUNTS["PoseNet"] += 1
        target, support = T.as_tensor(target), T.as_tensor(support)
        if target.shape != support.shape:
            raise T.ShapeError("PoseNet inputs must share a shape")
        _check_input(target, "PoseNet")
        x = self.encoder(_normalize(T.concat([target, support], axis=1)))[-1]
        for layer in self.dec:
            x = layer(x)
        gains = np.array([self.ROT_GAIN] * 3 + [self.TRANS_GAIN] * 3)
        return T.mul(T.reshape(T.mean(x, axis=(2, 3)), (6,)), gains)

    def __call__(self, target, support) -> Pose:
        out = self.raw(target, support)
        return Pose(out[0:3], out[3:6])


class FeatNet(Module):
    """Residual encoder (stride 2/4/8), SPP bottleneck, skip decoder to half
    resolution, bilinear upsample and a 1x1 head that also sees the image."""

    def __init__(self, rng, n_features=16, chans=(16, 32, 128), pool_grids=(1, 2, 3, 6)):
        if n_features < 2:
            raise ConfigurationError("feature dimension must be at least 2")
        self.stem = Conv(rng, 3, chans[0], 3, stride=2, act="relu")
        self.enc = []
        prev = chans[0]
        for c in chans[1:]:
            self.enc.append(ResBlock(rng, prev, c, stride=2))
            prev = c
        top = chans[-1]
        self.pool_grids = tuple(pool_grids)
        self.spp = [Conv(rng, top, top // 4, 1, act="relu") for _ in pool_grids]
        self.spp_channels = top + len(pool_grids) * (top // 4)
        self.spp_fuse = Conv(rng, self.spp_channels, top, 3, act="relu")
        self.dec = []
        prev = top
        for c in reversed(chans[:-1]):
            self.dec.append(Conv(rng, prev + c, c, 3, act="relu"))
            prev = c
        self.head = Conv(rng, prev + 3, n_features, 1, act=None, gain=1.0)
        self.n_features = n_features

    def __call__(self, image) -> Tensor:
        FORWARD_COUNTS["FeatNet"] += 1
        _check_input(image, "FeatNet")
        img = _normalize(image)
        x = self.stem(img)
        skips = [x]
        for blk in self.enc:
            x = blk(x)
            skips.append(x)
        h, w = x.shape[-2:]
        branches = [x]
        for grid, conv in zip(self.pool_grids, self.spp):
            pooled = conv(adaptive_avg_pool(x, min(grid, h), min(grid, w)))
            branches.append(upsample(pooled, h, w, "bilinear"))
        x = self.spp_fuse(T.concat(branches, axis=1))
        for conv, skip in zip(self.dec, reversed(skips[:-1])):
            x = upsample(x, skip.shape[2], skip.shape[3])
            x = conv(T.concat([x, skip], axis=1))
        x = upsample(x, image.shape[2], image.shape[3], "bilinear")
        return T.l2_normalize(self.head(T.concat([x, img], axis=1)), axis=1)
