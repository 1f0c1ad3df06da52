"""Pinhole camera, poses and dense correspondences.

Pixel centres sit at integer coordinates with the origin at the top-left;
``u`` runs along the width, ``v`` along the height. Camera frames are
x-right, y-down, z-forward.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import tensor as T
from .tensor import Tensor

MIN_DEPTH = 0.1
MAX_DEPTH = 100.0
TRANSLATION_SCALE = 0.001
# depth(disp) = 1 / (DISP_A * disp + DISP_B) hits MAX_DEPTH at 0 and MIN_DEPTH at 1
DISP_B = 1.0 / MAX_DEPTH
DISP_A = 1.0 / MIN_DEPTH - DISP_B
_Z_EPS = 1e-6


class DomainError(ValueError):
    pass


@dataclass(frozen=True)
class Intrinsics:
    fx: float
    fy: float
    cx: float
    cy: float

    def __post_init__(self):
        if self.fx <= 0 or self.fy <= 0:
            raise ValueError("focal lengths must be positive")

    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0, self.cx], [0, self.fy, self.cy], [0, 0, 1.0]])

    def scaled(self, sx: float, sy: float) -> "Intrinsics":
        # pixel-centre convention: u' + 0.5 = s (u + 0.5)
        return Intrinsics(self.fx * sx, self.fy * sy, (self.cx + 0.5) * sx - 0.5, (self.cy + 0.5) * sy - 0.5)


@dataclass
class Pose:
    """Rigid transform q' = R(axis_angle) q + translation_scale * translation.

    ``axis_angle`` and ``translation`` are 3-element tensors so a pose
    predicted by a network stays differentiable.
    """

    axis_angle: Tensor
    translation: Tensor
    translation_scale: float = field(default=TRANSLATION_SCALE)

    def __post_init__(self):
        self.axis_angle = T.as_tensor(self.axis_angle)
        self.translation = T.as_tensor(self.translation)

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.zeros(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, rot: np.ndarray, t_eff: np.ndarray, translation_scale: float = TRANSLATION_SCALE) -> "Pose":
        """Build from a rotation matrix and an effective (metric) translation."""
        return cls(rotation_to_axis_angle(rot), np.asarray(t_eff, float) / translation_scale, translation_scale)

    def rotation(self) -> Tensor:
        return axis_angle_to_rotation(self.axis_angle)

    def effective_translation(self) -> Tensor:
        return T.scalar_mul(self.translation, self.translation_scale)

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation().data
        m[:3, 3] = self.effective_translation().data
        return m

    def inverse(self) -> "Pose":
        m = np.linalg.inv(self.matrix())
        return Pose.from_matrix(m[:3, :3], m[:3, 3], self.translation_scale)

    def inverted(self) -> "Pose":
        """Differentiable inverse: rotation by -w, translation -R^T t."""
        back = T.reshape(T.matmul(T.transpose(self.rotation()), T.reshape(self.translation, (3, 1))), (3,))
        return Pose(T.neg(self.axis_angle), T.neg(back), self.translation_scale)

    def compose(self, other: "Pose") -> "Pose":
        """Apply ``other`` first, then ``self``."""
        m = self.matrix() @ other.matrix()
        return Pose.from_matrix(m[:3, :3], m[:3, 3], self.translation_scale)


def disp_to_depth(disp) -> Tensor:
    disp = T.as_tensor(disp)
    if disp.data.min() < 0 or disp.data.max() > 1:
        raise DomainError("disparity must lie in [0, 1]")
    return T.div(1.0, T.add(T.scalar_mul(disp, DISP_A), DISP_B))


def _skew(w: Tensor) -> Tensor:
    z = Tensor(np.zeros(1))
    wx, wy, wz = w[0:1], w[1:2], w[2:3]
    rows = [T.concat([z, -wz, wy]), T.concat([wz, z, -wx]), T.concat([-wy, wx, z])]
    return T.stack(rows, 0)


def axis_angle_to_rotation(axis_angle) -> Tensor:
    """Rodrigues' formula, R = I + A K + B K^2 with K = [w]x.

    A = sin(th)/th and B = (1 - cos th)/th^2 = 2 sin^2(th/2)/th^2, the latter
    form avoiding cancellation near th = 0.
    """
    w = T.reshape(T.as_tensor(axis_angle), (3,))
    theta = T.tsqrt(T.add(T.tsum(T.mul(w, w)), 1e-24))
    a = T.div(T.tsin(theta), theta)
    half = T.div(T.tsin(T.scalar_mul(theta, 0.5)), theta)
    b = T.scalar_mul(T.mul(half, half), 2.0)
    k = _skew(w)
    return T.add(T.add(np.eye(3), T.mul(a, k)), T.mul(b, T.matmul(k, k)))


def rotation_to_axis_angle(rot: np.ndarray) -> np.ndarray:
    rot = np.asarray(rot, float)
    v = np.array([rot[2, 1] - rot[1, 2], rot[0, 2] - rot[2, 0], rot[1, 0] - rot[0, 1]])
    s = np.linalg.norm(v) / 2
    c = (np.trace(rot) - 1) / 2
    theta = np.arctan2(s, c)
    if np.pi - theta < 1e-6:
        # near pi: axis from the symmetric part
        m = (rot + np.eye(3)) / 2
        i = int(np.argmax(np.diag(m)))
        axis = m[:, i] / np.sqrt(m[i, i])
        return axis / np.linalg.norm(axis) * theta
    if s < 1e-12:
        return v / 2
    return v * (theta / (2 * s))


def backproject(pixel, depth: float, K: Intrinsics) -> np.ndarray:
    u, v = pixel
    return np.array([(u - K.cx) / K.fx * depth, (v - K.cy) / K.fy * depth, depth])


def project(q, K: Intrinsics, P: Pose | None = None):
    """Return ((u, v), depth, valid) of 3-D point ``q`` seen through ``P``."""
    q = np.asarray(q, float)
    if P is not None:
        q = P.rotation().data @ q + P.effective_translation().data
    z = q[2]
    if z <= 0:
        return (np.nan, np.nan), float(z), False
    return (K.fx * q[0] / z + K.cx, K.fy * q[1] / z + K.cy), float(z), True


@dataclass
class CorrespondenceMap:
    coords: Tensor        # [1, 2, H, W], channel 0 = u, 1 = v
    in_bounds: np.ndarray  # [1, 1, H, W] bool
    depth: Tensor          # [1, 1, H, W] depth in the support frame

    @property
    def shape(self):
        return self.coords.shape[2:]


_BORDER_TOL = 1e-9


def pixel_grid(h: int, w: int):
    v, u = np.mgrid[0:h, 0:w].astype(np.float64)
    return u, v


def correspondence_map(D, P: Pose, K: Intrinsics) -> CorrespondenceMap:
    """Where each target pixel lands in the support frame reached by ``P``."""
    D = T.as_tensor(D)
    h, w = D.shape[-2:]
    u, v = pixel_grid(h, w)
    rays = np.stack([((u - K.cx) / K.fx).ravel(), ((v - K.cy) / K.fy).ravel(), np.ones(h * w)])
    d = T.reshape(D, (1, h * w))
    pts = T.mul(rays, d)                                        # (3, HW)
    moved = T.add(T.matmul(P.rotation(), pts), T.reshape(P.effective_translation(), (3, 1)))
    z = moved[2:3]
    zs = T.maximum(z, _Z_EPS)
    pu = T.add(T.scalar_mul(T.div(moved[0:1], zs), K.fx), K.cx)
    pv = T.add(T.scalar_mul(T.div(moved[1:2], zs), K.fy), K.cy)
    coords = T.reshape(T.concat([pu, pv], 0), (1, 2, h, w))
    cu, cv, zd = pu.data.reshape(h, w), pv.data.reshape(h, w), z.data.reshape(h, w)
    # border pixels round-tripped through the camera may drift by an ulp
    tol = _BORDER_TOL
    inb = (zd > 0) & (cu >= -tol) & (cu <= w - 1 + tol) & (cv >= -tol) & (cv <= h - 1 + tol)
    return CorrespondenceMap(coords, inb[None, None], T.reshape(z, (1, 1, h, w)))
