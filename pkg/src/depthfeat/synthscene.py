"""Ray-cast synthetic sequences with exact depth, poses and occlusions.

Scenes are a textured ground plane plus axis-aligned textured boxes (the
side walls and far wall of the corridor are boxes too, so every ray hits
something). World frame matches the camera convention: x right, y down,
z forward, ground at ``y = ground_y``. Shading is Lambertian under a fixed
directional light, so appearance is view independent.
"""
from __future__ import annotations

import shutil
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import tensorio
from .camgeo import Intrinsics, Pose, rotation_to_axis_angle

FAR_DEPTH = 100.0
LIGHT = np.array([0.35, -0.8, -0.48]) / np.linalg.norm([0.35, -0.8, -0.48])
AMBIENT = 0.35


class ConfigurationError(ValueError):
    pass


@dataclass
class Box:
    lo: tuple
    hi: tuple
    color: tuple = (0.6, 0.6, 0.6)
    tex_seed: int = 0
    velocity: tuple = (0.0, 0.0, 0.0)   # world translation per frame

    def at(self, frame: int):
        off = np.asarray(self.velocity) * frame
        return np.asarray(self.lo) + off, np.asarray(self.hi) + off


@dataclass
class NightParams:
    gamma: float = 3.0
    noise_sigma: float = 0.04
    blobs: list = field(default_factory=list)   # (u, v, radius_px, intensity)


@dataclass
class SceneSpec:
    height: int
    width: int
    intrinsics: Intrinsics
    boxes: list
    trajectory: list                      # camera-to-world (R 3x3, C 3-vector) per frame
    ground_y: float = 1.5
    ground_color: tuple = (0.55, 0.5, 0.45)
    tex_seed: int = 0
    tex_freq: float = 1.2
    tex_octaves: int = 3
    tex_contrast: float = 2.5             # slope of the noise stretch at mid-grey
    tex_period: float | None = None       # set for strictly periodic textures
    domain: str = "day"
    night: NightParams = field(default_factory=NightParams)
    seed: int = 0
    supersample: int = 3

    @property
    def n_frames(self):
        return len(self.trajectory)


# -- procedural texture ------------------------------------------------------
_M1, _M2 = np.uint64(0x9E3779B97F4A7C15), np.uint64(0xBF58476D1CE4E5B9)


def _hash01(ix, iy, seed):
    with np.errstate(over="ignore"):
        h = (ix.astype(np.int64).view(np.uint64) * _M1) ^ (iy.astype(np.int64).view(np.uint64) * _M2)
        h ^= np.uint64(seed) * np.uint64(0x94D049BB133111EB)
        h ^= h >> np.uint64(31)
        h *= _M2
        h ^= h >> np.uint64(29)
    return (h >> np.uint64(11)).astype(np.float64) / float(1 << 53)


def value_noise(x, y, seed, octaves=3, freq=1.0, period=None, footprint=None):
    """Multi-octave smooth value noise in [0, 1] evaluated at continuous coords.

    ``footprint`` (world size of one pixel at each sample) fades octaves whose
    period spans fewer than ~6 pixels towards their mean, a mip-map style
    prefilter that keeps distant surfaces from aliasing.
    """
    total = np.zeros_like(x)
    amp_sum = 0.0
    amp = 1.0
    for o in range(octaves):
        f = freq * 2 ** o
        px, py = x * f, y * f
        ix, iy = np.floor(px), np.floor(py)
        fx, fy = px - ix, py - iy
        sx, sy = fx * fx * (3 - 2 * fx), fy * fy * (3 - 2 * fy)
        ix, iy = ix.astype(np.int64), iy.astype(np.int64)
        if period is not None:
            p = max(int(round(period * f)), 1)

            def wrap(a, p=p):
                return np.mod(a, p)
        else:
            def wrap(a):
                return a
        s = seed * 131 + o
        n00 = _hash01(wrap(ix), wrap(iy), s)
        n10 = _hash01(wrap(ix + 1), wrap(iy), s)
        n01 = _hash01(wrap(ix), wrap(iy + 1), s)
        n11 = _hash01(wrap(ix + 1), wrap(iy + 1), s)
        top = n00 + (n10 - n00) * sx
        bot = n01 + (n11 - n01) * sx
        val = top + (bot - top) * sy
        if footprint is not None:
            keep = np.clip((1.0 / (f * footprint) - 3.0) / 3.0, 0.0, 1.0)
            val = 0.5 + (val - 0.5) * keep
        total += amp * val
        amp_sum += amp
        amp *= 0.5
    return total / amp_sum


def _albedo(s, t, seed, base, spec: SceneSpec, footprint=None):
    kw = dict(octaves=spec.tex_octaves, freq=spec.tex_freq, period=spec.tex_period, footprint=footprint)
    # soft contrast stretch: steepens mid-tones without clipping into flat patches
    n = 0.5 + 0.5 * np.tanh(2.0 * spec.tex_contrast * (value_noise(s, t, seed, **kw) - 0.5))
    n2 = value_noise(s + 17.3, t - 4.1, seed + 7, **kw)
    base = np.asarray(base, float)[:, None]
    tint = np.array([1.0, 0.85, 0.7])[:, None]
    return np.clip(base * (0.2 + 1.0 * n) * (1 + 0.3 * (n2 - 0.5) * tint), 0, 1)


# -- ray casting ---------------------------------------------------------------
def cast(origins, dirs, spec: SceneSpec, frame: int):
    """Nearest hit for each ray: (t, surface id, normal, hit point).

    Surface id -1 is the ground, i >= 0 box i, -2 nothing (t = inf).
    """
    n = dirs.shape[1]
    best = np.full(n, np.inf)
    sid = np.full(n, -2, np.int64)
    normal = np.zeros((3, n))
    with np.errstate(divide="ignore", invalid="ignore"):
        tg = (spec.ground_y - origins[1]) / dirs[1]
    hit = (dirs[1] > 1e-12) & (tg > 1e-9)
    best[hit] = tg[hit]
    sid[hit] = -1
    normal[:, hit] = np.array([[0.0], [-1.0], [0.0]])
    for i, box in enumerate(spec.boxes):
        lo, hi = box.at(frame)
        with np.errstate(divide="ignore", invalid="ignore"):
            inv = 1.0 / dirs
            t1 = (lo[:, None] - origins) * inv
            t2 = (hi[:, None] - origins) * inv
        t1 = np.where(np.isnan(t1), -np.inf, t1)
        t2 = np.where(np.isnan(t2), np.inf, t2)
        tmin = np.minimum(t1, t2)
        tmax = np.maximum(t1, t2)
        tnear = tmin.max(axis=0)
        tfar = tmax.min(axis=0)
        axis = tmin.argmax(axis=0)
        ok = (tnear <= tfar) & (tnear > 1e-9) & (tnear < best)
        if ok.any():
            best[ok] = tnear[ok]
            sid[ok] = i
            nrm = np.zeros((3, int(ok.sum())))
            ax = axis[ok]
            nrm[ax, np.arange(len(ax))] = -np.sign(dirs[ax, np.flatnonzero(ok)])
            normal[:, ok] = nrm
    pts = origins + dirs * np.where(np.isfinite(best), best, 0.0)
    return best, sid, normal, pts


def _shade(spec: SceneSpec, sid, normal, pts, frame, footprint):
    n = sid.shape[0]
    rgb = np.zeros((3, n))
    g = sid == -1
    if g.any():
        rgb[:, g] = _albedo(pts[0, g], pts[2, g], spec.tex_seed, spec.ground_color, spec, footprint[g])
    for i, box in enumerate(spec.boxes):
        m = sid == i
        if not m.any():
            continue
        off = np.asarray(box.velocity) * frame
        local = pts[:, m] - off[:, None]
        nrm = np.abs(normal[:, m])
        # texture coords from the two axes tangent to the face
        s = np.where(nrm[0] > 0.5, local[2], local[0])
        t = np.where(nrm[1] > 0.5, local[2], local[1])
        rgb[:, m] = _albedo(s, t, spec.tex_seed * 977 + box.tex_seed, box.color, spec, footprint[m])
    lam = AMBIENT + (1 - AMBIENT) * np.clip(LIGHT @ normal, 0, None)
    return np.clip(rgb * lam, 0, 1)


def camera_rays(spec: SceneSpec, frame: int, ss: int = 1):
    K = spec.intrinsics
    offs = (np.arange(ss) + 0.5) / ss - 0.5
    v, u = np.mgrid[0:spec.height, 0:spec.width].astype(np.float64)
    shape = (spec.height, spec.width, ss, ss)
    us = np.broadcast_to(u[..., None, None] + offs[None, None, None, :], shape).reshape(-1)
    vs = np.broadcast_to(v[..., None, None] + offs[None, None, :, None], shape).reshape(-1)
    d_cam = np.stack([(us - K.cx) / K.fx, (vs - K.cy) / K.fy, np.ones_like(us)])
    R, C = spec.trajectory[frame]
    return np.repeat(np.asarray(C, float)[:, None], d_cam.shape[1], axis=1), R @ d_cam


def render(spec: SceneSpec, frame: int):
    """Return (image [1,3,H,W] in [0,1], depth [1,1,H,W]) for ``frame``.

    Depth is the camera-frame z of the hit through each pixel centre;
    rays that escape get FAR_DEPTH. The image is supersampled ss x ss.
    """
    if not 0 <= frame < spec.n_frames:
        raise IndexError(f"frame {frame} outside trajectory of {spec.n_frames}")
    h, w, ss = spec.height, spec.width, spec.supersample
    o, d = camera_rays(spec, frame, ss)
    t_hit, sid, normal, pts = cast(o, d, spec, frame)
    # Pixel footprint on the surface (distance / focal, stretched by obliquity),
    # measured from a fixed anchor camera so the prefiltered texture is a
    # function of the world point alone and stays identical across frames.
    anchor = np.asarray(spec.trajectory[spec.n_frames // 2][1], float)[:, None]
    ray = pts - anchor
    dist = np.linalg.norm(ray, axis=0)
    cos = np.abs((normal * ray).sum(axis=0)) / np.maximum(dist, 1e-9)
    dist = np.where(np.isfinite(t_hit), np.maximum(dist, 0.5), FAR_DEPTH)
    footprint = dist / spec.intrinsics.fx / np.maximum(cos, 0.2)
    img = _shade(spec, sid, normal, pts, frame, footprint)
    img = img.reshape(3, h, w, ss * ss).mean(axis=-1)

    o1, d1 = camera_rays(spec, frame, 1)
    t, _, _, _ = cast(o1, d1, spec, frame)
    # d_cam has unit z, so the ray parameter is the camera-frame depth
    depth = np.where(np.isfinite(t), np.minimum(t, FAR_DEPTH), FAR_DEPTH).reshape(h, w)
    if spec.domain == "night":
        img = degrade_night(img[None], spec.night, np.random.default_rng([spec.seed, frame, 7]))[0]
    return img[None], depth[None, None]


def relative_pose(spec: SceneSpec, src: int, dst: int) -> Pose:
    """Pose mapping camera-``src`` coordinates into camera-``dst`` coordinates."""
    Rs, Cs = spec.trajectory[src]
    Rd, Cd = spec.trajectory[dst]
    R = Rd.T @ Rs
    t = Rd.T @ (np.asarray(Cs) - np.asarray(Cd))
    return Pose.from_matrix(R, t)


def occlusion_mask(spec: SceneSpec, depth: np.ndarray, src: int, dst: int, tol: float = 1e-6):
    """True where the 3-D point seen at a ``src`` pixel is hidden from camera ``dst``.

    Dynamic boxes are evaluated at the ``dst`` frame.
    """
    h, w = spec.height, spec.width
    o, d = camera_rays(spec, src, 1)
    X = o + d * depth.reshape(-1)
    _, Cd = spec.trajectory[dst]
    Cd = np.asarray(Cd, float)[:, None]
    ray = X - Cd
    dist = np.linalg.norm(ray, axis=0)
    t, _, _, _ = cast(np.repeat(Cd, ray.shape[1], axis=1), ray / dist, spec, dst)
    return (t < dist * (1 - tol) - 1e-6).reshape(1, 1, h, w)


def degrade_night(image, params: NightParams, rng=None):
    """clip(image**gamma + gaussian light blobs + noise, 0, 1)."""
    if params.gamma < 1:
        raise ConfigurationError("night gamma must be >= 1")
    img = np.asarray(image, float)
    out = img ** params.gamma
    h, w = img.shape[-2:]
    v, u = np.mgrid[0:h, 0:w].astype(np.float64)
    for bu, bv, rad, inten in params.blobs:
        out = out + inten * np.exp(-((u - bu) ** 2 + (v - bv) ** 2) / (2 * rad ** 2))
    if params.noise_sigma > 0:
        rng = np.random.default_rng() if rng is None else rng
        out = out + rng.normal(0, params.noise_sigma, out.shape)
    return np.clip(out, 0, 1)


# -- scene generators ------------------------------------------------------------
def default_intrinsics(h: int, w: int) -> Intrinsics:
    f = 0.6 * w
    return Intrinsics(f, f, (w - 1) / 2, (h - 1) / 2)


def yaw_matrix(a: float) -> np.ndarray:
    c, s = np.cos(a), np.sin(a)
    return np.array([[c, 0, s], [0, 1.0, 0], [-s, 0, c]])


def corridor_walls(half_width, far_z, ground_y, rng, near_z=-10.0, top=-40.0):
    col = lambda: tuple(rng.uniform(0.35, 0.85, 3))
    return [
        Box((-half_width - 1, top, near_z), (-half_width, ground_y, far_z + 1), col(), 101),
        Box((half_width, top, near_z), (half_width + 1, ground_y, far_z + 1), col(), 102),
        Box((-half_width - 1, top, far_z), (half_width + 1, ground_y, far_z + 1), col(), 103),
    ]


def random_scene(seed: int, height: int = 64, width: int = 96, n_frames: int = 7,
                 domain: str = "day") -> SceneSpec:
    """Corridor with 2-4 boxes; forward motion with sideways drift and yaw.

    The drift keeps the focus of expansion away from the image centre, where
    the far wall would otherwise show no parallax at all.
    """
    rng = np.random.default_rng(seed)
    ground_y = 1.5
    half = rng.uniform(3.0, 4.5)
    speed = rng.uniform(0.45, 0.7)
    drift = rng.choice([-1.0, 1.0]) * rng.uniform(0.2, 0.35)
    yaw_rate = rng.uniform(-0.012, 0.012)
    far_z = rng.uniform(13, 19)
    boxes = corridor_walls(half, far_z, ground_y, rng)
    path_end = speed * n_frames + 2.0
    for i in range(int(rng.integers(2, 5))):
        sx, sy, sz = rng.uniform(0.6, 1.8), rng.uniform(0.6, 2.2), rng.uniform(0.6, 2.0)
        z0 = rng.uniform(path_end + 1, far_z - sz - 1)
        x0 = rng.uniform(-half + 0.2, half - 0.2 - sx)
        boxes.append(Box((x0, ground_y - sy, z0), (x0 + sx, ground_y, z0 + sz),
                         tuple(rng.uniform(0.3, 0.95, 3)), i))
    traj = []
    for f in range(n_frames):
        C = np.array([drift * f, 0.0, speed * f])
        traj.append((yaw_matrix(yaw_rate * f), C))
    night = NightParams(
        gamma=float(rng.uniform(2.5, 3.5)), noise_sigma=0.04,
        blobs=[(float(rng.uniform(0, width)), float(rng.uniform(height * 0.3, height)),
                float(rng.uniform(5, 12)), float(rng.uniform(0.3, 0.6))) for _ in range(2)])
    return SceneSpec(height, width, default_intrinsics(height, width), boxes, traj,
                     ground_y=ground_y, ground_color=tuple(rng.uniform(0.4, 0.7, 3)),
                     tex_seed=int(rng.integers(1 << 30)), domain=domain, night=night, seed=seed)


def plane_scene(z: float = 5.0, height: int = 64, width: int = 96, translations=((0, 0, 0),),
                seed: int = 0) -> SceneSpec:
    """A single fronto-parallel textured wall at depth ``z`` and no ground."""
    wall = Box((-500, -500, z), (500, 500, z + 1), (0.7, 0.6, 0.5), 1)
    traj = [(np.eye(3), np.asarray(t, float)) for t in translations]
    spec = SceneSpec(height, width, default_intrinsics(height, width), [wall], traj,
                     ground_y=1e6, tex_seed=seed, seed=seed)
    return spec


def static_scene(seed: int = 0, n_frames: int = 3, **kw) -> SceneSpec:
    spec = random_scene(seed, n_frames=n_frames, **kw)
    spec.trajectory = [spec.trajectory[0]] * n_frames
    return spec


def occlusion_scene(seed: int = 0, height: int = 64, width: int = 96) -> SceneSpec:
    """Lateral motion past a near box: background next to the box is visible in
    the previous frame and hidden in the next one (and vice versa)."""
    rng = np.random.default_rng(seed)
    boxes = corridor_walls(6.0, 14.0, 1.5, rng)
    boxes.append(Box((-0.6, -1.0, 4.0), (0.6, 1.5, 5.0), (0.95, 0.25, 0.2), 9))
    traj = [(np.eye(3), np.array([0.25 * (f - 1), 0.0, 0.0])) for f in range(3)]
    return SceneSpec(height, width, default_intrinsics(height, width), boxes, traj,
                     ground_color=(0.35, 0.55, 0.75), tex_seed=seed + 5, seed=seed)


def moving_object_scene(seed: int = 0, height: int = 64, width: int = 96) -> SceneSpec:
    """Forward motion with a box travelling at exactly the camera velocity."""
    spec = random_scene(seed, height, width, n_frames=3)
    speed = spec.trajectory[1][1] - spec.trajectory[0][1]
    for f in range(3):
        spec.trajectory[f] = (np.eye(3), speed * f)
    spec.boxes.append(Box((-0.7, 0.3, 3.0), (0.7, 1.5, 4.0), (0.9, 0.9, 0.2), 11, tuple(speed)))
    return spec


def repeated_texture_scene(seed: int = 0, height: int = 64, width: int = 96) -> SceneSpec:
    """Corridor whose every surface carries the same strictly periodic texture."""
    spec = random_scene(seed, height, width, n_frames=3)
    spec.tex_period = 0.5
    spec.tex_freq = 4.0
    spec.tex_octaves = 1
    grey = (0.6, 0.6, 0.6)
    spec.ground_color = grey
    for b in spec.boxes:
        b.color, b.tex_seed = grey, 0
    return spec


# -- samples and datasets ------------------------------------------------------
@dataclass
class SceneSample:
    target: np.ndarray            # [1,3,H,W]
    prev: np.ndarray
    next: np.ndarray
    depth: np.ndarray             # [1,1,H,W] ground truth for target
    pose_prev: Pose               # target -> previous camera
    pose_next: Pose               # target -> next camera
    intrinsics: Intrinsics
    domain: str = "day"
    occ_prev: np.ndarray | None = None
    occ_next: np.ndarray | None = None
    name: str = ""


def make_sample(spec: SceneSpec, t: int) -> SceneSample:
    frames = {f: render(spec, f) for f in (t - 1, t, t + 1)}
    depth = frames[t][1]
    return SceneSample(frames[t][0], frames[t - 1][0], frames[t + 1][0], depth,
                       relative_pose(spec, t, t - 1), relative_pose(spec, t, t + 1),
                       spec.intrinsics, spec.domain,
                       occlusion_mask(spec, depth, t, t - 1), occlusion_mask(spec, depth, t, t + 1))


def write_ppm(path, image):
    img = np.asarray(image, float)
    img = img.reshape(-1, *img.shape[-2:]) if img.ndim > 2 else img[None]
    if img.shape[0] == 1:
        img = np.repeat(img, 3, axis=0)
    data = (np.clip(img, 0, 1) * 255 + 0.5).astype(np.uint8).transpose(1, 2, 0)
    h, w = data.shape[:2]
    Path(path).write_bytes(f"P6\n{w} {h}\n255\n".encode() + data.tobytes())


def read_ppm(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    parts = raw.split(maxsplit=4)
    w, h = int(parts[1]), int(parts[2])
    data = np.frombuffer(parts[4], np.uint8, count=w * h * 3).reshape(h, w, 3)
    return data.transpose(2, 0, 1).astype(np.float64) / 255.0


def _fmt(v):
    return ",".join(repr(float(x)) for x in np.ravel(v))


def write_sequence(spec: SceneSpec, out_dir: Path, name: str, split: str):
    out_dir.mkdir(parents=True, exist_ok=True)
    K = spec.intrinsics
    lines = [f"scene={name}", f"split={split}", f"domain={spec.domain}", f"seed={spec.seed}",
             f"height={spec.height}", f"width={spec.width}", f"frames={spec.n_frames}",
             f"fx={K.fx!r}", f"fy={K.fy!r}", f"cx={K.cx!r}", f"cy={K.cy!r}"]
    depths = []
    for f in range(spec.n_frames):
        img, depth = render(spec, f)
        depths.append(depth)
        write_ppm(out_dir / f"frame_{f:03d}.ppm", img[0])
        tensorio.save(out_dir / f"frame_{f:03d}.dft", img)
        tensorio.save(out_dir / f"depth_{f:03d}.dft", depth)
        R, C = spec.trajectory[f]
        lines.append(f"pose.{f}.axis_angle={_fmt(rotation_to_axis_angle(R))}")
        lines.append(f"pose.{f}.position={_fmt(C)}")
    for f in range(1, spec.n_frames - 1):
        for k, tag in ((-1, "prev"), (1, "next")):
            occ = occlusion_mask(spec, depths[f], f, f + k)
            tensorio.save(out_dir / f"occ_{f:03d}_{tag}.dft", occ.astype(np.float64))
    (out_dir / "manifest.txt").write_text("\n".join(lines) + "\n")


def read_kv(path) -> dict:
    out = {}
    for line in Path(path).read_text().splitlines():
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        key, _, val = line.partition("=")
        out[key.strip()] = val.strip()
    return out


def _axis_angle_matrix(aa):
    from .camgeo import axis_angle_to_rotation
    return axis_angle_to_rotation(np.asarray(aa)).data


@dataclass
class Sequence:
    name: str
    split: str
    domain: str
    images: np.ndarray      # [F,3,H,W]
    depths: np.ndarray      # [F,1,H,W]
    trajectory: list
    intrinsics: Intrinsics
    path: Path | None = None

    def relative_pose(self, src, dst) -> Pose:
        Rs, Cs = self.trajectory[src]
        Rd, Cd = self.trajectory[dst]
        return Pose.from_matrix(Rd.T @ Rs, Rd.T @ (Cs - Cd))

    def sample(self, t: int) -> SceneSample:
        occ = {}
        if self.path is not None:
            for tag in ("prev", "next"):
                p = self.path / f"occ_{t:03d}_{tag}.dft"
                occ[tag] = tensorio.load(p).astype(bool) if p.exists() else None
        return SceneSample(self.images[t][None], self.images[t - 1][None], self.images[t + 1][None],
                           self.depths[t][None], self.relative_pose(t, t - 1), self.relative_pose(t, t + 1),
                           self.intrinsics, self.domain, occ.get("prev"), occ.get("next"),
                           f"{self.name}/{t:03d}")

    @property
    def targets(self):
        return range(1, len(self.images) - 1)


def load_sequence(path) -> Sequence:
    path = Path(path)
    kv = read_kv(path / "manifest.txt")
    n = int(kv["frames"])
    images = np.stack([tensorio.load(path / f"frame_{f:03d}.dft")[0] for f in range(n)])
    depths = np.stack([tensorio.load(path / f"depth_{f:03d}.dft")[0] for f in range(n)])
    traj = []
    for f in range(n):
        aa = [float(x) for x in kv[f"pose.{f}.axis_angle"].split(",")]
        pos = np.array([float(x) for x in kv[f"pose.{f}.position"].split(",")])
        traj.append((_axis_angle_matrix(aa), pos))
    K = Intrinsics(float(kv["fx"]), float(kv["fy"]), float(kv["cx"]), float(kv["cy"]))
    return Sequence(kv["scene"], kv["split"], kv["domain"], images, depths, traj, K, path)


@dataclass
class DatasetSpec:
    train_scenes: int = 20
    val_scenes: int = 4
    height: int = 64
    width: int = 96
    frames: int = 7
    seed: int = 0
    domains: tuple = ("day", "night")

    def seeds(self, split: str):
        # disjoint ranges per split
        base = {"train": 10_000, "val": 90_000}[split] + 1000 * self.seed
        count = self.train_scenes if split == "train" else self.val_scenes
        return [base + i for i in range(count)]


def generate_dataset(ds: DatasetSpec, out_dir, overwrite: bool = False) -> dict:
    """Render train/val sequences for every domain under ``out_dir``.

    Layout: ``<out>/<split>/<domain>/scene_XXX/`` plus ``<out>/manifest.txt``.
    Night twins reuse the day geometry, so their depth files are identical.
    """
    out = Path(out_dir)
    if out.exists() and any(out.iterdir()):
        if not overwrite:
            raise FileExistsError(f"{out} exists and is not empty; pass overwrite")
        shutil.rmtree(out)
    out.mkdir(parents=True, exist_ok=True)
    summary = {}
    lines = [f"height={ds.height}", f"width={ds.width}", f"frames={ds.frames}",
             f"domains={','.join(ds.domains)}"]
    for split in ("train", "val"):
        seeds = ds.seeds(split)
        lines.append(f"{split}.count={len(seeds)}")
        lines.append(f"{split}.seeds={','.join(map(str, seeds))}")
        for i, s in enumerate(seeds):
            for dom in ds.domains:
                spec = random_scene(s, ds.height, ds.width, ds.frames, dom)
                write_sequence(spec, out / split / dom / f"scene_{i:03d}", f"scene_{i:03d}", split)
        summary[split] = len(seeds)
    (out / "manifest.txt").write_text("\n".join(lines) + "\n")
    return summary


def load_split(data_dir, split: str, domain: str = "all") -> list:
    root = Path(data_dir) / split
    domains = sorted(p.name for p in root.iterdir() if p.is_dir()) if domain == "all" else [domain]
    seqs = []
    for dom in domains:
        d = root / dom
        if not d.is_dir():
            continue
        seqs.extend(load_sequence(p) for p in sorted(d.iterdir()) if (p / "manifest.txt").exists())
    return seqs
