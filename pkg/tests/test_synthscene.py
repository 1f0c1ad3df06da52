import numpy as np
import pytest

from depthfeat.camgeo import correspondence_map
from depthfeat.synthscene import (FAR_DEPTH, ConfigurationError, DatasetSpec, NightParams, SceneSpec,
                                  cast, camera_rays, degrade_night, generate_dataset, load_split,
                                  make_sample, occlusion_mask, plane_scene, random_scene, read_kv,
                                  read_ppm, render, write_ppm)
from depthfeat.warp import bilinear_sample


def test_fronto_parallel_plane_depth():
    _, depth = render(plane_scene(z=5.0), 0)
    np.testing.assert_allclose(depth, 5.0, rtol=0, atol=1e-12)


def test_escaping_rays_get_far_depth():
    spec = plane_scene(z=5.0)
    spec.boxes = []
    _, depth = render(spec, 0)
    assert (depth == FAR_DEPTH).all()


def test_render_deterministic():
    spec = random_scene(11)
    a, da = render(spec, 2)
    b, db = render(spec, 2)
    assert a.tobytes() == b.tobytes() and da.tobytes() == db.tobytes()


def test_frame_out_of_range():
    with pytest.raises(IndexError):
        render(random_scene(0), 7)


@pytest.mark.parametrize("tx", [0.1, -0.2])
def test_lateral_translation_matches_closed_form(tx):
    spec = plane_scene(z=5.0, translations=((0, 0, 0), (tx, 0, 0)))
    img0, d0 = render(spec, 0)
    img1, _ = render(spec, 1)
    s = make_sample(SceneSpec(spec.height, spec.width, spec.intrinsics, spec.boxes,
                              spec.trajectory + [spec.trajectory[0]], ground_y=spec.ground_y), 1)
    # target frame 1, next frame 2 == frame 0: points shift by fx*tx/z
    cm = correspondence_map(s.depth, s.pose_next, s.intrinsics)
    u = np.arange(spec.width, dtype=float)
    np.testing.assert_allclose(cm.coords.data[0, 0, 10], u + spec.intrinsics.fx * tx / 5.0, atol=1e-9)
    # and the rendered image agrees with the warp up to interpolation error
    res = bilinear_sample(s.next, cm)
    ok = res.validity[0, 0]
    assert np.abs(res.warped.data - s.target)[0][:, ok].mean() < 1e-2


def test_depth_matches_ray_cast():
    spec = random_scene(3)
    _, depth = render(spec, 2)
    o, d = camera_rays(spec, 2, 1)
    t, _, _, _ = cast(o, d, spec, 2)
    np.testing.assert_allclose(depth.reshape(-1), np.minimum(t, FAR_DEPTH), rtol=0, atol=1e-9)


@pytest.mark.parametrize("seed", [0, 5, 9])
def test_gt_warp_reproduces_target(seed):
    s = make_sample(random_scene(seed), 3)
    for pose, sup, occ in ((s.pose_prev, s.prev, s.occ_prev), (s.pose_next, s.next, s.occ_next)):
        res = bilinear_sample(sup, correspondence_map(s.depth, pose, s.intrinsics))
        keep = res.validity[0, 0] & ~occ[0, 0]
        assert np.abs(res.warped.data - s.target)[0][:, keep].mean() < 1e-2


def test_occlusion_mask_exact_brute_force():
    from depthfeat.synthscene import occlusion_scene
    spec = occlusion_scene(0)
    _, depth = render(spec, 1)
    occ = occlusion_mask(spec, depth, 1, 2)[0, 0]
    assert occ.any() and not occ.all()
    o, d = camera_rays(spec, 1, 1)
    X = o + d * depth.reshape(-1)
    C = np.asarray(spec.trajectory[2][1], float)
    rng = np.random.default_rng(0)
    for i in rng.choice(X.shape[1], 60, replace=False):
        ray = X[:, i] - C
        dist = np.linalg.norm(ray)
        # march the segment towards the point and test every box
        t, _, _, _ = cast(C[:, None], (ray / dist)[:, None], spec, 2)
        assert occ.reshape(-1)[i] == (t[0] < dist * (1 - 1e-6) - 1e-6)


def test_night_identity_and_power_law():
    img = np.random.default_rng(0).random((1, 3, 4, 5))
    np.testing.assert_array_equal(degrade_night(img, NightParams(gamma=1.0, noise_sigma=0.0, blobs=[])), img)
    mid = np.full((1, 3, 2, 2), 0.5)
    np.testing.assert_allclose(degrade_night(mid, NightParams(gamma=3.0, noise_sigma=0.0, blobs=[])), 0.125)
    with pytest.raises(ConfigurationError):
        degrade_night(img, NightParams(gamma=0.5))


def test_night_mean_decreases_with_gamma():
    img = np.random.default_rng(1).uniform(0.01, 0.99, (1, 3, 8, 8))
    means = [degrade_night(img, NightParams(gamma=g, noise_sigma=0.0, blobs=[])).mean() for g in (1, 2, 3, 4)]
    assert all(a > b for a, b in zip(means, means[1:]))


def test_ppm_round_trip(tmp_path):
    img = np.random.default_rng(2).random((3, 5, 7))
    write_ppm(tmp_path / "x.ppm", img)
    back = read_ppm(tmp_path / "x.ppm")
    assert (tmp_path / "x.ppm").read_bytes().startswith(b"P6\n7 5\n255\n")
    assert np.abs(back - img).max() <= 0.5 / 255 + 1e-12


@pytest.fixture(scope="module")
def tiny_dataset(tmp_path_factory):
    out = tmp_path_factory.mktemp("ds")
    ds = DatasetSpec(train_scenes=3, val_scenes=2, height=16, width=24, frames=3, seed=4)
    generate_dataset(ds, out)
    return ds, out


def test_dataset_layout(tiny_dataset):
    ds, out = tiny_dataset
    for split, n in (("train", 3), ("val", 2)):
        for dom in ("day", "night"):
            scenes = sorted((out / split / dom).iterdir())
            assert len(scenes) == n
            kv = read_kv(scenes[0] / "manifest.txt")
            assert {"fx", "fy", "cx", "cy", "pose.0.axis_angle", "pose.2.position"} <= set(kv)
    top = read_kv(out / "manifest.txt")
    assert not set(top["train.seeds"].split(",")) & set(top["val.seeds"].split(","))


def test_night_twin_shares_depth(tiny_dataset):
    _, out = tiny_dataset
    for name in ("scene_000", "scene_001"):
        for f in range(3):
            a = (out / "val" / "day" / name / f"depth_{f:03d}.dft").read_bytes()
            b = (out / "val" / "night" / name / f"depth_{f:03d}.dft").read_bytes()
            assert a == b


def test_dataset_refuses_overwrite_and_is_deterministic(tiny_dataset, tmp_path):
    ds, out = tiny_dataset
    with pytest.raises(FileExistsError):
        generate_dataset(ds, out)
    generate_dataset(ds, tmp_path / "again")
    for p in sorted(out.rglob("*.dft"))[:20]:
        assert p.read_bytes() == (tmp_path / "again" / p.relative_to(out)).read_bytes()


def test_load_split_samples(tiny_dataset):
    _, out = tiny_dataset
    seqs = load_split(out, "train", "day")
    assert len(seqs) == 3 and all(s.domain == "day" for s in seqs)
    s = seqs[0].sample(1)
    assert s.target.shape == (1, 3, 16, 24) and s.depth.shape == (1, 1, 16, 24)
    assert s.occ_prev is not None and s.occ_prev.dtype == bool
    assert len(load_split(out, "val", "all")) == 4
