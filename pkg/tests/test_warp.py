import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from depthfeat import tensor as T
from depthfeat.camgeo import Intrinsics, Pose, correspondence_map
from depthfeat.gradcheck import grad_check
from depthfeat.tensor import ShapeError, Tensor
from depthfeat.warp import bilinear_sample, sample


def naive_bilinear(src, u, v):
    c, h, w = src.shape
    out = np.zeros((c,) + u.shape)
    for y in range(u.shape[0]):
        for x in range(u.shape[1]):
            uu = min(max(u[y, x], 0.0), w - 1.0)
            vv = min(max(v[y, x], 0.0), h - 1.0)
            u0, v0 = min(int(np.floor(uu)), w - 2), min(int(np.floor(vv)), h - 2)
            a, b = uu - u0, vv - v0
            out[:, y, x] = (src[:, v0, u0] * (1 - a) * (1 - b) + src[:, v0, u0 + 1] * a * (1 - b)
                            + src[:, v0 + 1, u0] * (1 - a) * b + src[:, v0 + 1, u0 + 1] * a * b)
    return out


def grid(h, w):
    v, u = np.mgrid[0:h, 0:w].astype(float)
    return u, v


def coords(u, v):
    return np.stack([u, v])[None]


def test_identity_is_exact():
    src = np.random.default_rng(0).random((1, 3, 5, 7))
    np.testing.assert_array_equal(sample(src, coords(*grid(5, 7))).data, src)


def test_integer_shift_on_ramp():
    u, v = grid(4, 6)
    ramp = u[None, None]
    out = sample(ramp, coords(u + 1, v)).data[0, 0]
    np.testing.assert_array_equal(out[:, :-1], (u + 1)[:, :-1])


@pytest.mark.parametrize("seed", range(5))
def test_matches_naive_loop(seed):
    rng = np.random.default_rng(seed)
    src = rng.random((2, 6, 8))
    u, v = rng.uniform(-1, 8, (6, 8)), rng.uniform(-1, 6, (6, 8))
    got = sample(src[None], coords(u, v)).data[0]
    np.testing.assert_allclose(got, naive_bilinear(src, u, v), rtol=0, atol=1e-12)


@given(st.integers(0, 2**31))
@settings(max_examples=25, deadline=None)
def test_convex_combination(seed):
    rng = np.random.default_rng(seed)
    src = rng.random((1, 1, 5, 6))
    u, v = rng.uniform(0, 5, (5, 6)), rng.uniform(0, 4, (5, 6))
    out = sample(src, coords(u, v)).data[0, 0]
    s = src[0, 0]
    for y in range(5):
        for x in range(6):
            u0, v0 = min(int(u[y, x]), 4), min(int(v[y, x]), 3)
            nb = s[v0:v0 + 2, u0:u0 + 2]
            assert nb.min() - 1e-12 <= out[y, x] <= nb.max() + 1e-12


def test_constant_image_stays_constant():
    rng = np.random.default_rng(1)
    out = sample(np.full((1, 2, 5, 5), 0.37), coords(rng.uniform(-3, 8, (5, 5)), rng.uniform(-3, 8, (5, 5))))
    np.testing.assert_allclose(out.data, 0.37, rtol=1e-15)


def test_gradients_source_and_coords():
    for seed in range(10):
        rng = np.random.default_rng(seed)
        src = rng.random((1, 2, 5, 6))
        # keep away from integer coordinates, where the sampler has kinks
        u = np.floor(rng.uniform(0, 4.9, (5, 6))) + rng.uniform(0.1, 0.9, (5, 6))
        v = np.floor(rng.uniform(0, 3.9, (5, 6))) + rng.uniform(0.1, 0.9, (5, 6))
        w = rng.normal(size=(1, 2, 5, 6))
        c = coords(u, v)
        assert grad_check(lambda t: T.tsum(T.mul(sample(t, c), w)), src).max_rel_error < 1e-6
        assert grad_check(lambda t: T.tsum(T.mul(sample(src, t), w)), c).max_rel_error < 1e-5


def test_clamped_coordinates_get_no_gradient():
    src = Tensor(np.random.default_rng(2).random((1, 1, 4, 4)))
    c = Tensor(coords(np.full((4, 4), -3.0), np.full((4, 4), 9.0)), requires_grad=True)
    T.tsum(sample(src, c)).backward()
    np.testing.assert_array_equal(c.grad, 0.0)


def test_bilinear_sample_validity_and_shape_check():
    K = Intrinsics(10, 10, 3.5, 2.5)
    cm = correspondence_map(np.full((1, 1, 6, 8), 2.0), Pose(np.zeros(3), [300, 0, 0]), K)
    res = bilinear_sample(np.random.default_rng(0).random((1, 3, 6, 8)), cm)
    np.testing.assert_array_equal(res.validity, cm.in_bounds)
    assert res.warped.shape == (1, 3, 6, 8)
    with pytest.raises(ShapeError):
        bilinear_sample(np.zeros((1, 3, 5, 8)), cm)


def test_depth_gradient_through_warp():
    rng = np.random.default_rng(4)
    K = Intrinsics(6, 6, 2.5, 2)
    img = rng.random((1, 1, 5, 6))
    aa, tr = np.array([0.01, -0.02, 0.005]), np.array([120.0, -40.0, 30.0])

    def f(d):
        return T.tsum(bilinear_sample(img, correspondence_map(d, Pose(aa, tr), K)).warped)

    depth = rng.uniform(2, 4, (1, 1, 5, 6))
    rep = grad_check(f, depth, epsilon=1e-6)
    assert rep.max_rel_error < 1e-3
