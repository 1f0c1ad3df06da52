import numpy as np
import pytest

from depthfeat import tensor as T
from depthfeat.camgeo import TRANSLATION_SCALE
from depthfeat.gradcheck import grad_check
from depthfeat.nets import FORWARD_COUNTS, ConfigurationError, DispNet, FeatNet, PoseNet
from depthfeat.tensor import ShapeError, Tensor


@pytest.fixture(scope="module")
def image():
    return np.random.default_rng(0).random((1, 3, 64, 96))


def test_dispnet_scales_and_range(image):
    outs = DispNet(np.random.default_rng(1))(Tensor(image))
    assert [o.shape for o in outs] == [(1, 1, 64, 96), (1, 1, 32, 48), (1, 1, 16, 24), (1, 1, 8, 12)]
    for o in outs:
        assert 0 < o.data.min() and o.data.max() < 1


def test_dispnet_deterministic(image):
    net = DispNet(np.random.default_rng(1))
    a, b = net(Tensor(image)), net(Tensor(image))
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x.data, y.data)


def test_dispnet_rejects_indivisible_size():
    with pytest.raises(ShapeError):
        DispNet(np.random.default_rng(0))(Tensor(np.zeros((1, 3, 60, 90))))


def test_dispnet_first_layer_gradient_nonzero():
    rng = np.random.default_rng(2)
    net = DispNet(rng)
    img = rng.random((1, 3, 16, 16))
    T.mean(net(Tensor(img))[0]).backward()
    w = net.encoder.stages[0].c1.weight
    assert np.abs(w.grad).max() > 0
    # spot-check a few first-layer weights against central differences
    idx = [(0, 0, 1, 1), (3, 2, 0, 2), (7, 1, 2, 0)]
    base = w.data.copy()
    for i in idx:
        num = []
        for s in (1, -1):
            w.data = base.copy()
            w.data[i] += s * 1e-6
            with T.no_grad():
                num.append(T.mean(net(Tensor(img))[0]).data)
        w.data = base
        fd = (num[0] - num[1]) / 2e-6
        assert abs(fd - w.grad[i]) <= 1e-4 * max(abs(fd), 1e-8) + 1e-10


def test_posenet_zero_final_layer_is_identity(image):
    net = PoseNet(np.random.default_rng(3))
    last = net.dec[-1]
    last.weight.data[:] = 0
    last.bias.data[:] = 0
    pose = net(Tensor(image), Tensor(image[..., ::-1].copy()))
    np.testing.assert_array_equal(pose.matrix(), np.eye(4))
    assert pose.translation_scale == TRANSLATION_SCALE == 0.001


def test_posenet_shape_check_and_order(image):
    net = PoseNet(np.random.default_rng(3))
    with pytest.raises(ShapeError):
        net(Tensor(image), Tensor(image[..., :32, :]))
    other = np.random.default_rng(9).random(image.shape)
    a = net.raw(Tensor(image), Tensor(other)).data
    b = net.raw(Tensor(other), Tensor(image)).data
    assert np.isfinite(a).all() and not np.allclose(a, b)


def test_featnet_unit_norm_and_spp_width(image):
    net = FeatNet(np.random.default_rng(4), n_features=16)
    assert net.spp_channels == 128 + 4 * (128 // 4) == 256
    f = net(Tensor(image)).data
    assert f.shape == (1, 16, 64, 96)
    np.testing.assert_allclose(np.linalg.norm(f, axis=1), 1.0, atol=1e-6)


def test_featnet_constant_input_finite():
    f = FeatNet(np.random.default_rng(5), n_features=8)(Tensor(np.full((1, 3, 16, 24), 0.3))).data
    assert np.isfinite(f).all()


def test_featnet_dimension_check():
    with pytest.raises(ConfigurationError):
        FeatNet(np.random.default_rng(0), n_features=1)


def test_forward_counts():
    before = FORWARD_COUNTS["FeatNet"]
    FeatNet(np.random.default_rng(0), n_features=4)(Tensor(np.zeros((1, 3, 16, 16))))
    assert FORWARD_COUNTS["FeatNet"] == before + 1


def test_parameter_names_unique():
    for cls in (DispNet, PoseNet):
        names = [n for n, _ in cls(np.random.default_rng(0)).named_parameters()]
        assert len(names) == len(set(names)) and names


def test_featnet_input_gradient():
    rng = np.random.default_rng(6)
    net = FeatNet(rng, n_features=4, chans=(4, 8, 16))
    proj = rng.normal(size=(1, 4, 8, 8))
    img = rng.random((1, 3, 8, 8))
    rep = grad_check(lambda t: T.tsum(T.mul(net(t), proj)), img)
    assert rep.max_rel_error < 1e-3
