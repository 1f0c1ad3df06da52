"""The compiled kernels and the numpy fallback must agree."""
import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from depthfeat import _pykernels, kernels

ck = pytest.importorskip("depthfeat._ckernels")


@given(st.integers(1, 3), st.integers(3, 9), st.integers(3, 9), st.sampled_from([1, 3]),
       st.sampled_from([1, 2]), st.integers(0, 2**31))
@settings(max_examples=40, deadline=None)
def test_im2col_col2im_agree(c, hp, wp, k, stride, seed):
    rng = np.random.default_rng(seed)
    xp = rng.normal(size=(c, hp, wp))
    a, b = _pykernels.im2col(xp, k, k, stride), ck.im2col(xp, k, k, stride)
    np.testing.assert_array_equal(a, b)
    ho, wo = (hp - k) // stride + 1, (wp - k) // stride + 1
    np.testing.assert_allclose(_pykernels.col2im(a, c, hp, wp, k, k, stride, ho, wo),
                               ck.col2im(a, c, hp, wp, k, k, stride, ho, wo), rtol=0, atol=1e-12)


@given(st.integers(1, 3), st.integers(2, 8), st.integers(2, 8), st.integers(0, 2**31))
@settings(max_examples=40, deadline=None)
def test_bilinear_agree(c, h, w, seed):
    rng = np.random.default_rng(seed)
    src = rng.normal(size=(c, h, w))
    u = rng.uniform(-2, w + 1, (h, w))
    v = rng.uniform(-2, h + 1, (h, w))
    u[0, 0], v[0, 0] = w - 1, h - 1          # exact far corner
    np.testing.assert_allclose(_pykernels.bilinear_forward(src, u, v), ck.bilinear_forward(src, u, v),
                               rtol=0, atol=1e-12)
    g = rng.normal(size=(c, h, w))
    for a, b in zip(_pykernels.bilinear_backward(g, src, u, v), ck.bilinear_backward(g, src, u, v)):
        np.testing.assert_allclose(a, b, rtol=0, atol=1e-12)


@given(st.integers(1, 4), st.integers(1, 7), st.integers(1, 7), st.integers(0, 2**31))
@settings(max_examples=40, deadline=None)
def test_box_sum_agree(n, h, w, seed):
    a = np.random.default_rng(seed).normal(size=(n, h, w))
    np.testing.assert_allclose(_pykernels.box_sum3(a), ck.box_sum3(a), rtol=0, atol=1e-12)


def test_box_sum_is_self_adjoint():
    rng = np.random.default_rng(0)
    a, b = rng.normal(size=(2, 5, 6)), rng.normal(size=(2, 5, 6))
    assert np.sum(ck.box_sum3(a) * b) == pytest.approx(np.sum(a * ck.box_sum3(b)), rel=1e-12)


def test_backend_selection_env():
    code = "from depthfeat import kernels; print(kernels.BACKEND)"
    env = dict(os.environ, DEPTHFEAT_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
    env.pop("DEPTHFEAT_PURE_PYTHON")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "cython"


def test_wrappers_accept_noncontiguous():
    rng = np.random.default_rng(1)
    src = rng.normal(size=(2, 6, 8))[:, :, ::2]
    u = np.tile(np.arange(4.0), (6, 1)).T.copy().T
    v = np.tile(np.arange(6.0)[:, None], (1, 4))
    np.testing.assert_array_equal(kernels.bilinear_forward(src, u, v), src)


def test_pure_python_training_step_matches(monkeypatch):
    """A full tensor op chain gives the same numbers on either backend."""
    from depthfeat import tensor as T

    rng = np.random.default_rng(2)
    x = rng.normal(size=(1, 2, 6, 6))
    w = rng.normal(size=(3, 2, 3, 3))

    def run():
        xt = T.Tensor(x, requires_grad=True)
        out = T.tsum(T.box3(T.conv2d(xt, w, None, 1, 1)))
        out.backward()
        return out.item(), xt.grad

    v1, g1 = run()
    monkeypatch.setattr(kernels, "_impl", _pykernels)
    v2, g2 = run()
    assert v1 == pytest.approx(v2, rel=1e-12)
    np.testing.assert_allclose(g1, g2, rtol=1e-12, atol=1e-12)
