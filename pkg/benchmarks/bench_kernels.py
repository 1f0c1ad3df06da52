"""Compare the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat N]
"""
import argparse
import timeit

import numpy as np

from depthfeat import _pykernels

try:
    from depthfeat import _ckernels
except ImportError:  # extension not built
    _ckernels = None


def cases(rng):
    xp = rng.normal(size=(32, 34, 50))
    cols = _pykernels.im2col(xp, 3, 3, 1)
    src = rng.random((16, 64, 96))
    u = rng.uniform(-2, 97, (64, 96))
    v = rng.uniform(-2, 65, (64, 96))
    g = rng.normal(size=(16, 64, 96))
    planes = rng.random((48, 64, 96))
    return {
        "im2col 32x34x50 k3": ("im2col", (xp, 3, 3, 1)),
        "col2im 32x34x50 k3": ("col2im", (cols, 32, 34, 50, 3, 3, 1, 32, 48)),
        "bilinear fwd 16x64x96": ("bilinear_forward", (src, u, v)),
        "bilinear bwd 16x64x96": ("bilinear_backward", (g, src, u, v)),
        "box_sum3 48x64x96": ("box_sum3", (planes,)),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args(argv)
    rng = np.random.default_rng(0)
    print(f"{'kernel':28s} {'numpy ms':>10s} {'cython ms':>10s} {'speedup':>8s} {'max diff':>10s}")
    for name, (fn, a) in cases(rng).items():
        py = getattr(_pykernels, fn)
        t_py = min(timeit.repeat(lambda: py(*a), number=1, repeat=args.repeat)) * 1e3
        if _ckernels is None:
            print(f"{name:28s} {t_py:10.3f} {'n/a':>10s}")
            continue
        cy = getattr(_ckernels, fn)
        t_cy = min(timeit.repeat(lambda: cy(*a), number=1, repeat=args.repeat)) * 1e3
        ra, rb = py(*a), cy(*a)
        ra = ra if isinstance(ra, tuple) else (ra,)
        rb = rb if isinstance(rb, tuple) else (rb,)
        diff = max(float(np.max(np.abs(x - y))) for x, y in zip(ra, rb))
        print(f"{name:28s} {t_py:10.3f} {t_cy:10.3f} {t_py / t_cy:8.2f} {diff:10.2e}")


if __name__ == "__main__":
    main()
