"""Compiled core against the numpy fallback on the two hot kernels.

    python benchmarks/bench_kernels.py [--nx 4096] [--steps 2000] [--repeat 3]

Both backends get identical inputs; the script checks they agree before
printing timings.
"""
import argparse
import timeit

import numpy as np

from kgpump import _fallback

try:
    from kgpump import _core
except ImportError:  # extension not built
    _core = None


def leapfrog_case(nx, steps):
    x = np.linspace(-200, 200, nx, endpoint=False)
    dx = x[1] - x[0]
    u0 = 0.1 * np.exp(-x ** 2 / 50) * np.cos(x)
    nf = nx // 8
    lo = nx // 2 - nf // 2
    t = 0.02 * np.arange(steps + 1)
    force = np.ascontiguousarray(1e-3 * np.cos(t)[:, None] * np.exp(-x[lo:lo + nf] ** 2 / 20)[None, :])
    damp = np.ones(nx)
    probes = np.array([nx // 2], dtype=np.intp)

    def call(impl):
        u, v = u0.copy(), np.zeros(nx)
        acc = _fallback.accel_fd4(u, dx, 0.5, force, 0, lo)
        out = np.zeros((steps, 1, 2))
        impl.kdk_fd4(u, v, acc, damp, force, lo, 0.02, dx, 0.5, steps, probes, 1, 0, out)
        return u

    return call


def scattering_case(nq, nz):
    X = np.linspace(-10, 10, nq)
    q = (2.0 / np.cosh(X)).astype(complex)
    z = np.linspace(-1, 1, nz) + 0.5j

    def call(impl):
        return impl.zs_scattering_a(q, X[1] - X[0], z)

    return call


def bench(name, call, repeat):
    ref = call(_fallback)
    t_py = min(timeit.repeat(lambda: call(_fallback), number=1, repeat=repeat))
    if _core is None:
        print(f"{name:<22} python {t_py * 1e3:9.2f} ms   (extension not built)")
        return
    got = call(_core)
    err = np.max(np.abs(got - ref)) / max(np.max(np.abs(ref)), 1e-300)
    t_cy = min(timeit.repeat(lambda: call(_core), number=1, repeat=repeat))
    print(f"{name:<22} python {t_py * 1e3:9.2f} ms   cython {t_cy * 1e3:9.2f} ms   "
          f"speed-up {t_py / t_cy:6.1f}x   max rel diff {err:.1e}")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--nx", type=int, default=4096)
    ap.add_argument("--steps", type=int, default=2000)
    ap.add_argument("--nq", type=int, default=2000)
    ap.add_argument("--nz", type=int, default=256)
    ap.add_argument("--repeat", type=int, default=3)
    a = ap.parse_args()
    bench(f"kdk_fd4 {a.nx}x{a.steps}", leapfrog_case(a.nx, a.steps), a.repeat)
    bench(f"zs_scattering {a.nq}x{a.nz}", scattering_case(a.nq, a.nz), a.repeat)


if __name__ == "__main__":
    main()
