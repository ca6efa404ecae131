"""Compare the compiled kernels with the pure-numpy fallback.

Usage::

    python3 benchmarks/bench_kernels.py [--repeat 3] [--quick]

Prints wall time per kernel and backend plus the speed-up, and checks
that both backends agree.
"""
import argparse
import time

import numpy as np

from soqdyn import _kernels
from soqdyn.classical import sample_energy_shell
from soqdyn.model import ModelParams

P = ModelParams(20.0, 30.0)
TOL = 1e-10
MAXS = 10**7


def _best(fn, repeat):
    best, out = np.inf, None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def cases(quick):
    z0 = sample_energy_shell(P, -88.0, 1, rng_seed=0)[0]
    n_batch = 200 if quick else 2000
    Z0 = sample_energy_shell(P, -88.0, n_batch, rng_seed=1)
    t_eval = np.linspace(0, 50.0 if quick else 500.0, 501)
    rng = np.random.default_rng(0)
    n = 256 if quick else 1024
    arrs = [rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n)) for _ in range(5)]

    def dense(mod):
        return mod.integrate_dense(z0, 0.0, t_eval, P.vx, P.vy, TOL, MAXS)[0]

    def batch(mod):
        Z = Z0.copy()
        h = np.zeros(len(Z))
        s = np.zeros(len(Z), dtype=np.int32)
        mod.advance_batch(Z, h, s, 0.0, 10.0, P.vx, P.vy, TOL, MAXS)
        return Z

    def lyap(mod):
        T = 200.0 if quick else 1000.0
        return mod.lyapunov_logs(z0, np.full(4, 0.5), T, 0.5, P.vx, P.vy, TOL, MAXS)[0]

    def kick(mod):
        up, dn = arrs[0].copy(), arrs[1].copy()
        mod.spinor_kick(up, dn, arrs[2], arrs[3], arrs[4])
        return up

    return {"integrate_dense": dense, "advance_batch": batch, "lyapunov_logs": lyap,
            "spinor_kick": kick}


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--quick", action="store_true", help="small problem sizes")
    args = ap.parse_args(argv)
    py = _kernels.python_backend
    cy = _kernels.compiled_backend
    if cy is None:
        print("compiled kernels not built; only the fallback is timed")
    print(f"{'kernel':<18}{'python [s]':>12}{'cython [s]':>12}{'speed-up':>10}{'max diff':>11}")
    for name, fn in cases(args.quick).items():
        tp, outp = _best(lambda: fn(py), args.repeat)
        if cy is None:
            print(f"{name:<18}{tp:12.4f}")
            continue
        tc, outc = _best(lambda: fn(cy), args.repeat)
        diff = float(np.max(np.abs(np.asarray(outp) - np.asarray(outc))))
        print(f"{name:<18}{tp:12.4f}{tc:12.4f}{tp / tc:10.1f}{diff:11.1e}")


if __name__ == "__main__":
    main()
