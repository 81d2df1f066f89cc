"""Compare the compiled kernels against the NumPy fallback.

Micro-benchmarks the four hot kernels at covariance-tensor shapes, and
optionally times a full factorisation under each backend (subprocesses, so
the import-time backend selection is exercised for real).

    python benchmarks/bench_kernels.py [--repeats N] [--fit]
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from tensoma import _kernels_np

try:
    from tensoma import _kernels
except ImportError:
    _kernels = None


def kernel_cases(d):
    rng = np.random.default_rng(0)
    m, k = 10, 100
    a1 = np.ascontiguousarray(rng.standard_normal((m, d)))
    a2 = np.ascontiguousarray(rng.standard_normal((m, d)))
    rs = np.ascontiguousarray(rng.standard_normal((k, d)))
    flat = np.ascontiguousarray(rng.standard_normal(m * m * k))
    s = [np.ascontiguousarray(rng.standard_normal((d, d))) for _ in range(3)]
    return {
        f"khatri_rao (K={k} x M={m}, D={d})": ("khatri_rao", (rs, a2)),
        f"cp_reconstruct ({m}x{m}x{k}, D={d})": ("cp_reconstruct", (a1, a2, rs)),
        f"sumsq ({m * m * k})": ("sumsq", (flat,)),
        f"had3_sum ({d}x{d})": ("had3_sum", tuple(s)),
    }


def time_call(fn, args, repeats):
    best = min(timeit.repeat(lambda: fn(*args), number=1, repeat=repeats))
    return best * 1e6  # microseconds


def run_micro(repeats):
    backends = [("numpy", _kernels_np)]
    if _kernels is not None:
        backends.append(("compiled", _kernels))
    else:
        print("compiled kernels not built; benchmarking the fallback only\n")

    for d in (10, 41):
        print(f"-- rank {d} --")
        for label, (name, args) in kernel_cases(d).items():
            row = [f"{label:42s}"]
            times = {}
            for bname, mod in backends:
                times[bname] = time_call(getattr(mod, name), args, repeats)
                row.append(f"{bname} {times[bname]:9.1f} us")
            if len(times) == 2:
                row.append(f"speedup x{times['numpy'] / times['compiled']:.2f}")
            print("  ".join(row))
        print()


FIT_SNIPPET = r"""
import time
import numpy as np
import tensoma
from tensoma import BcpfHyperparams, Tensor3, fit

rng = np.random.default_rng(0)
a = rng.standard_normal((10, 10))
rs = rng.standard_normal((100, 10))
clean = np.einsum("ir,jr,kr->ijk", a, a, rs)
noise = rng.standard_normal(clean.shape) * np.sqrt(np.mean(clean ** 2)) * 1e-2
t = Tensor3(clean + noise)
fit(t, BcpfHyperparams(d_init=20, max_iters=60), seed=0)  # warm-up
start = time.perf_counter()
post, trace = fit(t, BcpfHyperparams(d_init=20, max_iters=60), seed=0)
elapsed = time.perf_counter() - start
print(f"backend={tensoma.BACKEND}  rank={post.rank}  "
      f"iters={trace.iterations}  {elapsed * 1e3:.1f} ms")
"""


def run_fit():
    print("-- full factorisation (10x10x100 tensor, d_init=20, 60 iters) --")
    for pure in ("0", "1"):
        env = dict(os.environ, TENSOMA_PURE_PYTHON=pure)
        subprocess.run([sys.executable, "-c", FIT_SNIPPET], env=env, check=True)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=30)
    parser.add_argument("--fit", action="store_true",
                        help="also time a full fit under each backend")
    args = parser.parse_args()
    run_micro(args.repeats)
    if args.fit:
        run_fit()


if __name__ == "__main__":
    main()
