"""Compare the compiled scan kernel against its pure-numpy twin.

Times the forward kernel at a fixed width across growing sequence lengths,
reports the median of several runs, the speedup, and the max absolute
disagreement between the two backends on identical inputs. The doubling
ratio column is the linear-time check: it should sit near 2.

Usage: python3 benchmarks/bench_scan.py [--lengths 512,1024,2048,4096]
       [--heads 8] [--states 16] [--repeats 9]
"""

import argparse
import time

import numpy as np

from ssdi.ssm import _scan_np, available_backends

try:
    from ssdi.ssm import _scan_cy
except ImportError:
    _scan_cy = None


def make_instance(L, H, N, seed=0):
    rng = np.random.default_rng(seed)
    delta = np.exp(rng.uniform(np.log(1e-3), np.log(1.0), (1, L, H)))
    A = -np.exp(rng.uniform(-2, 2, (H, N)))
    Bm = rng.standard_normal((1, L, N))
    Cm = rng.standard_normal((1, L, N))
    x = rng.standard_normal((1, L, H))
    return delta, A, Bm, Cm, x


def run_kernel(mod, args, L, H, N):
    y = np.empty((1, L, H))
    hs = np.empty((1, L, H, N))
    mod.scan_forward(*args, y, hs)
    return y


def median_time(mod, args, L, H, N, repeats):
    run_kernel(mod, args, L, H, N)                 # warm up
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        run_kernel(mod, args, L, H, N)
        times.append(time.perf_counter() - t0)
    return float(np.median(times))


def main() -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--lengths", default="512,1024,2048,4096")
    ap.add_argument("--heads", type=int, default=8)
    ap.add_argument("--states", type=int, default=16)
    ap.add_argument("--repeats", type=int, default=9)
    opts = ap.parse_args()
    lengths = [int(s) for s in opts.lengths.split(",")]
    H, N = opts.heads, opts.states

    print(f"backends available: {', '.join(available_backends())}")
    if _scan_cy is None:
        print("compiled kernel missing; timing the numpy twin only")
    header = f"{'L':>6}  {'numpy ms':>10}  {'compiled ms':>12}  {'speedup':>8}  {'ratio':>6}  {'max|diff|':>10}"
    print(header)
    print("-" * len(header))
    prev = {}
    for L in lengths:
        args = make_instance(L, H, N)
        t_np = median_time(_scan_np, args, L, H, N, opts.repeats)
        row = f"{L:>6}  {t_np * 1e3:>10.3f}"
        if _scan_cy is not None:
            t_cy = median_time(_scan_cy, args, L, H, N, opts.repeats)
            y_np = run_kernel(_scan_np, args, L, H, N)
            y_cy = run_kernel(_scan_cy, args, L, H, N)
            diff = float(np.max(np.abs(y_np - y_cy)))
            ratio = t_cy / prev["cy"] if "cy" in prev else float("nan")
            row += (f"  {t_cy * 1e3:>12.3f}  {t_np / t_cy:>8.1f}x"
                    f"  {ratio:>6.2f}  {diff:>10.2e}")
            prev["cy"] = t_cy
        else:
            ratio = t_np / prev["np"] if "np" in prev else float("nan")
            row += f"  {'-':>12}  {'-':>8}  {ratio:>6.2f}  {'-':>10}"
        prev["np"] = t_np
        print(row)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
