"""Compare the compiled and numpy accumulation kernels.

Times ``outer_sum_packed`` on chunks of gradient rows and a full MF estimate
through each backend::

    python benchmarks/bench_kernels.py --dims 10 100 300 --rows 64
"""

import argparse
import json
import time

import numpy as np

from asmf import _kernels_py
from asmf.estimators import CHUNK_SIZE
from asmf.symmat import packed_length

try:
    from asmf import _kernels
except ImportError:
    _kernels = None


def _time(fn, repeat):
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_kernel(impl, n, d, paired, repeat, chunks):
    rng = np.random.default_rng(0)
    a = rng.standard_normal((n, d))
    b = rng.standard_normal((n, d)) if paired else None
    out = np.zeros(packed_length(d))

    def run():
        for _ in range(chunks):
            impl.outer_sum_packed(a, b, out)

    return _time(run, repeat) / chunks


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--dims", type=int, nargs="+", default=[10, 50, 100, 300])
    ap.add_argument("--rows", type=int, default=CHUNK_SIZE)
    ap.add_argument("--chunks", type=int, default=50)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json", action="store_true", help="print JSON instead of a table")
    args = ap.parse_args(argv)

    backends = {"numpy": _kernels_py}
    if _kernels is not None:
        backends["cython"] = _kernels
    rows = []
    for d in args.dims:
        for paired in (False, True):
            rec = {"d": d, "rows": args.rows, "paired": paired}
            for name, impl in backends.items():
                rec[name + "_s"] = bench_kernel(impl, args.rows, d, paired, args.repeat, args.chunks)
            if "cython" in backends:
                rec["speedup"] = rec["numpy_s"] / rec["cython_s"]
            rows.append(rec)
    if args.json:
        print(json.dumps(rows, indent=2))
        return
    if "cython" not in backends:
        print("compiled kernel not built; numpy timings only")
    print(f"{'d':>5} {'paired':>6} {'numpy [us]':>11} {'cython [us]':>12} {'speedup':>8}")
    for rec in rows:
        cy = rec.get("cython_s")
        print(f"{rec['d']:>5} {str(rec['paired']):>6} {rec['numpy_s'] * 1e6:>11.1f} "
              f"{'-' if cy is None else f'{cy * 1e6:.1f}':>12} {rec.get('speedup', float('nan')):>8.2f}")


if __name__ == "__main__":
    main()
