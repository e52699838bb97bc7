"""Compare the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat N] [--search]

``--search`` also times a short symbolic-regression run under each backend
(each in a fresh interpreter, selected with PEDSWERVE_PURE_PYTHON).
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from pedswerve import _fallback
from pedswerve.symreg.expr import compile_expr, parse_expr

try:
    from pedswerve import _kernels
except ImportError:
    _kernels = None

EXPR = "-0.335*sin(0.046*x - 4.137) - 0.968"
QUAD_A = np.array([-5.21, 0.172, -0.036, -0.0011, 0.009, 0.0002])

SEARCH_SNIPPET = """
import time, numpy as np
from pedswerve import kernels
from pedswerve.symreg import SymRegConfig, run_search
x = np.linspace(0, 200, 201); y = -0.335*np.sin(0.046*x - 4.137) - 0.968
t = time.perf_counter(); run_search(x, y, SymRegConfig(seed=42, generations={gens}))
print(kernels.BACKEND, time.perf_counter() - t)
"""


def cases():
    x = np.linspace(0.0, 200.0, 201)
    y = -0.335 * np.sin(0.046 * x - 4.137) - 0.968
    code, consts = compile_expr(parse_expr(EXPR))
    code = np.ascontiguousarray(code, dtype=np.int_)
    start = consts * 1.05
    n = 61
    xp = np.linspace(0.0, 60.0, n)
    other = np.column_stack([np.full(n, 40.0), np.linspace(-30.0, 30.0, n)])
    return {
        "eval_program": lambda m: m.eval_program(code, consts, x),
        "mse_grad_program": lambda m: m.mse_grad_program(code, consts, x, y),
        "optimize_program": lambda m: m.optimize_program(code, start, x, y, 50, 1e-12),
        "predict_closed_loop": lambda m: m.predict_closed_loop(QUAD_A, xp, other, 40.0),
    }


def bench(repeat):
    print(f"{'kernel':<22}{'fallback (us)':>15}{'compiled (us)':>15}{'speed-up':>10}")
    for name, fn in cases().items():
        number = 20
        slow = min(timeit.repeat(lambda: fn(_fallback), number=number, repeat=repeat)) / number * 1e6
        if _kernels is None:
            print(f"{name:<22}{slow:>15.1f}{'n/a':>15}{'':>10}")
            continue
        fast = min(timeit.repeat(lambda: fn(_kernels), number=number, repeat=repeat)) / number * 1e6
        print(f"{name:<22}{slow:>15.1f}{fast:>15.1f}{slow / fast:>9.1f}x")


def bench_search(gens):
    print(f"\nsymbolic regression, {gens} generations:")
    for pure in ("0", "1"):
        env = dict(os.environ, PEDSWERVE_PURE_PYTHON=pure)
        out = subprocess.run([sys.executable, "-c", SEARCH_SNIPPET.format(gens=gens)], env=env,
                             capture_output=True, text=True, check=True).stdout.split()
        print(f"  {out[0]:<10}{float(out[1]):8.2f} s")


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--search", action="store_true")
    ap.add_argument("--generations", type=int, default=20)
    args = ap.parse_args()
    bench(args.repeat)
    if args.search:
        bench_search(args.generations)


if __name__ == "__main__":
    main()
