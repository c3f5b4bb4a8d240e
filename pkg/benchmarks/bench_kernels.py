"""Compare the compiled kernel backend against the pure-Python fallback.

Two views: microbenchmarks of the three kernels on representative
problem sizes, and an end-to-end closed-loop run executed in a child
process per backend (selection happens at import time, so each backend
needs its own interpreter).

Usage: python benchmarks/bench_kernels.py [--repeat N] [--skip-e2e]
"""

import argparse
import os
import statistics
import subprocess
import sys
import time

import numpy as np

import flatopt._kernels_py as pure

try:
    import flatopt._kernels as compiled
except ImportError:
    compiled = None


def _time(fn, args, repeat, inner):
    best = []
    for _ in range(repeat):
        start = time.perf_counter()
        for _ in range(inner):
            fn(*args)
        best.append((time.perf_counter() - start) / inner)
    return min(best), statistics.median(best)


def micro(repeat):
    rng = np.random.default_rng(0)
    sizes = (2, 4, 8)
    cases = []
    for n in sizes:
        a = rng.standard_normal((n, n)) + n * np.eye(n)
        b = rng.standard_normal(n)
        cases.append((f"lu_solve n={n}", "lu_solve", (a, b)))
    y = rng.standard_normal(6)
    ks = rng.standard_normal((7, 6))
    coeffs = rng.standard_normal(7)
    cases.append(("rk_combine 7x6", "rk_combine", (y, 0.01, ks, coeffs)))
    cases.append(
        ("error_norm n=6", "error_norm", (y, y + 1e-6, rng.standard_normal(6) * 1e-8,
                                          1e-8, 1e-6))
    )

    backends = [("python", pure)]
    if compiled is not None:
        backends.insert(0, ("cython", compiled))

    print(f"{'kernel':<18}" + "".join(f"{name:>14}" for name, _ in backends) + f"{'speedup':>10}")
    for label, attr, args in cases:
        times = [_time(getattr(mod, attr), args, repeat, 2000)[0] for _, mod in backends]
        row = f"{label:<18}" + "".join(f"{t * 1e6:>12.2f}us" for t in times)
        if len(times) == 2:
            row += f"{times[1] / times[0]:>9.2f}x"
        print(row)


_E2E = """
import dataclasses, time
import flatopt

scenario = flatopt.build_scenario("{name}")
cfg = dataclasses.replace(scenario.defaults)
start = time.perf_counter()
log = flatopt.run_closed_loop(scenario, cfg)
print(f"{{flatopt.BACKEND}} {{time.perf_counter() - start:.3f}} {{log.err[-1]:.3e}}")
"""


def end_to_end(repeat):
    print()
    print("end-to-end closed-loop runs (seconds, final error):")
    for name in ("tracking", "formation"):
        for pure_env in (False, True):
            if pure_env is False and compiled is None:
                continue
            env = dict(os.environ)
            env.pop("FLATOPT_PURE_PYTHON", None)
            if pure_env:
                env["FLATOPT_PURE_PYTHON"] = "1"
            best = None
            for _ in range(repeat):
                out = subprocess.run(
                    [sys.executable, "-c", _E2E.format(name=name)],
                    env=env, capture_output=True, text=True, check=True,
                )
                backend, seconds, err = out.stdout.split()
                best = min(best, float(seconds)) if best is not None else float(seconds)
            print(f"  {name:<12} {backend:<8} {best:.3f}s  err {err}")


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--skip-e2e", action="store_true")
    args = parser.parse_args()
    if compiled is None:
        print("compiled extension unavailable; timing the fallback only")
    micro(args.repeat)
    if not args.skip_e2e:
        end_to_end(max(1, args.repeat // 2))


if __name__ == "__main__":
    main()
