"""Timing comparison between the pure-Python and compiled kernels.

Run as:  python3 benchmarks/bench_kernels.py [--repeat N]

Times the three hot entry points (expression-table evaluation, adaptive
transport, fixed-step transport) on identical inputs for each backend
and prints the median per-call time with the speedup factor.
"""

import argparse
import statistics
import time

import numpy as np

from pathtransport import Path, get_geometry
from pathtransport.expressions import compile_table
from pathtransport.kernels import pure

try:
    from pathtransport.kernels import _speedups
except ImportError:
    _speedups = None


def _packs(geometry_name, components):
    geo = get_geometry(geometry_name)
    path = Path.from_expressions((0.0, 1.0), components)
    conn = geo.connection.kernel_pack()
    pos, vel = path.kernel_packs()
    chart = geo.connection.chart
    return conn, pos, vel, chart.fiber_dim, chart.base_dim


def _time(fn, repeat, inner):
    samples = []
    for _ in range(repeat):
        start = time.perf_counter()
        for _ in range(inner):
            fn()
        samples.append((time.perf_counter() - start) / inner)
    return statistics.median(samples)


def _cases():
    table = compile_table(
        ["sin(x1)*exp(x2)", "x1^2 - 1/(1+x2^2)", "atan2(x2, x1)", "log(2+cos(x1*x2))"],
        None,
    )
    args = np.array([0.73, 1.19])
    out = np.empty(4)

    conn, pos, vel, m, n = _packs("sphere", ["0.6+0.3*sin(s)", "0.9*s"])

    def eval_table(backend):
        return lambda: backend.eval_table(
            table.codes, table.code_offsets, table.consts,
            table.const_offsets, table.stack_need, args, out,
        )

    def adaptive(backend):
        return lambda: backend.transport_ode(conn, pos, vel, m, n, 0.0, 1.0, 1e-9, 1e-12)

    def fixed(backend):
        return lambda: backend.transport_rk4(conn, pos, vel, m, n, 0.0, 1.0, 200)

    return [
        ("eval_table (4 exprs)", eval_table, 2000),
        ("transport_ode (sphere)", adaptive, 20),
        ("transport_rk4 (200 steps)", fixed, 20),
    ]


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=7,
                        help="timing repetitions per case (median is reported)")
    options = parser.parse_args()

    backends = [("pure", pure)]
    if _speedups is not None:
        backends.append(("compiled", _speedups))
    else:
        print("compiled kernels not built; timing the pure backend only")

    width = max(len(name) for name, _, _ in _cases())
    header = f"{'case':<{width}}  " + "".join(f"{name:>14}" for name, _ in backends)
    if len(backends) == 2:
        header += f"{'speedup':>10}"
    print(header)
    for case_name, make, inner in _cases():
        times = [_time(make(impl), options.repeat, inner) for _, impl in backends]
        row = f"{case_name:<{width}}  " + "".join(f"{t * 1e6:>12.1f}us" for t in times)
        if len(times) == 2:
            row += f"{times[0] / times[1]:>9.1f}x"
        print(row)


if __name__ == "__main__":
    main()
