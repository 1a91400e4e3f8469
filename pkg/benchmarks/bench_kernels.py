#!/usr/bin/env python3
"""Compare the numba and numpy kernels: assembly, restricted rows, reduced Newton and whole runs.

Run with ``python3 benchmarks/bench_kernels.py [--mesh 40x10]``.
"""
import argparse
import time

import numpy as np

from batrom import CellConfig, ParameterPoint, build_mesh, simulate
from batrom.fom import Discretization
from batrom.rom import ReducedModel, offline_build


def per_call(fn, n_iters):
    fn()  # warm-up: JIT compilation
    start = time.perf_counter()
    for _ in range(n_iters):
        fn()
    return (time.perf_counter() - start) / n_iters


def main():
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--mesh", default="20x10")
    p.add_argument("--iters", type=int, default=200)
    args = p.parse_args()
    n_macro, n_micro = (int(v) for v in args.mesh.split("x"))
    config = CellConfig()
    mesh = build_mesh(n_macro, n_micro, config)
    mu = ParameterPoint(1.0)
    discs = {b: Discretization(config, mesh, backend=b) for b in ("numba", "numpy")}
    traj = simulate(mu, config, mesh, disc=discs["numba"])
    u, up = traj.states[len(traj) // 2], traj.states[len(traj) // 2 - 1]
    art = offline_build([ParameterPoint(c) for c in np.linspace(0.01, 4, 5)], config, mesh,
                        disc=discs["numba"])
    roms = {b: ReducedModel(art, disc=d) for b, d in discs.items()}
    a, a_prev = roms["numba"].project(u), roms["numba"].project(up)

    print(f"mesh {args.mesh}: {mesh.n_dofs} unknowns, reduced sizes {art.sizes}, "
          f"points {art.collateral_sizes}")
    print(f"{'case':<26}{'numba [ms]':>12}{'numpy [ms]':>12}{'ratio':>8}")
    cases = {
        "residual": lambda d, r: lambda: d.residual(u, up, mu, 1e-2),
        "jacobian": lambda d, r: lambda: d.jacobian(u, up, mu, 1e-2),
        "reduced residual+jac": lambda d, r: lambda: (r._begin_step(a_prev),
                                                      r.residual_and_jacobian(a, mu, 1e-2)),
        "reduced Newton step": lambda d, r: lambda: r.newton(a_prev, mu, 1e-2),
        "full-order discharge": lambda d, r: lambda: simulate(mu, config, mesh, disc=d),
        "reduced discharge": lambda d, r: lambda: r.simulate(mu),
    }
    for name, make in cases.items():
        n = args.iters if "discharge" not in name else max(3, args.iters // 50)
        t = {b: per_call(make(discs[b], roms[b]), n) for b in discs}
        print(f"{name:<26}{1e3 * t['numba']:>12.4f}{1e3 * t['numpy']:>12.4f}"
              f"{t['numpy'] / t['numba']:>8.1f}")


if __name__ == "__main__":
    main()
