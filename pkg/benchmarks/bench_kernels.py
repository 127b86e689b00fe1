"""Time the numba and numpy kernel backends on representative workloads.

Usage::

    python3 benchmarks/bench_kernels.py [--repeat N]

Each kernel is run once per backend to warm up (numba compiles on first
call), then timed over ``--repeat`` calls; the best time is reported.
"""

import argparse
import time

import numpy as np

from wglsm import kernels
from wglsm.geometry import ScenarioGeometry, bump_polyline
from wglsm.lsm import SamplingGrid, _svd_data
from wglsm.mesh import build_mesh
from wglsm.modes import WaveguideSpec, build_mode_basis, mode_coeff_matrix


def workloads():
    rng = np.random.default_rng(0)
    spec = WaveguideSpec.from_mode_count(20)
    basis = build_mode_basis(spec, 40)
    geo = ScenarioGeometry(spec, (bump_polyline(-0.5, 0.5, 0.1),), x_L=-3.0)
    mesh = build_mesh(geo, spec.wavelength / 10)
    pts = mesh.vertices[rng.choice(mesh.n_vertices, 20000, replace=False)]
    src = np.array([[-2.5, 0.3]])
    grid = SamplingGrid.from_resolution(-2.0, 0.0, 1.0, spec.wavelength / 10)
    U = rng.normal(size=(20, 20)) + 1j * rng.normal(size=(20, 20))
    B = mode_coeff_matrix(basis, grid.points(), -2.5)
    _, s, _, bhat, bperp2 = _svd_data(U, B)
    query = np.column_stack([np.full(801, -1.5), np.linspace(0, 1, 801)])
    return {
        "modal_green (20k points, 40 modes)":
            lambda: kernels.modal_green(pts, src, basis.betas, 1.0, grad=True),
        f"p1_stiffness ({mesh.n_triangles} triangles)":
            lambda: kernels.p1_stiffness(mesh.vertices, mesh.triangles),
        f"morozov_bisection ({len(grid)} points)":
            lambda: kernels.morozov_bisection(s, np.abs(bhat) ** 2, bperp2, 0.01 * s[0]),
        "locate_points (801-point cross section)":
            lambda: kernels.locate_points(query, mesh.vertices, mesh.triangles),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    jobs = workloads()
    backends = kernels.available_backends()
    print(f"{'kernel':45s}" + "".join(f"{b:>12s}" for b in backends) + "     speedup")
    for name, fn in jobs.items():
        best = {}
        for b in backends:
            kernels.set_backend(b)
            fn()
            times = []
            for _ in range(args.repeat):
                t0 = time.perf_counter()
                fn()
                times.append(time.perf_counter() - t0)
            best[b] = min(times)
        row = f"{name:45s}" + "".join(f"{best[b] * 1e3:10.2f}ms" for b in backends)
        if "numba" in best:
            row += f"  {best['numpy'] / best['numba']:8.1f}x"
        print(row)


if __name__ == "__main__":
    main()
