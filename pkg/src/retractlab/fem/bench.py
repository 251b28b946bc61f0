"""Timing comparison of the compiled and numpy kernel backends."""

from __future__ import annotations

import time

import numpy as np

from retractlab.fem import kernels
from retractlab.fem.material import Material
from retractlab.fem.mesh import build_slab_mesh

__all__ = ["run_benchmark", "format_table"]


def _time(fn, *args, repeats=5):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def run_benchmark(size=(100.0, 120.0, 5.0), resolution=(20, 24, 1), repeats=5):
    """Time energy/gradient/stiffness on a deformed slab for each backend.

    Returns a list of dicts: backend, op, best seconds, calls/s.
    """
    mesh = build_slab_mesh(size, resolution)
    mat = Material()
    lam, mu = mat.lame_mm
    rng = np.random.default_rng(0)
    u = 0.5 * rng.standard_normal(mesh.nodes.shape)
    rows = []
    for name, mod in sorted(kernels.implementations().items()):
        for op in ("energy", "gradient", "stiffness_blocks"):
            fn = getattr(mod, op)
            fn(u, mesh.elems, mesh.dN, mesh.dV, lam, mu)  # warm-up
            dt = _time(fn, u, mesh.elems, mesh.dN, mesh.dV, lam, mu, repeats=repeats)
            rows.append(
                {"backend": name, "op": op, "seconds": dt, "per_second": 1.0 / dt}
            )
    return rows


def format_table(rows) -> str:
    header = f"{'backend':<8} {'op':<18} {'best (ms)':>10} {'calls/s':>10}"
    out = [header, "-" * len(header)]
    for r in rows:
        out.append(
            f"{r['backend']:<8} {r['op']:<18} {r['seconds'] * 1e3:>10.3f} "
            f"{r['per_second']:>10.1f}"
        )
    return "\n".join(out)
