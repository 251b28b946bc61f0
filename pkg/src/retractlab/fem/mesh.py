"""Structured hexahedral slab meshes with trilinear elements.

Node ids run x-major: id = (i * (ny+1) + j) * (nz+1) + k for lattice
coordinates (i, j, k). Element connectivity follows the usual hexahedron
convention (bottom face counter-clockwise, then the top face), which is also
the VTK ordering.

Shape-function gradients and integration weights are precomputed per element
and Gauss point at build time, so the hot kernels reduce to dense tensor
contractions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = ["FemMesh", "build_slab_mesh", "default_resolution", "bottom_lattice"]

# Reference-cube corner signs, hexahedron ordering.
_XI = np.array(
    [
        [-1, -1, -1],
        [+1, -1, -1],
        [+1, +1, -1],
        [-1, +1, -1],
        [-1, -1, +1],
        [+1, -1, +1],
        [+1, +1, +1],
        [-1, +1, +1],
    ],
    dtype=float,
)


def _gauss_points() -> np.ndarray:
    """2x2x2 Gauss points on the reference cube (unit weights)."""
    g = 1.0 / np.sqrt(3.0)
    pts = []
    for gx in (-g, g):
        for gy in (-g, g):
            for gz in (-g, g):
                pts.append((gx, gy, gz))
    return np.array(pts)


def _shape_gradients_ref(points: np.ndarray) -> np.ndarray:
    """d N_a / d xi_m at each reference point, shape (n_gp, 8, 3)."""
    n_gp = len(points)
    out = np.empty((n_gp, 8, 3))
    for g, xi in enumerate(points):
        for a in range(8):
            s = _XI[a]
            for m in range(3):
                val = s[m] / 8.0
                for l in range(3):
                    if l != m:
                        val *= 1.0 + xi[l] * s[l]
                out[g, a, m] = val
    return out


@dataclass
class FemMesh:
    """A hexahedral mesh with per-element integration data.

    Attributes
    ----------
    nodes : ndarray (n_nodes, 3)
        Rest positions.
    elems : ndarray (n_elems, 8) of int32
        Connectivity.
    dN : ndarray (n_elems, 8, 8, 3)
        Material shape-function gradients per (element, gauss point, node).
    dV : ndarray (n_elems, 8)
        Integration weights (volume contributions) per gauss point.
    shape : tuple
        Element counts (nx, ny, nz).
    size : tuple
        Physical extents (Lx, Ly, Lz) in mm.
    top_idx, bottom_idx : ndarray of int
        Node ids on the z = 0 and z = -Lz surfaces, ascending.
    """

    nodes: np.ndarray
    elems: np.ndarray
    dN: np.ndarray
    dV: np.ndarray
    shape: tuple[int, int, int]
    size: tuple[float, float, float]
    top_idx: np.ndarray
    bottom_idx: np.ndarray

    @property
    def n_nodes(self) -> int:
        return len(self.nodes)

    @property
    def n_elems(self) -> int:
        return len(self.elems)

    @property
    def volume(self) -> float:
        return float(self.dV.sum())


def default_resolution(size, target: float = 5.0) -> tuple[int, int, int]:
    """Element counts giving edges close to ``target`` mm (at least 1)."""
    return tuple(max(1, int(round(float(s) / target))) for s in size)


def build_slab_mesh(size, resolution) -> FemMesh:
    """Mesh the slab x in [-Lx/2, Lx/2], y in [-Ly/2, Ly/2], z in [-Lz, 0].

    Parameters
    ----------
    size : (Lx, Ly, Lz) extents in mm.
    resolution : (nx, ny, nz) element counts per axis.
    """
    lx, ly, lz = (float(s) for s in size)
    nx, ny, nz = (int(r) for r in resolution)
    if min(lx, ly, lz) <= 0.0:
        raise ValueError("slab extents must be positive")
    if min(nx, ny, nz) < 1:
        raise ValueError("resolution must be >= 1 element per axis")
    xs = np.linspace(-lx / 2.0, lx / 2.0, nx + 1)
    ys = np.linspace(-ly / 2.0, ly / 2.0, ny + 1)
    zs = np.linspace(-lz, 0.0, nz + 1)

    # x-major node lattice
    gx, gy, gz = np.meshgrid(xs, ys, zs, indexing="ij")
    nodes = np.column_stack([gx.ravel(), gy.ravel(), gz.ravel()])

    def nid(i, j, k):
        return (i * (ny + 1) + j) * (nz + 1) + k

    elems = np.empty((nx * ny * nz, 8), dtype=np.int32)
    e = 0
    for i in range(nx):
        for j in range(ny):
            for k in range(nz):
                elems[e] = (
                    nid(i, j, k),
                    nid(i + 1, j, k),
                    nid(i + 1, j + 1, k),
                    nid(i, j + 1, k),
                    nid(i, j, k + 1),
                    nid(i + 1, j, k + 1),
                    nid(i + 1, j + 1, k + 1),
                    nid(i, j + 1, k + 1),
                )
                e += 1

    gp = _gauss_points()
    dref = _shape_gradients_ref(gp)  # (8gp, 8, 3)

    # Every element is an axis-aligned box, so the Jacobian is diag(h/2)
    # exactly. Computing dN and dV from the edge lengths (instead of a
    # numerical inverse) keeps the reference gradients' mirror symmetry
    # bitwise intact, which the kernels exploit for exact rigid-translation
    # invariance.
    xe = nodes[elems]  # (ne, 8, 3)
    hx = xe[:, 1, 0] - xe[:, 0, 0]
    hy = xe[:, 3, 1] - xe[:, 0, 1]
    hz = xe[:, 4, 2] - xe[:, 0, 2]
    if np.any(hx <= 0) or np.any(hy <= 0) or np.any(hz <= 0):
        raise ValueError("degenerate element (non-positive edge length)")
    scale = 2.0 / np.column_stack([hx, hy, hz])  # (ne, 3)
    dN = dref[None, :, :, :] * scale[:, None, None, :]
    n_gp = len(gp)
    dV = np.repeat((hx * hy * hz / 8.0)[:, None], n_gp, axis=1)

    z_top = zs[-1]
    z_bot = zs[0]
    top_idx = np.flatnonzero(np.isclose(nodes[:, 2], z_top))
    bottom_idx = np.flatnonzero(np.isclose(nodes[:, 2], z_bot))

    return FemMesh(
        nodes=nodes,
        elems=elems,
        dN=np.ascontiguousarray(dN),
        dV=np.ascontiguousarray(dV),
        shape=(nx, ny, nz),
        size=(lx, ly, lz),
        top_idx=top_idx,
        bottom_idx=bottom_idx,
    )


def bottom_lattice(config) -> np.ndarray:
    """xy coordinates of the bottom-surface nodes for ``config``'s mesh.

    Used by scenario sampling to measure attachment coverage without
    building a full mesh.
    """
    lx, ly, lz = config.tissue_size
    nx, ny, _ = default_resolution((lx, ly, lz), config.mesh_target)
    xs = np.linspace(-lx / 2.0, lx / 2.0, nx + 1)
    ys = np.linspace(-ly / 2.0, ly / 2.0, ny + 1)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    return np.column_stack([gx.ravel(), gy.ravel()])
