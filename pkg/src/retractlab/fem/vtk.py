"""Legacy-ASCII VTK export of slab snapshots for offline viewing."""

from __future__ import annotations

import numpy as np

from retractlab.fem.mesh import FemMesh

__all__ = ["write_vtk"]


def write_vtk(path, mesh: FemMesh, positions, point_scalars=None, scalar_name="sigma"):
    """Write an unstructured-grid file (hexahedra, cell type 12).

    positions: (n_nodes, 3) deformed coordinates.
    point_scalars: optional (n_nodes,) field written as POINT_DATA.
    """
    x = np.asarray(positions, dtype=float)
    if x.shape != mesh.nodes.shape:
        raise ValueError("positions do not conform to the mesh")
    lines = [
        "# vtk DataFile Version 3.0",
        "slab snapshot",
        "ASCII",
        "DATASET UNSTRUCTURED_GRID",
        f"POINTS {mesh.n_nodes} double",
    ]
    for p in x:
        lines.append(f"{p[0]:.9g} {p[1]:.9g} {p[2]:.9g}")
    ne = mesh.n_elems
    lines.append(f"CELLS {ne} {ne * 9}")
    for conn in mesh.elems:
        lines.append("8 " + " ".join(str(int(c)) for c in conn))
    lines.append(f"CELL_TYPES {ne}")
    lines.extend(["12"] * ne)
    if point_scalars is not None:
        s = np.asarray(point_scalars, dtype=float)
        if s.shape != (mesh.n_nodes,):
            raise ValueError("point_scalars must be one value per node")
        lines.append(f"POINT_DATA {mesh.n_nodes}")
        lines.append(f"SCALARS {scalar_name} double 1")
        lines.append("LOOKUP_TABLE default")
        lines.extend(f"{v:.9g}" for v in s)
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
