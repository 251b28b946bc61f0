"""Quasi-static finite element simulation of the tissue slab."""

from retractlab.fem.material import Material, lame_params
from retractlab.fem.mesh import FemMesh, build_slab_mesh, default_resolution
from retractlab.fem.solver import (
    ConvergenceError,
    TissueSim,
    attach_grasp,
    elastic_energy,
    env_snapshot,
    internal_forces,
    release_grasp,
    solve_equilibrium,
)

__all__ = [
    "Material",
    "lame_params",
    "FemMesh",
    "build_slab_mesh",
    "default_resolution",
    "ConvergenceError",
    "TissueSim",
    "attach_grasp",
    "release_grasp",
    "solve_equilibrium",
    "env_snapshot",
    "elastic_energy",
    "internal_forces",
]
