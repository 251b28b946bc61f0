"""Shared domain model: configuration, block grid, world state, scenarios.

Conventions used throughout the package:

* geometry in millimetres, forces in newtons, angles in degrees;
* the tissue slab occupies x in [-Lx/2, Lx/2], y in [-Ly/2, Ly/2],
  z in [-Lz, 0], so the visible top surface is the z = 0 plane;
* blocks tile the footprint in an n x n grid indexed row-major over y,
  id = iy * n + ix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from typing import Optional

import numpy as np

__all__ = [
    "Config",
    "BlockGrid",
    "EnvState",
    "RobotState",
    "Action",
    "Scenario",
    "ScenarioError",
    "make_grid",
    "block_of_point",
    "block_distance",
    "generate_scenario",
    "home_positions",
    "workspace_bounds",
]

# Arm mounting: one patient-side manipulator per long edge of the slab.
ARM_NAMES = ("psm1", "psm2")
ARM_SIDE_CLEARANCE = 20.0  # mm beyond the footprint edge
ARM_HOME_Z = 40.0  # mm above the top surface


class ScenarioError(RuntimeError):
    """Raised when a random scenario cannot satisfy its constraints."""


@dataclass
class Config:
    """Experiment configuration with the defaults used by the batch studies.

    Attributes
    ----------
    tissue_size : tuple of float
        Slab extents (Lx, Ly, Lz) in mm.
    young_modulus, poisson_ratio : float
        Elastic constants of the slab material; Young's modulus in Pa.
    grid_n : int
        Blocks per side of the reasoning grid (n x n total).
    delta : float
        Visibility threshold; the goal holds when the visible fraction of
        the region of interest strictly exceeds it.
    epsilon : float
        Force limit in N; pulling force at or above it counts as a failure.
    pull_height : float
        Vertical retraction extent h in mm.
    ap_fraction : float
        Target percentage of the bottom surface covered by attachments.
    """

    tissue_size: tuple[float, float, float] = (100.0, 120.0, 5.0)
    young_modulus: float = 3000.0
    poisson_ratio: float = 0.45
    grid_n: int = 7
    delta: float = 0.7
    epsilon: float = 0.5
    pull_height: float = 50.0
    ap_fraction: float = 50.0
    horizon: int = 6
    control_step: float = 1.0
    w_ap: int = 1
    w_roi: int = 1
    objective: str = "min"
    force_limit: bool = True
    ignore_aps: bool = False
    max_cycles: int = 10
    grasp_radius: float = 5.0
    close_radius: float = 10.0
    ap_radius: float = 10.0
    at_radius: float = 5.0
    roi_inset: float = 10.0
    jaw_open_deg: float = 60.0
    jaw_closed_deg: float = 20.0
    mesh_target: float = 5.0

    def __post_init__(self) -> None:
        self.tissue_size = tuple(float(v) for v in self.tissue_size)
        if self.grid_n < 1:
            raise ValueError("grid_n must be >= 1")
        if self.objective not in ("min", "sum"):
            raise ValueError("objective must be 'min' or 'sum'")
        if not 0.0 <= self.ap_fraction <= 100.0:
            raise ValueError("ap_fraction is a percentage in [0, 100]")

    def to_dict(self) -> dict:
        out = {}
        for f in fields(self):
            v = getattr(self, f.name)
            out[f.name] = list(v) if isinstance(v, tuple) else v
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "Config":
        kw = dict(d)
        if "tissue_size" in kw:
            kw["tissue_size"] = tuple(kw["tissue_size"])
        return cls(**kw)


# ~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~
# Block grid
# ~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~


@dataclass(frozen=True)
class BlockGrid:
    """Regular n x n tiling of the tissue footprint.

    ``centers`` holds the xy block centers in row-major order
    (id = iy * n + ix), shape (n*n, 2).
    """

    n: int
    origin: tuple[float, float]
    cell: tuple[float, float]
    centers: np.ndarray

    def __len__(self) -> int:
        return self.n * self.n


def make_grid(n: int, footprint: tuple[float, float]) -> BlockGrid:
    """Tile a centred footprint (Lx, Ly) into an n x n block grid."""
    lx, ly = float(footprint[0]), float(footprint[1])
    dx, dy = lx / n, ly / n
    x0, y0 = -lx / 2.0, -ly / 2.0
    ix = np.arange(n)
    cx = x0 + (ix + 0.5) * dx
    cy = y0 + (ix + 0.5) * dy
    xx, yy = np.meshgrid(cx, cy)  # row index is iy
    centers = np.column_stack([xx.ravel(), yy.ravel()])
    return BlockGrid(n=n, origin=(x0, y0), cell=(dx, dy), centers=centers)


def _cell_index(u: float, n: int) -> Optional[int]:
    """Map a normalised coordinate u = (x - x0)/dx to a cell index.

    Points on an interior cell boundary belong to the lower cell, and the
    far edge (u == n) belongs to the last cell; outside returns None.
    """
    if u < 0.0 or u > n:
        return None
    k = int(math.floor(u))
    if k > 0 and u == float(k):
        k -= 1
    if k >= n:  # only reachable through floating round-off at the edge
        k = n - 1
    return k


def block_of_point(grid: BlockGrid, point) -> Optional[int]:
    """Block id containing the xy projection of ``point``, or None."""
    x, y = float(point[0]), float(point[1])
    ux = (x - grid.origin[0]) / grid.cell[0]
    uy = (y - grid.origin[1]) / grid.cell[1]
    ix = _cell_index(ux, grid.n)
    iy = _cell_index(uy, grid.n)
    if ix is None or iy is None:
        return None
    return iy * grid.n + ix


def block_distance(grid: BlockGrid, i: int, j: int) -> int:
    """Center-to-center distance between blocks i and j, rounded to int mm."""
    d = grid.centers[i] - grid.centers[j]
    return int(round(math.hypot(d[0], d[1])))


# ~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~
# World state
# ~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~


@dataclass
class EnvState:
    """Snapshot of the observable environment.

    Attributes
    ----------
    points : ndarray (m, 3)
        Current positions of the tracked top-surface material points.
    rest_points : ndarray (m, 3)
        The same points in the rest configuration.
    fixed_indices : ndarray of int
        Indices into ``points`` lying over an attachment.
    sigma : ndarray (n_nodes,)
        Magnitude of the constraint reaction carried by each mesh node
        (zero away from grippers and attachments).
    roi : ndarray (3,)
        Region-of-interest location on the bottom plane.
    """

    points: np.ndarray
    rest_points: np.ndarray
    fixed_indices: np.ndarray
    sigma: np.ndarray
    roi: np.ndarray


@dataclass
class RobotState:
    """Kinematic state of the two arms: tool-tip position and jaw angle."""

    positions: dict[str, np.ndarray]
    jaw_deg: dict[str, float]

    def copy(self) -> "RobotState":
        return RobotState(
            positions={a: p.copy() for a, p in self.positions.items()},
            jaw_deg=dict(self.jaw_deg),
        )


def home_positions(config: Config) -> dict[str, np.ndarray]:
    """Home tool-tip poses: one arm per long edge, hovering above the slab."""
    ly = config.tissue_size[1]
    y = ly / 2.0 + ARM_SIDE_CLEARANCE
    return {
        "psm1": np.array([0.0, -y, ARM_HOME_Z]),
        "psm2": np.array([0.0, +y, ARM_HOME_Z]),
    }


def home_robot(config: Config) -> RobotState:
    return RobotState(
        positions=home_positions(config),
        jaw_deg={a: config.jaw_open_deg for a in ARM_NAMES},
    )


def workspace_bounds(config: Config) -> tuple[np.ndarray, np.ndarray]:
    """Axis-aligned reachable box for tool tips (footprint + margin)."""
    lx, ly, lz = config.tissue_size
    margin = 30.0
    lo = np.array([-lx / 2 - margin, -ly / 2 - margin, -lz])
    hi = np.array([lx / 2 + margin, ly / 2 + margin, 100.0])
    return lo, hi


@dataclass(frozen=True, order=True)
class Action:
    """A ground task-level action. ``block`` is None for release."""

    kind: str
    arm: str
    block: Optional[int] = None

    def __str__(self) -> str:
        if self.block is None:
            return f"{self.kind}({self.arm})"
        return f"{self.kind}({self.arm},b{self.block})"


# ~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~
# Scenario sampling
# ~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~


@dataclass
class Scenario:
    """A sampled episode: ROI location plus hidden attachment patches.

    ``ap_centers`` is a (k, 2) array of patch centers on the bottom plane;
    ``fixed_fraction`` is the realised fraction of bottom lattice nodes the
    patches cover.
    """

    roi: np.ndarray
    ap_centers: np.ndarray
    fixed_fraction: float
    seed: int


def generate_scenario(config: Config, seed: int) -> Scenario:
    """Sample a scenario: ROI on the inset bottom plane, then attachment
    patches accumulated until the covered fraction of bottom nodes first
    reaches ``ap_fraction`` percent.

    The same seed always yields the same scenario.
    """
    from retractlab.fem.mesh import bottom_lattice

    rng = np.random.default_rng(seed)
    lx, ly, lz = config.tissue_size
    inset = config.roi_inset
    if lx / 2 <= inset or ly / 2 <= inset:
        raise ScenarioError("footprint too small for the requested inset")
    roi = np.array(
        [
            rng.uniform(-lx / 2 + inset, lx / 2 - inset),
            rng.uniform(-ly / 2 + inset, ly / 2 - inset),
            -lz,
        ]
    )

    target = config.ap_fraction / 100.0
    centers: list[np.ndarray] = []
    fraction = 0.0
    if target > 0.0:
        lattice = bottom_lattice(config)  # (m, 2) xy of bottom nodes
        covered = np.zeros(len(lattice), dtype=bool)
        r2 = config.ap_radius**2
        for _ in range(10_000):
            c = np.array([rng.uniform(-lx / 2, lx / 2), rng.uniform(-ly / 2, ly / 2)])
            centers.append(c)
            d2 = np.sum((lattice - c) ** 2, axis=1)
            covered |= d2 <= r2
            fraction = covered.mean()
            if fraction >= target:
                break
        else:
            raise ScenarioError(
                f"could not reach {config.ap_fraction}% coverage with "
                f"{config.ap_radius} mm patches"
            )
    ap = np.array(centers).reshape(-1, 2)
    return Scenario(roi=roi, ap_centers=ap, fixed_fraction=float(fraction), seed=seed)
