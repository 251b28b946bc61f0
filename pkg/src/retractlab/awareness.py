"""Semantic situation awareness over simulation snapshots.

Turns geometric state (surface cloud, arm poses, jaw angles, reaction field)
into ground fluents for the task reasoner, tracks region visibility through a
set of material surface points picked at task start, detects force-limit
violations during pulling, and converts symbolic actions into metric motion
targets.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from retractlab.model import (
    ARM_NAMES,
    Action,
    BlockGrid,
    Config,
    EnvState,
    RobotState,
    ScenarioError,
    block_of_point,
)

__all__ = [
    "CloseSet",
    "FluentSet",
    "init_close_set",
    "roi_visibility",
    "compute_fluents",
    "check_failure",
    "compute_target",
]

Atom = tuple


@dataclass(frozen=True)
class CloseSet:
    """Indices (into the surface cloud) of points near the region at start."""

    indices: np.ndarray

    def __len__(self) -> int:
        return len(self.indices)


class FluentSet:
    """Immutable set of ground fluents, each a tuple like ("at", "psm1", 3)."""

    __slots__ = ("atoms",)

    def __init__(self, atoms: Iterable[Atom] = ()):
        object.__setattr__(self, "atoms", frozenset(tuple(a) for a in atoms))

    def __setattr__(self, *_):
        raise AttributeError("FluentSet is immutable")

    def has(self, *atom) -> bool:
        return tuple(atom) in self.atoms

    def add(self, *atoms: Atom) -> "FluentSet":
        return FluentSet(self.atoms | {tuple(a) for a in atoms})

    def discard(self, *atoms: Atom) -> "FluentSet":
        return FluentSet(self.atoms - {tuple(a) for a in atoms})

    def __iter__(self):
        return iter(self.atoms)

    def __len__(self) -> int:
        return len(self.atoms)

    def __contains__(self, atom) -> bool:
        return tuple(atom) in self.atoms

    def __eq__(self, other) -> bool:
        return isinstance(other, FluentSet) and self.atoms == other.atoms

    def __hash__(self) -> int:
        return hash(self.atoms)

    def __repr__(self) -> str:
        names = sorted(f"{a[0]}({','.join(map(str, a[1:]))})" for a in self.atoms)
        return "FluentSet{" + ", ".join(names) + "}"


def init_close_set(env: EnvState, config: Config) -> CloseSet:
    """Surface points strictly within close_radius of the region, at rest."""
    d = np.linalg.norm(env.points - env.roi, axis=1)
    idx = np.flatnonzero(d < config.close_radius)
    if len(idx) == 0:
        raise ScenarioError(
            "no surface points within %.0f mm of the region of interest" % config.close_radius
        )
    return CloseSet(indices=idx)


def roi_visibility(env: EnvState, close: CloseSet, config: Config) -> float:
    """Fraction of the tracked points displaced beyond close_radius."""
    p = env.points[close.indices]
    d = np.linalg.norm(p - env.roi, axis=1)
    return float(np.count_nonzero(d > config.close_radius)) / len(close.indices)


def compute_fluents(
    env: EnvState,
    robot: RobotState,
    close: CloseSet,
    grid: BlockGrid,
    config: Config,
) -> FluentSet:
    """Ground the fluents describing the current scene.

    max_height(arm) is deliberately absent: pull exhaustion is history, not
    geometry, so the executive overlays it.
    """
    atoms: list[Atom] = []

    if roi_visibility(env, close, config) > config.delta:
        atoms.append(("visible_roi",))

    closed = {arm: robot.jaw_deg[arm] < config.jaw_closed_deg for arm in ARM_NAMES}
    for arm in ARM_NAMES:
        if closed[arm]:
            atoms.append(("closed_gripper", arm))

    b_roi = block_of_point(grid, env.roi)
    if b_roi is not None:
        atoms.append(("above_roi", b_roi))

    # one arm per block: smallest |y_tip - y_center|, psm1 on ties
    arm_y = [robot.positions[arm][1] for arm in ARM_NAMES]
    for b, c in enumerate(grid.centers):
        gaps = [abs(y - c[1]) for y in arm_y]
        atoms.append(("reachable", ARM_NAMES[int(np.argmin(gaps))], b))

    for p in env.points[env.fixed_indices]:
        b = block_of_point(grid, p)
        if b is not None:
            atoms.append(("fixed", b))

    for arm in ARM_NAMES:
        tip = np.asarray(robot.positions[arm][:2], dtype=float)
        d = np.linalg.norm(grid.centers - tip, axis=1)
        b = int(np.argmin(d))
        if d[b] < config.at_radius:
            atoms.append(("at", arm, b))
            if closed[arm]:
                atoms.append(("in_hand", arm, b))

    return FluentSet(atoms)


def check_failure(env: EnvState, config: Config) -> bool:
    """True when the peak reaction reaches the force limit (inclusive)."""
    return float(env.sigma.max()) >= config.epsilon


def compute_target(
    action: Action,
    env: EnvState,
    robot: RobotState,
    grid: BlockGrid,
    config: Config,
) -> Optional[np.ndarray]:
    """Metric motion target of an action; None for pure gripper commands."""
    if action.kind in ("grasp", "release"):
        return None
    if action.kind == "reach":
        c = grid.centers[action.block]
        top_z = float(env.rest_points[:, 2].max())
        return np.array([c[0], c[1], top_z])
    pos = np.asarray(robot.positions[action.arm], dtype=float)
    if action.kind == "pull":
        return pos + np.array([0.0, 0.0, float(config.pull_height)])
    if action.kind == "move":
        c = grid.centers[action.block]
        return np.array([c[0], c[1], pos[2]])
    raise ValueError(f"unknown action kind: {action.kind!r}")
