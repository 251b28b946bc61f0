"""Motion primitives: linear tool trajectories and jaw commands."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from retractlab.model import Action, Config, RobotState, workspace_bounds

__all__ = ["Trajectory", "GripperCommand", "primitive_for"]


@dataclass
class Trajectory:
    """Straight-line waypoints, one control step apart, ending on target."""

    arm: str
    waypoints: np.ndarray  # (k, 3)


@dataclass
class GripperCommand:
    arm: str
    target_jaw_deg: float


def primitive_for(action: Action, target, robot: RobotState, config: Config):
    """Build the primitive realizing an action.

    Spatial actions (reach, move, pull) need a metric target and produce a
    Trajectory; grasp and release are jaw commands and must get target None.
    """
    if action.kind == "grasp":
        if target is not None:
            raise ValueError("grasp takes no metric target")
        return GripperCommand(arm=action.arm, target_jaw_deg=0.0)
    if action.kind == "release":
        if target is not None:
            raise ValueError("release takes no metric target")
        return GripperCommand(arm=action.arm, target_jaw_deg=config.jaw_open_deg)
    if action.kind not in ("reach", "move", "pull"):
        raise ValueError(f"unknown action kind: {action.kind!r}")
    if target is None:
        raise ValueError(f"{action.kind} requires a metric target")
    t = np.asarray(target, dtype=float)
    lo, hi = workspace_bounds(config)
    if np.any(t < lo) or np.any(t > hi):
        raise ValueError(f"target {t.tolist()} outside the workspace box")

    start = np.asarray(robot.positions[action.arm], dtype=float)
    dist = float(np.linalg.norm(t - start))
    if dist == 0.0:
        return Trajectory(arm=action.arm, waypoints=t[None, :].copy())
    k = int(np.ceil(dist / config.control_step))
    frac = np.arange(1, k + 1) / k
    pts = start[None, :] + frac[:, None] * (t - start)[None, :]
    pts[-1] = t  # land exactly on target, no rounding residue
    return Trajectory(arm=action.arm, waypoints=pts)
