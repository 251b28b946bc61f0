"""Closed-loop task execution: plan, act through the simulator, monitor,
re-plan on failure, stop on goal or budget.

One run owns a simulator, a robot state, and a trace. Each cycle grounds
the current fluents, solves for a plan, and executes it waypoint by
waypoint. Pulls and lateral moves check the exposure goal every control
step, so a pull ends as soon as the region is visible rather than at a
fixed height; with the force limit active, pull steps are also monitored
against the reaction limit. A force failure aborts the pull one control
step back, grounds max_height for the arm, and triggers the next cycle;
a recovery move that crosses the limit simply halts where it stands, so
the recorded force never exceeds the limit by more than one control
step's increment; once any grasp has violated the limit, re-plans grasp
strictly clear of known attachments.
Everything observable lands in an ordered event trace keyed by a
deterministic tick counter, so a (config, seed) pair reproduces the trace
byte for byte.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from retractlab import reasoner
from retractlab.awareness import (
    FluentSet,
    check_failure,
    compute_fluents,
    compute_target,
    init_close_set,
    roi_visibility,
)
from retractlab.fem import (
    ConvergenceError,
    Material,
    TissueSim,
    attach_grasp,
    build_slab_mesh,
    default_resolution,
    env_snapshot,
    release_grasp,
    solve_equilibrium,
)
from retractlab.fem.solver import set_tool
from retractlab.model import (
    ARM_NAMES,
    Action,
    Config,
    Scenario,
    block_distance,
    generate_scenario,
    home_robot,
    make_grid,
)
from retractlab.motion import GripperCommand, Trajectory, primitive_for

__all__ = [
    "TraceEvent",
    "RunReport",
    "run_task",
    "classify_replan",
    "AT_GRASP_OFFSET",
]

AT_GRASP_OFFSET = 5.0  # mm of lift below which a force failure counts as at-grasp

CAUSE_AT_GRASP = "force-at-grasp"
CAUSE_DURING_PULL = "force-during-pull"
CAUSE_HEIGHT = "height-exhausted"

_GOAL = "goal-reached"  # internal sentinel: trajectory ended because the region came visible


@dataclass
class TraceEvent:
    tick: int
    kind: str  # fluents | plan | action-start | action-end | failure | metrics
    payload: dict

    def to_json_dict(self) -> dict:
        out = {"tick": self.tick, "kind": self.kind}
        out.update(self.payload)
        return out


@dataclass
class RunReport:
    seed: int
    outcome: str  # success | no-plan | step-budget-exceeded | solver-error
    final_visibility: float
    replans: int
    replan_causes: list
    max_force_seen: float
    planning_times: list  # wall seconds, initial first
    planning_work: list  # deterministic work units, initial first
    max_step_increase: float = 0.0  # largest per-step rise of the peak reaction
    max_residual: float = 0.0  # worst converged equilibrium residual, N
    trace: list = field(default_factory=list)
    cycles: int = 0


def classify_replan(trace) -> str:
    """Cause label of the most recent failure event in a trace."""
    for ev in reversed(trace):
        if ev.kind == "failure":
            return ev.payload["cause"]
    raise ValueError("no failure event in trace")


class _Run:
    """State of one task execution."""

    def __init__(self, config: Config, seed: int, scenario: Optional[Scenario]):
        self.config = config
        self.seed = seed
        self.scenario = scenario if scenario is not None else generate_scenario(config, seed)
        mesh = build_slab_mesh(
            config.tissue_size, default_resolution(config.tissue_size, config.mesh_target)
        )
        material = Material(config.young_modulus, config.poisson_ratio)
        self.sim = TissueSim(mesh, material, config, self.scenario)
        self.robot = home_robot(config)
        self.grid = make_grid(config.grid_n, config.tissue_size[:2])
        self.env = env_snapshot(self.sim)
        self.close = init_close_set(self.env, config)

        self.tick = 0
        self.trace: list[TraceEvent] = []
        self.max_force = 0.0
        self.max_step_increase = 0.0
        self.max_residual = 0.0
        self._last_sigma = 0.0
        self.max_height_flags: set[str] = set()
        self.suppress_hold: set[str] = set()
        self.failed_blocks: set[int] = set()
        self.at_grasp_blocks: set[int] = set()
        self.held_block: dict[str, Optional[int]] = {a: None for a in ARM_NAMES}
        self.plan_times: list[float] = []
        self.plan_work: list[int] = []
        self.causes: list[str] = []

    # ~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~

    def emit(self, kind: str, **payload) -> None:
        self.trace.append(TraceEvent(tick=self.tick, kind=kind, payload=payload))

    def visibility(self) -> float:
        return roi_visibility(self.env, self.close, self.config)

    def fluents(self) -> FluentSet:
        fl = compute_fluents(self.env, self.robot, self.close, self.grid, self.config)
        atoms = set(fl.atoms)
        for arm in self.max_height_flags:
            atoms.add(("max_height", arm))
        for b in self.failed_blocks:
            atoms.add(("fixed", b))
        for arm in self.suppress_hold:
            atoms = {a for a in atoms if not (a[0] in ("at", "in_hand") and a[1] == arm)}
        # the geometric in_hand rule loses the block once a drag carries the
        # tool more than 5 mm from its center, but the executive commanded
        # that grasp and has seen no release: keep the fact grounded so a
        # mid-drag re-plan can still reason about the held block
        for arm, blk in self.held_block.items():
            if blk is not None and arm in self.sim.grasps and arm not in self.suppress_hold:
                atoms.add(("in_hand", arm, blk))
        return FluentSet(atoms)

    def step_sim(self, arm: str, pos: np.ndarray) -> None:
        """One control step: command the tool, settle, observe."""
        self.robot.positions[arm] = np.asarray(pos, dtype=float)
        if arm in self.sim.grasps:
            set_tool(self.sim, arm, pos)
        solve_equilibrium(self.sim)
        self.env = env_snapshot(self.sim)
        self.tick += 1
        self._note_solve()

    def _note_solve(self) -> None:
        self.max_residual = max(self.max_residual, float(self.sim.last_stats.residual))
        s = float(self.env.sigma.max())
        self.max_force = max(self.max_force, s)
        self.max_step_increase = max(self.max_step_increase, s - self._last_sigma)
        self._last_sigma = s

    # ~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~

    def plan(self, cycle: int):
        cfg = self.config
        if cfg.ignore_aps and cycle == 0:
            cfg = replace(cfg, w_ap=0)
        fl = self.fluents()
        self.emit(
            "fluents",
            atoms=sorted(reasoner.atom_str(a) for a in fl),
            visibility=self.visibility(),
        )
        # a failed grasp bans its own block; a grasp that violated the limit
        # right at the onset additionally bans every block at least as close
        # to a known attachment, so the re-grasp sits strictly farther from
        # the anchors than the grasp that failed
        banned = set(self.failed_blocks)
        if self.at_grasp_blocks:
            fixed_bs = sorted({a[1] for a in fl if a[0] == "fixed"})

            def min_ap(b: int) -> int:
                return min(block_distance(self.grid, b, f) for f in fixed_bs)

            if fixed_bs:
                worst = max(min_ap(b) for b in self.at_grasp_blocks)
                banned.update(
                    b for b in range(self.grid.n * self.grid.n) if min_ap(b) <= worst
                )
        t0 = time.perf_counter()
        program = reasoner.ground_domain(self.grid, fl, cfg.horizon, cfg, frozenset(banned))
        result = reasoner.solve(program)
        self.plan_times.append(time.perf_counter() - t0)
        self.plan_work.append(result.work)
        self.emit(
            "plan",
            status=result.status,
            actions=[str(a) for a in result.actions],
            objective=result.objective_value,
            work=result.work,
        )
        return result

    def exec_gripper(self, action: Action, cmd: GripperCommand) -> None:
        arm = action.arm
        if action.kind == "grasp":
            attach_grasp(self.sim, arm, self.robot.positions[arm])
            self.held_block[arm] = action.block
        else:  # release
            release_grasp(self.sim, arm)
            self.held_block[arm] = None
            self.max_height_flags.discard(arm)
            self.suppress_hold.discard(arm)
        self.robot.jaw_deg[arm] = cmd.target_jaw_deg
        solve_equilibrium(self.sim)
        self.env = env_snapshot(self.sim)
        self._note_solve()

    def exec_trajectory(self, action: Action, traj: Trajectory) -> Optional[str]:
        """Run waypoints; returns a failure cause, the goal sentinel when the
        region comes visible mid-trajectory, or None on completion."""
        arm = action.arm
        start = np.asarray(self.robot.positions[arm], dtype=float)
        tracked = action.kind in ("pull", "move")
        # the reaction limit drives re-planning only for the pull (including
        # the lift onset right after grasping, which is the pull's first
        # waypoints); a lateral move is itself the recovery, so crossing the
        # limit there just halts the drag at the last compliant waypoint
        monitored = self.config.force_limit and action.kind == "pull"
        clamped = self.config.force_limit and action.kind == "move"
        prev = start
        for wp in traj.waypoints:
            self.step_sim(arm, wp)
            if tracked and self.visibility() > self.config.delta:
                # the goal is checked every control step, so a pull lifts
                # until the region is exposed, not to a fixed height
                return _GOAL
            if monitored and check_failure(self.env, self.config):
                offset = float(np.linalg.norm(self.robot.positions[arm] - start))
                blk = self.held_block[arm]
                if action.kind == "pull" and offset <= AT_GRASP_OFFSET:
                    cause = CAUSE_AT_GRASP
                    self.suppress_hold.add(arm)
                    if blk is not None:
                        self.at_grasp_blocks.add(blk)
                else:
                    cause = CAUSE_DURING_PULL
                self.max_height_flags.add(arm)
                if blk is not None:
                    self.failed_blocks.add(blk)
                self.emit(
                    "failure",
                    arm=arm,
                    cause=cause,
                    block=blk,
                    offset_mm=offset,
                    sigma_max=float(self.env.sigma.max()),
                )
                # back off to relieve the excess: a failed onset is undone
                # entirely (the arm releases or re-grasps from the resting
                # pose), a mid-pull failure backs off one control step to the
                # last height that respected the limit, keeping the tissue
                # raised for the lateral recovery
                self.step_sim(arm, start if cause == CAUSE_AT_GRASP else prev)
                return cause
            if clamped and check_failure(self.env, self.config):
                # stop the drag instead of fighting the anchors; the move is
                # complete where it stands and the loop judges the view there
                self.step_sim(arm, prev)
                return None
            prev = wp
        return None


def run_task(
    config: Config,
    seed: int,
    scenario: Optional[Scenario] = None,
    state_out: Optional[dict] = None,
) -> RunReport:
    """Execute one retraction task to an outcome. See the module docstring.

    ``state_out``, when given a dict, receives the live run state under the
    key ``"run"`` so callers can export simulator snapshots afterwards.
    """
    run = _Run(config, seed, scenario)
    if state_out is not None:
        state_out["run"] = run

    def report(outcome: str) -> RunReport:
        run.emit(
            "metrics",
            outcome=outcome,
            final_visibility=run.visibility(),
            replans=len(run.causes),
            replan_causes=list(run.causes),
            max_force=run.max_force,
        )
        return RunReport(
            seed=seed,
            outcome=outcome,
            final_visibility=run.visibility(),
            replans=len(run.causes),
            replan_causes=list(run.causes),
            max_force_seen=run.max_force,
            planning_times=run.plan_times,
            planning_work=run.plan_work,
            max_step_increase=run.max_step_increase,
            max_residual=run.max_residual,
            trace=run.trace,
            cycles=len(run.plan_times),
        )

    cycle = 0
    try:
        while True:
            if cycle >= config.max_cycles:
                return report("step-budget-exceeded")
            result = run.plan(cycle)
            cycle += 1
            if result.status == "no-plan":
                return report("no-plan")
            if not result.actions:
                # planner is satisfied; trust it only if the scene agrees
                if run.visibility() > config.delta:
                    return report("success")
                return report("no-plan")

            for action in result.actions:
                target = compute_target(action, run.env, run.robot, run.grid, run.config)
                prim = primitive_for(action, target, run.robot, run.config)
                run.emit(
                    "action-start",
                    action=str(action),
                    target=None if target is None else [float(v) for v in target],
                )
                if isinstance(prim, GripperCommand):
                    run.exec_gripper(action, prim)
                    run.emit("action-end", action=str(action), completed=True)
                    continue
                cause = run.exec_trajectory(action, prim)
                if cause == _GOAL:
                    run.emit("action-end", action=str(action), completed=True)
                    return report("success")
                if cause is not None:
                    run.emit("action-end", action=str(action), completed=False)
                    run.causes.append(cause)
                    break
                run.emit("action-end", action=str(action), completed=True)
                if action.kind in ("pull", "move"):
                    vis = run.visibility()
                    run.emit(
                        "fluents",
                        atoms=sorted(reasoner.atom_str(a) for a in run.fluents()),
                        visibility=vis,
                    )
                    if vis > config.delta:
                        return report("success")
                    if action.kind == "pull":
                        run.max_height_flags.add(action.arm)
                        run.emit(
                            "failure",
                            arm=action.arm,
                            cause=CAUSE_HEIGHT,
                            block=run.held_block[action.arm],
                            offset_mm=float(config.pull_height),
                            sigma_max=float(run.env.sigma.max()),
                        )
                        run.causes.append(CAUSE_HEIGHT)
                        break
                    # the drag arrived without exposing the region: nothing
                    # in the repertoire changes the view from here, so the
                    # honest outcome is no plan rather than invented behavior
                    return report("no-plan")
    except ConvergenceError:
        return report("solver-error")
