"""Bounded-horizon task planning over the retraction action domain.

The domain is grounded from the current fluents into a finite program:
static facts (block distances, reachability partition, fixed blocks, the
block above the region), action instances per timestep, and an objective.
Planning searches sequences of at most one action per step, applying
deterministic effects with inertia, and optimizes the way an incremental
grounder would: the fewest steps strictly first, then the grasp score of
the block acted on by the final pull or move, with a fixed tie-break so
results are reproducible bit for bit.

A brute-force enumerator over tiny instances serves as the reference
optimum for the search.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Optional

from retractlab.awareness import FluentSet
from retractlab.model import ARM_NAMES, Action, BlockGrid, Config, block_distance

__all__ = [
    "DomainProgram",
    "History",
    "PlanResult",
    "ground_domain",
    "grasp_score",
    "solve",
    "brute_force_oracle",
    "render_history",
    "atom_str",
]

_KIND_RANK = {"reach": 0, "grasp": 1, "pull": 2, "move": 3, "release": 4}
_ARM_INDEX = {a: i for i, a in enumerate(ARM_NAMES)}
_NO_BLOCK = 10**9  # sorts release after any block argument

GOAL_ATOM = "visible_roi"


def action_key(a: Action) -> tuple[int, int, int]:
    b = a.block if a.block is not None else _NO_BLOCK
    return (b, _ARM_INDEX[a.arm], _KIND_RANK[a.kind])


# ~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~
# grounding
# ~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~


def grasp_score(b, grid, fixed_blocks, roi_block, w_ap, w_roi, mode="min"):
    """Attractiveness of grasping block b.

    w_ap times the distance to the fixed blocks (their minimum by default,
    mode="sum" adds the distinct distance values instead) minus w_roi times
    the distance to the block above the region. No fixed blocks: the first
    term is 0.
    """
    if roi_block is None:
        raise ValueError("roi block undefined (region outside the grid)")
    dists = [block_distance(grid, b, f) for f in fixed_blocks]
    if not dists:
        ap_term = 0
    elif mode == "min":
        ap_term = min(dists)
    elif mode == "sum":
        ap_term = sum(set(dists))
    else:
        raise ValueError(f"unknown objective mode: {mode!r}")
    return w_ap * ap_term - w_roi * block_distance(grid, b, roi_block)


@dataclass
class DomainProgram:
    grid: BlockGrid
    arms: tuple[str, ...]
    horizon: int
    externals: FluentSet
    distances: dict  # (b1, b2) -> int, all ordered pairs
    scores: dict  # block -> grasp score
    reach_arm: dict  # block -> its unique reachable arm
    fixed_blocks: tuple[int, ...]
    roi_block: Optional[int]
    actions: tuple[Action, ...]  # instances available at every timestep
    w_ap: float
    w_roi: float
    work: int  # grounding effort, deterministic units
    banned: frozenset = frozenset()  # blocks pruned from grasp-directed instances

    @property
    def n_distance_facts(self) -> int:
        return len(self.distances)

    @property
    def n_action_instances(self) -> int:
        return len(self.actions)


def ground_domain(
    grid: BlockGrid,
    fluents: FluentSet,
    horizon: int,
    config: Config,
    banned: frozenset = frozenset(),
) -> DomainProgram:
    """Instantiate the planning program for the current fluents.

    ``banned`` names blocks whose grasp-directed instances (reach, grasp,
    pull) are pruned; the executive feeds it blocks whose grasps have
    already violated the force limit, so recovery plans grasp elsewhere.
    """
    if horizon < 1:
        raise ValueError("horizon must be at least 1")
    n_blocks = grid.n * grid.n
    work = 0

    distances = {}
    for b1 in range(n_blocks):
        for b2 in range(n_blocks):
            distances[(b1, b2)] = block_distance(grid, b1, b2)
            work += 1

    reach_arm = {}
    for atom in fluents:
        if atom[0] == "reachable":
            reach_arm[atom[2]] = atom[1]
    fixed_blocks = tuple(sorted(a[1] for a in fluents if a[0] == "fixed"))
    roi_block = next((a[1] for a in fluents if a[0] == "above_roi"), None)

    scores = {}
    for b in range(n_blocks):
        scores[b] = grasp_score(
            b, grid, fixed_blocks, roi_block, config.w_ap, config.w_roi, config.objective
        )
        work += 1

    # action instances: reach/grasp/pull for each block with its unique arm;
    # grasp/pull additionally for externally supplied at/in_hand pairs (the
    # arm may sit on a block outside its own partition after execution)
    extra_pairs = set()
    for atom in fluents:
        if atom[0] in ("at", "in_hand"):
            arm, b = atom[1], atom[2]
            if reach_arm.get(b) != arm:
                extra_pairs.add((arm, b))
    instances: list[Action] = []
    for b in range(n_blocks):
        if b in banned:
            continue
        arm = reach_arm.get(b)
        if arm is not None:
            instances.append(Action("reach", arm, b))
            instances.append(Action("grasp", arm, b))
            instances.append(Action("pull", arm, b))
    for arm, b in sorted(extra_pairs):
        if b in banned:
            continue
        instances.append(Action("grasp", arm, b))
        instances.append(Action("pull", arm, b))
    if roi_block is not None:
        for arm in ARM_NAMES:
            instances.append(Action("move", arm, roi_block))
    for arm in ARM_NAMES:
        instances.append(Action("release", arm))
    work += len(instances)

    instances.sort(key=action_key)
    return DomainProgram(
        grid=grid,
        arms=ARM_NAMES,
        horizon=horizon,
        externals=fluents,
        distances=distances,
        scores=scores,
        reach_arm=reach_arm,
        fixed_blocks=fixed_blocks,
        roi_block=roi_block,
        actions=tuple(instances),
        w_ap=config.w_ap,
        w_roi=config.w_roi,
        work=work,
        banned=banned,
    )


# ~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~
# symbolic state and transitions
# ~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~
# state = (visible, arm_state_psm1, arm_state_psm2)
# arm state = (at_block, closed, held_block, max_height)


def _initial_state(program: DomainProgram):
    arms = []
    f = program.externals
    for arm in ARM_NAMES:
        at = next((a[2] for a in f if a[0] == "at" and a[1] == arm), None)
        held = next((a[2] for a in f if a[0] == "in_hand" and a[1] == arm), None)
        arms.append((at, f.has("closed_gripper", arm), held, f.has("max_height", arm)))
    return (f.has(GOAL_ATOM), arms[0], arms[1])


def _legal(state, action: Action) -> bool:
    ai = _ARM_INDEX[action.arm]
    at, closed, held, mh = state[1 + ai]
    k = action.kind
    if k == "reach":
        return not closed
    if k == "grasp":
        return at == action.block and not closed
    if k == "pull":
        return held == action.block and not mh
    if k == "move":
        return held is not None and mh
    if k == "release":
        return closed
    raise ValueError(f"unknown action kind: {k!r}")


def _apply(state, action: Action):
    visible = state[0]
    ai = _ARM_INDEX[action.arm]
    at, closed, held, mh = state[1 + ai]
    k = action.kind
    if k == "reach":
        at = action.block
    elif k == "grasp":
        closed = True
        held = action.block
    elif k == "pull":
        visible = True
    elif k == "move":
        visible = True
        at = action.block  # the arm now hovers over the target block
    elif k == "release":
        closed = False
        held = None
        mh = False
    arm_state = (at, closed, held, mh)
    if ai == 0:
        return (visible, arm_state, state[2])
    return (visible, state[1], arm_state)


def _plan_score(program: DomainProgram, state, actions) -> Optional[int]:
    """Objective score: the block acted on by the last pull or move.

    A move scores the block held in the moving arm, since that is where the
    tissue was grasped.
    """
    cur = state
    last = None
    for a in actions:
        if a.kind == "pull":
            last = a.block
        elif a.kind == "move":
            last = cur[1 + _ARM_INDEX[a.arm]][2]
        cur = _apply(cur, a)
    if last is None:
        return None
    return program.scores[last]


def _plan_key(actions) -> tuple:
    return tuple(action_key(a) for a in actions)


def _better(cand: tuple, incumbent: Optional[tuple]) -> bool:
    """cand/incumbent = (score, -len, plan_key); None score never wins.

    Plans are ranked the way an incremental grounder finds them: fewer
    steps strictly first, grasp score second, smallest action keys last.
    """
    if cand[0] is None:
        return False
    if incumbent is None:
        return True
    return (cand[1], cand[0]) > (incumbent[1], incumbent[0]) or (
        (cand[1], cand[0]) == (incumbent[1], incumbent[0]) and cand[2] < incumbent[2]
    )


# ~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~
# results
# ~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~


@dataclass
class History:
    """Dynamic fluents per timestep plus the action taken at each step."""

    steps: list  # list of (FluentSet, Optional[Action]); last action is None


@dataclass
class PlanResult:
    actions: list
    history: History
    objective_value: Optional[int]
    solve_time: float
    status: str  # "plan" or "no-plan"
    violated_goal: Optional[str] = None
    work: int = 0
    nodes: int = 0


def _dynamic_fluents(state) -> FluentSet:
    atoms = []
    if state[0]:
        atoms.append((GOAL_ATOM,))
    for i, arm in enumerate(ARM_NAMES):
        at, closed, held, mh = state[1 + i]
        if at is not None:
            atoms.append(("at", arm, at))
        if closed:
            atoms.append(("closed_gripper", arm))
        if held is not None:
            atoms.append(("in_hand", arm, held))
        if mh:
            atoms.append(("max_height", arm))
    return FluentSet(atoms)


def _result(program: DomainProgram, state0, actions, score, t0, work, nodes) -> PlanResult:
    steps = []
    cur = state0
    for a in actions:
        steps.append((_dynamic_fluents(cur), a))
        cur = _apply(cur, a)
    steps.append((_dynamic_fluents(cur), None))
    return PlanResult(
        actions=list(actions),
        history=History(steps=steps),
        objective_value=score,
        solve_time=time.perf_counter() - t0,
        status="plan",
        work=work,
        nodes=nodes,
    )


def _no_plan(program: DomainProgram, state0, t0, work, nodes) -> PlanResult:
    return PlanResult(
        actions=[],
        history=History(steps=[(_dynamic_fluents(state0), None)]),
        objective_value=None,
        solve_time=time.perf_counter() - t0,
        status="no-plan",
        violated_goal=GOAL_ATOM,
        work=work,
        nodes=nodes,
    )


# ~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~
# search
# ~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~


def _template_plans(program: DomainProgram, state0):
    """Candidate plans of the shapes an optimum can take.

    For each arm: pull now, move now, grasp then pull, reach-grasp-pull, and
    release first then the full fresh sequence. Only grounded instances are
    used, and every candidate is validated through the ordinary transition
    machinery.
    """
    n_blocks = program.grid.n * program.grid.n
    inst = set(program.actions)
    out = []
    for arm in ARM_NAMES:
        ai = _ARM_INDEX[arm]
        at, closed, held, mh = state0[1 + ai]
        if held is not None and not mh and Action("pull", arm, held) in inst:
            out.append([Action("pull", arm, held)])
        if held is not None and mh and program.roi_block is not None:
            mv = Action("move", arm, program.roi_block)
            if mv in inst:
                out.append([mv])
        if at is not None and not closed and Action("grasp", arm, at) in inst:
            out.append([Action("grasp", arm, at), Action("pull", arm, at)])
        for b in range(n_blocks):
            if program.reach_arm.get(b) != arm or Action("reach", arm, b) not in inst:
                continue
            seq = [Action("reach", arm, b), Action("grasp", arm, b), Action("pull", arm, b)]
            if not closed:
                out.append(seq)
            else:
                out.append([Action("release", arm)] + seq)
    return out


def _valid(program: DomainProgram, state0, actions) -> bool:
    if len(actions) > program.horizon:
        return False
    cur = state0
    for a in actions:
        if not _legal(cur, a):
            return False
        cur = _apply(cur, a)
    return cur[0]


def _min_remaining(state, program: DomainProgram) -> int:
    """Admissible lower bound on actions still needed for the goal."""
    if state[0]:
        return 0
    best = None
    for i in range(2):
        at, closed, held, mh = state[1 + i]
        if held is not None and not mh:
            k = 1
        elif held is not None and mh and program.roi_block is not None:
            k = 1
        elif at is not None and not closed:
            k = 2
        elif not closed:
            k = 3
        else:
            k = 4  # release, reach, grasp, pull
        best = k if best is None else min(best, k)
    return best


def solve(program: DomainProgram) -> PlanResult:
    """Optimal plan under (shorter, score, smallest action keys).

    Branch and bound: template candidates seed the incumbent, then
    depth-first search in canonical action order with memoized states and an
    admissible bound confirms or improves it.
    """
    t0 = time.perf_counter()
    work = program.work
    nodes = 0
    state0 = _initial_state(program)

    if state0[0]:  # goal already satisfied: empty plan, before any search
        return _result(program, state0, [], None, t0, work, nodes)

    incumbent = None  # (score, -len, plan_key)
    best_actions = None
    for cand in _template_plans(program, state0):
        work += 1
        if not _valid(program, state0, cand):
            continue
        score = _plan_score(program, state0, cand)
        entry = (score, -len(cand), _plan_key(cand))
        if _better(entry, incumbent):
            incumbent = entry
            best_actions = cand

    max_score = max(program.scores.values()) if program.scores else 0
    memo: dict = {}
    prefix: list[Action] = []
    prefix_keys: list[tuple] = []

    def dfs(state, depth):
        nonlocal incumbent, best_actions, work, nodes
        nodes += 1
        seen = memo.get(state)
        if seen is not None and seen <= depth:
            return
        memo[state] = depth
        for a in program.actions:
            work += 1
            if not _legal(state, a):
                continue
            nxt = _apply(state, a)
            d = depth + 1
            lb = _min_remaining(nxt, program)
            if d + lb > program.horizon:
                continue
            prefix.append(a)
            prefix_keys.append(action_key(a))
            if incumbent is not None:
                bound = (-(d + lb), max_score)
                cur = (incumbent[1], incumbent[0])
                if bound < cur:
                    prefix.pop(); prefix_keys.pop()
                    continue
                if bound == cur and tuple(prefix_keys) > incumbent[2][: len(prefix_keys)]:
                    prefix.pop(); prefix_keys.pop()
                    continue
            if nxt[0]:  # goal reached; extensions past it are dominated
                entry = (
                    _plan_score(program, state0, prefix),
                    -d,
                    tuple(prefix_keys),
                )
                if _better(entry, incumbent):
                    incumbent = entry
                    best_actions = list(prefix)
            elif d < program.horizon:
                dfs(nxt, d)
            prefix.pop()
            prefix_keys.pop()

    dfs(state0, 0)

    if best_actions is None:
        return _no_plan(program, state0, t0, work, nodes)
    return _result(program, state0, best_actions, incumbent[0], t0, work, nodes)


def brute_force_oracle(program: DomainProgram) -> PlanResult:
    """Exhaustive reference optimum. Small instances only."""
    if program.grid.n > 3 or program.horizon > 4:
        raise ValueError("oracle accepts at most a 3x3 grid and horizon 4")
    t0 = time.perf_counter()
    state0 = _initial_state(program)
    if state0[0]:
        return _result(program, state0, [], None, t0, 0, 0)

    best = None
    best_actions = None
    nodes = 0

    def walk(state, actions):
        nonlocal best, best_actions, nodes
        nodes += 1
        if state[0]:
            entry = (_plan_score(program, state0, actions), -len(actions), _plan_key(actions))
            if _better(entry, best):
                best = entry
                best_actions = list(actions)
            return  # longer extensions only lose on length
        if len(actions) >= program.horizon:
            return
        for a in program.actions:
            if _legal(state, a):
                walk(_apply(state, a), actions + [a])

    walk(state0, [])
    if best_actions is None:
        return _no_plan(program, state0, t0, 0, nodes)
    return _result(program, state0, best_actions, best[0], t0, 0, nodes)


# ~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~
# rendering
# ~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~


def atom_str(atom) -> str:
    name = atom[0]
    args = ",".join(f"b{v}" if isinstance(v, int) else str(v) for v in atom[1:])
    return f"{name}({args})" if args else name


def render_history(result: PlanResult) -> str:
    """One line per timestep: ground atoms, then the chosen action if any."""
    lines = []
    for t, (fluents, action) in enumerate(result.history.steps):
        atoms = ", ".join(sorted(atom_str(a) for a in fluents))
        line = f"t={t}: {atoms}"
        if action is not None:
            line += f" | action: {action}"
        lines.append(line)
    return "\n".join(lines)
