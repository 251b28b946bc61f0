"""Quasi-static equilibrium of the slab under Dirichlet constraint sets.

Two kinds of constraints exist: attachment nodes (bottom-surface nodes under
an attachment patch, pinned to their rest positions) and grasp sets
(top-surface nodes rigidly following a tool tip). Equilibrium is found by
Newton iterations on the free-node residual; each linear step is solved
iteratively (conjugate gradients with a cached incomplete-LU
preconditioner). Geometry in mm, forces in N.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from retractlab.fem import kernels
from retractlab.fem.material import Material
from retractlab.fem.mesh import FemMesh
from retractlab.model import Config, EnvState, Scenario

__all__ = [
    "ConvergenceError",
    "GraspError",
    "Grasp",
    "SolveStats",
    "TissueSim",
    "attach_grasp",
    "release_grasp",
    "set_tool",
    "solve_equilibrium",
    "env_snapshot",
    "elastic_energy",
    "internal_forces",
]


class ConvergenceError(RuntimeError):
    """Newton failed to reach the residual tolerance (step too large)."""

    def __init__(self, message: str, residual: float = float("nan")):
        super().__init__(message)
        self.residual = residual


class GraspError(RuntimeError):
    """A grasp command could not be realised (empty set, double grasp...)."""


@dataclass
class Grasp:
    """Nodes rigidly attached to a tool tip."""

    nodes: np.ndarray  # node ids, top surface
    offsets: np.ndarray  # node position - tip, frozen at attach time
    tip: np.ndarray  # current commanded tip position


@dataclass
class SolveStats:
    iterations: int
    residual: float
    cg_iterations: int


def _lattice_disc_mask(xy: np.ndarray, centers: np.ndarray, radius: float) -> np.ndarray:
    mask = np.zeros(len(xy), dtype=bool)
    for c in centers:
        mask |= np.sum((xy - c) ** 2, axis=1) <= radius**2
    return mask


class TissueSim:
    """Owner of one simulated slab: mesh, material, constraints, state."""

    def __init__(self, mesh: FemMesh, material: Material, config: Config, scenario: Scenario):
        self.mesh = mesh
        self.material = material
        self.config = config
        self.rest = mesh.nodes
        self.positions = mesh.nodes.copy()
        self.reactions = np.zeros_like(self.positions)
        self.grasps: dict[str, Grasp] = {}
        self.last_stats: Optional[SolveStats] = None
        self.roi = scenario.roi.copy()

        # attachment constraints on the bottom face, and their "shadow"
        # on the visible top face (same xy disc test, congruent lattices)
        bxy = mesh.nodes[mesh.bottom_idx][:, :2]
        self.ap_nodes = mesh.bottom_idx[
            _lattice_disc_mask(bxy, scenario.ap_centers, config.ap_radius)
        ]
        txy = mesh.nodes[mesh.top_idx][:, :2]
        self.top_fixed = np.flatnonzero(
            _lattice_disc_mask(txy, scenario.ap_centers, config.ap_radius)
        )

        self._lam, self._mu = material.lame_mm

        # COO assembly scaffolding: rows/cols for the raveled (ne, 24, 24)
        # stiffness blocks, q fastest
        dof = (3 * mesh.elems[:, :, None].astype(np.int64) + np.arange(3)).reshape(
            mesh.n_elems, 24
        )
        self._rows = np.repeat(dof, 24, axis=1).ravel()
        self._cols = np.tile(dof, (1, 24)).ravel()

        # constraint-pattern cache (rebuilt when the fixed set changes)
        self._pattern_key: Optional[bytes] = None
        self._free_dofs: Optional[np.ndarray] = None
        self._rfree = self._cfree = self._vmask = None
        self._ilu = None

    # ~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~
    # constraint bookkeeping

    def _constraint_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        """(node ids, target positions) over all active constraints."""
        ids = [self.ap_nodes]
        targets = [self.rest[self.ap_nodes]]
        for arm in sorted(self.grasps):
            g = self.grasps[arm]
            ids.append(g.nodes)
            targets.append(g.tip + g.offsets)
        return np.concatenate(ids), np.concatenate(targets)

    def _refresh_pattern(self, fixed_ids: np.ndarray) -> None:
        key = hashlib.sha1(np.sort(fixed_ids).astype(np.int64).tobytes()).digest()
        if key == self._pattern_key:
            return
        n_dofs = 3 * self.mesh.n_nodes
        free = np.ones(n_dofs, dtype=bool)
        free[(3 * fixed_ids[:, None] + np.arange(3)).ravel()] = False
        freemap = np.full(n_dofs, -1, dtype=np.int64)
        free_idx = np.flatnonzero(free)
        freemap[free_idx] = np.arange(len(free_idx))
        rmap = freemap[self._rows]
        cmap = freemap[self._cols]
        vmask = (rmap >= 0) & (cmap >= 0)
        self._rfree = rmap[vmask]
        self._cfree = cmap[vmask]
        self._vmask = vmask
        self._free_dofs = free_idx
        self._pattern_key = key
        self._ilu = None

    # ~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~
    # kernel shortcuts

    def _energy(self, x: np.ndarray) -> float:
        u = x - self.rest
        return kernels.energy(u, self.mesh.elems, self.mesh.dN, self.mesh.dV, self._lam, self._mu)

    def _gradient(self, x: np.ndarray) -> np.ndarray:
        u = x - self.rest
        return kernels.gradient(
            u, self.mesh.elems, self.mesh.dN, self.mesh.dV, self._lam, self._mu
        )

    def _stiffness(self, x: np.ndarray, nf: int) -> sp.csr_matrix:
        u = x - self.rest
        vals = kernels.stiffness_blocks(
            u, self.mesh.elems, self.mesh.dN, self.mesh.dV, self._lam, self._mu
        )
        data = vals.reshape(-1)[self._vmask]
        return sp.csr_matrix((data, (self._rfree, self._cfree)), shape=(nf, nf))

    def _linear_solve(self, K: sp.csr_matrix, b: np.ndarray) -> tuple[np.ndarray, int]:
        nf = K.shape[0]
        if nf == 0:
            return np.zeros(0), 0
        if self._ilu is None:
            self._ilu = _build_ilu(K)
        count = [0]

        def cb(_):
            count[0] += 1

        M = None
        if self._ilu is not None:
            M = spla.LinearOperator(K.shape, self._ilu.solve)
        d, info = _cg(K, b, M=M, rtol=1e-6, atol=0.0, maxiter=400, callback=cb)
        if info != 0:
            self._ilu = _build_ilu(K)  # stale preconditioner: rebuild once
            if self._ilu is not None:
                M = spla.LinearOperator(K.shape, self._ilu.solve)
                d, info = _cg(K, b, M=M, rtol=1e-6, atol=0.0, maxiter=800, callback=cb)
            if info != 0:
                d = spla.spsolve(K.tocsc(), b)
        elif count[0] > 60:
            self._ilu = None  # refresh next call
        return d, count[0]


def _build_ilu(K: sp.csr_matrix):
    try:
        return spla.spilu(K.tocsc(), drop_tol=1e-5, fill_factor=12.0)
    except RuntimeError:
        return None


def _cg(A, b, **kw):
    try:
        return spla.cg(A, b, **kw)
    except TypeError:  # older scipy: tol instead of rtol
        kw["tol"] = kw.pop("rtol")
        return spla.cg(A, b, **kw)


# ~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~
# public operations
# ~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~~


def attach_grasp(sim: TissueSim, arm: str, tool_pos) -> TissueSim:
    """Bind all top-surface nodes within grasp_radius of the tool tip."""
    if arm in sim.grasps:
        raise GraspError(f"{arm} already holds a grasp")
    tool = np.asarray(tool_pos, dtype=float)
    top = sim.mesh.top_idx
    d = np.linalg.norm(sim.positions[top] - tool, axis=1)
    ids = top[d <= sim.config.grasp_radius]
    if len(ids) == 0:
        raise GraspError("no tissue within grasp radius of the tool")
    for other in sim.grasps.values():
        if np.intersect1d(ids, other.nodes).size:
            raise GraspError("grasp sets of the two arms overlap")
    offsets = sim.positions[ids] - tool
    sim.grasps[arm] = Grasp(nodes=ids, offsets=offsets, tip=tool.copy())
    return sim


def release_grasp(sim: TissueSim, arm: str) -> TissueSim:
    if arm not in sim.grasps:
        raise GraspError(f"{arm} has no active grasp")
    del sim.grasps[arm]
    return sim


def set_tool(sim: TissueSim, arm: str, tool_pos) -> TissueSim:
    """Update the commanded tip of an active grasp."""
    if arm not in sim.grasps:
        raise GraspError(f"{arm} has no active grasp")
    sim.grasps[arm].tip = np.asarray(tool_pos, dtype=float)
    return sim


def _line_search(sim: TissueSim, x, free, d, slope: float, e0: float):
    """Backtracking Armijo step along d; None if no acceptable step exists."""
    if slope >= 0.0 or not np.isfinite(slope):
        return None
    dmax = float(np.abs(d).max()) if len(d) else 0.0
    alpha = 1.0
    xf = x.reshape(-1)
    for _ in range(30):
        if alpha * dmax < 1e-12:  # step below resolvable displacement
            return None
        xt = xf.copy()
        xt[free] += alpha * d
        xt = xt.reshape(-1, 3)
        if sim._energy(xt) <= e0 + 1e-4 * alpha * slope:
            return xt
        alpha *= 0.5
    return None


def _damped_step(sim: TissueSim, K, r, x, free, e0: float, rmax: float, tau0: float):
    """Levenberg-style fallback near instabilities (indefinite stiffness).

    Adds tau*I to the stiffness until the solve yields an energy-decreasing
    direction. StVK is not convex, so plain Newton can point uphill near
    snap-through states; damping restores a descent step at the cost of a
    shorter one. Returns (new x, accepted tau).
    """
    scale = float(K.diagonal().mean()) if K.shape[0] else 1.0
    if not np.isfinite(scale) or scale <= 0.0:
        scale = 1.0
    eye = sp.identity(K.shape[0], format="csr")
    tau = max(tau0, 1e-6 * scale)
    while tau <= 1e9 * scale:
        d = spla.spsolve((K + tau * eye).tocsc(), -r)
        xn = _line_search(sim, x, free, d, float(r @ d), e0)
        if xn is not None:
            return xn, tau
        tau *= 10.0
    raise ConvergenceError(f"line search stalled at residual {rmax:.3e} N", residual=rmax)


def solve_equilibrium(sim: TissueSim, *, tol: float = 1e-6, max_iter: int = 50) -> TissueSim:
    """Newton-iterate the free nodes to equilibrium.

    Converged when the free-node residual max-norm drops below ``tol`` (N).
    Raises ConvergenceError after ``max_iter`` accepted iterations, carrying
    the last residual.
    """
    fixed_ids, targets = sim._constraint_arrays()
    sim._refresh_pattern(fixed_ids)
    free = sim._free_dofs
    nf = len(free)

    x = sim.positions.copy()
    if not sim.grasps:
        # unique unloaded equilibrium: the rest state
        x = sim.rest.copy()
    x[fixed_ids] = targets

    cg_total = 0
    it = 0
    tau = 0.0  # active damping level, 0 while plain Newton suffices
    while True:
        g = sim._gradient(x)
        r = g.reshape(-1)[free]
        rmax = float(np.abs(r).max()) if nf else 0.0
        if rmax < tol:
            break
        if it >= max_iter:
            raise ConvergenceError(
                f"no convergence after {max_iter} Newton iterations "
                f"(residual {rmax:.3e} N); reduce the control step",
                residual=rmax,
            )
        K = sim._stiffness(x, nf)
        e0 = sim._energy(x)
        xn = None
        if tau == 0.0:
            d, its = sim._linear_solve(K, -r)
            cg_total += its
            xn = _line_search(sim, x, free, d, float(r @ d), e0)
            if xn is not None:
                x = xn
                it += 1
                continue
        scale = float(K.diagonal().mean()) if nf else 1.0
        x, accepted = _damped_step(sim, K, r, x, free, e0, rmax, tau)
        # decay the damping on success; drop back to plain Newton once small
        tau = accepted / 10.0
        if tau < 1e-6 * scale:
            tau = 0.0
        it += 1

    sim.positions = x
    sim.reactions = -g
    sim.last_stats = SolveStats(iterations=it, residual=rmax, cg_iterations=cg_total)
    return sim


def env_snapshot(sim: TissueSim) -> EnvState:
    """Observable snapshot: top-surface cloud, AP shadow, reaction field."""
    top = sim.mesh.top_idx
    sigma = np.zeros(sim.mesh.n_nodes)
    cons = [sim.ap_nodes] + [g.nodes for _, g in sorted(sim.grasps.items())]
    cons = np.concatenate(cons) if cons else np.empty(0, dtype=int)
    if len(cons):
        sigma[cons] = np.linalg.norm(sim.reactions[cons], axis=1)
    return EnvState(
        points=sim.positions[top].copy(),
        rest_points=sim.rest[top].copy(),
        fixed_indices=sim.top_fixed.copy(),
        sigma=sigma,
        roi=sim.roi.copy(),
    )


def elastic_energy(mesh: FemMesh, material: Material, positions) -> float:
    """Total StVK strain energy (N*mm) of a nodal configuration."""
    x = np.ascontiguousarray(np.asarray(positions, dtype=float))
    if x.shape != mesh.nodes.shape:
        raise ValueError("positions do not conform to the mesh")
    lam, mu = material.lame_mm
    return kernels.energy(x - mesh.nodes, mesh.elems, mesh.dN, mesh.dV, lam, mu)


def internal_forces(mesh: FemMesh, material: Material, positions) -> np.ndarray:
    """Per-node internal force (N): minus the energy gradient."""
    x = np.ascontiguousarray(np.asarray(positions, dtype=float))
    if x.shape != mesh.nodes.shape:
        raise ValueError("positions do not conform to the mesh")
    lam, mu = material.lame_mm
    return -kernels.gradient(x - mesh.nodes, mesh.elems, mesh.dN, mesh.dV, lam, mu)
