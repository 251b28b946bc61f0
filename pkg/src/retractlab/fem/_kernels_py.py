"""Vectorised numpy reference implementation of the element kernels.

All three kernels evaluate the St. Venant-Kirchhoff law
W = lambda/2 tr(E)^2 + mu tr(E^2), E = (F^T F - I)/2, on precomputed
material shape gradients ``dN`` (n_e, n_gp, 8, 3) and weights ``dV``
(n_e, n_gp). ``u`` holds nodal displacements from rest, (n_nodes, 3);
``lam``/``mu`` must be given in force/length^2 units consistent with the
geometry.

The deformation gradient is built as F = I + sum_a u_a (x) dN_a with a fixed
pairwise reduction tree ((t0+t1)+(t2+t3)) + ((t4+t5)+(t6+t7)). Together with
the mirror-symmetric gradients of a box element this cancels bitwise for a
rigid translation, making the energy of a translated rest state exactly
zero. The compiled backend follows the same tree.

This module is the semantic oracle for the compiled backend.
"""

from __future__ import annotations

import numpy as np

__all__ = ["energy", "gradient", "stiffness_blocks"]

_I3 = np.eye(3)


def _def_grad(u, elems, dN):
    """F per (element, gauss point), shape (ne, n_gp, 3, 3)."""
    ue = u[elems]  # (ne, 8, 3)

    def term(a):
        # t_a[e,g,i,m] = ue[e,a,i] * dN[e,g,a,m]
        return ue[:, a, None, :, None] * dN[:, :, a, None, :]

    g = (term(0) + term(1)) + (term(2) + term(3))
    g += (term(4) + term(5)) + (term(6) + term(7))
    return g + _I3


def _green_strain(F):
    return 0.5 * (np.einsum("egki,egkm->egim", F, F) - _I3)


def energy(u, elems, dN, dV, lam, mu) -> float:
    """Total strain energy."""
    E = _green_strain(_def_grad(u, elems, dN))
    tr = np.trace(E, axis1=2, axis2=3)
    e2 = np.einsum("egim,egim->eg", E, E)
    w = 0.5 * lam * tr**2 + mu * e2
    return float(np.sum(w * dV))


def _stress(E, lam, mu):
    tr = np.trace(E, axis1=2, axis2=3)
    return lam * tr[..., None, None] * _I3 + 2.0 * mu * E


def gradient(u, elems, dN, dV, lam, mu) -> np.ndarray:
    """d(energy)/d(positions), shape (n_nodes, 3)."""
    F = _def_grad(u, elems, dN)
    S = _stress(_green_strain(F), lam, mu)
    P = np.einsum("egik,egkm->egim", F, S)
    ge = np.einsum("egim,egam,eg->eai", P, dN, dV)
    out = np.zeros_like(u)
    np.add.at(out, elems.ravel(), ge.reshape(-1, 3))
    return out


def stiffness_blocks(u, elems, dN, dV, lam, mu) -> np.ndarray:
    """Element tangent stiffness, shape (n_elems, 24, 24).

    Row/column p = 3*a + i for local node a and component i.
    """
    F = _def_grad(u, elems, dN)
    S = _stress(_green_strain(F), lam, mu)

    H = np.einsum("egim,egam->egai", F, dN)  # F dN_a
    gram = np.einsum("egam,egbm->egab", dN, dN)
    geo = np.einsum("egam,egmn,egbn->egab", dN, S, dN)
    ff = np.einsum("egik,egjk->egij", F, F)

    k = np.einsum("eg,egai,egbj->eaibj", lam * dV, H, H)
    k += np.einsum("eg,egbi,egaj->eaibj", mu * dV, H, H)
    k += np.einsum("eg,egab,egij->eaibj", mu * dV, gram, ff)
    k += np.einsum("eg,egab,ij->eaibj", dV, geo, _I3)
    ne = elems.shape[0]
    return np.ascontiguousarray(k.reshape(ne, 24, 24))
