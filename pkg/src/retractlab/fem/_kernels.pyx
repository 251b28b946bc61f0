# cython: boundscheck=False, wraparound=False, initializedcheck=False, cdivision=True
"""Compiled element kernels (St. Venant-Kirchhoff hexahedra).

Semantics match retractlab.fem._kernels_py exactly, including the pairwise
reduction tree used to assemble the deformation gradient from displacements;
see that module for the array contracts.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


cdef inline void _def_grad(double[:, ::1] u, int* nd,
                           double[:, :, :, ::1] dN,
                           Py_ssize_t e, Py_ssize_t g,
                           double F[3][3]) noexcept nogil:
    cdef Py_ssize_t i, m
    cdef double t0, t1, t2, t3, t4, t5, t6, t7
    for i in range(3):
        for m in range(3):
            t0 = u[nd[0], i] * dN[e, g, 0, m]
            t1 = u[nd[1], i] * dN[e, g, 1, m]
            t2 = u[nd[2], i] * dN[e, g, 2, m]
            t3 = u[nd[3], i] * dN[e, g, 3, m]
            t4 = u[nd[4], i] * dN[e, g, 4, m]
            t5 = u[nd[5], i] * dN[e, g, 5, m]
            t6 = u[nd[6], i] * dN[e, g, 6, m]
            t7 = u[nd[7], i] * dN[e, g, 7, m]
            F[i][m] = ((t0 + t1) + (t2 + t3)) + ((t4 + t5) + (t6 + t7))
        F[i][i] += 1.0


cdef inline void _strain_stress(double F[3][3], double lam, double mu,
                                double E[3][3], double S[3][3]) noexcept nogil:
    cdef Py_ssize_t i, m, n
    cdef double d, tr = 0.0
    for m in range(3):
        for n in range(3):
            d = 0.0
            for i in range(3):
                d += F[i][m] * F[i][n]
            if m == n:
                d -= 1.0
            E[m][n] = 0.5 * d
        tr += E[m][m]
    for m in range(3):
        for n in range(3):
            S[m][n] = 2.0 * mu * E[m][n]
        S[m][m] += lam * tr


def energy(double[:, ::1] u, int[:, ::1] elems,
           double[:, :, :, ::1] dN, double[:, ::1] dV,
           double lam, double mu):
    cdef Py_ssize_t ne = elems.shape[0]
    cdef Py_ssize_t ng = dN.shape[1]
    cdef Py_ssize_t e, g, a, m, n
    cdef int nd[8]
    cdef double F[3][3]
    cdef double E[3][3]
    cdef double S[3][3]
    cdef double tr, e2, total = 0.0

    for e in range(ne):
        for a in range(8):
            nd[a] = elems[e, a]
        for g in range(ng):
            _def_grad(u, nd, dN, e, g, F)
            _strain_stress(F, lam, mu, E, S)
            tr = 0.0
            e2 = 0.0
            for m in range(3):
                tr += E[m][m]
                for n in range(3):
                    e2 += E[m][n] * E[m][n]
            total += (0.5 * lam * tr * tr + mu * e2) * dV[e, g]
    return total


def gradient(double[:, ::1] u, int[:, ::1] elems,
             double[:, :, :, ::1] dN, double[:, ::1] dV,
             double lam, double mu):
    cdef Py_ssize_t ne = elems.shape[0]
    cdef Py_ssize_t ng = dN.shape[1]
    cdef Py_ssize_t e, g, a, i, m, n
    cdef int nd[8]
    cdef double F[3][3]
    cdef double E[3][3]
    cdef double S[3][3]
    cdef double P[3][3]
    cdef double d, w

    out_arr = np.zeros((u.shape[0], 3), dtype=np.float64)
    cdef double[:, ::1] out = out_arr

    for e in range(ne):
        for a in range(8):
            nd[a] = elems[e, a]
        for g in range(ng):
            _def_grad(u, nd, dN, e, g, F)
            _strain_stress(F, lam, mu, E, S)
            for i in range(3):
                for m in range(3):
                    d = 0.0
                    for n in range(3):
                        d += F[i][n] * S[n][m]
                    P[i][m] = d
            w = dV[e, g]
            for a in range(8):
                for i in range(3):
                    d = 0.0
                    for m in range(3):
                        d += P[i][m] * dN[e, g, a, m]
                    out[nd[a], i] += d * w
    return out_arr


def stiffness_blocks(double[:, ::1] u, int[:, ::1] elems,
                     double[:, :, :, ::1] dN, double[:, ::1] dV,
                     double lam, double mu):
    cdef Py_ssize_t ne = elems.shape[0]
    cdef Py_ssize_t ng = dN.shape[1]
    cdef Py_ssize_t e, g, a, b, i, j, m, n
    cdef int nd[8]
    cdef double F[3][3]
    cdef double E[3][3]
    cdef double S[3][3]
    cdef double C[3][3]
    cdef double H[8][3]
    cdef double d, w, gram, geo

    out_arr = np.zeros((ne, 24, 24), dtype=np.float64)
    cdef double[:, :, ::1] K = out_arr

    for e in range(ne):
        for a in range(8):
            nd[a] = elems[e, a]
        for g in range(ng):
            w = dV[e, g]
            _def_grad(u, nd, dN, e, g, F)
            _strain_stress(F, lam, mu, E, S)
            # C = F F^T
            for i in range(3):
                for j in range(3):
                    d = 0.0
                    for m in range(3):
                        d += F[i][m] * F[j][m]
                    C[i][j] = d
            for a in range(8):
                for i in range(3):
                    d = 0.0
                    for m in range(3):
                        d += F[i][m] * dN[e, g, a, m]
                    H[a][i] = d
            for a in range(8):
                for b in range(8):
                    gram = 0.0
                    for m in range(3):
                        gram += dN[e, g, a, m] * dN[e, g, b, m]
                    geo = 0.0
                    for m in range(3):
                        d = 0.0
                        for n in range(3):
                            d += S[m][n] * dN[e, g, b, n]
                        geo += dN[e, g, a, m] * d
                    for i in range(3):
                        for j in range(3):
                            d = lam * H[a][i] * H[b][j]
                            d += mu * H[b][i] * H[a][j]
                            d += mu * gram * C[i][j]
                            if i == j:
                                d += geo
                            K[e, 3 * a + i, 3 * b + j] += d * w
    return out_arr
