"""Element kernel tests against independent oracles.

The energy oracle is evaluated by hand: for uniaxial stretch x -> 1.05 x of
a unit cube with nu = 0, the only nonzero Green strain component is
E_xx = (1.05^2 - 1) / 2 = 0.05125, so the density is mu * E_xx^2 with
mu = E / 2 = 1500 Pa = 1.5e-3 N/mm^2, giving

    W = 1.5e-3 * 0.05125^2 * 1 mm^3 = 3.93984375e-06 N*mm.

Forces are checked against central finite differences of the energy, and
rigid motions against the analytic zero.
"""

import numpy as np
import pytest

from retractlab.fem import Material, build_slab_mesh, kernels
from retractlab.fem.material import lame_params

UNIAXIAL_ENERGY = 3.93984375e-06  # N*mm, hand-evaluated above


def all_backends():
    return sorted(kernels.implementations().items())


def params(mesh, material):
    lam, mu = material.lame_mm
    return mesh.elems, mesh.dN, mesh.dV, lam, mu


def test_lame_params():
    lam, mu = lame_params(3000.0, 0.45)
    assert lam == pytest.approx(9310.344827586207)
    assert mu == pytest.approx(1034.4827586206898)


def test_lame_params_rejects_limits():
    with pytest.raises(ValueError):
        lame_params(3000.0, 0.5)
    with pytest.raises(ValueError):
        lame_params(-1.0, 0.3)


def test_material_mm_units():
    lam, mu = Material(3000.0, 0.45).lame_mm
    assert lam == pytest.approx(9310.344827586207e-6)
    assert mu == pytest.approx(1034.4827586206898e-6)


@pytest.mark.parametrize("name,impl", all_backends())
def test_uniaxial_stretch_oracle(name, impl):
    mesh = build_slab_mesh((1.0, 1.0, 1.0), (1, 1, 1))
    mat = Material(young_modulus=3000.0, poisson_ratio=0.0)
    u = np.zeros_like(mesh.nodes)
    u[:, 0] = 0.05 * mesh.nodes[:, 0]
    e = impl.energy(u, *params(mesh, mat))
    assert e == pytest.approx(UNIAXIAL_ENERGY, rel=1e-12)


@pytest.mark.parametrize("name,impl", all_backends())
def test_rest_state_energy_and_forces_vanish(name, impl, std_mesh, material):
    u = np.zeros_like(std_mesh.nodes)
    assert impl.energy(u, *params(std_mesh, material)) == 0.0
    g = impl.gradient(u, *params(std_mesh, material))
    assert np.all(g == 0.0)


@pytest.mark.parametrize("name,impl", all_backends())
def test_rigid_translation_energy_is_exactly_zero(name, impl, std_mesh, material):
    # the reference shape gradients sum to zero bitwise at every gauss
    # point, so a constant displacement leaves F = I with no round-off
    u = np.tile(np.array([7.0, -3.0, 2.0]), (std_mesh.n_nodes, 1))
    assert impl.energy(u, *params(std_mesh, material)) == 0.0


@pytest.mark.parametrize("name,impl", all_backends())
def test_rigid_rotation_energy_negligible(name, impl, std_mesh, material):
    axis = np.array([1.0, 2.0, 3.0])
    axis /= np.linalg.norm(axis)
    angle = 0.7
    kmat = np.array(
        [
            [0.0, -axis[2], axis[1]],
            [axis[2], 0.0, -axis[0]],
            [-axis[1], axis[0], 0.0],
        ]
    )
    rot = np.eye(3) + np.sin(angle) * kmat + (1 - np.cos(angle)) * (kmat @ kmat)
    u = std_mesh.nodes @ rot.T - std_mesh.nodes
    e = impl.energy(u, *params(std_mesh, material))
    _, mu = material.lame_mm
    scale = mu * std_mesh.volume  # energy of an O(1) strain
    assert abs(e) / scale < 1e-10


@pytest.mark.parametrize("name,impl", all_backends())
def test_gradient_matches_finite_differences(name, impl, rng):
    mesh = build_slab_mesh((10.0, 10.0, 5.0), (2, 2, 1))
    mat = Material()
    args = params(mesh, mat)
    u = 0.5 * rng.standard_normal(mesh.nodes.shape)
    g = impl.gradient(u, *args)
    h = 1e-6 * 5.0  # 1e-6 of the element edge length
    fd = np.zeros_like(g)
    for n in range(mesh.n_nodes):
        for i in range(3):
            up, dn = u.copy(), u.copy()
            up[n, i] += h
            dn[n, i] -= h
            fd[n, i] = (impl.energy(up, *args) - impl.energy(dn, *args)) / (2 * h)
    rel = np.linalg.norm(fd - g) / np.linalg.norm(g)
    assert rel < 1e-4


@pytest.mark.parametrize("name,impl", all_backends())
def test_net_internal_force_is_zero(name, impl, rng, material):
    # translation invariance of the energy implies the forces sum to zero
    mesh = build_slab_mesh((10.0, 10.0, 5.0), (2, 2, 1))
    u = 0.5 * rng.standard_normal(mesh.nodes.shape)
    g = impl.gradient(u, *params(mesh, material))
    assert np.linalg.norm(g.sum(axis=0)) < 1e-12 * np.linalg.norm(g)


@pytest.mark.parametrize("name,impl", all_backends())
def test_stiffness_blocks_symmetric(name, impl, rng, material):
    mesh = build_slab_mesh((10.0, 10.0, 5.0), (2, 2, 1))
    u = 0.5 * rng.standard_normal(mesh.nodes.shape)
    k = impl.stiffness_blocks(u, *params(mesh, material))
    assert k.shape == (mesh.n_elems, 24, 24)
    assert np.allclose(k, np.transpose(k, (0, 2, 1)), atol=1e-12 * np.abs(k).max())


@pytest.mark.parametrize("name,impl", all_backends())
def test_stiffness_matches_gradient_differences(name, impl, rng, material):
    mesh = build_slab_mesh((2.0, 2.0, 2.0), (1, 1, 1))
    args = params(mesh, material)
    u = 0.2 * rng.standard_normal(mesh.nodes.shape)
    k = impl.stiffness_blocks(u, *args)[0]
    h = 1e-6 * 2.0
    elem = mesh.elems[0]
    fd = np.zeros((24, 24))
    for b in range(8):
        for j in range(3):
            up, dn = u.copy(), u.copy()
            up[elem[b], j] += h
            dn[elem[b], j] -= h
            dg = (impl.gradient(up, *args) - impl.gradient(dn, *args)) / (2 * h)
            fd[:, 3 * b + j] = dg[elem].ravel()
    assert np.linalg.norm(fd - k) / np.linalg.norm(k) < 1e-5


def test_backend_parity(rng, material):
    impls = kernels.implementations()
    if len(impls) < 2:
        pytest.skip("compiled backend not available")
    mesh = build_slab_mesh((20.0, 20.0, 5.0), (4, 4, 1))
    args = params(mesh, material)
    u = 0.5 * rng.standard_normal(mesh.nodes.shape)
    e = {n: im.energy(u, *args) for n, im in impls.items()}
    g = {n: im.gradient(u, *args) for n, im in impls.items()}
    k = {n: im.stiffness_blocks(u, *args) for n, im in impls.items()}
    assert e["cython"] == pytest.approx(e["numpy"], rel=1e-12)
    assert np.allclose(g["cython"], g["numpy"], rtol=1e-12, atol=1e-15)
    assert np.allclose(k["cython"], k["numpy"], rtol=1e-12, atol=1e-12)


def test_active_backend_is_reported():
    assert kernels.backend() in kernels.implementations()
