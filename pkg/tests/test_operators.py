import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from fracneumann.analysis import random_smooth_field
from fracneumann.geometry import ExteriorTruncation, build_mesh
from fracneumann.kernel import Params, normalization_constant
from fracneumann.operators import (Field, MeshMismatch, bilinear_form, exterior_closure, exterior_closure_at,
                                   far_field_mean, frac_laplacian, green_identity, green_identity_residual,
                                   neumann_all, neumann_operator, seminorm_form)

P1 = Params(1, 0.25, 2.0, 0.2)
P2 = Params(2, 0.5, 2.0, 0.2)


def test_field_validation(line_mesh, disk_mesh):
    with pytest.raises(MeshMismatch):
        Field(line_mesh, np.zeros(3))
    with pytest.raises(ValueError):
        Field(line_mesh, np.full(line_mesh.n_cells, np.nan))
    u = Field.constant(line_mesh, 1.0)
    with pytest.raises(MeshMismatch):
        bilinear_form(u, Field.constant(disk_mesh, 1.0), P1)


def test_constant_bilinear(disk_mesh):
    u = Field.constant(disk_mesh, 3.0)
    b = bilinear_form(u, u, P2)
    assert b.seminorm == 0.0
    assert b.total == pytest.approx(9.0 * disk_mesh.weights[: disk_mesh.n_interior].sum(), rel=1e-14)


def test_bilinearity_and_symmetry(line_mesh, rng):
    u, v, w = (random_smooth_field(line_mesh, rng) for _ in range(3))
    lhs = bilinear_form(u, v + w, P1).total
    rhs = bilinear_form(u, v, P1).total + bilinear_form(u, w, P1).total
    assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-12)
    assert seminorm_form(u, v, P1) == seminorm_form(v, u, P1)


def test_tent_norm_scales_like_inverse_eps(interval):
    from fracneumann.analysis import TentSpec, tent_field

    vals = []
    for eps in (0.2, 0.1):
        m = build_mesh(interval, eps / 8)
        P = P1.with_eps(eps)
        phi = tent_field(TentSpec((0.0,), eps), m)
        vals.append(bilinear_form(phi, phi, P).total * eps)
    assert vals[1] / vals[0] == pytest.approx(1.0, rel=0.25)


def test_neumann_constant_zero(disk_mesh):
    u = Field.constant(disk_mesh, 2.0)
    assert np.all(neumann_all(u, P2) == 0.0)
    assert neumann_operator(u, np.array([1.5, 0.2]), P2) == 0.0


def test_neumann_after_closure(disk_mesh, rng):
    w = random_smooth_field(disk_mesh, rng).interior
    u = exterior_closure(w, P2, disk_mesh)
    assert np.abs(neumann_all(u, P2)).max() <= 1e-10 * np.abs(w).max()


def test_neumann_point_oracle(line_mesh):
    P = Params(1, 0.25, 2.0, 0.2)
    u = Field.from_function(line_mesh, lambda x: x[:, 0])
    oracle = normalization_constant(1, 0.25) * quad(lambda y: (0 - y) / abs(2 - y) ** 1.5, -1, 1)[0]
    assert neumann_operator(u, np.array([2.0]), P, ux=0.0) == pytest.approx(oracle, rel=0.01)


def test_closure_of_constant(disk_mesh):
    u = exterior_closure(np.full(disk_mesh.n_interior, 1.7), P2, disk_mesh)
    np.testing.assert_allclose(u.exterior, 1.7, rtol=1e-13)
    assert u.far == pytest.approx(1.7, rel=1e-13)


def test_closure_bounds(disk_mesh, rng):
    w = np.abs(random_smooth_field(disk_mesh, rng).interior)
    u = exterior_closure(w, P2, disk_mesh)
    ext = np.append(u.exterior, u.far)
    assert ext.min() >= w.min() - 1e-13 and ext.max() <= w.max() + 1e-13


@pytest.mark.parametrize("mesh_name", ["line_mesh", "disk_mesh"])
def test_far_field_mean(mesh_name, request, rng):
    mesh = request.getfixturevalue(mesh_name)
    P = Params(mesh.dim, 0.5, 2.0, 0.2)
    w = random_smooth_field(mesh, rng).interior
    w = w - w.min() + 0.1 * np.abs(w).max()
    u = exterior_closure(w, P, mesh)
    vol = mesh.weights[: mesh.n_interior]
    mean = vol @ w / vol.sum()
    assert abs(far_field_mean(u, P, 4 * mesh.domain.diameter) / mean - 1) < 0.02


def test_far_field_symmetric_single_point(disk_mesh):
    # a radial field has no dipole, so one direction already sees the mean
    P = Params(2, 0.5, 2.0, 0.2)
    w = 1 + np.linalg.norm(disk_mesh.points[: disk_mesh.n_interior], axis=1) ** 2
    u = exterior_closure(w, P, disk_mesh)
    vol = disk_mesh.weights[: disk_mesh.n_interior]
    assert abs(exterior_closure_at(u, [8.0, 0.0], P) / (vol @ w / vol.sum()) - 1) < 0.02


def test_frac_laplacian_constant(line_mesh):
    u = Field.constant(line_mesh, 4.0)
    assert np.abs(frac_laplacian(u, None, P1)).max() < 1e-10


def test_frac_laplacian_cosine(interval):
    P = Params(1, 0.5, 1.5, 0.2)
    m = build_mesh(interval, 0.05, ExteriorTruncation(R_ext=40, h_ext=0.1, growth=0.05))
    f = Field.from_function(m, lambda x: np.cos(x[:, 0]))
    i0 = int(np.argmin(np.abs(m.points[: m.n_interior, 0])))
    x0 = m.points[i0, 0]
    assert frac_laplacian(f, i0, P) == pytest.approx(math.cos(x0), rel=0.05)


def test_frac_laplacian_linear(line_mesh, rng):
    u, v = random_smooth_field(line_mesh, rng), random_smooth_field(line_mesh, rng)
    a, b = 1.3, -0.7
    lhs = frac_laplacian(u * a + v * b, None, P1)
    rhs = a * frac_laplacian(u, None, P1) + b * frac_laplacian(v, None, P1)
    np.testing.assert_allclose(lhs, rhs, rtol=1e-10, atol=1e-10 * np.abs(rhs).max())


def test_green_constant_pairs(line_mesh, rng):
    c = Field.constant(line_mesh, 2.0)
    assert green_identity_residual(c, c, P1) < 1e-12
    v = random_smooth_field(line_mesh, rng)
    assert green_identity_residual(c, v, P1) < 1e-9


def test_green_random_pairs_refine(interval):
    rng = np.random.default_rng(7)
    from fracneumann.analysis import random_smooth_function

    pairs = [(random_smooth_function(rng, 1), random_smooth_function(rng, 1)) for _ in range(4)]
    rel = []
    for h in (0.1, 0.05):
        m = build_mesh(interval, h)
        r = []
        for fu, fv in pairs:
            g = green_identity(Field(m, fu(m.points), 0.3), Field(m, fv(m.points), -0.2), P1)
            r.append(g.residual / abs(g.lhs))
        rel.append(max(r))
    assert rel[0] <= 0.05 and rel[1] < rel[0]


@settings(max_examples=10, deadline=None)
@given(st.floats(0.1, 5.0), st.floats(-3.0, 3.0))
def test_closure_affine_equivariant(k, a):
    from fracneumann.geometry import build_domain

    m = build_mesh(build_domain({"shape": "interval", "bounds": [-1.0, 1.0]}), 0.1)
    w = np.sin(3 * m.points[: m.n_interior, 0])
    u = exterior_closure(w, P1, m)
    v = exterior_closure(k * w + a, P1, m)
    np.testing.assert_allclose(v.exterior, k * u.exterior + a, rtol=1e-10, atol=1e-10)
