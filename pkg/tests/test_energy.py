import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fracneumann.analysis import random_smooth_field
from fracneumann.energy import (NehariData, derivative, energy, energy_identity, gradient_field, gram_apply,
                                l2_inner, nehari_scale, ray_profile)
from fracneumann.geometry import build_domain, build_mesh
from fracneumann.kernel import Params, ParameterError
from fracneumann.operators import Field, bilinear_form

P1 = Params(1, 0.25, 2.0, 0.2)
P2 = Params(2, 0.5, 2.0, 0.2)


def vol(mesh):
    return mesh.weights[: mesh.n_interior].sum()


@pytest.mark.parametrize("eps", [0.4, 0.2, 0.1])
def test_constant_energy_disk(disk_mesh, eps):
    e = energy(Field.constant(disk_mesh, 1.0), P2.with_eps(eps))
    assert e.total == pytest.approx(math.pi / 6, rel=5e-3)
    assert e.total == pytest.approx(vol(disk_mesh) / 6, rel=1e-13)


def test_constant_energy_interval_p3(line_mesh):
    P = Params(1, 0.5, 3.0, 0.1)     # p = 3 is critical at s = 0.25
    assert energy(Field.constant(line_mesh, 1.0), P).total == pytest.approx(0.5, rel=1e-13)


def test_zero_energy(line_mesh, rng):
    z = Field.constant(line_mesh, 0.0)
    assert energy(z, P1).total == 0.0
    assert derivative(z, random_smooth_field(line_mesh, rng), P1) == 0.0


def test_one_is_critical(disk_mesh, rng):
    one = Field.constant(disk_mesh, 1.0)
    assert abs(derivative(one, one, P2)) < 1e-12
    assert abs(derivative(one, random_smooth_field(disk_mesh, rng), P2)) < 1e-12
    g = gradient_field(one, P2)
    assert np.abs(g.nodes).max() < 1e-10


def test_derivative_finite_difference(line_mesh, rng):
    u, v = random_smooth_field(line_mesh, rng), random_smooth_field(line_mesh, rng)
    d = derivative(u, v, P1)
    errs = []
    for t in (1e-2, 5e-3):
        fd = (energy(u + v * t, P1).total - energy(u - v * t, P1).total) / (2 * t)
        errs.append(abs(fd - d))
    assert errs[1] < errs[0] / 3          # second order
    assert errs[1] < 1e-4 * max(1.0, abs(d))


@pytest.mark.parametrize("metric", ["sobolev", "l2"])
def test_gradient_represents_derivative(line_mesh, rng, metric):
    u = random_smooth_field(line_mesh, rng)
    g = gradient_field(u, P1, metric)
    for _ in range(10):
        v = random_smooth_field(line_mesh, rng)
        inner = bilinear_form(g, v, P1).total if metric == "sobolev" else l2_inner(g, v, P1)
        norm_v = math.sqrt(bilinear_form(v, v, P1).total)
        assert abs(inner - derivative(u, v, P1)) < 1e-10 * max(norm_v, 1.0)


def test_gram_maps_sobolev_to_l2(line_mesh, rng):
    u = random_smooth_field(line_mesh, rng)
    gs, gl = gradient_field(u, P1, "sobolev"), gradient_field(u, P1, "l2")
    np.testing.assert_allclose(gram_apply(gs, P1).nodes, gl.nodes, rtol=1e-8, atol=1e-8 * np.abs(gl.nodes).max())


def test_nehari_formulas():
    assert NehariData(2.0, 1.0, math.sqrt(2.0), 3.0).t1 == pytest.approx(math.sqrt(2))
    assert NehariData(2.0, 1.0, math.sqrt(2.0), 3.0).t2 == pytest.approx(2.0)


def test_nehari_on_constant(disk_mesh):
    nd = nehari_scale(Field.constant(disk_mesh, 1.0), P2)
    assert nd.t1 == pytest.approx(1.0, rel=1e-12)
    with pytest.raises(ParameterError):
        nehari_scale(Field.constant(disk_mesh, 0.0), P2)


def test_nehari_is_ray_maximum(line_mesh, rng):
    u = abs(random_smooth_field(line_mesh, rng))
    nd = nehari_scale(u, P1)
    t = np.linspace(0, 3 * nd.t2, 2001)
    g = ray_profile(u, P1, t)
    assert t[np.argmax(g)] == pytest.approx(nd.t1, abs=2 * t[1])
    assert ray_profile(u, P1, [nd.t2])[0] == pytest.approx(0.0, abs=1e-10 * abs(g).max())
    top = energy(u * nd.t1, P1).total
    assert g.max() <= top * (1 + 1e-12) and top == pytest.approx(g.max(), rel=1e-5)


def test_energy_identity_constant(disk_mesh):
    lhs, rhs = energy_identity(Field.constant(disk_mesh, 1.0), P2)
    assert lhs == pytest.approx(rhs, rel=1e-12)
    assert lhs == pytest.approx(math.pi / 6, rel=5e-3)
    assert energy_identity(Field.constant(disk_mesh, 0.0), P2) == (0.0, 0.0)


@pytest.mark.parametrize("p", [2.0, 3.0, 4.0])
def test_energy_identity_gap_formula(line_mesh, rng, p):
    # I - (1/2 - 1/(p+1)) ||u||^2 = (||u||^2 - Xi) / (p+1) exactly
    P = Params(1, 0.5, p, 0.2)
    u = random_smooth_field(line_mesh, rng)
    lhs, rhs = energy_identity(u, P)
    lam = bilinear_form(u, u, P).total
    xi = float(line_mesh.weights[: line_mesh.n_interior] @ np.abs(u.interior) ** (p + 1))
    assert lhs - rhs == pytest.approx((lam - xi) / (p + 1), rel=1e-10)
    if p >= 3:
        assert abs(lhs - rhs) <= (0.5 - 1 / (p + 1)) * abs(lam - xi) * (1 + 1e-12)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 10_000), st.floats(0.05, 0.9))
def test_kato_property(seed, shift):
    m = build_mesh(build_domain({"shape": "interval", "bounds": [-1.0, 1.0]}), 0.1)
    r = np.random.default_rng(seed)
    u = random_smooth_field(m, r)
    u = u - shift * float(np.abs(u.values).max())
    assert energy(abs(u), P1).total <= energy(u, P1).total + 1e-13
