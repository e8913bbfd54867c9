import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from fracneumann.analysis import (TentSpec, alpha_constant, check_tent, critical_times, l2_local_check,
                                  phi_l2_exact, phi_seminorm_ledger, random_smooth_field, scaling_fit,
                                  tent_field, tent_values, weighted_l1)
from fracneumann.energy import ray_profile
from fracneumann.geometry import MeshSpec, build_mesh, collar_region
from fracneumann.kernel import Params, ParameterError
from fracneumann.operators import Field, exterior_closure
from fracneumann.solver import SolveConfig, solve

from conftest import INTERVAL


def test_tent_values():
    eps = 0.2
    c = np.array([0.1, -0.2])
    x = np.array([c, c + [eps / 2, 0], c + [0, eps], c + [eps, eps]])
    np.testing.assert_allclose(tent_values(x, c, eps, 2), [eps ** -2, 0.5 * eps ** -2, 0, 0])


def test_tent_inclusion(interval):
    assert check_tent(interval, [0.0], 0.5) is not None
    assert check_tent(interval, [0.0], 0.4) is None
    with pytest.raises(ParameterError):
        tent_field(TentSpec((0.0,), 0.5), build_mesh(interval, 0.05))


def test_phi_l2_exact_values():
    assert phi_l2_exact(Params(2, 0.5, 2.0, 1.0)) == pytest.approx(math.pi / 6)
    assert phi_l2_exact(Params(1, 0.25, 2.0, 0.5)) == pytest.approx(4 / 3)


@pytest.mark.parametrize("n, eps", [(1, 0.1), (2, 0.2)])
def test_phi_l2_quadrature(n, eps, interval, disk):
    dom = interval if n == 1 else disk
    m = build_mesh(dom, eps / 10)
    phi = tent_field(TentSpec(tuple(dom.centroid), eps), m)
    q = m.weights[: m.n_interior] @ phi.interior ** 2
    assert q == pytest.approx(phi_l2_exact(Params(n, 0.5, 2.0, eps)), rel=0.01)


@pytest.mark.parametrize("n, p", [(1, 2.0), (1, 1.5), (2, 2.0), (2, 3.0), (3, 2.5)])
def test_alpha_against_quadrature(n, p):
    oracle = quad(lambda r: (1 - r) ** (p + 1) * r ** (n - 1), 0, 1, epsabs=1e-14, epsrel=1e-13)[0]
    assert abs(alpha_constant(n, p) - oracle) < 1e-10


def test_alpha_closed_values():
    assert alpha_constant(2, 2.0) == pytest.approx(0.05)
    assert alpha_constant(1, 2.0) == pytest.approx(0.25)
    assert alpha_constant(1, 1.5) == pytest.approx(1 / 3.5)


@settings(max_examples=30, deadline=None)
@given(st.floats(0.01, 100.0), st.sampled_from([2.0, 3.0]), st.sampled_from([1, 2]), st.floats(0.05, 0.5))
def test_critical_time_ratio(C0, p, n, eps):
    t1, t2 = critical_times(C0, Params(n, 0.75, p, eps))
    assert t2 / t1 == pytest.approx(((p + 1) / 2) ** (1 / (p - 1)), rel=1e-12)


def test_ray_negative_beyond_t2(interval):
    P = Params(1, 0.25, 2.0, 0.1)
    m = build_mesh(interval, 0.0125)
    phi = tent_field(TentSpec((0.0,), 0.1), m)
    from fracneumann.analysis import measured_C0

    t1, t2 = critical_times(measured_C0(phi, P), P)
    assert ray_profile(phi, P, [2 * t2])[0] < 0
    assert ray_profile(phi, P, [1e-3 * t1])[0] > 0


def test_ledger_constant_field():
    P = Params(1, 0.25, 2.0, 0.2)
    led = phi_seminorm_ledger([0.2, 0.1], P, MeshSpec(INTERVAL),
                              field_fn=lambda m, e: Field.constant(m, 3.0))
    for r in led.rows:
        assert r["T1"] == r["T2"] == r["exterior"] == 0.0


def test_ledger_n1_bounded():
    P = Params(1, 0.25, 2.0, 0.2)
    led = phi_seminorm_ledger([0.2, 0.1, 0.05], P, MeshSpec(INTERVAL))
    assert led.bounded(4.0)
    assert max(r["decomposition_err"] for r in led.rows) < 1e-10


def test_scaling_fit_exact():
    eps = [0.4, 0.2, 0.1, 0.05]
    slope, icpt = scaling_fit([(e, 7 * e ** 2) for e in eps])
    assert slope == pytest.approx(2.0, abs=1e-12)
    assert icpt == pytest.approx(math.log(7), abs=1e-12)
    assert scaling_fit([(e, 3 * e) for e in eps])[0] == pytest.approx(1.0, abs=1e-12)
    with pytest.raises(ParameterError):
        scaling_fit([(0.1, 1.0), (0.2, 2.0)])
    with pytest.raises(ParameterError):
        scaling_fit([(0.1, 1.0), (0.2, -2.0), (0.3, 1.0)])


def test_weighted_l1_trivial(interval):
    P = Params(1, 0.25, 2.0, 0.1)
    m = build_mesh(interval, 0.05)
    assert weighted_l1(Field.constant(m, 0.0), P).value == 0.0
    oracle = 2 * quad(lambda x: 1 / (1 + x ** 1.5), 0, np.inf)[0]
    # int dx / (1 + |x|^a) = 2 (pi/a) / sin(pi/a)
    assert oracle == pytest.approx(2 * (2 * math.pi / 3) / math.sin(2 * math.pi / 3), rel=1e-8)
    assert weighted_l1(Field.constant(m, 1.0), P).value == pytest.approx(oracle, rel=0.01)


@pytest.fixture(scope="module")
def solution():
    P = Params(1, 0.25, 2.0, 0.1)
    rep, u = solve(SolveConfig(P, MeshSpec(INTERVAL)))
    return P, u


def test_weighted_l1_truncation(solution):
    P, u = solution
    m0 = u.mesh
    v0 = weighted_l1(u, P).value
    _, u2 = solve(SolveConfig(P, MeshSpec(INTERVAL, R_ext=2 * m0.R_ext)))
    assert abs(weighted_l1(u2, P).value / v0 - 1) < 0.02


def test_collar_check_solution(solution):
    P, u = solution
    dom = u.mesh.domain
    cc = l2_local_check(u, collar_region(dom, u.mesh, 0.5 * dom.diameter), P)
    assert cc.collar_l2 > 0 and cc.slack > 0


def test_collar_check_constant_and_zero(line_mesh, interval):
    P = Params(1, 0.25, 2.0, 0.1)
    col = collar_region(interval, line_mesh, 1.0)
    cc = l2_local_check(Field.constant(line_mesh, 2.0), col, P)
    assert cc.I == 0.0 and cc.slack >= 0
    assert l2_local_check(Field.constant(line_mesh, 0.0), col, P).collar_l2 == 0.0
    with pytest.raises(ParameterError):
        l2_local_check(Field.constant(line_mesh, 1.0), collar_region(interval, line_mesh, 0.0), P)


def test_collar_check_random_closed(line_mesh, interval):
    P = Params(1, 0.25, 2.0, 0.1)
    col = collar_region(interval, line_mesh, 1.0)
    rng = np.random.default_rng(3)
    for _ in range(5):
        f = random_smooth_field(line_mesh, rng)
        u = exterior_closure(f.interior, P, line_mesh)
        assert l2_local_check(u, col, P).slack >= 0
