import math

import numpy as np
import pytest

from fracneumann.geometry import MeshSpec
from fracneumann.kernel import Params, ParameterError
from fracneumann.operators import Field
from fracneumann.solver import SolveConfig, SolveReport, norm_energy_consistency, solve, weak_residual

from conftest import INTERVAL

P = Params(1, 0.25, 2.0, 0.1)
SPEC = MeshSpec(INTERVAL)


@pytest.fixture(scope="module")
def reference():
    return solve(SolveConfig(P, SPEC))


def test_reference_solve(reference):
    rep, u = reference
    assert rep.converged and rep.residual <= 1e-8
    assert 0 < rep.c_eps < 1 / 3
    assert rep.constant_energy == pytest.approx(1 / 3, rel=1e-12)
    assert rep.min_value >= 0
    assert rep.kato_ok and rep.monotone_ok and rep.symmetric
    assert not rep.saddle
    assert norm_energy_consistency(rep, P)


def test_energies_monotone(reference):
    e = np.array(reference[0].energies)
    assert np.all(np.diff(e) <= 1e-13 * np.abs(e[:-1]).clip(1))


def test_weak_residual_of_solution(reference):
    rep, u = reference
    assert weak_residual(u, P) <= 10 * 1e-8


def test_symmetric_profile(reference):
    _, u = reference
    x = u.mesh.points[: u.mesh.n_interior, 0]
    order = np.argsort(x)
    np.testing.assert_allclose(u.interior[order], u.interior[order][::-1], rtol=1e-10)


def test_full_representation_agrees(reference):
    rep_f, u_f = solve(SolveConfig(P, SPEC, representation="full"))
    assert rep_f.converged
    assert rep_f.c_eps == pytest.approx(reference[0].c_eps, rel=1e-6)
    assert np.abs(u_f.values - reference[1].values).max() < 1e-4 * reference[1].values.max()


def test_fixed_point_restart(reference):
    rep, u = reference
    again, _ = solve(SolveConfig(P, SPEC, init=u))
    assert again.converged and again.iterations <= 5
    assert again.c_eps == pytest.approx(rep.c_eps, rel=1e-10)


def test_constant_start_is_a_saddle():
    rep, u = solve(SolveConfig(P, SPEC, init="constant"))
    assert rep.converged and rep.saddle
    assert rep.c_eps == pytest.approx(rep.constant_energy, rel=1e-10)
    assert rep.gap == pytest.approx(0.0, abs=1e-10)


def test_weak_residual_trivial_fields(line_mesh):
    assert weak_residual(Field.constant(line_mesh, 1.0), P) < 1e-10
    assert weak_residual(Field.constant(line_mesh, 0.0), P) == 0.0


def _report(c, lam):
    return SolveReport(True, c, lam, 0.0, 0, 0.0, 0.0, 1.0, [0.0], 0.0, True, 0, "reduced")


def test_identity_on_constant_solution():
    vol = 2.0
    assert norm_energy_consistency(_report(vol / 6, vol), Params(1, 0.25, 2.0, 0.1))
    assert norm_energy_consistency(_report(vol / 4, vol), Params(1, 0.5, 3.0, 0.1))
    assert not norm_energy_consistency(_report(vol / 5, vol), Params(1, 0.25, 2.0, 0.1))


def test_config_validation():
    with pytest.raises(ParameterError):
        SolveConfig(P, SPEC, tol=0.0)
    with pytest.raises(ParameterError):
        SolveConfig(P, SPEC, sigma=2.0)
    with pytest.raises(ParameterError):
        SolveConfig(P, SPEC, representation="sparse")
    with pytest.raises(ParameterError):
        solve(SolveConfig(P, SPEC, init="spline"))


def test_off_centre_start_without_symmetry():
    rep, u = solve(SolveConfig(P, SPEC, center=(0.3,)))
    assert not rep.symmetric
    assert rep.converged and rep.c_eps < 1 / 3 and rep.min_value >= 0
    assert math.isfinite(rep.c_eps)
