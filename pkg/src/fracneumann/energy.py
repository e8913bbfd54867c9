"""The energy functional, its derivative and gradients, and Nehari scaling.

    I(u) = (C eps^{2s} / 4) S(u) + (1/2) int_Omega u^2 - (1/(p+1)) int_Omega |u|^{p+1}
         = (1/2) ||u||^2 - (1/(p+1)) Xi(u).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .kernel import Params, ParameterError
from .operators import Field, bilinear_form, system


@dataclass(frozen=True)
class EnergyBreakdown:
    quadratic: float
    potential: float
    total: float


@dataclass(frozen=True)
class NehariData:
    lam_bar: float   # ||u||^2
    xi: float        # int_Omega |u|^{p+1}
    t1: float        # maximiser of t -> I(t u)
    p: float

    @property
    def t2(self) -> float:
        """Positive zero of the ray profile: ((p+1) lam / (2 xi))^{1/(p-1)}."""
        return ((self.p + 1) * self.lam_bar / (2 * self.xi)) ** (1.0 / (self.p - 1))


def nonlinearity(u: np.ndarray, p: float) -> np.ndarray:
    """|u|^{p-1} u evaluated as sign(u) |u|^p."""
    return np.sign(u) * np.abs(u) ** p


def potential_integral(u: Field, params: Params) -> float:
    """Xi = int_Omega |u|^{p+1}."""
    w = u.mesh.weights[: u.mesh.n_interior]
    return float(w @ np.abs(u.interior) ** (params.p + 1))


def energy(u: Field, params: Params) -> EnergyBreakdown:
    quad = 0.5 * bilinear_form(u, u, params).total
    pot = potential_integral(u, params) / (params.p + 1)
    return EnergyBreakdown(quad, pot, quad - pot)


def derivative(u: Field, v: Field, params: Params) -> float:
    """I'(u) v = <u, v> - int_Omega |u|^{p-1} u v."""
    w = u.mesh.weights[: u.mesh.n_interior]
    return bilinear_form(u, v, params).total - float(w @ (nonlinearity(u.interior, params.p) * v.interior))


def _node_weights(mesh, params) -> np.ndarray:
    """Measures attached to nodes for the l2 metric (far node: its Neumann mass)."""
    sysm = system(mesh, params)
    far = float(mesh.weights[: mesh.n_interior] @ sysm.weights.tail)
    return np.append(mesh.weights, far)


def residual_vector(u: Field, params: Params) -> np.ndarray:
    """Coefficients r with I'(u) v = r . v.nodes for every discrete v."""
    sysm = system(u.mesh, params)
    nI = u.mesh.n_interior
    r = sysm.A_full @ u.nodes
    r[:nI] -= sysm.mass * nonlinearity(u.interior, params.p)
    return r


def gradient_field(u: Field, params: Params, metric: str = "sobolev") -> Field:
    """Riesz representative of I'(u) in the energy inner product or the weighted l2 product."""
    r = residual_vector(u, params)
    if metric == "sobolev":
        g = system(u.mesh, params).solve_full(r)
    elif metric == "l2":
        g = r / _node_weights(u.mesh, params)
    else:
        raise ParameterError(f"unknown metric {metric!r}; use 'sobolev' or 'l2'")
    return Field(u.mesh, g[:-1], g[-1])


def l2_inner(u: Field, v: Field, params: Params) -> float:
    """Weighted l2 product matching :func:`gradient_field` with metric='l2'."""
    return float(_node_weights(u.mesh, params) @ (u.nodes * v.nodes))


def gram_apply(g: Field, params: Params) -> Field:
    """Map a Sobolev representative to the l2 representative of the same functional."""
    r = system(g.mesh, params).A_full @ g.nodes / _node_weights(g.mesh, params)
    return Field(g.mesh, r[:-1], r[-1])


def nehari_scale(u: Field, params: Params) -> NehariData:
    lam = bilinear_form(u, u, params).total
    xi = potential_integral(u, params)
    if not xi > 0:
        raise ParameterError("u vanishes on the domain; Nehari scaling undefined")
    return NehariData(lam, xi, (lam / xi) ** (1.0 / (params.p - 1)), params.p)


def ray_profile(u: Field, params: Params, t) -> np.ndarray:
    """g(t) = I(t u) = (lam/2) t^2 - (xi/(p+1)) t^{p+1}."""
    nd = nehari_scale(u, params)
    t = np.asarray(t, dtype=float)
    return 0.5 * nd.lam_bar * t ** 2 - nd.xi / (params.p + 1) * np.abs(t) ** (params.p + 1)


def energy_identity(u: Field, params: Params) -> tuple[float, float]:
    """(I(u), (1/2 - 1/(p+1)) ||u||^2); equal when ||u||^2 = Xi, e.g. at a critical point."""
    e = energy(u, params)
    return e.total, (0.5 - 1.0 / (params.p + 1)) * 2.0 * e.quadratic
