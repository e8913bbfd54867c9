"""Nehari-projected Sobolev gradient descent for nonnegative critical points.

Each iteration replaces u by |u| (never raises the energy), rescales it onto
the Nehari set (the maximum of I along its ray) and takes a step along the
energy-metric gradient, halving the step until the projected energy does
not increase.  The default unknowns are interior values with the exterior
eliminated by the closure; the full-DOF variant keeps exterior values as
unknowns and lets the Neumann condition emerge from criticality.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from .analysis import tent_values
from .geometry import Mesh, MeshSpec, reflection_maps
from .kernel import Params, ParameterError
from .operators import Field, system
from .energy import nonlinearity, residual_vector


@dataclass(frozen=True)
class SolveConfig:
    params: Params
    mesh: MeshSpec | Mesh
    init: str | Field | np.ndarray = "tent"
    amplitude: float = 1.0
    center: tuple | None = None
    sigma: float = 1.0
    tol: float = 1e-8
    max_iter: int = 5000
    nehari: bool = True
    representation: str = "reduced"
    xi_floor: float = 1e-300
    max_restarts: int = 5
    symmetric: bool | None = None   # None: on when the start is centred at the centroid

    def __post_init__(self):
        if not self.tol > 0:
            raise ParameterError("tol must be positive")
        if not 0 < self.sigma <= 1:
            raise ParameterError("sigma must lie in (0, 1]")
        if self.max_iter < 1:
            raise ParameterError("max_iter must be at least 1")
        if self.representation not in ("reduced", "full"):
            raise ParameterError("representation must be 'reduced' or 'full'")

    def resolve_mesh(self) -> Mesh:
        return self.mesh if isinstance(self.mesh, Mesh) else self.mesh.build(self.params.eps)


@dataclass
class SolveReport:
    converged: bool
    c_eps: float
    norm_sq: float
    residual: float
    iterations: int
    gap: float                     # I(1) - c_eps
    min_value: float
    max_value: float
    peak: list
    constant_energy: float         # I(1) = (1/2 - 1/(p+1)) |Omega|
    saddle: bool                   # stopped at (numerically) constant field
    restarts: int
    representation: str
    symmetric: bool = False
    energies: list = field(default_factory=list)
    residuals: list = field(default_factory=list)
    kato_ok: bool = True
    monotone_ok: bool = True
    seconds: float = 0.0

    def summary(self) -> dict:
        out = {k: v for k, v in self.__dict__.items() if k not in ("energies", "residuals")}
        return out


class _Problem:
    """Quadratic form, mass and solves for the chosen representation."""

    def __init__(self, mesh: Mesh, params: Params, representation: str):
        self.sys = system(mesh, params)
        self.p = params.p
        nI = mesh.n_interior
        self.full = representation == "full"
        if self.full:
            self.A = self.sys.A_full
            self.m = self.sys.mass_full()
            self.solve = self.sys.solve_full
        else:
            self.A = self.sys.A_red
            self.m = self.sys.mass
            self.solve = self.sys.solve_red
        self.nI = nI

    def parts(self, u):
        lam = float(u @ (self.A @ u))
        xi = float(self.m @ np.abs(u) ** (self.p + 1))
        return lam, xi

    def energy(self, u) -> float:
        lam, xi = self.parts(u)
        return 0.5 * lam - xi / (self.p + 1)

    def gradient(self, u):
        return u - self.solve(self.m * nonlinearity(u, self.p))

    def residual(self, g) -> float:
        return math.sqrt(max(float(g @ (self.A @ g)), 0.0))

    def to_field(self, u) -> Field:
        if self.full:
            return Field(self.sys.mesh, u[:-1], u[-1])
        return self.sys.close(u)

    def from_field(self, f: Field):
        return f.nodes.copy() if self.full else f.interior.copy()

    def symmetrizer(self, maps):
        """Projection onto vectors invariant under the given commuting reflections."""
        perms = []
        for idx in maps:
            if self.full:
                perms.append(np.append(idx, len(idx)))
            else:
                perms.append(idx[: self.nI])
        if not perms:
            return None

        def project(v):
            for q in perms:
                v = 0.5 * (v + v[q])
            return v
        return project


def _initial(config: SolveConfig, mesh: Mesh, prob: _Problem, scale: float):
    P = config.params
    init = config.init
    if isinstance(init, Field):
        return prob.from_field(init) * scale
    if isinstance(init, np.ndarray):
        f = prob.sys.close(np.asarray(init, float)) if len(init) == mesh.n_interior else None
        return prob.from_field(f) * scale if f is not None else np.asarray(init, float) * scale
    center = np.asarray(config.center if config.center is not None else mesh.domain.centroid, float)
    x = mesh.points[: mesh.n_interior]
    if init == "tent":
        w = tent_values(x, center, P.eps, mesh.dim)
    elif init == "bump":
        r2 = np.sum((x - center) ** 2, axis=1)
        w = np.exp(-r2 / P.eps ** 2) * P.eps ** (-mesh.dim)
    elif init == "constant":
        w = np.ones(len(x))
    else:
        raise ParameterError(f"unknown initializer {init!r} (tent, bump, constant, or a field)")
    if not np.any(w > 0):
        raise ParameterError("initializer vanishes on every interior node; refine the mesh")
    return prob.from_field(prob.sys.close(config.amplitude * scale * w))


def _project(prob: _Problem, u, nehari: bool, floor: float):
    """|u| followed by the Nehari rescaling; returns (u, energy before, after Kato, xi)."""
    e_raw = prob.energy(u)
    u = np.abs(u)
    e_abs = prob.energy(u)
    lam, xi = prob.parts(u)
    if xi <= floor:
        return None, e_raw, e_abs, xi
    if nehari:
        u = u * (lam / xi) ** (1.0 / (prob.p - 1))
    return u, e_raw, e_abs, xi


def _symmetry(config: SolveConfig, mesh: Mesh, prob: _Problem):
    sym = config.symmetric
    if sym is None:
        centred = isinstance(config.init, str) and (
            config.center is None or np.allclose(config.center, mesh.domain.centroid))
        sym = centred
    if not sym:
        return None
    return prob.symmetrizer(reflection_maps(mesh))


def solve(config: SolveConfig) -> tuple[SolveReport, Field]:
    """Descend from the configured start; returns the report and the closed field.

    With symmetry on, iterates and steps are kept invariant under the mesh
    reflections about the centroid.  A critical point of the restricted
    energy is then critical for the full one, and the reported residual is
    always the unrestricted one.
    """
    t0 = time.perf_counter()
    P = config.params
    mesh = config.resolve_mesh()
    prob = _Problem(mesh, P, config.representation)
    sym = _symmetry(config, mesh, prob)
    keep = sym if sym is not None else (lambda v: v)
    energies, residuals = [], []
    kato_ok = monotone_ok = True
    restarts = 0
    scale = 1.0
    converged = False
    it = 0
    res = math.inf
    kato_tol = 1e-12
    noise = 64 * np.finfo(float).eps

    u = keep(_initial(config, mesh, prob, scale))
    while True:
        u_p, e_raw, e_abs, xi = _project(prob, u, config.nehari, config.xi_floor)
        if u_p is not None:
            break
        if restarts >= config.max_restarts:
            raise ParameterError("initial field collapses to zero on the domain")
        restarts += 1
        scale *= 2.0
        u = keep(_initial(config, mesh, prob, scale))
    u = u_p
    kato_ok &= e_abs <= e_raw + kato_tol * max(1.0, abs(e_raw))
    J = prob.energy(u)

    while it < config.max_iter:
        g = prob.gradient(u)
        res = prob.residual(g)
        energies.append(J)
        residuals.append(res)
        if res <= config.tol:
            converged = True
            break
        step = keep(g)
        sigma = config.sigma
        accepted = False
        for _ in range(60):
            cand, e_raw, e_abs, xi = _project(prob, u - sigma * step, config.nehari, config.xi_floor)
            if cand is not None:
                Jc = prob.energy(cand)
                # below the roundoff of J the energy cannot rank the two
                # iterates; the residual decides instead
                flat = abs(Jc - J) <= noise * max(1.0, abs(J))
                if (Jc <= J and not flat) or (flat and prob.residual(prob.gradient(cand)) < res):
                    kato_ok &= e_abs <= e_raw + kato_tol * max(1.0, abs(e_raw))
                    accepted = True
                    break
            sigma *= 0.5
        it += 1
        if not accepted:
            if cand is None and restarts < config.max_restarts:
                restarts += 1
                scale *= 2.0
                u = _project(prob, keep(_initial(config, mesh, prob, scale)), config.nehari, config.xi_floor)[0]
                J = prob.energy(u)
                continue
            break
        monotone_ok &= Jc <= J + noise * max(1.0, abs(J))
        u, J = cand, Jc

    f = prob.to_field(u)
    lam, xi = prob.parts(u)
    vol = float(mesh.weights[: mesh.n_interior].sum())
    const_e = (0.5 - 1.0 / (P.p + 1)) * vol
    ui = f.interior
    spread = float(ui.max() - ui.min())
    saddle = spread <= max(1e-6, 100 * config.tol) * max(1.0, float(np.abs(ui).max()))
    report = SolveReport(
        converged=converged, c_eps=J, norm_sq=lam, residual=res, iterations=it,
        gap=const_e - J, min_value=float(f.values.min()), max_value=float(ui.max()),
        peak=mesh.points[int(np.argmax(ui))].tolist(), constant_energy=const_e,
        saddle=bool(saddle), restarts=restarts, representation=config.representation,
        symmetric=sym is not None, energies=energies, residuals=residuals, kato_ok=bool(kato_ok),
        monotone_ok=bool(monotone_ok and all(b <= a + noise * max(1.0, abs(a))
                                             for a, b in zip(energies, energies[1:]))),
        seconds=time.perf_counter() - t0,
    )
    return report, f


def weak_residual(u: Field, params: Params) -> float:
    """Dual norm of v -> I'(u) v in the energy inner product."""
    r = residual_vector(u, params)
    g = system(u.mesh, params).solve_full(r)
    return math.sqrt(max(float(r @ g), 0.0))


def norm_energy_consistency(report: SolveReport, params: Params, tol: float = 1e-8) -> bool:
    """||u||^2 = (2(p+1)/(p-1)) c_eps within 10 tol ||u||."""
    p = params.p
    lhs = report.norm_sq
    rhs = 2.0 * (p + 1) / (p - 1) * report.c_eps
    return abs(lhs - rhs) <= 10.0 * tol * math.sqrt(max(lhs, 0.0))
