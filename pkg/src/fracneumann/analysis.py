"""Explicit estimates: the tent function, its closed forms, the seminorm
ledger, the eps^n scaling fit and the integrability functionals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad
from scipy.special import beta

from .geometry import Collar, Mesh, MeshSpec
from .kernel import Params, ParameterError, pair_energy, sphere_area


# ---------------------------------------------------------------------------
# tent function
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TentSpec:
    center: tuple
    eps: float

    def amplitude(self, n: int) -> float:
        return self.eps ** (-n)


def tent_values(x: np.ndarray, center, eps: float, n: int) -> np.ndarray:
    """eps^{-n} (1 - |x - center| / eps) on B_eps(center), zero elsewhere."""
    r = np.linalg.norm(np.atleast_2d(x) - np.asarray(center, float), axis=1)
    return np.where(r < eps, (1.0 - r / eps) * eps ** (-n), 0.0)


def check_tent(domain, center, eps: float) -> str | None:
    """Diagnostic if B_{2 eps}(center) is not strictly inside the domain."""
    depth = float(domain.depth(np.asarray(center, float).reshape(1, -1))[0])
    if not depth > 2 * eps:
        return f"B_2eps(center) not inside the domain: depth {depth:g} <= 2*eps = {2 * eps:g}"
    return None


def tent_field(spec: TentSpec, mesh: Mesh):
    """Nodal tent values inside, zero on exterior cells and beyond the truncation."""
    from .operators import Field

    msg = check_tent(mesh.domain, spec.center, spec.eps)
    if msg:
        raise ParameterError(msg)
    vals = np.zeros(mesh.n_cells)
    nI = mesh.n_interior
    vals[:nI] = tent_values(mesh.points[:nI], spec.center, spec.eps, mesh.dim)
    return Field(mesh, vals, 0.0)


def phi_l2_exact(params: Params) -> float:
    """int phi^2 = 2 omega_{n-1} / (n (n+1) (n+2)) eps^{-n}."""
    n = params.n
    return 2 * sphere_area(n) / (n * (n + 1) * (n + 2)) * params.eps ** (-n)


def alpha_constant(n: int, p: float) -> float:
    """int_0^1 (1 - rho)^{p+1} rho^{n-1} d rho = Gamma(n) Gamma(p+2) / Gamma(n+p+2)."""
    if n < 1 or not p > 1:
        raise ParameterError("alpha needs n >= 1 and p > 1")
    return float(beta(n, p + 2))


def critical_times(C0: float, params: Params) -> tuple[float, float]:
    """(t1, t2) for the tent ray: beyond t1 the ray energy decreases, beyond t2 it is negative."""
    if not C0 > 0:
        raise ParameterError("C0 must be positive")
    n, p = params.n, params.p
    aw = alpha_constant(n, p) * sphere_area(n)
    e = params.eps ** n
    t1 = (2 * C0 / aw) ** (1 / (p - 1)) * e
    t2 = (C0 * (p + 1) / aw) ** (1 / (p - 1)) * e
    return t1, t2


def measured_C0(phi, params: Params) -> float:
    """Quadratic coefficient of t -> I(t phi), times eps^n."""
    from .operators import bilinear_form

    return 0.5 * bilinear_form(phi, phi, params).total * params.eps ** params.n


# ---------------------------------------------------------------------------
# seminorm ledger
# ---------------------------------------------------------------------------

LEDGER_COLUMNS = ("eps", "T1", "T2", "exterior", "phi_l2", "phi_l2_exact", "norm_sq",
                  "T1_n", "T2_n", "exterior_n", "norm_sq_n", "decomposition_err")


@dataclass
class EstimateLedger:
    n: int
    s: float
    rows: list = field(default_factory=list)

    def column(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.rows], dtype=float)

    def ratios(self) -> dict:
        out = {}
        for name in ("T1_n", "T2_n", "exterior_n", "norm_sq_n"):
            col = self.column(name)
            out[name] = float(col.max() / col.min()) if np.all(col > 0) else math.nan
        return out

    def bounded(self, factor: float = 4.0) -> bool:
        return all(v <= factor for v in self.ratios().values())


def _ledger_row(phi, params: Params, center, ball_eps: float) -> dict:
    from .operators import bilinear_form, seminorm_form

    mesh = phi.mesh
    nI, N = mesh.n_interior, mesh.n_cells
    n, s, eps = params.n, params.s, params.eps
    r = np.linalg.norm(mesh.points[:nI] - np.asarray(center, float), axis=1)
    ball = np.nonzero(r < ball_eps)[0]
    rest = np.nonzero(r >= ball_eps)[0]
    omega = np.arange(nI)
    outside = np.arange(nI, N + 1)
    T1 = pair_energy(phi, ball, ball, params, mesh).value
    T2 = 2 * pair_energy(phi, ball, rest, params, mesh).value
    inner = pair_energy(phi, omega, omega, params, mesh).value
    ext = 2 * pair_energy(phi, omega, outside, params, mesh).value
    full = seminorm_form(phi, phi, params)
    scale = max(abs(full), 1e-300)
    decomp = max(abs(inner + ext - full), abs(T1 + T2 - inner)) / scale if full > 0 else abs(inner + ext - full)
    l2 = float(mesh.weights[:nI] @ phi.interior ** 2)
    norm = bilinear_form(phi, phi, params).total
    k = eps ** (n + 2 * s)
    return {
        "eps": eps, "T1": T1, "T2": T2, "exterior": ext, "phi_l2": l2,
        "phi_l2_exact": phi_l2_exact(params), "norm_sq": norm,
        "T1_n": T1 * k, "T2_n": T2 * k, "exterior_n": ext * k, "norm_sq_n": norm * eps ** n,
        "decomposition_err": decomp,
    }


def phi_seminorm_ledger(eps_list, params: Params, mesh_factory, center=None, field_fn=None) -> EstimateLedger:
    """T1, T2, the exterior term and ||phi||^2 for each eps, with normalised columns.

    ``mesh_factory`` maps eps to a Mesh (a MeshSpec works too).  ``field_fn``
    replaces the tent (mesh, eps) -> Field, e.g. for a constant-field check.
    """
    ledger = EstimateLedger(params.n, params.s)
    for eps in eps_list:
        P = params.with_eps(float(eps))
        mesh = mesh_factory.build(eps) if isinstance(mesh_factory, MeshSpec) else mesh_factory(eps)
        c = mesh.domain.centroid if center is None else np.asarray(center, float)
        if field_fn is None:
            phi = tent_field(TentSpec(tuple(c), P.eps), mesh)
        else:
            phi = field_fn(mesh, P.eps)
        ledger.rows.append(_ledger_row(phi, P, c, P.eps))
    return ledger


# ---------------------------------------------------------------------------
# scaling and integrability
# ---------------------------------------------------------------------------

def scaling_fit(sweep, min_points: int = 3) -> tuple[float, float]:
    """Least-squares slope and intercept of log c against log eps."""
    pts = [(float(e), float(c)) for e, c in sweep]
    if len(pts) < min_points:
        raise ParameterError(f"scaling fit needs at least {min_points} points")
    if any(not c > 0 or not e > 0 for e, c in pts):
        raise ParameterError("scaling fit needs positive eps and c_eps")
    x = np.log([e for e, _ in pts])
    y = np.log([c for _, c in pts])
    slope, intercept = np.polyfit(x, y, 1)
    return float(slope), float(intercept)


@dataclass(frozen=True)
class WeightedL1:
    meshed: float
    tail: float

    @property
    def value(self) -> float:
        return self.meshed + self.tail


def _tail_weight_mass(n: int, m: float, R: float, c: np.ndarray) -> float:
    """int_{|y - c| > R} dy / (1 + |y|^m)."""
    f = lambda r: 1.0 / (1.0 + abs(r) ** m)
    if n == 1:
        a, b = c[0] + R, c[0] - R
        return quad(f, a, np.inf, limit=200)[0] + quad(f, -np.inf, b, limit=200)[0]
    if np.allclose(c, 0):
        return sphere_area(n) * quad(lambda r: r ** (n - 1) * f(r), R, np.inf, limit=200)[0]
    if n == 2:
        def ring(r):
            return quad(lambda th: f(math.hypot(c[0] + r * math.cos(th), c[1] + r * math.sin(th))),
                        0, 2 * math.pi, limit=100)[0] * r
        return quad(ring, R, np.inf, limit=200)[0]
    raise ParameterError("tail integral implemented for n <= 2")


def weighted_l1(u, params: Params, sub: int = 4) -> WeightedL1:
    """int |u| / (1 + |x|^{n+2s}); beyond the truncation u is the far value."""
    mesh = u.mesh
    m = params.n + 2 * params.s
    key = ("l1_weight", m, sub)
    cw = mesh._cache.get(key)
    if cw is None:
        cw = np.empty(mesh.n_cells)
        for k in range(mesh.n_cells):
            p, w = mesh.sub_points(k, sub)
            cw[k] = float(w @ (1.0 / (1.0 + np.linalg.norm(p, axis=1) ** m)))
        mesh._cache[key] = cw
    meshed = float(cw @ np.abs(u.values))
    tail = abs(u.far) * _tail_weight_mass(mesh.dim, m, mesh.R_ext, mesh.domain.centroid)
    return WeightedL1(meshed, tail)


@dataclass(frozen=True)
class CollarCheck:
    collar_l2: float
    collar_l1: float
    I: float
    a: float
    b: float
    c: float
    R0: float

    @property
    def rhs(self) -> float:
        return self.a + self.b * self.collar_l2 - self.c * self.collar_l1

    @property
    def slack(self) -> float:
        return self.I - self.rhs


def l2_local_check(u, collar: Collar, params: Params) -> CollarCheck:
    """int_collar u^2 and both sides of I >= a + b int_collar u^2 - c int_collar |u|.

    I = u[Omega, truncated exterior]; the ball B_R0 is centred at the
    centroid with R0 = inradius / 2, so B_{2 R0} lies in the domain.
    """
    mesh = u.mesh
    if len(collar.cells) == 0:
        raise ParameterError("collar is empty")
    dom = mesh.domain
    nI, N = mesh.n_interior, mesh.n_cells
    n, s = params.n, params.s
    m = n + 2 * s
    R0 = 0.5 * dom.inradius
    r = np.linalg.norm(mesh.points[:nI] - dom.centroid, axis=1)
    ball = np.nonzero(r < R0)[0]
    if len(ball) == 0:
        raise ParameterError("no interior node inside B_R0; refine the mesh")
    wB, uB = mesh.weights[ball], u.values[ball]
    wC, uC = mesh.weights[collar.cells], u.values[collar.cells]
    vol_ball = float(wB.sum())
    vol_collar = float(wC.sum())
    far = dom.diameter + collar.width
    near = dom.inradius - R0
    a = vol_collar / far ** m * float(wB @ uB ** 2)
    b = vol_ball / far ** m
    c = 2.0 * float(wB @ np.abs(uB)) / near ** m
    I = pair_energy(u, np.arange(nI), np.arange(nI, N), params, mesh).value
    return CollarCheck(float(wC @ uC ** 2), float(wC @ np.abs(uC)), I, a, b, c, R0)


# ---------------------------------------------------------------------------
# random test fields
# ---------------------------------------------------------------------------

def random_smooth_function(rng: np.random.Generator, n: int, modes: int = 4, scale: float = 1.0):
    """Random trigonometric sum x -> sum_k a_k cos(k . x + phase_k) with |k| <= 2 / scale."""
    a = rng.normal(size=modes)
    k = rng.uniform(-2.0, 2.0, size=(modes, n)) / scale
    ph = rng.uniform(0.0, 2 * np.pi, size=modes)

    def f(x):
        x = np.atleast_2d(x)
        return np.cos(x @ k.T + ph) @ a
    return f


def random_smooth_field(mesh: Mesh, rng: np.random.Generator, modes: int = 4, far: float | None = None):
    """Smooth random values on every cell; the far value defaults to a random number."""
    from .operators import Field

    f = random_smooth_function(rng, mesh.dim, modes, scale=max(mesh.domain.diameter / 2, 1e-12))
    far = float(rng.normal()) if far is None else float(far)
    return Field(mesh, f(mesh.points), far)
