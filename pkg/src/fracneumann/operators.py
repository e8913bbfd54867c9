"""Fields, the energy inner product, the Neumann operator, the fractional
Laplacian, the exterior closure and the Green-identity audit.

A field carries one value per cell (interior cells first) plus one value for
the far region beyond the truncation radius.  The discrete Neumann operator
at an exterior cell is the cell-averaged kernel sum

    N u(x_k) = C sum_{j in Omega} (W_kj / w_k) (u_k - u_j),

so the closure u_k = sum_j W_kj u_j / sum_j W_kj annihilates it exactly and
is at the same time the exterior minimiser of the energy.  Eliminating the
exterior values this way gives the reduced (Schur complement) system used by
the solver.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .geometry import Mesh
from .kernel import Params, ParameterError, assemble_weights, tail_mass


class MeshMismatch(ValueError):
    pass


# ---------------------------------------------------------------------------
# fields
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Field:
    """Cell values on a mesh plus the far-region value."""

    mesh: Mesh
    values: np.ndarray
    far: float = 0.0

    def __post_init__(self):
        vals = np.array(self.values, dtype=float)
        if vals.shape != (self.mesh.n_cells,):
            raise MeshMismatch(f"field has {vals.shape} values, mesh has {self.mesh.n_cells} cells")
        if not np.all(np.isfinite(vals)) or not math.isfinite(self.far):
            raise ParameterError("field values must be finite")
        vals.setflags(write=False)
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "far", float(self.far))

    @classmethod
    def constant(cls, mesh: Mesh, c: float) -> "Field":
        return cls(mesh, np.full(mesh.n_cells, float(c)), float(c))

    @classmethod
    def from_function(cls, mesh: Mesh, f, far: float | None = None) -> "Field":
        vals = np.asarray(f(mesh.points), dtype=float)
        if far is None:
            far = 0.0
        return cls(mesh, vals, far)

    @property
    def interior(self) -> np.ndarray:
        return self.values[: self.mesh.n_interior]

    @property
    def exterior(self) -> np.ndarray:
        return self.values[self.mesh.n_interior:]

    @property
    def nodes(self) -> np.ndarray:
        """Cell values followed by the far value."""
        return np.append(self.values, self.far)

    def with_interior(self, w) -> "Field":
        vals = self.values.copy()
        vals[: self.mesh.n_interior] = w
        return Field(self.mesh, vals, self.far)

    def __abs__(self) -> "Field":
        return Field(self.mesh, np.abs(self.values), abs(self.far))

    def __neg__(self) -> "Field":
        return Field(self.mesh, -self.values, -self.far)

    def __add__(self, other) -> "Field":
        if isinstance(other, Field):
            _same_mesh(self, other)
            return Field(self.mesh, self.values + other.values, self.far + other.far)
        return Field(self.mesh, self.values + other, self.far + other)

    __radd__ = __add__

    def __sub__(self, other) -> "Field":
        return self + (-other)

    def __mul__(self, c) -> "Field":
        return Field(self.mesh, self.values * c, self.far * c)

    __rmul__ = __mul__


def _same_mesh(*fields):
    m = fields[0].mesh
    for f in fields[1:]:
        if f.mesh is not m:
            raise MeshMismatch("fields live on different meshes")
    return m


# ---------------------------------------------------------------------------
# assembled systems
# ---------------------------------------------------------------------------

class System:
    """Dense operators for one mesh and one (s, C eps^{2s}).

    ``A_full`` acts on all nodes (cells + far node), ``A_red`` on interior
    values after the exterior closure; both represent the inner product.
    """

    def __init__(self, mesh: Mesh, params: Params):
        self.mesh = mesh
        self.params = params
        self.kappa = params.C * params.eps ** (2 * params.s)
        pw = assemble_weights(mesh, params.s)
        self.weights = pw
        nI = mesh.n_interior
        self.mass = mesh.weights[:nI].copy()
        self.deg_I = pw.W_II.sum(axis=1) + pw.W_IE.sum(axis=1)
        self.deg_E = pw.W_IE.sum(axis=0)
        L_red = np.diag(self.deg_I) - pw.W_II - (pw.W_IE / self.deg_E) @ pw.W_IE.T
        L_red = 0.5 * (L_red + L_red.T)
        self.L_red = L_red
        self.A_red = self.kappa * L_red + np.diag(self.mass)
        self._cho = None
        self._cho_full = None
        self._A_full = None

    # closure and reduced products ------------------------------------
    def closure(self, w: np.ndarray) -> np.ndarray:
        """Exterior + far values: kernel-weighted means of the interior values."""
        return (self.weights.W_IE.T @ w) / self.deg_E

    def close(self, w: np.ndarray) -> Field:
        e = self.closure(w)
        return Field(self.mesh, np.concatenate([w, e[:-1]]), e[-1])

    def solve_red(self, b: np.ndarray) -> np.ndarray:
        if self._cho is None:
            self._cho = cho_factor(self.A_red, lower=True, check_finite=False)
        return cho_solve(self._cho, b, check_finite=False)

    # full-DOF representation -----------------------------------------
    @property
    def A_full(self) -> np.ndarray:
        if self._A_full is None:
            pw = self.weights
            nI = self.mesh.n_interior
            W = pw.dense()
            L = np.diag(W.sum(axis=1)) - W
            A = self.kappa * L
            A[np.arange(nI), np.arange(nI)] += self.mass
            self._A_full = A
        return self._A_full

    def solve_full(self, b: np.ndarray) -> np.ndarray:
        if self._cho_full is None:
            self._cho_full = cho_factor(self.A_full, lower=True, check_finite=False)
        return cho_solve(self._cho_full, b, check_finite=False)

    def mass_full(self) -> np.ndarray:
        m = np.zeros(self.mesh.n_cells + 1)
        m[: self.mesh.n_interior] = self.mass
        return m


def system(mesh: Mesh, params: Params) -> System:
    """Cached :class:`System` for this mesh and parameters."""
    key = ("system", params.s, params.C, params.eps)
    hit = mesh._cache.get(key)
    if hit is None:
        hit = System(mesh, params)
        mesh._cache[key] = hit
    return hit


# ---------------------------------------------------------------------------
# inner product
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class BilinearReport:
    seminorm: float
    mass: float
    total: float


def seminorm_form(u: Field, v: Field, params: Params) -> float:
    """S(u, v): the double integral of (u(x)-u(y))(v(x)-v(y)) k over R^{2n} minus (Omega^c)^2.

    Evaluated pair by pair with elementwise products, so swapping u and v
    reproduces the value bit for bit.
    """
    mesh = _same_mesh(u, v)
    pw = assemble_weights(mesh, params.s)
    nI = mesh.n_interior
    un, vn = u.nodes, v.nodes
    ui, vi = un[:nI], vn[:nI]
    du = ui[:, None] - ui[None, :]
    dv = vi[:, None] - vi[None, :]
    s_ii = float(np.sum(pw.W_II * (du * dv)))
    du = ui[:, None] - un[None, nI:]
    dv = vi[:, None] - vn[None, nI:]
    s_ie = float(np.sum(pw.W_IE * (du * dv)))
    return s_ii + 2.0 * s_ie


def bilinear_form(u: Field, v: Field, params: Params) -> BilinearReport:
    """<u, v> = (C eps^{2s} / 2) S(u, v) + int_Omega u v."""
    mesh = _same_mesh(u, v)
    nI = mesh.n_interior
    semi = 0.5 * params.C * params.eps ** (2 * params.s) * seminorm_form(u, v, params)
    mass = float(np.sum(mesh.weights[:nI] * (u.interior * v.interior)))
    return BilinearReport(semi, mass, semi + mass)


def norm_sq(u: Field, params: Params) -> float:
    return bilinear_form(u, u, params).total


# ---------------------------------------------------------------------------
# exterior closure and Neumann operator
# ---------------------------------------------------------------------------

def exterior_closure(w, params: Params, mesh: Mesh | None = None) -> Field:
    """Extend interior values by the kernel-weighted mean at every exterior cell.

    ``w`` is a Field (its interior part is used) or an array of interior values.
    """
    if isinstance(w, Field):
        mesh = w.mesh
        w = w.interior
    if mesh is None:
        raise MeshMismatch("a mesh is required when w is a plain array")
    w = np.asarray(w, dtype=float)
    if w.shape != (mesh.n_interior,):
        raise MeshMismatch("interior value count does not match the mesh")
    return system(mesh, params).close(w)


def point_kernel_weights(mesh: Mesh, x, s: float, m: int | None = None) -> np.ndarray:
    """int_{cell j} |x - y|^{-n-2s} dy for every interior cell j, for a point x outside Omega.

    Cells closer than two of their own sizes are integrated on an m^n
    sub-grid; the rest use the midpoint value.
    """
    x = np.asarray(x, dtype=float).reshape(-1)
    nI, n = mesh.n_interior, mesh.dim
    order = n + 2 * s
    m = m or (16 if n == 1 else 8)
    d = mesh.points[:nI] - x
    r = np.linalg.norm(d, axis=1)
    K = mesh.weights[:nI] * r ** (-order)
    lo, hi = mesh.cell_lo[:nI], mesh.cell_hi[:nI]
    gap = np.linalg.norm(np.maximum(np.maximum(lo - x, x - hi), 0.0), axis=1)
    for j in np.nonzero(gap < 2 * mesh.sizes[:nI])[0]:
        p, wt = mesh.sub_points(int(j), m)
        K[j] = float(wt @ np.linalg.norm(p - x, axis=1) ** (-order))
    return K


def exterior_closure_at(u: Field, x, params: Params) -> float:
    """Closure value at an arbitrary exterior point (pointwise kernel mean)."""
    mesh = u.mesh
    x = np.asarray(x, dtype=float)
    if mesh.domain.distance(x.reshape(1, -1))[0] <= 0:
        raise ParameterError("closure point must lie outside the closed domain")
    K = point_kernel_weights(mesh, x, params.s)
    return float(K @ u.interior / K.sum())


def neumann_operator(u: Field, x, params: Params, ux: float | None = None) -> float:
    """N_s u at an exterior cell index, the far node index, or an exterior point.

    At a mesh cell the kernel is averaged over the exterior cell, matching
    the energy; at a point it is the pointwise kernel integrated over the
    interior cells, with u(x) = ``ux`` or else the value of the exterior cell
    whose node is nearest to x.
    """
    mesh = u.mesh
    nI, N = mesh.n_interior, mesh.n_cells
    if np.ndim(x) == 0:
        k = int(x)
        if k < nI or k > N:
            raise ParameterError(f"node {k} is not exterior")
        pw = assemble_weights(mesh, params.s)
        col = pw.W_IE[:, k - nI]
        wk = mesh.weights[k] if k < N else float(mesh.weights[:nI] @ pw.tail)
        uk = u.nodes[k]
        return params.C * float(col @ (uk - u.interior)) / wk
    x = np.asarray(x, dtype=float)
    if mesh.domain.distance(x.reshape(1, -1))[0] <= 0:
        raise ParameterError("Neumann operator is defined outside the closed domain only")
    if ux is None:
        ext = mesh.points[nI:]
        ux = float(u.exterior[np.argmin(np.linalg.norm(ext - x, axis=1))])
    K = point_kernel_weights(mesh, x, params.s)
    return params.C * float(K @ (ux - u.interior))


def neumann_at_point(u_interior, ux: float, x, mesh: Mesh, params: Params) -> float:
    """C int_Omega (u(x) - u(y)) |x-y|^{-n-2s} dy with a prescribed value u(x)."""
    K = point_kernel_weights(mesh, x, params.s)
    return params.C * float(K @ (ux - np.asarray(u_interior)))


def neumann_all(u: Field, params: Params) -> np.ndarray:
    """N_s u at every exterior cell and the far node (cell-averaged form)."""
    mesh = u.mesh
    nI = mesh.n_interior
    pw = assemble_weights(mesh, params.s)
    w_ext = np.append(mesh.weights[nI:], float(mesh.weights[:nI] @ pw.tail))
    flux = (pw.W_IE * (u.nodes[None, nI:] - u.interior[:, None])).sum(axis=0)
    return params.C * flux / w_ext


# ---------------------------------------------------------------------------
# fractional Laplacian (an independent quadrature path)
# ---------------------------------------------------------------------------

def _neighbours(mesh: Mesh, i: int, pool: np.ndarray, reach: float) -> np.ndarray:
    lo, hi = mesh.cell_lo, mesh.cell_hi
    gap = np.maximum(np.maximum(lo[pool] - hi[i], lo[i] - hi[pool]), 0.0)
    d = np.linalg.norm(gap, axis=1)
    out = pool[(d <= reach * mesh.sizes[i]) & (pool != i)]
    return out


def _fit_rows(mesh: Mesh, i: int, pool: np.ndarray, quadratic: bool):
    """Least-squares rows mapping neighbour values to the gradient (and Hessian diagonal)."""
    n = mesh.dim
    reach = 1.6 if quadratic else 0.6
    nb = _neighbours(mesh, i, pool, reach)
    dx = mesh.points[nb] - mesh.points[i]
    cols = [dx]
    if quadratic:
        cols.append(0.5 * dx ** 2)
        for a in range(n):
            for b in range(a + 1, n):
                cols.append((dx[:, a] * dx[:, b])[:, None])
    X = np.hstack(cols)
    if len(nb) < X.shape[1] or np.linalg.matrix_rank(X) < X.shape[1]:
        if quadratic:
            return _fit_rows(mesh, i, pool, False) + (None,)
        return nb, np.zeros((n, len(nb)))
    wt = 1.0 / np.einsum("ij,ij->i", dx, dx)
    P = np.linalg.solve(X.T @ (wt[:, None] * X), X.T * wt)
    if quadratic:
        return nb, P[:n], P[n:2 * n]
    return nb, P[:n]


def _own_moments(side: np.ndarray, s: float, m: int = 9, sub: int = 4) -> np.ndarray:
    """int_{box centred at 0} z_a^2 |z|^{-n-2s} dz per axis, via self-similarity of the centre box."""
    n = len(side)
    grid = np.array(np.meshgrid(*[np.arange(m * sub)] * n, indexing="ij")).reshape(n, -1).T
    z = (grid + 0.5) / (m * sub) * side - side / 2
    cen = np.all(grid // sub == m // 2, axis=1)
    z = z[~cen]
    wt = np.prod(side) / (m * sub) ** n
    r = np.linalg.norm(z, axis=1)
    acc = wt * (z ** 2 * (r ** (-(n + 2 * s)))[:, None]).sum(axis=0)
    return acc / (1.0 - float(m) ** (-(2 - 2 * s)))


def frac_laplacian_matrix(mesh: Mesh, s: float, eta: float = 1.0) -> np.ndarray:
    """F with (-Delta)^s u(x_i) = C (F @ u.nodes)_i at every interior node.

    Far cells: midpoint rule.  Near cells: the cell's local linear model
    (least-squares gradient from same-region neighbours) integrated on a
    sub-grid.  Own cell: principal value of the local quadratic model over
    the symmetric cell, which keeps only the Hessian diagonal.  Beyond the
    truncation radius u is the far value, with the kernel mass in closed form.
    """
    key = ("frac_laplacian", float(s), float(eta))
    if key in mesh._cache:
        return mesh._cache[key]
    nI, N, n = mesh.n_interior, mesh.n_cells, mesh.dim
    order = n + 2 * s
    pts, w = mesh.points, mesh.weights
    F = np.zeros((nI, N + 1))
    m = 16 if n == 1 else 8
    interior_pool = np.arange(nI)
    exterior_pool = np.arange(nI, N)
    fits = {}

    def grad_rows(j):
        if j not in fits:
            pool = interior_pool if j < nI else exterior_pool
            fits[j] = _fit_rows(mesh, j, pool, False)
        return fits[j]

    lo, hi, size = mesh.cell_lo, mesh.cell_hi, mesh.sizes
    own_memo = {}
    for i in range(nI):
        d = pts - pts[i]
        r = np.linalg.norm(d, axis=1)
        r[i] = np.inf
        k = w * r ** (-order)
        gap = np.linalg.norm(np.maximum(np.maximum(lo - hi[i], lo[i] - hi), 0.0), axis=1)
        near = np.nonzero((gap <= eta * np.maximum(size, size[i])) & (np.arange(N) != i))[0]
        k[near] = 0.0
        F[i, :N] -= k
        F[i, i] += k.sum()
        for j in near:
            p, wt = mesh.sub_points(int(j), m)
            kk = wt * np.linalg.norm(p - pts[i], axis=1) ** (-order)
            a = kk.sum()
            b = kk @ (p - pts[j])
            F[i, i] += a
            F[i, j] -= a
            nb, G = grad_rows(int(j))
            if len(nb):
                c = b @ G                       # b . g_j, g_j = G (u_nb - u_j)
                F[i, nb] -= c
                F[i, j] += c.sum()
        # own cell: -(1/2) sum_a H_aa m_a with H from a local quadratic fit
        nb, _, H = _fit_rows(mesh, i, interior_pool, True)
        if H is not None:
            keyo = tuple(np.round((hi[i] - lo[i]) / mesh.h, 6))
            if keyo not in own_memo:
                own_memo[keyo] = _own_moments(hi[i] - lo[i], s)
            mo = own_memo[keyo] * (w[i] / np.prod(hi[i] - lo[i]))
            c = -0.5 * (mo @ H)
            F[i, nb] += c
            F[i, i] -= c.sum()
    tail = tail_mass(pts[:nI] - mesh.domain.centroid, mesh.R_ext, n, s)
    F[np.arange(nI), np.arange(nI)] += tail
    F[:, N] -= tail
    mesh._cache[key] = F
    return F


def frac_laplacian(u: Field, x, params: Params) -> np.ndarray | float:
    """(-Delta)^s u at interior node index x (int), an index array, or all nodes (None)."""
    mesh = u.mesh
    nI = mesh.n_interior
    F = frac_laplacian_matrix(mesh, params.s)
    if x is None:
        return params.C * (F @ u.nodes)
    idx = np.asarray(x)
    if np.any(idx < 0) or np.any(idx >= nI):
        raise ParameterError("fractional Laplacian is evaluated at interior nodes only")
    out = params.C * (F[idx] @ u.nodes)
    return float(out) if np.ndim(x) == 0 else out


# ---------------------------------------------------------------------------
# Green identity
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class GreenAudit:
    lhs: float
    rhs: float
    residual: float


def green_identity(u: Field, v: Field, params: Params) -> GreenAudit:
    """Both sides of the nonlocal Green identity, with C divided out of the operator side.

    lhs = S(u, v) / 2; rhs = int_Omega v (-Delta)^s u / C + int_{Omega^c} v N_s u / C,
    the exterior integral including the far region.
    """
    mesh = _same_mesh(u, v)
    nI = mesh.n_interior
    pw = assemble_weights(mesh, params.s)
    lhs = 0.5 * seminorm_form(u, v, params)
    lap = frac_laplacian_matrix(mesh, params.s) @ u.nodes
    inner = float(np.sum(mesh.weights[:nI] * v.interior * lap))
    w_ext = np.append(mesh.weights[nI:], float(mesh.weights[:nI] @ pw.tail))
    neu = neumann_all(u, params) / params.C
    outer = float(np.sum(w_ext * v.nodes[nI:] * neu))
    rhs = inner + outer
    return GreenAudit(lhs, rhs, abs(lhs - rhs))


def green_identity_residual(u: Field, v: Field, params: Params) -> float:
    return green_identity(u, v, params).residual


def far_field_mean(u: Field, params: Params, radius: float, n_dirs: int = 16) -> float:
    """Closure value averaged over the sphere |x - centroid| = radius.

    The direction-free part of the far field; the average removes the dipole
    term (n + 2s) <y - c> . x / |x|^2 that a single direction would carry.
    """
    mesh = u.mesh
    c = mesh.domain.centroid
    if mesh.dim == 1:
        dirs = np.array([[1.0], [-1.0]])
    else:
        th = 2 * np.pi * (np.arange(n_dirs) + 0.5) / n_dirs
        dirs = np.column_stack([np.cos(th), np.sin(th)])
    return float(np.mean([exterior_closure_at(u, c + radius * d, params) for d in dirs]))
