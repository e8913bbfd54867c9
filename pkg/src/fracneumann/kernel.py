"""The fractional kernel |x-y|^{-n-2s}: normalisation, cell-pair quadrature and pair weights.

The discrete Gagliardo form used everywhere in the package is a weighted graph
Laplacian: for cells i, j (not both exterior)

    S(u, v) = sum_{i != j} W_ij (u_i - u_j)(v_i - v_j)

over ordered pairs, plus a far-field node standing in for everything beyond
the truncation radius.  Well separated pairs use the midpoint weight
``w_i w_j |x_i - x_j|^{-n-2s}``; touching and nearly touching pairs use the
singular cell rule applied to a field that is linear along the pair axis, and
each interior cell's own (diagonal) contribution is lumped onto its face
neighbours.  All weights are nonnegative, so the form is positive
semidefinite and |u| never increases it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gamma, poch

from .geometry import Mesh


class ParameterError(ValueError):
    pass


def normalization_constant(n: int, s: float) -> float:
    """C_{n,s} = 2^{2s} s Gamma(n/2+s) / (pi^{n/2} Gamma(1-s))."""
    if not 0 < s < 1:
        raise ParameterError(f"s={s} outside (0, 1)")
    if n < 1:
        raise ParameterError(f"dimension n={n} must be >= 1")
    return 4.0 ** s * s * gamma(n / 2 + s) / (math.pi ** (n / 2) * gamma(1 - s))


def sphere_area(n: int) -> float:
    """Surface measure of the unit sphere in R^n (2, 2*pi, 4*pi, ...)."""
    return 2.0 * math.pi ** (n / 2) / gamma(n / 2)


def critical_exponent(n: int, s: float) -> float:
    return math.inf if n <= 2 * s else (n + 2 * s) / (n - 2 * s)


@dataclass(frozen=True)
class Params:
    """Problem constants.  ``C`` defaults to the standard normalisation."""

    n: int
    s: float
    p: float
    eps: float
    C: float = field(default=None)

    def __post_init__(self):
        problems = self.problems()
        if problems:
            raise ParameterError("; ".join(problems))
        if self.C is None:
            object.__setattr__(self, "C", normalization_constant(self.n, self.s))

    def problems(self) -> list[str]:
        out = []
        if not isinstance(self.n, (int, np.integer)) or self.n < 1:
            out.append(f"n={self.n} must be a positive integer")
            return out
        if not 0 < self.s < 1:
            out.append(f"s={self.s} must lie in (0, 1)")
            return out
        pc = critical_exponent(self.n, self.s)
        if not self.p > 1:
            out.append(f"p={self.p} must exceed 1")
        elif not self.p < pc:
            out.append(f"p={self.p} is not subcritical: need p < (n+2s)/(n-2s) = {pc:g}")
        if not self.eps > 0:
            out.append(f"eps={self.eps} must be positive")
        if self.C is not None and not self.C > 0:
            out.append(f"C={self.C} must be positive")
        return out

    @property
    def order(self) -> float:
        """Kernel exponent n + 2s."""
        return self.n + 2 * self.s

    def with_eps(self, eps: float) -> "Params":
        return Params(self.n, self.s, self.p, eps, self.C)


# ---------------------------------------------------------------------------
# singular cell-pair rule
# ---------------------------------------------------------------------------

def box_cell(lo, hi):
    """A cell given as a plain box; returns the sub-point generator m -> (points, weights)."""
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))
    n = len(lo)

    def sub(m):
        idx = np.stack(np.meshgrid(*[np.arange(m)] * n, indexing="ij"), axis=-1).reshape(-1, n)
        side = (hi - lo) / m
        return lo + (idx + 0.5) * side, np.full(len(idx), np.prod(side))

    sub.box = (lo, hi)
    return sub


def mesh_cell(mesh: Mesh, i: int):
    """Cell ``i`` of a mesh as a sub-point generator."""

    def sub(m):
        return mesh.sub_points(i, m)

    sub.box = (mesh.cell_lo[i], mesh.cell_hi[i])
    return sub


def _contact_order(cell_x, cell_y, same: bool, s: float) -> float:
    """Leading error exponent (in 1/m) of the sub-divided midpoint rule."""
    if same:
        return 2 - 2 * s
    (alo, ahi), (blo, bhi) = cell_x.box, cell_y.box
    n = len(alo)
    scale = float(np.max(np.maximum(ahi - alo, bhi - blo)))
    gap = np.maximum(blo - ahi, alo - bhi)
    if np.any(gap > 1e-12 * scale):
        return 2.0
    overlap = int(np.sum(np.minimum(ahi, bhi) - np.maximum(alo, blo) > 1e-12 * scale))
    # contact set of dimension `overlap` adds |x-y|^{2-2s} singular mass of order n - overlap
    return (n - overlap) + 2 - 2 * s


def _rule_level(px, wx, py, wy, ux, uy, order, same):
    d = px[:, None, :] - py[None, :, :]
    r2 = np.einsum("ijk,ijk->ij", d, d)
    du = ux[:, None] - uy[None, :] if ux.ndim == 1 else ux[:, None, :] - uy[None, :, :]
    du2 = du * du if du.ndim == 2 else np.einsum("ijk,ijk->ij", du, du)
    if same:
        np.fill_diagonal(r2, 1.0)
        np.fill_diagonal(du2, 0.0)
    return float(wx @ (du2 * r2 ** (-order / 2)) @ wy)


def _box_moment(side: np.ndarray, s: float, m: int = 16) -> np.ndarray:
    """M = int int_{box^2} (x-y)(x-y)^T |x-y|^{-n-2s} for a box with the given sides.

    A sub-box is similar to the box, so its own block equals M scaled by
    m^{-(n+2-2s)}; summing the m^n off-diagonal blocks by the midpoint rule
    and solving the self-similar relation gives M without a diagonal band.
    """
    n = len(side)
    px, wx = box_cell(np.zeros(n), side)(m)
    d = px[:, None, :] - px[None, :, :]
    r2 = np.einsum("ijk,ijk->ij", d, d)
    np.fill_diagonal(r2, np.inf)
    K = (wx[:, None] * r2 ** (-(n + 2 * s) / 2)) * wx[None, :]
    off = np.einsum("ij,ijk,ijl->kl", K, d, d)
    return off / (1.0 - m ** (-(2 - 2 * s)))


def _local_gradient(u, pts, step):
    """Central-difference gradient of u at pts; shape (k, n) or (k, q, n)."""
    n = pts.shape[1]
    cols = []
    for a in range(n):
        e = np.zeros(n)
        e[a] = 0.5 * step[a]
        cols.append((np.asarray(u(pts + e), float) - np.asarray(u(pts - e), float)) / step[a])
    return np.stack(cols, axis=-1)


def _diagonal_blocks(cell, u, m, s, n):
    """Own-block contribution of each of the m^n sub-boxes (u treated as locally linear)."""
    lo, hi = cell.box
    side = (hi - lo) / m
    M = _box_moment(side, s)
    px, wx = cell(m)
    G = _local_gradient(u, px, side)
    frac = wx / np.prod(side)
    if G.ndim == 2:
        q = np.einsum("ka,ab,kb->k", G, M, G)
    else:
        q = np.einsum("kqa,ab,kqb->k", G, M, G)
    # a clipped sub-box is treated as a full one scaled by its measure fraction
    return float(np.sum(q * frac ** 2))


def singular_cell_rule(cell_x, cell_y, u, s: float, levels=(8, 16), n: int | None = None):
    """Integral of |u(x)-u(y)|^2 / |x-y|^{n+2s} over cell_x times cell_y.

    Cells are sub-point generators (:func:`box_cell`, :func:`mesh_cell`).
    Each level m subdivides both cells into m^n boxes and applies the
    midpoint tensor rule.  For identical cells the m^n coincident sub-box
    blocks are replaced by their local-linear closed form.  The two finest
    levels are combined by Richardson extrapolation with the exponent set by
    the contact geometry.  Returns ``(value, err)``.
    """
    if not 0 < s < 1:
        raise ParameterError(f"singular rule needs 0 < s < 1, got s={s}")
    same = cell_x is cell_y
    n = n or len(cell_x.box[0])
    order = n + 2 * s
    vals = []
    for m in levels:
        px, wx = cell_x(m)
        py, wy = (px, wx) if same else cell_y(m)
        ux, uy = np.asarray(u(px), dtype=float), np.asarray(u(py), dtype=float)
        if np.any(~np.isfinite(ux)) or np.any(~np.isfinite(uy)):
            raise ParameterError("field has non-finite values")
        v = _rule_level(px, wx, py, wy, ux, uy, order, same)
        if same:
            v += _diagonal_blocks(cell_x, u, m, s, n)
        vals.append(v)
    if len(vals) == 1:
        return vals[0], abs(vals[0])
    q = _contact_order(cell_x, cell_y, same, s)
    ratio = (levels[-1] / levels[-2]) ** q
    extrap = (ratio * vals[-1] - vals[-2]) / (ratio - 1)
    return extrap, abs(extrap - vals[-1])


# ---------------------------------------------------------------------------
# assembled pair weights
# ---------------------------------------------------------------------------

def tail_mass(a, R: float, n: int, s: float, terms: int = 60) -> np.ndarray:
    """Kernel mass of {|y - c| > R} seen from points at offset ``a`` from c (|a| < R).

    Closed-form series: the sphere average of |z-a|^{-m} is a 2F1 in |a|^2/r^2,
    integrated term by term against r^{n-1} dr on (R, inf).
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    rho2 = np.einsum("ij,ij->i", a, a) / R ** 2
    m = n + 2 * s
    k = np.arange(terms)
    from scipy.special import factorial
    ck = poch(m / 2, k) * poch((m - n) / 2 + 1, k) / (factorial(k) * poch(n / 2, k))
    series = (ck / (2 * s + 2 * k))[None, :] * rho2[:, None] ** k[None, :]
    return sphere_area(n) * R ** (-2 * s) * series.sum(axis=1)


@dataclass
class PairWeights:
    """Symmetric nonnegative pair weights for one mesh and one s."""

    mesh: Mesh
    s: float
    W_II: np.ndarray          # interior x interior
    W_IE: np.ndarray          # interior x (exterior cells + far node)
    near_i: np.ndarray        # near pairs (global indices, i < j)
    near_j: np.ndarray
    near_err: np.ndarray      # quadrature error estimate of each near weight
    self_mass: np.ndarray     # per-axis diagonal moment of each interior cell
    tail: np.ndarray          # kernel mass beyond R_ext per interior node

    @property
    def n_nodes(self) -> int:
        """Cells plus the far node."""
        return self.mesh.n_cells + 1

    def block(self, A: np.ndarray, B: np.ndarray) -> np.ndarray:
        """Dense W[A, B] for global index lists (index n_cells is the far node)."""
        nI = self.mesh.n_interior
        out = np.zeros((len(A), len(B)))
        Ai, Bi = A < nI, B < nI
        out[np.ix_(Ai, Bi)] = self.W_II[np.ix_(A[Ai], B[Bi])]
        out[np.ix_(Ai, ~Bi)] = self.W_IE[np.ix_(A[Ai], B[~Bi] - nI)]
        out[np.ix_(~Ai, Bi)] = self.W_IE[np.ix_(B[Bi], A[~Ai] - nI)].T
        return out

    def dense(self) -> np.ndarray:
        """Full (cells + far) weight matrix; exterior-exterior block is zero."""
        nI = self.mesh.n_interior
        N = self.n_nodes
        W = np.zeros((N, N))
        W[:nI, :nI] = self.W_II
        W[:nI, nI:] = self.W_IE
        W[nI:, :nI] = self.W_IE.T
        return W


def _cell_variance(mesh: Mesh) -> np.ndarray:
    """Per-axis second central moment (x_a - c_a)^2 averaged over each cell."""
    key = ("cell_variance",)
    if key in mesh._cache:
        return mesh._cache[key]
    var = (mesh.cell_hi - mesh.cell_lo) ** 2 / 12.0
    for i in range(mesh.n_cells):
        if not mesh.is_plain(i):
            p, w = mesh.sub_points(i, 8)
            c = w @ p / w.sum()
            var[i] = w @ (p - c) ** 2 / w.sum()
    mesh._cache[key] = var
    return var


def _taylor_moments(d, S, m):
    """Per-axis pair moments int int z_a^2 |z|^{-m} for offset d, cell covariance S.

    With z = d + xi and xi of diagonal covariance S, a second-order Taylor
    expansion gives f(d) + sum_c S_c d_c^2 f(d) / 2 for f = z_a^2 g, g = |z|^{-m}.
    Returned per unit cell weights; zero where d = 0.
    """
    r2 = np.einsum("...k,...k->...", d, d)
    with np.errstate(divide="ignore", invalid="ignore"):
        g = r2 ** (-m / 2)
        lap_g = g * (-m * S.sum(axis=-1) / r2 + m * (m + 2) * np.einsum("...k,...k->...", S, d * d) / r2 ** 2)
        dg = -m * d * (g / r2)[..., None]
        Taa = d * d * g[..., None] + 0.5 * (2 * S * g[..., None] + 4 * S * d * dg + d * d * lap_g[..., None])
    Taa[~np.isfinite(Taa).all(axis=-1)] = 0.0
    return Taa


def _far_rows(pts, w, var, rows, m):
    """Weights from ``rows`` to every cell, and the per-axis moment left across the offset.

    W |d|^2 matches the trace of the Taylor moments; the remainder
    T_aa - W d_a^2 is what a single scalar weight cannot carry.
    """
    d = pts[rows, None, :] - pts[None, :, :]
    S = var[rows, None, :] + var[None, :, :]
    ww = w[rows, None] * w[None, :]
    Taa = _taylor_moments(d, S, m) * ww[..., None]
    r2 = np.einsum("ijk,ijk->ij", d, d)
    with np.errstate(divide="ignore", invalid="ignore"):
        W = np.where(r2 > 0, Taa.sum(axis=2) / r2, 0.0)
    W = np.maximum(W, 0.0)
    return W, Taa - W[..., None] * d * d


def _near_pairs(mesh: Mesh, eta: float):
    """Pairs i<j (not both exterior) whose boxes are within eta * max size."""
    lo, hi, size = mesh.cell_lo, mesh.cell_hi, mesh.sizes
    nI = mesh.n_interior
    I, J = [], []
    for i0 in range(0, nI, 256):
        rows = np.arange(i0, min(nI, i0 + 256))
        gap = np.maximum(lo[None, :, :] - hi[rows, None, :], lo[rows, None, :] - hi[None, :, :])
        gap = np.linalg.norm(np.maximum(gap, 0.0), axis=2)
        lim = eta * np.maximum(size[rows, None], size[None, :])
        ii, jj = np.nonzero(gap <= lim * (1 + 1e-9))
        ii = rows[ii]
        keep = jj > ii
        I.append(ii[keep])
        J.append(jj[keep])
    return np.concatenate(I), np.concatenate(J)


def _face_neighbours(mesh: Mesh, i: int, cand: np.ndarray):
    """Candidates sharing a face with cell i, and the axis normal to that face."""
    if len(cand) == 0:
        return cand, cand
    tol = 1e-9 * mesh.sizes[i]
    lo, hi = mesh.cell_lo, mesh.cell_hi
    overlap = np.minimum(hi[cand], hi[i]) - np.maximum(lo[cand], lo[i])
    touch = np.all(overlap >= -tol, axis=1)
    spread = overlap > tol
    face = touch & (spread.sum(axis=1) == mesh.dim - 1)
    axis = np.argmin(spread[face], axis=1) if mesh.dim > 1 else np.zeros(int(face.sum()), int)
    return cand[face], axis


def _moment_tensor(cell_x, cell_y, s, levels, n):
    """T = int int (x-y)(x-y)^T |x-y|^{-n-2s} over a cell pair, and its error."""
    T = np.empty((n, n))
    err = 0.0
    for a in range(n):
        T[a, a], e = singular_cell_rule(cell_x, cell_y, lambda x, a=a: x[:, a], s, levels, n)
        err += e
    # polarisation with both signs keeps T equivariant under coordinate reflections
    for a in range(n):
        for b in range(a + 1, n):
            vp, ep = singular_cell_rule(cell_x, cell_y, lambda x, a=a, b=b: x[:, a] + x[:, b], s, levels, n)
            vm, em = singular_cell_rule(cell_x, cell_y, lambda x, a=a, b=b: x[:, a] - x[:, b], s, levels, n)
            T[a, b] = T[b, a] = 0.25 * (vp - vm)
            err += 0.5 * (ep + em)
    return T, err


def assemble_weights(mesh: Mesh, s: float, eta: float = 1.0, levels=None) -> PairWeights:
    """Assemble (and cache on the mesh) the pair weights for exponent s."""
    key = ("weights", float(s), float(eta))
    hit = mesh._cache.get(key)
    if hit is not None:
        return hit
    n = mesh.dim
    order = n + 2 * s
    if levels is None:
        levels = (8, 16) if n == 1 else (4, 8)
    nI, N = mesh.n_interior, mesh.n_cells
    pts, w = mesh.points, mesh.weights

    var = _cell_variance(mesh)
    W_II = np.empty((nI, nI))
    W_IE = np.zeros((nI, N - nI + 1))
    deficit = np.zeros((nI, n))
    for r0 in range(0, nI, 128):
        rows = np.arange(r0, min(nI, r0 + 128))
        Wb, Db = _far_rows(pts, w, var, rows, order)
        W_II[rows] = Wb[:, :nI]
        W_IE[rows, :-1] = Wb[:, nI:]
        # in the ordered-pair sum each endpoint owns one copy of the
        # remainder; an exterior endpoint cannot lump, so its copy is dropped
        deficit[rows] += Db.sum(axis=1)

    # near pairs: full moment tensor T_ij = int int (x-y)(x-y)^T k.  The pair
    # weight carries the component along the centre offset; what T holds
    # across it, together with each cell's own diagonal moment, is lumped
    # axis by axis onto face neighbours below.
    ni, nj = _near_pairs(mesh, eta)
    near_w = np.empty(len(ni))
    near_e = np.empty(len(ni))
    memo = {}
    far_d = pts[nj] - pts[ni]
    far_T = _taylor_moments(far_d, var[ni] + var[nj], order) * (w[ni] * w[nj])[:, None]
    far_rest = far_T - (far_T.sum(axis=1) / np.einsum("ij,ij->i", far_d, far_d))[:, None] * far_d ** 2
    jI = nj < nI
    np.subtract.at(deficit, ni, far_rest)
    np.subtract.at(deficit, nj[jI], far_rest[jI])
    for k, (i, j) in enumerate(zip(ni, nj)):
        d = pts[j] - pts[i]
        dist2 = float(d @ d)
        key_ij = None
        if mesh.is_plain(i) and mesh.is_plain(j):
            hi_, hj_ = mesh.cell_hi[i] - mesh.cell_lo[i], mesh.cell_hi[j] - mesh.cell_lo[j]
            key_ij = tuple(np.round(np.concatenate([hi_, hj_, d]) / mesh.h, 6))
        if key_ij in memo:
            T, err = memo[key_ij]
        else:
            T, err = _moment_tensor(mesh_cell(mesh, i), mesh_cell(mesh, j), s, levels, n)
            if key_ij is not None:
                memo[key_ij] = (T, err)
        near_w[k] = float(d @ T @ d) / dist2 ** 2
        near_e[k] = err / dist2
        rest = np.diag(T) - near_w[k] * d * d
        deficit[i] += rest
        if j < nI:
            deficit[j] += rest
    W_II[ni[jI], nj[jI]] = near_w[jI]
    W_II[nj[jI], ni[jI]] = near_w[jI]
    W_IE[ni[~jI], nj[~jI] - nI] = near_w[~jI]

    self_mass = np.empty((nI, n))
    smemo = {}
    self_levels = tuple(2 * m for m in levels)
    for i in range(nI):
        key_i = tuple(np.round((mesh.cell_hi[i] - mesh.cell_lo[i]) / mesh.h, 6)) if mesh.is_plain(i) else None
        if key_i in smemo:
            self_mass[i] = smemo[key_i]
            continue
        cell = mesh_cell(mesh, i)
        self_mass[i] = np.diag(_moment_tensor(cell, cell, s, self_levels, n)[0])
        if key_i is not None:
            smemo[key_i] = self_mass[i].copy()
    deficit = np.maximum(deficit + self_mass, 0.0)

    # lump onto face neighbours, one axis group at a time; a one-sided group
    # still reproduces linear fields exactly
    nb_lists = [[] for _ in range(nI)]
    for i, j in zip(ni[jI], nj[jI]):
        nb_lists[i].append(j)
        nb_lists[j].append(i)
    for i in range(nI):
        nb, axis = _face_neighbours(mesh, i, np.asarray(nb_lists[i], dtype=int))
        dx = pts[nb] - pts[i]
        for a in range(n):
            grp = axis == a
            if not np.any(grp):
                continue
            add = 0.5 * deficit[i, a] / float(np.sum(dx[grp, a] ** 2))
            W_II[i, nb[grp]] += add
            W_II[nb[grp], i] += add

    tail = tail_mass(pts[:nI] - mesh.domain.centroid, mesh.R_ext, n, s)
    W_IE[:, -1] = w[:nI] * tail

    out = PairWeights(mesh, float(s), W_II, W_IE, ni, nj, near_e, self_mass, tail)
    mesh._cache[key] = out
    return out


# ---------------------------------------------------------------------------
# pair energies u[A, B]
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PairEnergy:
    value: float
    labels: tuple
    error: float


def _node_values(u, mesh: Mesh) -> np.ndarray:
    vals = np.asarray(getattr(u, "values", u), dtype=float)
    far = float(getattr(u, "far", 0.0))
    if vals.shape[0] == mesh.n_cells:
        vals = np.append(vals, far)
    if vals.shape[0] != mesh.n_cells + 1:
        raise ParameterError("field size does not match the mesh")
    if not np.all(np.isfinite(vals)):
        raise ParameterError("field has NaN or infinite values")
    return vals


def pair_energy(u, A, B, params: Params, mesh: Mesh | None = None, labels=("A", "B")) -> PairEnergy:
    """u[A, B] = int_A int_B |u(x)-u(y)|^2 / |x-y|^{n+2s} dy dx on mesh cells.

    ``A`` and ``B`` are arrays of cell indices; index ``mesh.n_cells`` denotes
    the far region beyond the truncation radius.  The result is exactly
    symmetric in (A, B).
    """
    mesh = mesh or u.mesh
    vals = _node_values(u, mesh)
    A = np.unique(np.asarray(A, dtype=int))
    B = np.unique(np.asarray(B, dtype=int))
    if (len(B), tuple(B)) < (len(A), tuple(A)):
        A, B = B, A
        labels = labels[::-1]
    pw = assemble_weights(mesh, params.s)
    total = 0.0
    for a0 in range(0, len(A), 512):
        Ab = A[a0:a0 + 512]
        Wb = pw.block(Ab, B)
        diff = vals[Ab][:, None] - vals[B][None, :]
        total += float(np.sum(Wb * diff * diff))
    inA = np.isin(pw.near_i, A) & np.isin(pw.near_j, B) | np.isin(pw.near_j, A) & np.isin(pw.near_i, B)
    du = vals[pw.near_i[inA]] - vals[pw.near_j[inA]]
    err = float(np.sum(pw.near_err[inA] * du * du))
    return PairEnergy(total, tuple(labels), err)
