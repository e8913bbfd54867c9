"""Domains, truncated exteriors and box meshes.

Cells are axis-aligned boxes clipped to the region they belong to.  Interior
cells cover the domain exactly; exterior cells cover the ball of radius
``R_ext`` around the domain centroid minus the domain.  Clipped measures and
centroids are computed in closed form for intervals, disks and rectangles.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np


class GeometryError(ValueError):
    """Raised for degenerate shapes or inconsistent mesh requests."""


# ---------------------------------------------------------------------------
# closed-form clipping
# ---------------------------------------------------------------------------

def _disk_box_moments(x0, x1, y0, y1, r):
    """Area and first moments of [x0,x1]x[y0,y1] intersected with the disk |z|<=r."""
    a, b = max(x0, -r), min(x1, r)
    if b <= a or y1 <= y0:
        return 0.0, 0.0, 0.0
    r2 = r * r

    def S(x):
        return math.sqrt(max(r2 - x * x, 0.0))

    def F(x):  # antiderivative of S
        return 0.5 * (x * S(x) + r2 * math.asin(max(-1.0, min(1.0, x / r))))

    def G(x):  # antiderivative of x*S
        return -(max(r2 - x * x, 0.0) ** 1.5) / 3.0

    def Q(x):  # antiderivative of S^2 / 2
        return 0.5 * (r2 * x - x ** 3 / 3.0)

    cuts = {a, b}
    for y in (y0, y1):
        if abs(y) < r:
            xc = math.sqrt(r2 - y * y)
            cuts.update(t for t in (-xc, xc) if a < t < b)
    cuts = sorted(cuts)

    area = mx = my = 0.0
    for lo, hi in zip(cuts[:-1], cuts[1:]):
        if hi <= lo:
            continue
        s = S(0.5 * (lo + hi))
        top_arc, bot_arc = s < y1, -s > y0
        top = s if top_arc else y1
        bot = -s if bot_arc else y0
        if top <= bot:
            continue
        if top_arc:
            it, ixt, iqt = F(hi) - F(lo), G(hi) - G(lo), Q(hi) - Q(lo)
        else:
            it, ixt, iqt = y1 * (hi - lo), 0.5 * y1 * (hi * hi - lo * lo), 0.5 * y1 * y1 * (hi - lo)
        if bot_arc:
            ib, ixb, iqb = -(F(hi) - F(lo)), -(G(hi) - G(lo)), Q(hi) - Q(lo)
        else:
            ib, ixb, iqb = y0 * (hi - lo), 0.5 * y0 * (hi * hi - lo * lo), 0.5 * y0 * y0 * (hi - lo)
        area += it - ib
        mx += ixt - ixb
        my += iqt - iqb
    return area, mx, my


def _box_box_moments(lo, hi, blo, bhi):
    """Measure and first moments of the intersection of two boxes (vectorised over rows)."""
    ilo = np.maximum(lo, blo)
    ihi = np.minimum(hi, bhi)
    ext = np.clip(ihi - ilo, 0.0, None)
    meas = np.prod(ext, axis=-1)
    mom = meas[..., None] * 0.5 * (ilo + ihi)
    return meas, mom


def _ball_moments(lo, hi, center, radius):
    """Measure and first moments of boxes intersected with a ball (n = 1 or 2)."""
    lo = np.atleast_2d(lo) - center
    hi = np.atleast_2d(hi) - center
    n = lo.shape[1]
    if n == 1:
        meas, mom = _box_box_moments(lo, hi, np.array([-radius]), np.array([radius]))
    else:
        out = np.array([_disk_box_moments(l[0], h[0], l[1], h[1], radius) for l, h in zip(lo, hi)])
        meas, mom = out[:, 0], out[:, 1:]
    return meas, mom + meas[:, None] * center


# ---------------------------------------------------------------------------
# domains
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Domain:
    """A bounded region: an interval (n=1), a disk or an axis-aligned rectangle (n=2)."""

    kind: str
    dim: int
    lo: np.ndarray          # bounding box
    hi: np.ndarray
    radius: float = 0.0     # disks only
    diameter: float = 0.0
    volume: float = 0.0

    @property
    def centroid(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)

    @property
    def inradius(self) -> float:
        """Distance from the centroid to the boundary."""
        if self.kind == "disk":
            return self.radius
        return 0.5 * float(np.min(self.hi - self.lo))

    def describe(self) -> dict:
        if self.kind == "interval":
            return {"shape": "interval", "bounds": [float(self.lo[0]), float(self.hi[0])]}
        if self.kind == "disk":
            return {"shape": "disk", "center": self.centroid.tolist(), "radius": self.radius}
        return {"shape": "rectangle", "lower": self.lo.tolist(), "upper": self.hi.tolist()}

    # -- point queries -----------------------------------------------------
    def distance(self, x) -> np.ndarray:
        """Euclidean distance to the closed domain (zero inside)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self.kind == "disk":
            return np.maximum(np.linalg.norm(x - self.centroid, axis=1) - self.radius, 0.0)
        gap = np.maximum(np.maximum(self.lo - x, x - self.hi), 0.0)
        return np.linalg.norm(gap, axis=1)

    def depth(self, x) -> np.ndarray:
        """Distance to the boundary for points inside, negative outside."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self.kind == "disk":
            return self.radius - np.linalg.norm(x - self.centroid, axis=1)
        inner = np.min(np.minimum(x - self.lo, self.hi - x), axis=1)
        return np.where(inner > 0, inner, -self.distance(x))

    def contains(self, x) -> np.ndarray:
        """Strict membership in the open domain."""
        return self.depth(x) > 0

    # -- box queries -------------------------------------------------------
    def box_distance(self, lo, hi) -> np.ndarray:
        if self.kind == "disk":
            c = np.clip(self.centroid, lo, hi)
            return np.maximum(np.linalg.norm(c - self.centroid, axis=1) - self.radius, 0.0)
        gap = np.maximum(np.maximum(self.lo - hi, lo - self.hi), 0.0)
        return np.linalg.norm(gap, axis=1)

    def box_inside(self, lo, hi) -> np.ndarray:
        if self.kind == "disk":
            far = np.maximum(np.abs(lo - self.centroid), np.abs(hi - self.centroid))
            return np.linalg.norm(far, axis=1) <= self.radius
        return np.all((lo >= self.lo) & (hi <= self.hi), axis=1)

    def clip(self, lo, hi):
        """Measure and centroid of each box intersected with the domain."""
        lo, hi = np.atleast_2d(lo), np.atleast_2d(hi)
        if self.kind == "disk":
            meas, mom = _ball_moments(lo, hi, self.centroid, self.radius)
        else:
            meas, mom = _box_box_moments(lo, hi, self.lo, self.hi)
        cen = np.divide(mom, meas[:, None], out=0.5 * (lo + hi), where=meas[:, None] > 0)
        return meas, cen


def build_domain(spec) -> Domain:
    """Build a domain from a shape descriptor.

    Accepted descriptors (dicts)::

        {"shape": "interval", "bounds": [a, b]}
        {"shape": "disk", "center": [x, y], "radius": r}
        {"shape": "rectangle", "lower": [x0, y0], "upper": [x1, y1]}
    """
    if isinstance(spec, Domain):
        return spec
    try:
        shape = spec["shape"]
    except (KeyError, TypeError):
        raise GeometryError("domain descriptor needs a 'shape' key") from None

    if shape == "interval":
        a, b = (float(t) for t in spec["bounds"])
        if not (np.isfinite(a) and np.isfinite(b)) or b <= a:
            raise GeometryError(f"degenerate interval [{a}, {b}]: zero measure")
        return Domain("interval", 1, np.array([a]), np.array([b]), diameter=b - a, volume=b - a)
    if shape == "disk":
        c = np.asarray(spec.get("center", [0.0, 0.0]), dtype=float)
        r = float(spec["radius"])
        if c.shape != (2,) or not r > 0 or not np.isfinite(r):
            raise GeometryError(f"degenerate disk (center={c.tolist()}, radius={r}): zero measure")
        return Domain("disk", 2, c - r, c + r, radius=r, diameter=2 * r, volume=math.pi * r * r)
    if shape == "rectangle":
        lo = np.asarray(spec["lower"], dtype=float)
        hi = np.asarray(spec["upper"], dtype=float)
        if lo.shape != (2,) or hi.shape != (2,) or np.any(hi <= lo):
            raise GeometryError(f"degenerate rectangle {lo.tolist()}..{hi.tolist()}: zero measure")
        side = hi - lo
        return Domain("rectangle", 2, lo, hi, diameter=float(np.hypot(*side)), volume=float(np.prod(side)))
    raise GeometryError(f"unsupported shape {shape!r} (interval, disk or rectangle)")


def _exterior_clip(domain: Domain, R: float, lo, hi):
    """Measure and centroid of boxes intersected with B_R(centroid) minus the domain."""
    lo, hi = np.atleast_2d(lo), np.atleast_2d(hi)
    mb, momb = _ball_moments(lo, hi, domain.centroid, R)
    md, cd = domain.clip(lo, hi)
    meas = np.clip(mb - md, 0.0, None)
    mom = momb - md[:, None] * cd
    cen = np.divide(mom, meas[:, None], out=0.5 * (lo + hi), where=meas[:, None] > 1e-300)
    return meas, cen


# ---------------------------------------------------------------------------
# meshes
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ExteriorTruncation:
    """Outer radius of the meshed exterior and its resolution.

    ``h_ext`` is the cell size next to the domain; with ``growth > 0`` cells
    further out grow like ``growth * dist(x, domain)``.
    """

    R_ext: float | None = None
    h_ext: float | None = None
    growth: float = 0.25

    def resolved(self, domain: Domain, h_boundary: float) -> "ExteriorTruncation":
        R = 4.0 * domain.diameter if self.R_ext is None else float(self.R_ext)
        he = 2.0 * h_boundary if self.h_ext is None else float(self.h_ext)
        if not R > 2.0 * domain.diameter:
            raise GeometryError(f"R_ext={R:g} must exceed 2*diameter={2 * domain.diameter:g}")
        if not he > 0:
            raise GeometryError("h_ext must be positive")
        if self.growth < 0:
            raise GeometryError("growth must be nonnegative")
        return ExteriorTruncation(R, he, float(self.growth))


@dataclass(frozen=True)
class Collar:
    """Exterior cells within distance ``width`` of the domain."""

    width: float
    cells: np.ndarray
    weight: float


@dataclass(frozen=True, eq=False)
class Mesh:
    """Interior and truncated-exterior cells.

    Interior cells occupy indices ``0 .. n_interior-1``.  Each cell is a union
    of one or more boxes (slivers are merged into a face neighbour); the node
    is the centroid of the clipped cell.
    """

    domain: Domain
    trunc: ExteriorTruncation
    h: float
    points: np.ndarray
    weights: np.ndarray
    n_interior: int
    sizes: np.ndarray
    cell_lo: np.ndarray
    cell_hi: np.ndarray
    box_lo: np.ndarray
    box_hi: np.ndarray
    box_owner: np.ndarray
    box_clipped: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def dim(self) -> int:
        return self.domain.dim

    @property
    def n_cells(self) -> int:
        return len(self.weights)

    @property
    def n_exterior(self) -> int:
        return self.n_cells - self.n_interior

    @property
    def interior(self) -> slice:
        return slice(0, self.n_interior)

    @property
    def exterior(self) -> slice:
        return slice(self.n_interior, self.n_cells)

    @property
    def is_interior(self) -> np.ndarray:
        tag = np.zeros(self.n_cells, dtype=bool)
        tag[: self.n_interior] = True
        return tag

    @property
    def R_ext(self) -> float:
        return self.trunc.R_ext

    def cell_boxes(self, i: int) -> np.ndarray:
        cache = self._cache.setdefault("owner_index", {})
        if not cache:
            for b, o in enumerate(self.box_owner):
                cache.setdefault(int(o), []).append(b)
        return np.asarray(cache[int(i)])

    def region_clip(self, i: int, lo, hi):
        """Clip boxes to the region that cell ``i`` belongs to."""
        if i < self.n_interior:
            return self.domain.clip(lo, hi)
        return _exterior_clip(self.domain, self.trunc.R_ext, lo, hi)

    def sub_points(self, i: int, m: int):
        """Centroids and weights of an m^n subdivision of cell ``i``."""
        key = ("sub", int(i), int(m))
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        n = self.dim
        pts, wts = [], []
        frac = (np.array(list(itertools.product(range(m), repeat=n)), dtype=float)) / m
        for b in self.cell_boxes(i):
            lo, hi = self.box_lo[b], self.box_hi[b]
            side = hi - lo
            slo = lo + frac * side
            shi = slo + side / m
            if self.box_clipped[b]:
                meas, cen = self.region_clip(i, slo, shi)
                keep = meas > 0
                pts.append(cen[keep])
                wts.append(meas[keep])
            else:
                pts.append(0.5 * (slo + shi))
                wts.append(np.full(len(slo), np.prod(side) / m ** n))
        out = (np.concatenate(pts), np.concatenate(wts))
        self._cache[key] = out
        return out

    def is_plain(self, i: int) -> bool:
        """True for a single unclipped box (sub-point pattern depends on shape only)."""
        boxes = self.cell_boxes(i)
        return len(boxes) == 1 and not self.box_clipped[boxes[0]]


def _subdivide(lo, size, n):
    offs = np.array(list(itertools.product((0.0, 1.0), repeat=n)))
    half = size / 2
    return (lo[:, None, :] + offs[None, :, :] * half).reshape(-1, n), half


def _quadtree(roots_lo, root_size, levels, classify, target):
    """Refine root boxes; returns leaf lower corners and sizes.

    ``classify(lo, hi)`` gives 0 (discard), 1 (keep); ``target(lo, hi)`` the
    admissible cell size (compared with the largest side).
    """
    n = roots_lo.shape[1]
    leaves_lo, leaves_size = [], []
    lo, size = roots_lo, np.asarray(root_size, dtype=float)
    for lev in range(levels, -1, -1):
        hi = lo + size
        keep = classify(lo, hi)
        lo, hi = lo[keep], hi[keep]
        if lev == 0:
            split = np.zeros(len(lo), dtype=bool)
        else:
            split = np.max(size) > target(lo, hi) * (1 + 1e-12)
        leaves_lo.append(lo[~split])
        leaves_size.append(np.broadcast_to(size, (int((~split).sum()), n)))
        if lev > 0:
            lo, size = _subdivide(lo[split], size, n)
    return np.concatenate(leaves_lo), np.concatenate(leaves_size)


def _touching(lo, hi, j_lo, j_hi, tol):
    """Face-touching test of one box against many (shared (n-1)-face of positive measure)."""
    gap = np.maximum(j_lo - hi, lo - j_hi)
    overlap = np.minimum(hi, j_hi) - np.maximum(lo, j_lo)
    n = lo.shape[0]
    contact = np.abs(gap) <= tol
    pos = overlap > tol
    return (contact.sum(axis=1) == 1) & (pos.sum(axis=1) == n - 1)


def _merge_slivers(lo, hi, meas, theta, tol):
    """Map each piece to an owning piece; slivers go to their largest face neighbour."""
    owner = np.arange(len(meas))
    full = np.prod(hi - lo, axis=1)
    order = np.argsort(meas / full)
    for k in order:
        if meas[k] >= theta * full[k]:
            break
        nb = np.flatnonzero(_touching(lo[k], hi[k], lo, hi, tol))
        nb = nb[meas[nb] > meas[k]]
        if len(nb):
            owner[k] = nb[np.argmax(meas[nb])]
    for k in range(len(owner)):  # resolve chains
        while owner[owner[k]] != owner[k]:
            owner[k] = owner[owner[k]]
    return owner


def _assemble_cells(lo, hi, meas, cen, owner):
    groups = {}
    for b, o in enumerate(owner):
        groups.setdefault(int(o), []).append(b)
    keys = sorted(groups)
    w = np.array([meas[groups[k]].sum() for k in keys])
    pts = np.array([(meas[groups[k], None] * cen[groups[k]]).sum(axis=0) for k in keys]) / w[:, None]
    clo = np.array([lo[groups[k]].min(axis=0) for k in keys])
    chi = np.array([hi[groups[k]].max(axis=0) for k in keys])
    size = np.array([np.max(hi[k] - lo[k]) for k in keys])
    new_id = {k: i for i, k in enumerate(keys)}
    box_owner = np.array([new_id[int(o)] for o in owner])
    return pts, w, clo, chi, size, box_owner


def _unclipped(lo, hi, meas, cen, rtol: float = 1e-12) -> np.ndarray:
    """Boxes whose clipped measure is their full measure; resets them in place."""
    full = np.prod(hi - lo, axis=1)
    same = meas >= full * (1 - rtol)
    meas[same] = full[same]
    cen[same] = 0.5 * (lo[same] + hi[same])
    return same


def build_mesh(domain: Domain, h: float, trunc: ExteriorTruncation | None = None,
               grading: float = 0.0, focus=None, sliver: float = 0.3) -> Mesh:
    """Build an interior + truncated-exterior box mesh.

    ``h`` is the interior cell size.  With ``grading > 0`` the interior size
    grows away from ``focus`` (default: centroid) like ``grading * distance``,
    never below ``h``; cells stay powers-of-two multiples of ``h``.
    """
    domain = build_domain(domain)
    n = domain.dim
    h = float(h)
    if not h > 0 or not h < domain.diameter / 4:
        raise GeometryError(f"h={h:g} too coarse: need 0 < h < diameter/4 = {domain.diameter / 4:g}")
    focus = domain.centroid if focus is None else np.asarray(focus, dtype=float)
    tol = 1e-12 * domain.diameter

    # interior grid aligned with the bounding box
    width = domain.hi - domain.lo
    h_max = h if grading <= 0 else max(h, min(domain.diameter / 8, grading * domain.diameter))
    levels = max(0, int(math.floor(math.log2(h_max / h + 1e-12))))
    counts = np.ceil(width / (h * 2 ** levels) - 1e-9).astype(int)
    root = width / counts
    fine = root / 2 ** levels
    grid = np.array(list(itertools.product(*[range(c) for c in counts])), dtype=float)
    roots_lo = domain.lo + grid * root

    def int_classify(lo, hi):
        return domain.box_distance(lo, hi) <= 0.0

    def int_target(lo, hi):
        if grading <= 0:
            return np.full(len(lo), np.max(fine))
        d = np.linalg.norm(np.clip(focus, lo, hi) - focus, axis=1)
        return np.maximum(np.max(fine), grading * d)

    ilo, isz = _quadtree(roots_lo, root, levels, int_classify, int_target)
    ihi = ilo + isz
    inside = domain.box_inside(ilo, ihi)
    imeas, icen = np.prod(isz, axis=1), 0.5 * (ilo + ihi)
    cm, cc = domain.clip(ilo[~inside], ihi[~inside])
    imeas[~inside], icen[~inside] = cm, cc
    # a box that only touches the boundary loses nothing to clipping; treating
    # it as whole keeps mirror-image cells bit-for-bit alike
    inside |= _unclipped(ilo, ihi, imeas, icen)
    keep = imeas > 0
    ilo, ihi, imeas, icen, iclip = ilo[keep], ihi[keep], imeas[keep], icen[keep], ~inside[keep]
    iowner = _merge_slivers(ilo, ihi, imeas, sliver, tol)
    ipts, iw, iclo, ichi, isize, ibox_owner = _assemble_cells(ilo, ihi, imeas, icen, iowner)

    # exterior quadtree centred on the centroid
    near = ihi[iclip] - ilo[iclip]
    h_bnd = float(np.max(near)) if len(near) else float(np.max(fine))
    trunc = (trunc or ExteriorTruncation()).resolved(domain, h_bnd)
    R, he, gam = trunc.R_ext, trunc.h_ext, trunc.growth
    c = domain.centroid
    top = he if gam <= 0 else max(he, gam * R)
    elev = max(0, int(math.floor(math.log2(top / he + 1e-12))))
    H0 = he * 2 ** elev
    k = int(math.ceil(R / H0))
    egrid = np.array(list(itertools.product(range(-k, k), repeat=n)), dtype=float)
    eroots = c + egrid * H0

    def ext_classify(lo, hi):
        cl = np.clip(c, lo, hi)
        in_ball = np.linalg.norm(cl - c, axis=1) < R
        return in_ball & ~domain.box_inside(lo, hi)

    def ext_target(lo, hi):
        return np.maximum(he, gam * domain.box_distance(lo, hi))

    elo, esz = _quadtree(eroots, np.full(n, H0), elev, ext_classify, ext_target)
    ehi = elo + esz
    far = np.abs(np.maximum(np.abs(elo - c), np.abs(ehi - c)))
    whole = (np.linalg.norm(far, axis=1) <= R) & (domain.box_distance(elo, ehi) > 0)
    emeas, ecen = np.prod(esz, axis=1), 0.5 * (elo + ehi)
    if np.any(~whole):
        cm, cc = _exterior_clip(domain, R, elo[~whole], ehi[~whole])
        emeas[~whole], ecen[~whole] = cm, cc
    whole |= _unclipped(elo, ehi, emeas, ecen)
    keep = emeas > 1e-14 * np.prod(esz, axis=1)
    elo, ehi, emeas, ecen, eclip = elo[keep], ehi[keep], emeas[keep], ecen[keep], ~whole[keep]
    eowner = _merge_slivers(elo, ehi, emeas, sliver, tol)
    epts, ew, eclo, echi, esize, ebox_owner = _assemble_cells(elo, ehi, emeas, ecen, eowner)

    if np.any(~domain.contains(ipts)):
        raise GeometryError("interior node on or outside the boundary; adjust h")
    bad = domain.distance(epts) <= 0
    if np.any(bad):
        raise GeometryError("exterior node inside the closed domain; adjust h_ext")

    return Mesh(
        domain=domain, trunc=trunc, h=float(np.max(fine)),
        points=np.vstack([ipts, epts]), weights=np.concatenate([iw, ew]),
        n_interior=len(iw), sizes=np.concatenate([isize, esize]),
        cell_lo=np.vstack([iclo, eclo]), cell_hi=np.vstack([ichi, echi]),
        box_lo=np.vstack([ilo, elo]), box_hi=np.vstack([ihi, ehi]),
        box_owner=np.concatenate([ibox_owner, ebox_owner + len(iw)]),
        box_clipped=np.concatenate([iclip, eclip]),
    )


def collar_region(domain: Domain, mesh: Mesh, rho: float) -> Collar:
    """Exterior cells whose nodes lie within distance ``rho`` of the domain."""
    margin = mesh.R_ext - domain.diameter
    if not rho < margin:
        raise GeometryError(f"collar width {rho:g} exceeds truncation margin {margin:g}")
    if rho <= 0:
        return Collar(float(rho), np.zeros(0, dtype=int), 0.0)
    ext = np.arange(mesh.n_interior, mesh.n_cells)
    d = domain.distance(mesh.points[ext])
    cells = ext[(d > 0) & (d < rho)]
    return Collar(float(rho), cells, float(mesh.weights[cells].sum()))


def reflection_maps(mesh: Mesh, center=None, tol: float = 1e-8) -> list[np.ndarray]:
    """Cell permutations induced by reflections x_a -> 2 c_a - x_a that map the mesh to itself.

    Only reflections matching every node (within ``tol * h``) and every
    weight (relative ``tol``) are returned, so a field averaged over them is
    exactly reflection invariant on this mesh.
    """
    from scipy.spatial import cKDTree

    c = mesh.domain.centroid if center is None else np.asarray(center, float)
    key = ("reflections", tuple(np.round(c, 12)), tol)
    if key in mesh._cache:
        return mesh._cache[key]
    tree = cKDTree(mesh.points)
    out = []
    for a in range(mesh.dim):
        q = mesh.points.copy()
        q[:, a] = 2 * c[a] - q[:, a]
        d, idx = tree.query(q)
        if np.all(d <= tol * mesh.h) and len(set(idx.tolist())) == mesh.n_cells \
                and np.allclose(mesh.weights[idx], mesh.weights, rtol=tol, atol=0) \
                and np.all((idx < mesh.n_interior) == mesh.is_interior):
            out.append(idx)
    mesh._cache[key] = out
    return out


@dataclass(frozen=True)
class MeshSpec:
    """Mesh settings that can be resolved for a given eps.

    ``h`` fixes the interior size; otherwise it is ``eps / h_per_eps``.
    ``grading > 0`` coarsens the interior away from ``focus`` (default:
    centroid).  Meshes are memoised per resolved size.
    """

    domain: dict
    h: float | None = None
    h_per_eps: float = 8.0
    R_ext: float | None = None
    h_ext: float | None = None
    growth: float = 0.25
    grading: float = 0.0
    focus: tuple | None = None

    def size_for(self, eps: float | None) -> float:
        if self.h is not None:
            return float(self.h)
        if eps is None:
            raise GeometryError("mesh size needs either h or eps")
        return float(eps) / self.h_per_eps

    def build(self, eps: float | None = None) -> Mesh:
        h = self.size_for(eps)
        key = (h, self.R_ext, self.h_ext, self.growth, self.grading, self.focus,
               repr(sorted(self.domain.items())))
        hit = _MESH_MEMO.get(key)
        if hit is None:
            trunc = ExteriorTruncation(self.R_ext, self.h_ext, self.growth)
            hit = build_mesh(build_domain(self.domain), h, trunc, self.grading, self.focus)
            _MESH_MEMO[key] = hit
        return hit


_MESH_MEMO: dict = {}
