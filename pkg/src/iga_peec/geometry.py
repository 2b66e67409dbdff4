"""Multipatch NURBS geometry: exact spheres, dyadic element meshes, file I/O.

The built-in sphere is covered by six biquartic rational patches, one per cube
face.  The canonical +z face below was obtained by solving for a biquadratic
quaternion patch q(u, v) whose rotation image q k conj(q) / |q|^2 covers the
spherical square {z >= |x|, z >= |y|}; the resulting control net reproduces the
radius to machine precision and carries the full symmetry of the square, so
adjacent faces trace their shared boundary arcs with identical parameter speed.
The other five faces are signed-permutation rotations of the canonical net.
"""
from __future__ import annotations

import json
import os

import numpy as np

from .errors import GeometryParseError, InvalidGeometryError
from .nurbs import KnotVector, NurbsSurfacePatch

__all__ = [
    "MultiPatchGeometry",
    "ElementMesh",
    "make_sphere",
    "make_concentric_spheres",
    "refine",
    "save_geometry",
    "load_geometry",
]

_FACE_WEIGHTS = (
    (1.0, 0.8912112036083992, 0.8591167563965448, 0.8912112036083992, 1.0),
    (0.8912112036083992, 0.6170381117119654, 0.5316343535454906, 0.6170381117119654, 0.8912112036083992),
    (0.8591167563965448, 0.5316343535454906, 0.46063899973054273, 0.5316343535454906, 0.8591167563965448),
    (0.8912112036083992, 0.6170381117119654, 0.5316343535454906, 0.6170381117119654, 0.8912112036083992),
    (1.0, 0.8912112036083992, 0.8591167563965448, 0.8912112036083992, 1.0),
)

_FACE_POINTS = (
    ((-0.5773502691896258, -0.5773502691896258, 0.5773502691896258),
     (-0.7095873076386424, -0.3128761922915928, 0.7095873076386424),
     (-0.7540207849145406, 0.0, 0.7540207849145404),
     (-0.7095873076386424, 0.3128761922915928, 0.7095873076386424),
     (-0.5773502691896258, 0.5773502691896258, 0.5773502691896258)),
    ((-0.3128761922915928, -0.7095873076386424, 0.7095873076386424),
     (-0.4245054087297345, -0.4245054087297345, 0.9999999999999998),
     (-0.45491268409101304, 0.0, 1.1622788566216906),
     (-0.4245054087297345, 0.4245054087297345, 0.9999999999999998),
     (-0.3128761922915928, 0.7095873076386424, 0.7095873076386424)),
    ((0.0, -0.7540207849145406, 0.7540207849145404),
     (0.0, -0.45491268409101304, 1.1622788566216906),
     (0.0, 0.0, 1.4077907535282375),
     (0.0, 0.45491268409101304, 1.1622788566216906),
     (0.0, 0.7540207849145406, 0.7540207849145404)),
    ((0.3128761922915928, -0.7095873076386424, 0.7095873076386424),
     (0.4245054087297345, -0.4245054087297345, 0.9999999999999998),
     (0.45491268409101304, 0.0, 1.1622788566216906),
     (0.4245054087297345, 0.4245054087297345, 0.9999999999999998),
     (0.3128761922915928, 0.7095873076386424, 0.7095873076386424)),
    ((0.5773502691896258, -0.5773502691896258, 0.5773502691896258),
     (0.7095873076386424, -0.3128761922915928, 0.7095873076386424),
     (0.7540207849145406, 0.0, 0.7540207849145404),
     (0.7095873076386424, 0.3128761922915928, 0.7095873076386424),
     (0.5773502691896258, 0.5773502691896258, 0.5773502691896258)),
)

# proper rotations (det +1) taking the +z face to each cube face,
# in the fixed patch order (+x, -x, +y, -y, +z, -z)
_FACE_ROTATIONS = (
    np.array([[0.0, 0, 1], [0, 1, 0], [-1, 0, 0]]),
    np.array([[0.0, 0, -1], [0, 1, 0], [1, 0, 0]]),
    np.array([[1.0, 0, 0], [0, 0, 1], [0, -1, 0]]),
    np.array([[1.0, 0, 0], [0, 0, -1], [0, 1, 0]]),
    np.eye(3),
    np.array([[1.0, 0, 0], [0, -1, 0], [0, 0, -1]]),
)


class MultiPatchGeometry:
    """An ordered set of NURBS surface patches with per-patch domain tags.

    Domain tags are the conductor labels, a contiguous range 1..D.  Patches of
    one domain must form a connected set; connectivity is decided by mapped
    corner coincidence within 1e-10 of the bounding-box diagonal.
    """

    def __init__(self, patches, domain_tags):
        patches = list(patches)
        domain_tags = [int(t) for t in domain_tags]
        if not patches:
            raise InvalidGeometryError("geometry needs at least one patch")
        for k, p in enumerate(patches):
            if not isinstance(p, NurbsSurfacePatch):
                raise InvalidGeometryError(f"patch {k} is not a NurbsSurfacePatch")
        if len(domain_tags) != len(patches):
            raise InvalidGeometryError(
                f"{len(patches)} patches but {len(domain_tags)} domain tags")
        tags = sorted(set(domain_tags))
        if tags != list(range(1, len(tags) + 1)):
            raise InvalidGeometryError(
                f"domain tags must form a contiguous range 1..D, got {tags}")
        self.patches = patches
        self.domain_tags = domain_tags
        self._check_connectivity()

    @property
    def n_patches(self):
        return len(self.patches)

    @property
    def n_domains(self):
        return max(self.domain_tags)

    def scale(self):
        """Bounding-box diagonal over all control points (length scale for tolerances)."""
        pts = np.concatenate([p.points.reshape(-1, 3) for p in self.patches])
        return float(np.linalg.norm(pts.max(axis=0) - pts.min(axis=0)))

    def patch_corners(self):
        """Mapped patch corner positions, shape (n_patches, 4, 3)."""
        out = np.empty((self.n_patches, 4, 3))
        uv = np.array([[0.0, 0], [1, 0], [0, 1], [1, 1]])
        for k, p in enumerate(self.patches):
            out[k] = p.evaluate(uv[:, 0], uv[:, 1])
        return out

    def _check_connectivity(self):
        tol = 1e-10 * max(self.scale(), 1e-300)
        corners = self.patch_corners()
        n = self.n_patches
        parent = list(range(n))

        def find(i):
            while parent[i] != i:
                parent[i] = parent[parent[i]]
                i = parent[i]
            return i

        for i in range(n):
            for j in range(i + 1, n):
                if self.domain_tags[i] != self.domain_tags[j]:
                    continue
                d = np.linalg.norm(corners[i][:, None, :] - corners[j][None, :, :], axis=-1)
                if d.min() <= tol:
                    parent[find(i)] = find(j)
        for dom in range(1, self.n_domains + 1):
            roots = {find(k) for k in range(n) if self.domain_tags[k] == dom}
            if len(roots) > 1:
                raise InvalidGeometryError(
                    f"patches of domain {dom} do not form a connected set")


def _canonical_face_patch():
    kv = KnotVector(4, [0.0] * 5 + [1.0] * 5)
    pts = np.array(_FACE_POINTS, dtype=float)
    w = np.array(_FACE_WEIGHTS, dtype=float)
    return kv, pts, w


def make_sphere(radius, center=(0.0, 0.0, 0.0), domain_tag=1, _geometry=True):
    """Exact sphere of given radius as six biquartic patches (cube-face layout).

    Patch order is (+x, -x, +y, -y, +z, -z).
    """
    radius = float(radius)
    if radius <= 0.0:
        raise InvalidGeometryError(f"sphere radius must be positive, got {radius}")
    center = np.asarray(center, dtype=float)
    if center.shape != (3,):
        raise InvalidGeometryError("sphere center must be a 3-vector")
    kv, pts, w = _canonical_face_patch()
    patches = []
    for R in _FACE_ROTATIONS:
        face_pts = pts @ R.T * radius + center
        patches.append(NurbsSurfacePatch(kv, kv, face_pts, w.copy()))
    if not _geometry:
        return patches
    return MultiPatchGeometry(patches, [domain_tag] * 6)


def make_concentric_spheres(r_inner, r_outer, center=(0.0, 0.0, 0.0)):
    """Two concentric spheres: patches 1-6 inner (domain 1), 7-12 outer (domain 2)."""
    r_inner = float(r_inner)
    r_outer = float(r_outer)
    if not 0.0 < r_inner < r_outer:
        raise InvalidGeometryError(
            f"need 0 < r_inner < r_outer, got {r_inner}, {r_outer}")
    inner = make_sphere(r_inner, center, _geometry=False)
    outer = make_sphere(r_outer, center, _geometry=False)
    return MultiPatchGeometry(inner + outer, [1] * 6 + [2] * 6)


class ElementMesh:
    """Dyadic refinement of a multipatch geometry.

    Level L splits every patch into 2^L x 2^L equal parameter rectangles; each
    rectangle is one element carrying a piecewise-constant basis function.
    Elements are numbered patch-major, then row-major over (u, v) with v
    fastest.  Areas are exact surface areas by order-12 tensor Gauss.
    """

    AREA_ORDER = 12

    def __init__(self, geometry, level):
        level = int(level)
        if level < 0:
            raise InvalidGeometryError(f"refinement level must be >= 0, got {level}")
        self.geometry = geometry
        self.level = level
        n_side = 2 ** level
        n_per_patch = n_side * n_side
        n = geometry.n_patches * n_per_patch
        self.n_elements = n
        self.patch_index = np.repeat(np.arange(geometry.n_patches), n_per_patch)
        self.domains = np.repeat(np.asarray(geometry.domain_tags, dtype=int), n_per_patch)

        # reference rectangles (u0, v0, u1, v1), v fastest within a patch
        edges = np.linspace(0.0, 1.0, n_side + 1)
        iu, iv = np.meshgrid(np.arange(n_side), np.arange(n_side), indexing="ij")
        iu = iu.ravel()
        iv = iv.ravel()
        rect = np.column_stack([edges[iu], edges[iv], edges[iu + 1], edges[iv + 1]])
        self.rects = np.tile(rect, (geometry.n_patches, 1))

        self.corners = np.empty((n, 2, 2, 3))
        self.areas = np.empty(n)
        from numpy.polynomial.legendre import leggauss
        gx, gw = leggauss(self.AREA_ORDER)
        gx = 0.5 * (gx + 1.0)
        gw = 0.5 * gw
        gu, gv = np.meshgrid(gx, gx, indexing="ij")
        gww = np.outer(gw, gw).ravel()
        gu = gu.ravel()
        gv = gv.ravel()
        for k, patch in enumerate(geometry.patches):
            sl = slice(k * n_per_patch, (k + 1) * n_per_patch)
            r = self.rects[sl]
            du = r[:, 2] - r[:, 0]
            dv = r[:, 3] - r[:, 1]
            # corners of every element of this patch in one evaluation
            cu = np.concatenate([r[:, 0], r[:, 0], r[:, 2], r[:, 2]])
            cv = np.concatenate([r[:, 1], r[:, 3], r[:, 1], r[:, 3]])
            cpts = patch.evaluate(cu, cv).reshape(2, 2, n_per_patch, 3)
            self.corners[sl] = np.moveaxis(cpts, 2, 0)  # [elem, a(u), b(v), xyz]
            uu = (r[:, 0, None] + du[:, None] * gu[None, :]).ravel()
            vv = (r[:, 1, None] + dv[:, None] * gv[None, :]).ravel()
            _, _, _, meas = patch.evaluate(uu, vv, deriv=True, warn_degenerate=False)
            meas = meas.reshape(n_per_patch, -1)
            self.areas[sl] = (meas @ gww) * du * dv
        if np.any(self.areas <= 0.0):
            raise InvalidGeometryError("element with non-positive area")
        flat = self.corners.reshape(n, 4, 3)
        d = np.linalg.norm(flat[:, :, None, :] - flat[:, None, :, :], axis=-1)
        self.diameters = d.reshape(n, 16).max(axis=1)
        self.scale = geometry.scale()

    @property
    def h(self):
        """Reference-square size 2^-level used in convergence tables."""
        return 2.0 ** (-self.level)

    def local_to_patch(self, e, x, y):
        """Map element-local coordinates in [0,1]^2 to patch (u, v) arrays."""
        u0, v0, u1, v1 = self.rects[e]
        return u0 + (u1 - u0) * np.asarray(x), v0 + (v1 - v0) * np.asarray(y)

    def jacobian_scale(self, e):
        """Reference-area ratio of element e's rectangle (du * dv)."""
        u0, v0, u1, v1 = self.rects[e]
        return (u1 - u0) * (v1 - v0)


def refine(geometry, level):
    """Element mesh at dyadic refinement level L (h = 2^-L)."""
    return ElementMesh(geometry, level)


# ----------------------------------------------------------------- file I/O

def _fmt(x):
    return format(float(x), ".17g")


def save_geometry(geometry, path):
    """Write a geometry file (JSON, numbers at 17 significant digits)."""
    lines = ["{", '  "patches": [']
    for k, patch in enumerate(geometry.patches):
        nu, nv = patch.weights.shape
        pts = ",\n        ".join(
            "[" + ", ".join(_fmt(c) for c in patch.points[i, j]) + "]"
            for i in range(nu) for j in range(nv))
        wts = ", ".join(_fmt(patch.weights[i, j]) for i in range(nu) for j in range(nv))
        lines.append("    {")
        lines.append(f'      "degree_u": {patch.knots_u.degree},')
        lines.append(f'      "degree_v": {patch.knots_v.degree},')
        lines.append(f'      "knots_u": [{", ".join(_fmt(x) for x in patch.knots_u.values)}],')
        lines.append(f'      "knots_v": [{", ".join(_fmt(x) for x in patch.knots_v.values)}],')
        lines.append('      "points": [')
        lines.append(f"        {pts}")
        lines.append("      ],")
        lines.append(f'      "weights": [{wts}]')
        lines.append("    }" + ("," if k + 1 < geometry.n_patches else ""))
    lines.append("  ],")
    lines.append(f'  "domain_tags": [{", ".join(str(t) for t in geometry.domain_tags)}]')
    lines.append("}")
    with open(path, "w") as f:
        f.write("\n".join(lines) + "\n")


def _require(obj, field, path, kind=None):
    if field not in obj:
        raise GeometryParseError(f"missing field '{field}'", path=path, field=field)
    val = obj[field]
    if kind is not None and not isinstance(val, kind):
        raise GeometryParseError(f"field '{field}' has the wrong type", path=path, field=field)
    return val


def load_geometry(path):
    """Read a geometry file written by :func:`save_geometry`."""
    if not os.path.exists(path):
        raise GeometryParseError("geometry file not found", path=path)
    with open(path) as f:
        text = f.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as e:
        raise GeometryParseError(f"invalid JSON: {e.msg}", path=path, line=e.lineno) from e
    if not isinstance(doc, dict):
        raise GeometryParseError("top level must be an object", path=path)
    raw_patches = _require(doc, "patches", path, list)
    tags = _require(doc, "domain_tags", path, list)
    patches = []
    for k, rp in enumerate(raw_patches):
        if not isinstance(rp, dict):
            raise GeometryParseError(f"patch {k} must be an object", path=path, field="patches")
        du = _require(rp, "degree_u", path, int)
        dv = _require(rp, "degree_v", path, int)
        try:
            ku = KnotVector(du, _require(rp, "knots_u", path, list))
            kv = KnotVector(dv, _require(rp, "knots_v", path, list))
        except InvalidGeometryError as e:
            raise GeometryParseError(f"patch {k}: {e}", path=path, field="knots_u") from e
        pts = np.asarray(_require(rp, "points", path, list), dtype=float)
        wts = np.asarray(_require(rp, "weights", path, list), dtype=float)
        nu, nv = ku.n_basis, kv.n_basis
        if pts.shape != (nu * nv, 3):
            raise GeometryParseError(
                f"patch {k}: expected {nu * nv} control points of dimension 3, got shape {pts.shape}",
                path=path, field="points")
        if wts.shape != (nu * nv,):
            raise GeometryParseError(
                f"patch {k}: expected {nu * nv} weights, got shape {wts.shape}",
                path=path, field="weights")
        patches.append(NurbsSurfacePatch(ku, kv, pts.reshape(nu, nv, 3), wts.reshape(nu, nv)))
    return MultiPatchGeometry(patches, tags)
