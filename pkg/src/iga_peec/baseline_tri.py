"""Flat-triangle PEEC baseline: icosphere meshes and low-order assembly.

The mutual terms integrate the kernel with the closed-form potential of a
uniformly charged flat triangle on the inner element, so only the outer
integral is numerical.  Separated pairs instead use the same tensor rules
on both elements (with the spline far-order schedule), which keeps those
entries symmetric to rounding.
"""
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .assembly import EPSILON0, PotentialMatrix, _thread_count
from .errors import InvalidGeometryError, QuadratureError
from .quadrature import QuadConfig, gauss_legendre

_FAR_POINT_BUDGET = 6_000_000

# outer integration of the analytic inner potential: the integrand has
# log-type derivative blowup toward the shared feature; uniform composite
# quadrisection at these depths measures a few 1e-7 relative against the
# subdivision oracle (vertex contact is milder and stays cheap)
_SELF_RULE = (3, 10)     # (quadrisection depth, tensor order)
_EDGE_RULE = (3, 10)
_VERTEX_RULE = (1, 10)
_TOUCH_BATCH = 256


# ------------------------------------------------------------------ meshes

@dataclass(frozen=True)
class TriMesh:
    """Flat-triangle surface mesh with a domain tag per triangle."""

    vertices: np.ndarray
    triangles: np.ndarray
    domains: np.ndarray
    areas: np.ndarray = field(init=False)
    diameters: np.ndarray = field(init=False)

    def __post_init__(self):
        v = self.vertices[self.triangles]
        cr = np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0])
        areas = 0.5 * np.sqrt((cr * cr).sum(-1))
        if np.any(areas <= 0.0):
            raise InvalidGeometryError("mesh contains a degenerate triangle")
        e = np.stack([v[:, 1] - v[:, 0], v[:, 2] - v[:, 1], v[:, 0] - v[:, 2]])
        diam = np.sqrt((e * e).sum(-1)).max(axis=0)
        object.__setattr__(self, "areas", areas)
        object.__setattr__(self, "diameters", diam)

    @property
    def n_elements(self):
        return len(self.triangles)

    @property
    def corners(self):
        return self.vertices[self.triangles]

    @property
    def scale(self):
        return float(np.abs(self.vertices).max())


_ICO_FACES = (
    (0, 11, 5), (0, 5, 1), (0, 1, 7), (0, 7, 10), (0, 10, 11),
    (1, 5, 9), (5, 11, 4), (11, 10, 2), (10, 7, 6), (7, 1, 8),
    (3, 9, 4), (3, 4, 2), (3, 2, 6), (3, 6, 8), (3, 8, 9),
    (4, 9, 5), (2, 4, 11), (6, 2, 10), (8, 6, 7), (9, 8, 1),
)


def icosphere(subdivisions, radius, center=(0.0, 0.0, 0.0), domain_tag=1):
    """Icosahedron refined by edge-midpoint quadrisection, 20*4^s triangles.

    Vertices are projected back to the sphere after every subdivision and
    faces keep outward orientation.
    """
    if subdivisions < 0:
        raise InvalidGeometryError(
            f"subdivision count must be >= 0, got {subdivisions}")
    if radius <= 0.0:
        raise InvalidGeometryError(f"sphere radius must be positive, got {radius}")
    phi = (1.0 + np.sqrt(5.0)) / 2.0
    verts = np.array([
        (-1, phi, 0), (1, phi, 0), (-1, -phi, 0), (1, -phi, 0),
        (0, -1, phi), (0, 1, phi), (0, -1, -phi), (0, 1, -phi),
        (phi, 0, -1), (phi, 0, 1), (-phi, 0, -1), (-phi, 0, 1),
    ], dtype=float)
    verts /= np.sqrt((verts * verts).sum(-1))[:, None]
    faces = [tuple(f) for f in _ICO_FACES]

    for _ in range(subdivisions):
        mid = {}
        new_faces = []
        nv = list(verts)

        def midpoint(a, b):
            key = (a, b) if a < b else (b, a)
            if key not in mid:
                p = 0.5 * (nv[a] + nv[b])
                nv.append(p / np.linalg.norm(p))
                mid[key] = len(nv) - 1
            return mid[key]

        for a, b, c in faces:
            ab, bc, ca = midpoint(a, b), midpoint(b, c), midpoint(c, a)
            new_faces += [(a, ab, ca), (b, bc, ab), (c, ca, bc), (ab, bc, ca)]
        verts = np.asarray(nv)
        faces = new_faces

    tris = np.asarray(faces, dtype=int)
    # enforce outward orientation regardless of the base table's handedness
    v = verts[tris]
    cr = np.cross(v[:, 1] - v[:, 0], v[:, 2] - v[:, 0])
    inward = (cr * (v.mean(axis=1))).sum(-1) < 0.0
    tris[inward] = tris[inward][:, ::-1]

    verts = verts * radius + np.asarray(center, dtype=float)
    domains = np.full(len(tris), int(domain_tag))
    return TriMesh(verts, tris, domains)


def concentric_icospheres(r_in, r_out, subdivisions, center=(0.0, 0.0, 0.0)):
    """Two nested icospheres, inner tagged domain 1, outer domain 2."""
    if not 0.0 < r_in < r_out:
        raise InvalidGeometryError(
            f"need 0 < r_in < r_out, got {r_in}, {r_out}")
    inner = icosphere(subdivisions, r_in, center, domain_tag=1)
    outer = icosphere(subdivisions, r_out, center, domain_tag=2)
    shift = len(inner.vertices)
    verts = np.vstack([inner.vertices, outer.vertices])
    tris = np.vstack([inner.triangles, outer.triangles + shift])
    domains = np.concatenate([inner.domains, outer.domains])
    return TriMesh(verts, tris, domains)


# -------------------------------------------- closed-form lamina potential

def triangle_potential(v0, v1, v2, x):
    """Integral of 1/|x-y| over the flat triangle (v0,v1,v2), batched.

    Vertex arrays broadcast against x with shape (..., 3); the field point
    may sit anywhere off the triangle's edges (interior points of the
    triangle itself included, where the integral stays finite).
    """
    v0, v1, v2 = (np.asarray(a, dtype=float) for a in (v0, v1, v2))
    x = np.asarray(x, dtype=float)
    nrm = np.cross(v1 - v0, v2 - v0)
    nrm = nrm / np.sqrt((nrm * nrm).sum(-1))[..., None]
    h = ((x - v0) * nrm).sum(-1)
    rho = x - h[..., None] * nrm
    ah = np.abs(h)
    total = np.zeros(np.broadcast_shapes(x.shape[:-1], v0.shape[:-1]))
    for a, b in ((v0, v1), (v1, v2), (v2, v0)):
        t = b - a
        t = t / np.sqrt((t * t).sum(-1))[..., None]
        m = np.cross(t, nrm)
        d = ((a - rho) * m).sum(-1)
        sa = ((a - rho) * t).sum(-1)
        sb = ((b - rho) * t).sum(-1)
        ra = np.sqrt(((x - a) ** 2).sum(-1))
        rb = np.sqrt(((x - b) ** 2).sum(-1))
        # two algebraically equal log forms; pick the one whose terms add
        plus = sa + sb > 0.0
        num = np.where(plus, rb + sb, ra - sa)
        den = np.where(plus, ra + sa, rb - sb)
        small = 1e-300
        log_term = np.log(np.maximum(num, small) / np.maximum(den, small))
        dsafe = np.abs(d) > 1e-14 * np.maximum(ra, rb)
        total = total + np.where(dsafe, d * log_term, 0.0)
        beta_b = np.arctan2(d * sb, d * d + h * h + ah * rb)
        beta_a = np.arctan2(d * sa, d * d + h * h + ah * ra)
        total = total - ah * (beta_b - beta_a)
    return total


# ------------------------------------------------------- quadrature pieces

def _conical_nodes(order):
    """Tensor rule on the reference triangle (0,0)-(1,0)-(0,1), weights to area 1/2."""
    xg, wg = gauss_legendre(order)
    a, b = np.meshgrid(xg, xg, indexing="ij")
    u = a.ravel()
    v = (a * b).ravel()
    w = (np.outer(wg, wg) * a).ravel()
    return u - v, v, w  # reference coords: x = v0 + u*(v1-v0) + v*(v2-v0)


def _tri_points(corners, order):
    """Physical nodes/weights of the tensor rule on each triangle (B, m, 3)."""
    u, v, w = _conical_nodes(order)
    v0 = corners[:, 0][:, None, :]
    e1 = (corners[:, 1] - corners[:, 0])[:, None, :]
    e2 = (corners[:, 2] - corners[:, 0])[:, None, :]
    pts = v0 + u[None, :, None] * e1 + v[None, :, None] * e2
    cr = np.cross(corners[:, 1] - corners[:, 0], corners[:, 2] - corners[:, 0])
    two_a = np.sqrt((cr * cr).sum(-1))
    return pts, w[None, :] * two_a[:, None]


def _quadrisect(corners):
    """Split triangles (B,3,3) into midpoint children (B,4,3,3)."""
    a, b, c = corners[:, 0], corners[:, 1], corners[:, 2]
    ab, bc, ca = 0.5 * (a + b), 0.5 * (b + c), 0.5 * (c + a)
    kids = np.stack([
        np.stack([a, ab, ca], axis=1),
        np.stack([b, bc, ab], axis=1),
        np.stack([c, ca, bc], axis=1),
        np.stack([ab, bc, ca], axis=1),
    ], axis=1)
    return kids


def _inner_analytic_pair(ci, cj, rule):
    """Composite outer tensor rule on triangle i, closed-form inner on j."""
    depth, order = rule
    kids = ci
    for _ in range(depth):
        kids = _quadrisect(kids).reshape(-1, 3, 3)
    pts, wts = _tri_points(kids, order)
    b = ci.shape[0]
    pts = pts.reshape(b, -1, 3)
    wts = wts.reshape(b, -1)
    pot = triangle_potential(cj[:, None, 0], cj[:, None, 1], cj[:, None, 2], pts)
    return (pot * wts).sum(-1)


# ------------------------------------------------------------- assembly

_CLASSIFY_BYTES = 1.5e8


def _classify_tri(mesh, r0, r1):
    tri = mesh.triangles
    n = mesh.n_elements
    shared = np.zeros((r1 - r0, n), dtype=np.int8)
    for a in range(3):
        for b in range(3):
            shared += tri[r0:r1, a][:, None] == tri[None, :, b]
    corners = mesh.corners
    dmin = np.empty((r1 - r0, n))
    step = max(1, int(_CLASSIFY_BYTES // (max(n, 1) * 216)))
    for a in range(r0, r1, step):
        b = min(r1, a + step)
        diff = corners[a:b][:, None, :, None, :] - corners[None, :, None, :, :]
        dmin[a - r0:b - r0] = np.sqrt((diff * diff).sum(-1)).min((-1, -2))
    return shared, dmin


def _tri_far_orders(mesh, config, sep_i, sep_j, sep_d):
    dmax = np.maximum(mesh.diameters[sep_i], mesh.diameters[sep_j])
    bump = np.ceil(np.log2(dmax / sep_d)).astype(int)
    return config.base_order + np.clip(bump, 0, config.near_increment_cap)


def _assemble_tri_rows(mesh, config, r0, r1):
    n = mesh.n_elements
    corners = mesh.corners
    block = np.zeros((r1 - r0, n))
    shared, dmin = _classify_tri(mesh, r0, r1)
    rows = np.arange(r0, r1)[:, None]
    cols = np.arange(n)[None, :]

    sep = shared == 0
    sep_i = np.broadcast_to(rows, sep.shape)[sep]
    sep_j = np.broadcast_to(cols, sep.shape)[sep]
    sep_d = dmin[sep]
    if np.any(sep_d <= 0.0):
        k = int(np.argmin(sep_d))
        raise QuadratureError("separated triangles at zero distance",
                              i=int(sep_i[k]), j=int(sep_j[k]))
    if len(sep_i):
        eta = _tri_far_orders(mesh, config, sep_i, sep_j, sep_d)
        cache = {}
        for e in np.unique(eta):
            if e not in cache:
                cache[e] = _tri_points(corners, int(e))
            pts, wts = cache[e]
            m = pts.shape[1]
            sel = np.nonzero(eta == e)[0]
            step = max(1, _FAR_POINT_BUDGET // (m * m))
            for c in range(0, len(sel), step):
                idx = sel[c:c + step]
                ii, jj = sep_i[idx], sep_j[idx]
                d = pts[ii][:, :, None, :] - pts[jj][:, None, :, :]
                k = 1.0 / np.sqrt((d * d).sum(-1))
                vals = ((k * wts[jj][:, None, :]).sum(-1) * wts[ii]).sum(-1)
                if not np.all(np.isfinite(vals)):
                    bad = int(np.nonzero(~np.isfinite(vals))[0][0])
                    raise QuadratureError("pair integral is not finite",
                                          i=int(ii[bad]), j=int(jj[bad]))
                block[ii - r0, jj] = vals

    # touching pairs: average both outer orientations so the entry is
    # exactly symmetric no matter which row block computes it
    for count, rule in ((3, _SELF_RULE), (2, _EDGE_RULE), (1, _VERTEX_RULE)):
        mask = shared == count if count < 3 else (
            (shared == 3) & (rows == cols))
        pi = np.broadcast_to(rows, mask.shape)[mask]
        pj = np.broadcast_to(cols, mask.shape)[mask]
        for c in range(0, len(pi), _TOUCH_BATCH):
            bi, bj = pi[c:c + _TOUCH_BATCH], pj[c:c + _TOUCH_BATCH]
            ci, cj = corners[bi], corners[bj]
            fwd = _inner_analytic_pair(ci, cj, rule)
            if count == 3:
                block[bi - r0, bj] = fwd
            else:
                rev = _inner_analytic_pair(cj, ci, rule)
                block[bi - r0, bj] = 0.5 * (fwd + rev)
    overlap = (shared == 3) & (rows != cols)
    if overlap.any():
        i = int(np.broadcast_to(rows, overlap.shape)[overlap][0])
        j = int(np.broadcast_to(cols, overlap.shape)[overlap][0])
        raise QuadratureError("distinct triangles share all vertices", i=i, j=j)
    return block


def _assemble_tri_packed(args):
    return _assemble_tri_rows(*args)


def assemble_tri(mesh, config=None, threads=None):
    """Dense P for per-triangle constant 1/area basis, same contract as
    the spline assembly (symmetrized, bitwise thread-count independent)."""
    if config is None:
        config = QuadConfig()
    threads = _thread_count(threads)
    n = mesh.n_elements
    if threads == 1 or n < 2 * threads:
        raw = _assemble_tri_rows(mesh, config, 0, n)
    else:
        bounds = np.linspace(0, n, threads + 1).astype(int)
        jobs = [(mesh, config, int(bounds[t]), int(bounds[t + 1]))
                for t in range(threads) if bounds[t] < bounds[t + 1]]
        with ProcessPoolExecutor(max_workers=len(jobs)) as pool:
            parts = list(pool.map(_assemble_tri_packed, jobs))
        raw = np.vstack(parts)

    scale = 1.0 / (4.0 * np.pi * EPSILON0 * np.outer(mesh.areas, mesh.areas))
    entries = raw * scale
    denom = np.abs(entries).max()
    if denom == 0.0:
        raise QuadratureError("assembled matrix is identically zero")
    asym = float(np.abs(entries - entries.T).max() / denom)
    if asym > 1e-9:
        raise QuadratureError(
            f"potential matrix asymmetry {asym:.3e} exceeds 1e-9")
    entries = 0.5 * (entries + entries.T)
    if np.any(np.diag(entries) <= 0.0):
        i = int(np.argmin(np.diag(entries)))
        raise QuadratureError("non-positive diagonal potential coefficient",
                              i=i, j=i)
    return PotentialMatrix(entries, asym)


def convergence_tri(r_in, r_out, levels, config=None, threads=None):
    """Capacitance error per subdivision level against the analytic value.

    Returns rows (dof, C_farad, relative_error) for the two-sphere
    capacitor meshed with concentric icospheres.
    """
    from .solver import two_terminal_capacitance

    c_ana = 4.0 * np.pi * EPSILON0 / (1.0 / r_in - 1.0 / r_out)
    rows = []
    for s in levels:
        mesh = concentric_icospheres(r_in, r_out, s)
        matrix = assemble_tri(mesh, config, threads)
        c = two_terminal_capacitance(matrix, mesh, 1)
        rows.append((mesh.n_elements, c, abs(c - c_ana) / c_ana))
    return rows
