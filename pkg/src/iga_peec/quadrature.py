"""Quadrature for Galerkin double integrals of the 1/|r - r'| kernel.

Element pairs are classified by mapped-corner coincidence into identical,
common-edge, common-vertex, or separated.  The three touching classes use
regularizing coordinate transforms: the four-dimensional domain is split into
cones around the singular set, and a radial Duffy substitution per cone makes
the integrand bounded and smooth, so tensor Gauss converges spectrally.
Separated pairs use plain tensor Gauss with a per-direction order that grows
with log2(diameter / distance).

All transform node tables live on the aligned reference configuration (shared
edge at second coordinate zero, shared vertex at the origin) and are mapped
into each element through one of the eight symmetries of the unit square.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import lru_cache
from math import ceil, log2

import numpy as np

from .errors import ConfigError, QuadratureError

__all__ = [
    "gauss_legendre",
    "QuadConfig",
    "PairKind",
    "PairClass",
    "classify_pair",
    "separated_order",
    "pair_integral",
]

MAX_ORDER = 64


@lru_cache(maxsize=None)
def gauss_legendre(n):
    """Gauss-Legendre nodes and weights on [0, 1]; weights sum to 1."""
    n = int(n)
    if not 1 <= n <= MAX_ORDER:
        raise ConfigError(f"Gauss order must be in [1, {MAX_ORDER}], got {n}")
    x, w = np.polynomial.legendre.leggauss(n)
    x = 0.5 * (x + 1.0)
    w = 0.5 * w
    x.flags.writeable = False
    w.flags.writeable = False
    return x, w


@dataclass(frozen=True)
class QuadConfig:
    """Order schedule for pair integrals.

    base_order: far-field tensor order per direction.
    near_increment_cap: most extra orders the distance rule may add.
    singular_order: per-direction order inside the regularizing transforms.
    """

    base_order: int = 4
    near_increment_cap: int = 6
    singular_order: int = 8

    def __post_init__(self):
        for name in ("base_order", "near_increment_cap", "singular_order"):
            v = getattr(self, name)
            if not isinstance(v, int) or v < 0:
                raise ConfigError(f"{name} must be a non-negative integer, got {v!r}")
        if not 1 <= self.base_order <= MAX_ORDER:
            raise ConfigError(f"base_order out of range [1, {MAX_ORDER}]")
        if not 1 <= self.singular_order <= MAX_ORDER:
            raise ConfigError(f"singular_order out of range [1, {MAX_ORDER}]")
        if self.base_order + self.near_increment_cap > MAX_ORDER:
            raise ConfigError("base_order + near_increment_cap exceeds the rule table")


class PairKind(enum.Enum):
    IDENTICAL = "identical"
    COMMON_EDGE = "common_edge"
    COMMON_VERTEX = "common_vertex"
    SEPARATED = "separated"


@dataclass(frozen=True)
class PairClass:
    kind: PairKind
    distance: float = 0.0


def separated_order(diam_max, distance, config):
    """Per-direction Gauss order for a separated pair at the given distance."""
    if distance <= 0.0:
        raise QuadratureError("separated pair with non-positive distance")
    bump = max(0, ceil(log2(diam_max / distance))) if diam_max > distance else 0
    return config.base_order + min(bump, config.near_increment_cap)


def _corner_matches(mesh, i, j):
    """Pairs (ci, cj) of coincident corner indices (flat 0..3 = (a, b) bits)."""
    tol = 1e-10 * max(mesh.scale, 1e-300)
    ci = mesh.corners[i].reshape(4, 3)
    cj = mesh.corners[j].reshape(4, 3)
    d = np.linalg.norm(ci[:, None, :] - cj[None, :, :], axis=-1)
    return [(a, b) for a in range(4) for b in range(4) if d[a, b] <= tol]


def classify_pair(mesh, i, j):
    """Geometric relation of elements i and j (corner-coincidence based)."""
    if i == j:
        return PairClass(PairKind.IDENTICAL)
    matches = _corner_matches(mesh, i, j)
    if len(matches) == 0:
        ci = mesh.corners[i].reshape(4, 3)
        cj = mesh.corners[j].reshape(4, 3)
        d = np.linalg.norm(ci[:, None, :] - cj[None, :, :], axis=-1).min()
        return PairClass(PairKind.SEPARATED, float(d))
    if len(matches) == 1:
        return PairClass(PairKind.COMMON_VERTEX)
    if len(matches) == 2:
        (a0, b0), (a1, b1) = matches
        # the two shared corners must span an edge on both elements
        if bin(a0 ^ a1).count("1") != 1 or bin(b0 ^ b1).count("1") != 1:
            raise QuadratureError("shared corners do not form an edge", i=i, j=j)
        return PairClass(PairKind.COMMON_EDGE)
    raise QuadratureError(
        f"elements share {len(matches)} corners; mesh is overlapping", i=i, j=j)


# --------------------------------------------------------- transform tables
#
# Tables are flat node lists (xh, yh, wt): xh, yh in the aligned reference
# square of each element, wt carrying the cone Jacobians and Gauss weights.

def _tensor4(orders):
    rules = [gauss_legendre(n) for n in orders]
    a, b, c, d = np.meshgrid(*(r[0] for r in rules), indexing="ij")
    wt = np.einsum("i,j,k,l->ijkl", *(r[1] for r in rules))
    return a.ravel(), b.ravel(), c.ravel(), d.ravel(), wt.ravel()


@lru_cache(maxsize=None)
def identical_table(order):
    """Self-integral transform: z = y - x, cone split of the z square, radial Duffy."""
    s, w, xi, eta, g = _tensor4((order,) * 4)
    xs, ys, ws = [], [], []
    for s1 in (-1.0, 1.0):
        for s2 in (-1.0, 1.0):
            for swap in (False, True):
                if swap:
                    z1, z2 = s1 * s * w, s2 * s
                else:
                    z1, z2 = s1 * s, s2 * s * w
                x1 = np.maximum(0.0, -z1) + (1.0 - np.abs(z1)) * xi
                x2 = np.maximum(0.0, -z2) + (1.0 - np.abs(z2)) * eta
                xs.append(np.column_stack([x1, x2]))
                ys.append(np.column_stack([x1 + z1, x2 + z2]))
                ws.append(g * s * (1.0 - np.abs(z1)) * (1.0 - np.abs(z2)))
    return np.concatenate(xs), np.concatenate(ys), np.concatenate(ws)


@lru_cache(maxsize=None)
def edge_table(order):
    """Common-edge transform, shared edge at x2 = y2 = 0, x1 aligned with y1."""
    s, u, w, xi, g = _tensor4((order,) * 4)
    xs, ys, ws = [], [], []
    for sign in (-1.0, 1.0):
        # cone |z| >= max(x2, y2)
        z, x2, y2 = sign * s, s * u, s * w
        x1 = np.maximum(0.0, -z) + (1.0 - np.abs(z)) * xi
        xs.append(np.column_stack([x1, x2]))
        ys.append(np.column_stack([x1 + z, y2]))
        ws.append(g * s * s * (1.0 - np.abs(z)))
        # cone x2 >= max(|z|, y2)
        z, x2, y2 = sign * s * u, s, s * w
        x1 = np.maximum(0.0, -z) + (1.0 - np.abs(z)) * xi
        xs.append(np.column_stack([x1, x2]))
        ys.append(np.column_stack([x1 + z, y2]))
        ws.append(g * s * s * (1.0 - np.abs(z)))
        # cone y2 >= max(|z|, x2)
        z, x2, y2 = sign * s * u, s * w, s
        x1 = np.maximum(0.0, -z) + (1.0 - np.abs(z)) * xi
        xs.append(np.column_stack([x1, x2]))
        ys.append(np.column_stack([x1 + z, y2]))
        ws.append(g * s * s * (1.0 - np.abs(z)))
    return np.concatenate(xs), np.concatenate(ys), np.concatenate(ws)


@lru_cache(maxsize=None)
def vertex_table(order):
    """Common-vertex transform, shared corner at the origin of both squares."""
    s, u, v, w, g = _tensor4((order,) * 4)
    xs, ys, ws = [], [], []
    combos = (
        (s, s * u, s * v, s * w),
        (s * u, s, s * v, s * w),
        (s * u, s * v, s, s * w),
        (s * u, s * v, s * w, s),
    )
    for x1, x2, y1, y2 in combos:
        xs.append(np.column_stack([x1, x2]))
        ys.append(np.column_stack([y1, y2]))
        ws.append(g * s ** 3)
    return np.concatenate(xs), np.concatenate(ys), np.concatenate(ws)


# --------------------------------------------------------------- alignment

def _corner_local(c):
    """Flat corner index (a*2 + b, from mesh.corners layout) to local (u, v)."""
    return float(c >> 1), float(c & 1)


def _edge_map(c0, c1):
    """Affine square symmetry sending aligned (t, n) to local coords,
    with (0,0) -> corner c0, (1,0) -> corner c1, n pointing inward."""
    a0, b0 = _corner_local(c0)
    a1, b1 = _corner_local(c1)
    if a0 != a1 and b0 == b1:        # edge runs along u
        return np.array([a0, b0]), np.array([[a1 - a0, 0.0], [0.0, 1.0 - 2.0 * b0]])
    if b0 != b1 and a0 == a1:        # edge runs along v
        return np.array([a0, b0]), np.array([[0.0, 1.0 - 2.0 * a0], [b1 - b0, 0.0]])
    raise QuadratureError("matched corners are diagonal, not an edge")


def _vertex_map(c0):
    a0, b0 = _corner_local(c0)
    return np.array([a0, b0]), np.array([[1.0 - 2.0 * a0, 0.0], [0.0, 1.0 - 2.0 * b0]])


def _apply_map(origin, mat, pts):
    return origin[None, :] + pts @ mat.T


def singular_pair_nodes(mesh, i, j, kind, order):
    """Aligned transform nodes mapped into local coordinates of elements i, j.

    Returns (loc_i, loc_j, wt) with loc_* in each element's own [0,1]^2.
    """
    if kind is PairKind.IDENTICAL:
        xh, yh, wt = identical_table(order)
        return xh, yh, wt
    matches = _corner_matches(mesh, i, j)
    if kind is PairKind.COMMON_EDGE:
        if len(matches) != 2:
            raise QuadratureError("edge pair without two shared corners", i=i, j=j)
        (ia, ja), (ib, jb) = matches
        oi, mi = _edge_map(ia, ib)
        oj, mj = _edge_map(ja, jb)
        xh, yh, wt = edge_table(order)
        return _apply_map(oi, mi, xh), _apply_map(oj, mj, yh), wt
    if kind is PairKind.COMMON_VERTEX:
        if len(matches) != 1:
            raise QuadratureError("vertex pair without a shared corner", i=i, j=j)
        (ia, ja), = matches
        oi, mi = _vertex_map(ia)
        oj, mj = _vertex_map(ja)
        xh, yh, wt = vertex_table(order)
        return _apply_map(oi, mi, xh), _apply_map(oj, mj, yh), wt
    raise QuadratureError(f"no singular transform for {kind}", i=i, j=j)


# -------------------------------------------------------------- evaluation

def element_nodes(mesh, e, order):
    """Physical tensor-Gauss nodes and area-weighted quadrature weights of element e."""
    x, w = gauss_legendre(order)
    uu, vv = np.meshgrid(x, x, indexing="ij")
    ww = np.outer(w, w).ravel()
    u, v = mesh.local_to_patch(e, uu.ravel(), vv.ravel())
    patch = mesh.geometry.patches[mesh.patch_index[e]]
    pts, _, _, meas = patch.evaluate(u, v, deriv=True, warn_degenerate=False)
    return pts, ww * meas * mesh.jacobian_scale(e)


def _eval_local(mesh, e, loc):
    u, v = mesh.local_to_patch(e, loc[:, 0], loc[:, 1])
    patch = mesh.geometry.patches[mesh.patch_index[e]]
    pts, _, _, meas = patch.evaluate(u, v, deriv=True, warn_degenerate=False)
    return pts, meas * mesh.jacobian_scale(e)


def pair_integral(mesh, i, j, config=None):
    """Double surface integral of 1/|r - r'| over elements i and j.

    The value excludes the electrostatic prefactor and the basis scaling;
    it is a pure geometric quantity with units of length^3.
    """
    if config is None:
        config = QuadConfig()
    cls = classify_pair(mesh, i, j)
    if cls.kind is PairKind.SEPARATED:
        eta = separated_order(max(mesh.diameters[i], mesh.diameters[j]), cls.distance, config)
        pi, wi = element_nodes(mesh, i, eta)
        pj, wj = element_nodes(mesh, j, eta)
        d = np.linalg.norm(pi[:, None, :] - pj[None, :, :], axis=-1)
        val = float(wi @ (1.0 / d) @ wj)
    else:
        loc_i, loc_j, wt = singular_pair_nodes(mesh, i, j, cls.kind, config.singular_order)
        pts_i, mi = _eval_local(mesh, i, loc_i)
        pts_j, mj = _eval_local(mesh, j, loc_j)
        d = np.linalg.norm(pts_i - pts_j, axis=-1)
        val = float(np.sum(wt * mi * mj / d))
    if not np.isfinite(val):
        raise QuadratureError("pair integral is not finite", i=i, j=j)
    return val
