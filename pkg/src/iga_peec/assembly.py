"""Galerkin assembly of the potential matrix for constant 1/area basis functions.

Every entry is a pure function of the element pair, so the matrix can be
built in independent row blocks.  All reductions run over a fixed axis in a
fixed order, which keeps the result bitwise identical no matter how the rows
are partitioned across workers.
"""
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, IgaPeecError, QuadratureError
from .quadrature import (PairKind, QuadConfig, classify_pair, gauss_legendre,
                         singular_pair_nodes)

EPSILON0 = 8.8541878128e-12  # farad / meter

# batch limits, transient arrays stay on the order of 100 MB
_FAR_POINT_BUDGET = 6_000_000     # pair kernel entries per chunk
_SING_POINT_BUDGET = 1_500_000    # singular transform nodes per chunk
_CLASSIFY_BYTES = 1.5e8


@dataclass(frozen=True)
class PotentialMatrix:
    """Symmetric matrix of potential coefficients, units 1/farad.

    ``asymmetry`` records max|P - P^T|/max|P| measured before the final
    symmetrization; it is a health meter for the pair quadrature.
    """

    entries: np.ndarray
    asymmetry: float
    epsilon0: float = EPSILON0

    @property
    def dim(self):
        return self.entries.shape[0]


def _grid_nodes(mesh, order):
    """Physical tensor-Gauss nodes and area weights for every element."""
    x, w = gauss_legendre(order)
    uu, vv = np.meshgrid(x, x, indexing="ij")
    uu, vv = uu.ravel(), vv.ravel()
    ww = np.outer(w, w).ravel()
    n = mesh.n_elements
    m = order * order
    pts = np.empty((n, m, 3))
    wts = np.empty((n, m))
    for k, patch in enumerate(mesh.geometry.patches):
        sel = np.nonzero(mesh.patch_index == k)[0]
        if len(sel) == 0:
            continue
        r = mesh.rects[sel]
        du = r[:, 2] - r[:, 0]
        dv = r[:, 3] - r[:, 1]
        u = (r[:, 0, None] + du[:, None] * uu[None, :]).ravel()
        v = (r[:, 1, None] + dv[:, None] * vv[None, :]).ravel()
        p, _, _, meas = patch.evaluate(u, v, deriv=True, warn_degenerate=False)
        pts[sel] = p.reshape(len(sel), m, 3)
        wts[sel] = meas.reshape(len(sel), m) * ww[None, :] * (du * dv)[:, None]
    return pts, wts


def _eval_many(mesh, elems, locs):
    """Evaluate per-pair local node sheets (p, m, 2) on their elements."""
    p_cnt, m, _ = locs.shape
    pts = np.empty((p_cnt, m, 3))
    meas = np.empty((p_cnt, m))
    pidx = mesh.patch_index[elems]
    r = mesh.rects[elems]
    u = r[:, 0, None] + (r[:, 2] - r[:, 0])[:, None] * locs[:, :, 0]
    v = r[:, 1, None] + (r[:, 3] - r[:, 1])[:, None] * locs[:, :, 1]
    js = (r[:, 2] - r[:, 0]) * (r[:, 3] - r[:, 1])
    for k in np.unique(pidx):
        sel = np.nonzero(pidx == k)[0]
        patch = mesh.geometry.patches[k]
        p, _, _, ms = patch.evaluate(u[sel].ravel(), v[sel].ravel(),
                                     deriv=True, warn_degenerate=False)
        pts[sel] = p.reshape(len(sel), m, 3)
        meas[sel] = ms.reshape(len(sel), m) * js[sel, None]
    return pts, meas


def _classify_block(mesh, r0, r1):
    """Split ordered pairs (i in [r0, r1), j != i) by corner coincidence.

    Returns (sep_i, sep_j, sep_d) arrays and the list of singular ordered
    pairs (i, j, kind).  Kind resolution goes through classify_pair so that
    degenerate adjacency raises with the pair indices attached.
    """
    n = mesh.n_elements
    corners = mesh.corners.reshape(n, 4, 3)
    tol = 1e-10 * max(mesh.scale, 1e-300)
    step = max(1, int(_CLASSIFY_BYTES // (max(n, 1) * 384)))
    sep_i, sep_j, sep_d, sing = [], [], [], []
    for a in range(r0, r1, step):
        b = min(r1, a + step)
        diff = corners[a:b][:, None, :, None, :] - corners[None, :, None, :, :]
        dmat = np.sqrt((diff * diff).sum(-1))
        counts = (dmat <= tol).sum((-1, -2))
        dmin = dmat.min((-1, -2))
        rows = np.arange(a, b)[:, None]
        cols = np.arange(n)[None, :]
        off = cols != rows
        sep = off & (counts == 0)
        sep_i.append(np.broadcast_to(rows, sep.shape)[sep])
        sep_j.append(np.broadcast_to(cols, sep.shape)[sep])
        sep_d.append(dmin[sep])
        for i, j in zip(*np.nonzero(off & (counts > 0))):
            sing.append((int(i) + a, int(j)))
    pairs = [(i, j, classify_pair(mesh, i, j).kind) for i, j in sing]
    return (np.concatenate(sep_i) if sep_i else np.empty(0, dtype=int),
            np.concatenate(sep_j) if sep_j else np.empty(0, dtype=int),
            np.concatenate(sep_d) if sep_d else np.empty(0),
            pairs)


def _far_orders(mesh, config, sep_i, sep_j, sep_d):
    dmax = np.maximum(mesh.diameters[sep_i], mesh.diameters[sep_j])
    bump = np.ceil(np.log2(dmax / sep_d)).astype(int)
    return config.base_order + np.clip(bump, 0, config.near_increment_cap)


def _far_values(pts_i, wts_i, pts_j, wts_j):
    """Kernel contraction with x-nodes of the row element first."""
    diff = pts_i[:, :, None, :] - pts_j[:, None, :, :]
    k = 1.0 / np.sqrt((diff * diff).sum(-1))
    t = (k * wts_j[:, None, :]).sum(-1)
    return (t * wts_i).sum(-1), k


def _mirror_values(k, wts_i, wts_j):
    """Value of the transposed pair from the same kernel block.

    The contiguous transposed copy reduces in the same order a row owner
    of the other element would use, so the mirrored entry is bitwise equal
    to a direct evaluation.
    """
    kt = np.ascontiguousarray(np.swapaxes(k, 1, 2))
    t = (kt * wts_i[:, None, :]).sum(-1)
    return (t * wts_j).sum(-1)


def _raise_nonfinite(vals, ii, jj):
    bad = np.nonzero(~np.isfinite(vals))[0]
    if len(bad):
        raise QuadratureError("pair integral is not finite",
                              i=int(ii[bad[0]]), j=int(jj[bad[0]]))


def _assemble_rows(mesh, config, r0, r1):
    """Raw pair integrals for rows [r0, r1) against all columns."""
    n = mesh.n_elements
    block = np.zeros((r1 - r0, n))
    sep_i, sep_j, sep_d, sing = _classify_block(mesh, r0, r1)

    eta = _far_orders(mesh, config, sep_i, sep_j, sep_d) if len(sep_i) else sep_i
    cache = {}
    in_blk = (sep_j >= r0) & (sep_j < r1)
    # pairs fully inside the block are evaluated once and mirrored
    keep = ~in_blk | (sep_j > sep_i)
    mirror = in_blk & (sep_j > sep_i)
    for e in np.unique(eta):
        if e not in cache:
            cache[e] = _grid_nodes(mesh, int(e))
        pts, wts = cache[e]
        m = pts.shape[1]
        sel = np.nonzero((eta == e) & keep)[0]
        step = max(1, _FAR_POINT_BUDGET // (m * m))
        for c in range(0, len(sel), step):
            idx = sel[c:c + step]
            ii, jj = sep_i[idx], sep_j[idx]
            vals, k = _far_values(pts[ii], wts[ii], pts[jj], wts[jj])
            _raise_nonfinite(vals, ii, jj)
            block[ii - r0, jj] = vals
            mir = mirror[idx]
            if mir.any():
                back = _mirror_values(k[mir], wts[ii[mir]], wts[jj[mir]])
                block[jj[mir] - r0, ii[mir]] = back

    for i in range(r0, r1):
        sing.append((i, i, PairKind.IDENTICAL))
    by_kind = {}
    for i, j, kind in sing:
        by_kind.setdefault(kind, []).append((i, j))
    for kind in sorted(by_kind, key=lambda k: k.value):
        plist = by_kind[kind]
        probe = singular_pair_nodes(mesh, plist[0][0], plist[0][1], kind,
                                    config.singular_order)
        m = len(probe[2])
        step = max(1, _SING_POINT_BUDGET // m)
        for c in range(0, len(plist), step):
            chunk = plist[c:c + step]
            li = np.empty((len(chunk), m, 2))
            lj = np.empty((len(chunk), m, 2))
            wt = np.empty((len(chunk), m))
            for idx, (i, j) in enumerate(chunk):
                a, b, w = singular_pair_nodes(mesh, i, j, kind,
                                              config.singular_order)
                li[idx], lj[idx], wt[idx] = a, b, w
            ei = np.fromiter((p[0] for p in chunk), dtype=int)
            ej = np.fromiter((p[1] for p in chunk), dtype=int)
            pts_i, mi = _eval_many(mesh, ei, li)
            pts_j, mj = _eval_many(mesh, ej, lj)
            diff = pts_i - pts_j
            d = np.sqrt((diff * diff).sum(-1))
            vals = (wt * mi * mj / d).sum(-1)
            _raise_nonfinite(vals, ei, ej)
            block[ei - r0, ej] = vals
    return block


def _assemble_rows_packed(args):
    return _assemble_rows(*args)


def _thread_count(threads):
    if threads is None:
        env = os.environ.get("IGA_PEEC_THREADS", "").strip()
        if env:
            try:
                threads = int(env)
            except ValueError:
                raise ConfigError(f"IGA_PEEC_THREADS is not an integer: {env!r}")
        else:
            threads = 1
    if threads < 1:
        raise ConfigError(f"thread count must be >= 1, got {threads}")
    return threads


def assemble_potential_matrix(mesh, config=None, threads=None):
    """Dense symmetric matrix P with P_ij = pair_integral(i,j)/(4 pi eps0 A_i A_j).

    The raw matrix must already be symmetric to 1e-9 relative; it is then
    symmetrized exactly as (P + P^T)/2.  Output is bitwise reproducible for
    any thread count.
    """
    if config is None:
        config = QuadConfig()
    threads = _thread_count(threads)
    n = mesh.n_elements
    if threads == 1 or n < 2 * threads:
        raw = _assemble_rows(mesh, config, 0, n)
    else:
        bounds = np.linspace(0, n, threads + 1).astype(int)
        jobs = [(mesh, config, int(bounds[t]), int(bounds[t + 1]))
                for t in range(threads) if bounds[t] < bounds[t + 1]]
        with ProcessPoolExecutor(max_workers=len(jobs)) as pool:
            parts = list(pool.map(_assemble_rows_packed, jobs))
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
        raise QuadratureError("non-positive diagonal potential coefficient", i=i, j=i)
    return PotentialMatrix(entries, asym)


def assemble_rhs(mesh, domain_potentials):
    """Potential vector with entry j equal to the potential of element j's domain."""
    missing = sorted(set(int(d) for d in np.unique(mesh.domains))
                     - set(int(d) for d in domain_potentials))
    if missing:
        raise ConfigError(f"no potential prescribed for domain(s) {missing}")
    lut = {int(d): float(v) for d, v in domain_potentials.items()}
    return np.array([lut[int(d)] for d in mesh.domains])


# ------------------------------------------------------------- binary dump

def save_matrix(path, matrix):
    """Write a matrix as an 8-byte element-count header plus row-major floats."""
    entries = matrix.entries if isinstance(matrix, PotentialMatrix) else np.asarray(matrix)
    n = entries.shape[0]
    if entries.shape != (n, n):
        raise IgaPeecError(f"matrix dump requires a square array, got {entries.shape}")
    with open(path, "wb") as fh:
        fh.write(np.array([n], dtype="<u8").tobytes())
        fh.write(np.ascontiguousarray(entries, dtype="<f8").tobytes())


def load_matrix(path):
    """Read a matrix written by save_matrix."""
    with open(path, "rb") as fh:
        head = fh.read(8)
        if len(head) != 8:
            raise IgaPeecError(f"matrix file too short for its header: {path}")
        n = int(np.frombuffer(head, dtype="<u8")[0])
        body = fh.read()
    expect = 8 * n * n
    if len(body) != expect:
        raise IgaPeecError(
            f"matrix file {path} holds {len(body)} payload bytes, expected {expect}")
    return np.frombuffer(body, dtype="<f8").reshape(n, n).copy()
