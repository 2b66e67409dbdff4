"""B-spline and NURBS evaluation.

Knot vectors are open (clamped) on [0, 1].  Basis evaluation uses the local
triangular recurrence restricted to the knot span containing the evaluation
point, with the 0/0 -> 0 convention, and is vectorized over evaluation points.
Rational derivatives come from the quotient rule, never from differencing.
"""
from __future__ import annotations

import warnings
from math import comb

import numpy as np

from .errors import DegenerateJacobianWarning, InvalidGeometryError

__all__ = [
    "KnotVector",
    "NurbsCurve",
    "NurbsSurfacePatch",
    "bspline_eval",
]


class KnotVector:
    """Open knot vector for degree ``degree`` splines on [0, 1].

    Parameters
    ----------
    degree : int
        Polynomial degree p >= 0.
    values : array_like
        Nondecreasing knots; 0 and 1 each with multiplicity exactly p + 1.
    """

    def __init__(self, degree, values):
        degree = int(degree)
        values = np.asarray(values, dtype=float)
        if degree < 0:
            raise InvalidGeometryError(f"negative spline degree {degree}")
        if values.ndim != 1 or values.size < 2 * (degree + 1):
            raise InvalidGeometryError(
                f"knot vector needs at least {2 * (degree + 1)} entries for degree {degree}, got {values.size}")
        if np.any(np.diff(values) < 0):
            raise InvalidGeometryError("knot vector must be nondecreasing")
        p = degree
        if values[0] != 0.0 or values[p] != 0.0 or (values.size > p + 1 and values[p + 1] == 0.0):
            raise InvalidGeometryError("knots must start with 0 repeated exactly degree+1 times")
        if values[-1] != 1.0 or values[-p - 1] != 1.0 or (values.size > p + 1 and values[-p - 2] == 1.0):
            raise InvalidGeometryError("knots must end with 1 repeated exactly degree+1 times")
        self.degree = degree
        self.values = values
        self.values.flags.writeable = False

    @property
    def n_basis(self):
        return self.values.size - self.degree - 1

    def __len__(self):
        return self.values.size

    def __eq__(self, other):
        return (isinstance(other, KnotVector) and self.degree == other.degree
                and self.values.size == other.values.size
                and bool(np.all(self.values == other.values)))

    def __repr__(self):
        return f"KnotVector(degree={self.degree}, values={self.values.tolist()})"

    def spans(self, xi):
        """Index of the nonempty knot span containing each xi (right-closed at 1)."""
        xi = np.asarray(xi, dtype=float)
        s = np.searchsorted(self.values, xi, side="right") - 1
        return np.clip(s, self.degree, self.n_basis - 1)


def _local_basis(values, degree, span, xi):
    """Nonzero basis functions of ``degree`` on knot ``values`` at points xi.

    span and xi are 1-d arrays of equal length; returns (len(xi), degree+1)
    where column r holds function span - degree + r.
    """
    m = xi.shape[0]
    p = degree
    N = np.zeros((m, p + 1))
    N[:, 0] = 1.0
    left = np.zeros((m, p + 1))
    right = np.zeros((m, p + 1))
    for j in range(1, p + 1):
        left[:, j] = xi - values[span + 1 - j]
        right[:, j] = values[span + j] - xi
        saved = np.zeros(m)
        for r in range(j):
            den = right[:, r + 1] + left[:, j - r]
            temp = np.where(den != 0.0, N[:, r] / np.where(den == 0.0, 1.0, den), 0.0)
            N[:, r] = saved + right[:, r + 1] * temp
            saved = left[:, j - r] * temp
        N[:, j] = saved
    return N


def _basis_and_deriv(knots, xi):
    """Nonzero basis values and first derivatives at points xi.

    Returns (span, N, dN), each row covering functions span-p .. span.
    """
    xi = np.asarray(xi, dtype=float)
    p = knots.degree
    U = knots.values
    span = knots.spans(xi)
    N = _local_basis(U, p, span, xi)
    dN = np.zeros_like(N)
    if p > 0:
        # derivative from the degree p-1 basis on the same span
        Nlow = _local_basis(U, p - 1, span, xi)
        m = xi.shape[0]
        for r in range(p + 1):
            i = span - p + r
            term = np.zeros(m)
            if r > 0:
                den = U[i + p] - U[i]
                term += np.where(den > 0.0, Nlow[:, r - 1] / np.where(den == 0.0, 1.0, den), 0.0)
            if r < p:
                den = U[i + p + 1] - U[i + 1]
                term -= np.where(den > 0.0, Nlow[:, r] / np.where(den == 0.0, 1.0, den), 0.0)
            dN[:, r] = p * term
    return span, N, dN


def _bernstein_and_deriv(p, xi):
    """Bernstein basis values and derivatives for the single-span clamped case.

    Returns (N, dN) with shape (p+1, m): one row per basis function.
    """
    m = xi.shape[0]
    px = np.empty((p + 1, m))
    py = np.empty((p + 1, m))
    px[0] = 1.0
    py[0] = 1.0
    om = 1.0 - xi
    for r in range(1, p + 1):
        np.multiply(px[r - 1], xi, out=px[r])
        np.multiply(py[r - 1], om, out=py[r])
    binom = np.array([comb(p, r) for r in range(p + 1)], dtype=float)
    N = binom[:, None] * px * py[::-1]
    dN = np.zeros((p + 1, m))
    if p > 0:
        bl = np.array([comb(p - 1, r) for r in range(p)], dtype=float)
        low = bl[:, None] * px[:p] * py[:p][::-1]
        dN[0] = -p * low[0]
        dN[p] = p * low[p - 1]
        if p > 1:
            dN[1:p] = p * (low[: p - 1] - low[1:])
    return N, dN


def bspline_eval(knots, index, degree, xi):
    """Single B-spline basis value B_{index,degree}(xi) on ``knots``.

    The basis attains 1 at the right endpoint: the last function evaluated at
    xi = 1 returns 1, not 0.
    """
    if not 0.0 <= xi <= 1.0:
        raise ValueError(f"evaluation point {xi} outside [0, 1]")
    values = knots.values if isinstance(knots, KnotVector) else np.asarray(knots, dtype=float)
    n_basis = values.size - degree - 1
    if degree < 0 or n_basis < 1:
        raise ValueError(f"degree {degree} incompatible with {values.size} knots")
    if not 0 <= index < n_basis:
        raise ValueError(f"basis index {index} out of range [0, {n_basis})")
    x = np.asarray([float(xi)])
    s = np.clip(np.searchsorted(values, x, side="right") - 1, degree, n_basis - 1)
    N = _local_basis(values, degree, s, x)
    r = index - (int(s[0]) - degree)
    if r < 0 or r > degree:
        return 0.0
    return float(N[0, r])


def basis_row(knots, xi):
    """All basis values at scalar xi as a dense length-n_basis row (testing aid)."""
    x = np.asarray([float(xi)])
    span, N, _ = _basis_and_deriv(knots, x)
    row = np.zeros(knots.n_basis)
    row[int(span[0]) - knots.degree:int(span[0]) + 1] = N[0]
    return row


class NurbsCurve:
    """Rational curve: control points (n, dim), strictly positive weights (n,)."""

    def __init__(self, knots, points, weights):
        if not isinstance(knots, KnotVector):
            raise InvalidGeometryError("knots must be a KnotVector")
        points = np.asarray(points, dtype=float)
        weights = np.asarray(weights, dtype=float)
        if points.ndim != 2:
            raise InvalidGeometryError("control points must be a 2-d array")
        if weights.shape != (points.shape[0],):
            raise InvalidGeometryError("one weight per control point required")
        if np.any(weights <= 0.0):
            raise InvalidGeometryError("curve weights must be strictly positive")
        if points.shape[0] != knots.n_basis:
            raise InvalidGeometryError(
                f"expected {knots.n_basis} control points for this knot vector, got {points.shape[0]}")
        self.knots = knots
        self.points = points
        self.weights = weights

    def evaluate(self, xi, deriv=False):
        """Points (m, dim) at parameters xi; with deriv=True also d/dxi (m, dim)."""
        xi = np.atleast_1d(np.asarray(xi, dtype=float))
        if np.any((xi < 0.0) | (xi > 1.0)):
            raise ValueError("curve parameter outside [0, 1]")
        span, N, dN = _basis_and_deriv(self.knots, xi)
        p = self.knots.degree
        idx = span[:, None] - p + np.arange(p + 1)[None, :]
        w = self.weights[idx]                      # (m, p+1)
        pw = self.points[idx] * w[:, :, None]      # (m, p+1, dim)
        A = np.einsum("mr,mrd->md", N, pw)
        W = np.einsum("mr,mr->m", N, w)
        pts = A / W[:, None]
        if not deriv:
            return pts
        dA = np.einsum("mr,mrd->md", dN, pw)
        dW = np.einsum("mr,mr->m", dN, w)
        der = (dA * W[:, None] - A * dW[:, None]) / (W * W)[:, None]
        return pts, der


class NurbsSurfacePatch:
    """Tensor-product rational surface patch over [0, 1]^2.

    Parameters
    ----------
    knots_u, knots_v : KnotVector
    points : ndarray (nu, nv, 3)
        Control points, row-major in (u, v).
    weights : ndarray (nu, nv)
        Strictly positive.
    """

    # evaluation is chunked so scratch arrays stay cache- and RAM-friendly
    _CHUNK = 16_384

    def __init__(self, knots_u, knots_v, points, weights):
        if not (isinstance(knots_u, KnotVector) and isinstance(knots_v, KnotVector)):
            raise InvalidGeometryError("surface needs KnotVector in both directions")
        points = np.asarray(points, dtype=float)
        weights = np.asarray(weights, dtype=float)
        nu, nv = knots_u.n_basis, knots_v.n_basis
        if points.shape != (nu, nv, 3):
            raise InvalidGeometryError(
                f"control net shape {points.shape} does not match ({nu}, {nv}, 3)")
        if weights.shape != (nu, nv):
            raise InvalidGeometryError(f"weight net shape {weights.shape} does not match ({nu}, {nv})")
        if np.any(weights <= 0.0):
            raise InvalidGeometryError("surface weights must be strictly positive")
        self.knots_u = knots_u
        self.knots_v = knots_v
        self.points = points
        self.weights = weights
        self._homog_cache = None

    @property
    def degrees(self):
        return (self.knots_u.degree, self.knots_v.degree)

    @property
    def _homog(self):
        """Control net in homogeneous form (nu, nv, 4), cached."""
        if self._homog_cache is None:
            self._homog_cache = np.concatenate(
                [self.points * self.weights[:, :, None], self.weights[:, :, None]], axis=-1)
        return self._homog_cache

    def _eval_chunk(self, u, v, deriv):
        pu, pv = self.degrees
        single = (self.knots_u.values.size == 2 * pu + 2
                  and self.knots_v.values.size == 2 * pv + 2)
        if single:
            # one span per direction: Bernstein basis, shared control net.
            # Contractions are explicit accumulation loops (fixed float order,
            # no BLAS) so every point gets the identical result regardless of
            # how evaluation calls are batched.
            Nu, dNu = _bernstein_and_deriv(pu, u)   # (pu+1, m)
            Nv, dNv = _bernstein_and_deriv(pv, v)
            H = self._homog                          # (nu, nv, 4)
            m = u.shape[0]
            A = np.zeros((4, m))
            if deriv:
                Au = np.zeros((4, m))
                Av = np.zeros((4, m))
            for i in range(pu + 1):
                Ti = H[i, 0][:, None] * Nv[0]
                for j in range(1, pv + 1):
                    Ti += H[i, j][:, None] * Nv[j]
                A += Ti * Nu[i]
                if deriv:
                    Au += Ti * dNu[i]
                    Si = H[i, 0][:, None] * dNv[0]
                    for j in range(1, pv + 1):
                        Si += H[i, j][:, None] * dNv[j]
                    Av += Si * Nu[i]
            W = A[3]
            pts = A[:3] / W
            if not deriv:
                return np.ascontiguousarray(pts.T), None, None, None
            du = (Au[:3] - pts * Au[3]) / W
            dv = (Av[:3] - pts * Av[3]) / W
            cx = du[1] * dv[2] - du[2] * dv[1]
            cy = du[2] * dv[0] - du[0] * dv[2]
            cz = du[0] * dv[1] - du[1] * dv[0]
            measure = np.sqrt(cx * cx + cy * cy + cz * cz)
            return (np.ascontiguousarray(pts.T), np.ascontiguousarray(du.T),
                    np.ascontiguousarray(dv.T), measure)
        su, Nu, dNu = _basis_and_deriv(self.knots_u, u)
        sv, Nv, dNv = _basis_and_deriv(self.knots_v, v)
        iu = su[:, None] - pu + np.arange(pu + 1)[None, :]
        iv = sv[:, None] - pv + np.arange(pv + 1)[None, :]
        hg = self._homog[iu[:, :, None], iv[:, None, :]]   # (m, pu+1, pv+1, 4)
        A = np.einsum("mi,mj,mijd->md", Nu, Nv, hg)
        if deriv:
            Au = np.einsum("mi,mj,mijd->md", dNu, Nv, hg)
            Av = np.einsum("mi,mj,mijd->md", Nu, dNv, hg)
        W = A[:, 3]
        pts = A[:, :3] / W[:, None]
        if not deriv:
            return pts, None, None, None
        du = (Au[:, :3] - pts * Au[:, 3, None]) / W[:, None]
        dv = (Av[:, :3] - pts * Av[:, 3, None]) / W[:, None]
        measure = np.linalg.norm(np.cross(du, dv), axis=-1)
        return pts, du, dv, measure

    def evaluate(self, u, v, deriv=False, warn_degenerate=True):
        """Evaluate at parameter arrays u, v (flattened, equal length).

        Returns points (m, 3), or (points, du, dv, measure) with deriv=True.
        measure is the local area scale |x_u cross x_v| per unit reference area.
        """
        u = np.atleast_1d(np.asarray(u, dtype=float)).ravel()
        v = np.atleast_1d(np.asarray(v, dtype=float)).ravel()
        if u.shape != v.shape:
            raise ValueError("u and v must have matching shapes")
        if np.any((u < 0.0) | (u > 1.0)) or np.any((v < 0.0) | (v > 1.0)):
            raise ValueError("surface parameter outside [0, 1]")
        outs = [[], [], [], []]
        for k in range(0, u.size, self._CHUNK):
            res = self._eval_chunk(u[k:k + self._CHUNK], v[k:k + self._CHUNK], deriv)
            for acc, r in zip(outs, res):
                acc.append(r)
        pts = np.concatenate(outs[0], axis=0)
        if not deriv:
            return pts
        du = np.concatenate(outs[1], axis=0)
        dv = np.concatenate(outs[2], axis=0)
        measure = np.concatenate(outs[3], axis=0)
        if warn_degenerate:
            scale = max(np.abs(self.points).max(), 1.0)
            if np.any(measure < 1e-14 * scale * scale):
                warnings.warn(
                    "surface Jacobian degenerate at an evaluation point",
                    DegenerateJacobianWarning, stacklevel=2)
        return pts, du, dv, measure

    def point(self, u, v):
        """Single surface point as shape (3,)."""
        return self.evaluate(u, v)[0]

    def unit_normal(self, u, v):
        """Unit normals (m, 3); raises on degenerate Jacobian."""
        _, du, dv, measure = self.evaluate(u, v, deriv=True, warn_degenerate=False)
        if np.any(measure == 0.0):
            raise InvalidGeometryError("unit normal undefined where the Jacobian degenerates")
        return np.cross(du, dv) / measure[:, None]
