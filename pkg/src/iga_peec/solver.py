"""Direct solution of P q = phi and capacitance extraction.

Charges live element-wise (the 1/area basis makes each coefficient the
element's total charge); electrode quantities are plain sums over the
elements of a domain.
"""
from dataclasses import dataclass

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .errors import SingularMatrixError

_PIVOT_FLOOR = 1e-14
_RESIDUAL_TOL = 1e-12


def _factor(entries):
    lu, piv = lu_factor(entries)
    diag = np.abs(np.diag(lu))
    dmax = diag.max() if diag.size else 0.0
    if dmax == 0.0 or diag.min() < _PIVOT_FLOOR * dmax:
        raise SingularMatrixError(
            f"LU pivot ratio {0.0 if dmax == 0.0 else diag.min() / dmax:.3e} "
            f"below {_PIVOT_FLOOR:.0e}; matrix is numerically singular")
    return lu, piv


def solve_direct(matrix, rhs):
    """Solve P q = phi by dense LU with partial pivoting.

    Accepts a PotentialMatrix or a plain square array.  The residual is
    checked (one refinement pass is allowed) and must reach 1e-12 relative
    in the max norm; failure raises SingularMatrixError.
    """
    entries = getattr(matrix, "entries", matrix)
    entries = np.asarray(entries, dtype=float)
    phi = np.asarray(rhs, dtype=float)
    lu, piv = _factor(entries)
    q = lu_solve((lu, piv), phi)
    scale = np.abs(phi).max()
    if scale == 0.0:
        return np.zeros_like(phi)
    resid = np.abs(entries @ q - phi).max() / scale
    if resid > _RESIDUAL_TOL:
        q = q + lu_solve((lu, piv), phi - entries @ q)
        resid = np.abs(entries @ q - phi).max() / scale
    if resid > _RESIDUAL_TOL:
        raise SingularMatrixError(
            f"solution residual {resid:.3e} exceeds {_RESIDUAL_TOL:.0e}")
    return q


def electrode_charges(q, mesh):
    """Total charge per domain tag, coulomb."""
    q = np.asarray(q)
    out = {}
    for d in np.unique(mesh.domains):
        out[int(d)] = float(q[mesh.domains == d].sum())
    return out


@dataclass(frozen=True)
class ElectrodeCapacitanceMatrix:
    """Dense electrode-level capacitance matrix, farad.

    ``domains`` fixes the row/column order; entries are Maxwell form from
    maxwell_capacitance_electrodes, short-circuit form after
    short_circuit_matrix.
    """

    domains: tuple
    entries: np.ndarray

    @property
    def dim(self):
        return len(self.domains)


def maxwell_capacitance_electrodes(matrix, mesh):
    """Maxwell matrix by unit-potential drives, one column per domain.

    Column d holds the electrode charges for 1 V on domain d and 0 V on
    every other domain.
    """
    domains = tuple(int(d) for d in np.unique(mesh.domains))
    entries_p = getattr(matrix, "entries", matrix)
    lu, piv = _factor(np.asarray(entries_p, dtype=float))
    cm = np.empty((len(domains), len(domains)))
    for col, d in enumerate(domains):
        phi = (mesh.domains == d).astype(float)
        q = lu_solve((lu, piv), phi)
        for row, k in enumerate(domains):
            cm[row, col] = q[mesh.domains == k].sum()
    return ElectrodeCapacitanceMatrix(domains, cm)


def short_circuit_matrix(cm):
    """Convert a Maxwell matrix to two-node (short-circuit) capacitances.

    Off-diagonal entries flip sign; each diagonal becomes its Maxwell row
    sum, the capacitance of that electrode to ground.
    """
    m = cm.entries
    out = -m.copy()
    np.fill_diagonal(out, m.sum(axis=1))
    return ElectrodeCapacitanceMatrix(cm.domains, out)


def two_terminal_capacitance(matrix, mesh, drive_domain):
    """C = Q(drive)/V for a unit-volt drive with all other electrodes grounded."""
    pots = {int(d): 0.0 for d in np.unique(mesh.domains)}
    pots[int(drive_domain)] = 1.0
    phi = np.array([pots[int(d)] for d in mesh.domains])
    q = solve_direct(matrix, phi)
    return float(q[mesh.domains == drive_domain].sum())
