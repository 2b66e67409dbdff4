"""Surface-charge field solver on spline geometry with a circuit export.

The pipeline: describe conductors as biquadratic rational patches, refine
to a piecewise-constant charge mesh, assemble the dense potential matrix
with adaptive Gauss rules, solve for charges at prescribed electrode
potentials, and optionally emit the equivalent capacitor network as a
netlist that a nodal circuit solver can consume.
"""
from .assembly import (EPSILON0, PotentialMatrix, assemble_potential_matrix,
                       assemble_rhs, load_matrix, save_matrix)
from .circuit import mna_solve, parse_netlist, verify_netlist
from .errors import (ConfigError, DegenerateJacobianWarning,
                     GeometryParseError, IgaPeecError, InvalidGeometryError,
                     NetlistParseError, NetlistStampError, QuadratureError,
                     SingularMatrixError)
from .geometry import (ElementMesh, load_geometry, make_concentric_spheres,
                       make_sphere, refine, save_geometry)
from .netlist import Netlist, stamp, write_netlist
from .quadrature import QuadConfig
from .solver import (electrode_charges, maxwell_capacitance_electrodes,
                     solve_direct, two_terminal_capacitance)

__version__ = "0.1.0"

__all__ = [
    "EPSILON0", "PotentialMatrix", "assemble_potential_matrix",
    "assemble_rhs", "load_matrix", "save_matrix",
    "mna_solve", "parse_netlist", "verify_netlist",
    "ConfigError", "DegenerateJacobianWarning", "GeometryParseError",
    "IgaPeecError", "InvalidGeometryError", "NetlistParseError",
    "NetlistStampError", "QuadratureError", "SingularMatrixError",
    "ElementMesh", "load_geometry", "make_concentric_spheres", "make_sphere",
    "refine", "save_geometry",
    "Netlist", "stamp", "write_netlist",
    "QuadConfig",
    "electrode_charges", "maxwell_capacitance_electrodes", "solve_direct",
    "two_terminal_capacitance",
    "__version__",
]
