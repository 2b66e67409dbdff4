"""Exception types shared across the package."""


class IgaPeecError(Exception):
    """Base class for all errors raised by iga_peec."""


class InvalidGeometryError(IgaPeecError):
    """Geometry data violates a structural invariant (weights, tags, connectivity)."""


class GeometryParseError(IgaPeecError):
    """A geometry file could not be parsed.

    Carries ``path`` and, when known, ``field`` / ``line`` for diagnostics.
    """

    def __init__(self, message, path=None, field=None, line=None):
        self.path = path
        self.field = field
        self.line = line
        loc = []
        if path is not None:
            loc.append(str(path))
        if line is not None:
            loc.append(f"line {line}")
        if field is not None:
            loc.append(f"field '{field}'")
        if loc:
            message = f"{message} ({', '.join(loc)})"
        super().__init__(message)


class QuadratureError(IgaPeecError):
    """A pair integral could not be evaluated; carries the element indices."""

    def __init__(self, message, i=None, j=None):
        self.i = i
        self.j = j
        if i is not None:
            message = f"{message} (elements {i}, {j})"
        super().__init__(message)


class SingularMatrixError(IgaPeecError):
    """Dense solve hit a numerically singular or unacceptably ill-conditioned matrix."""


class NetlistStampError(IgaPeecError):
    """The potential matrix cannot be stamped as a circuit (bad diagonal)."""


class NetlistParseError(IgaPeecError):
    """A netlist file contains a line that cannot be interpreted."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"{message} (line {line})"
        super().__init__(message)


class ConfigError(IgaPeecError):
    """Bad run configuration (unknown geometry spec, missing potential, bad flag)."""


class DegenerateJacobianWarning(UserWarning):
    """Surface Jacobian collapsed below the resolvable scale at an evaluation point."""
