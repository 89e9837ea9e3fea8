"""Exception types shared across the toolkit."""


class DiscUnifError(Exception):
    """Base class for all toolkit errors."""


class ParseError(DiscUnifError, ValueError):
    """Malformed expression text; ``offset`` is the byte offset of the fault."""

    def __init__(self, message, offset):
        super().__init__(f"{message} (offset {offset})")
        self.offset = offset


class DomainError(DiscUnifError, ArithmeticError):
    """Expression evaluated outside its domain (log/sqrt of a negative, 1/0, overflow)."""


class MeshError(DiscUnifError, ValueError):
    """Invalid mesh parameters or a broken mesh invariant."""


class PointLocationError(DiscUnifError, RuntimeError):
    """A query point could not be assigned to any triangle."""

    def __init__(self, point, message="point location failed"):
        super().__init__(f"{message} at {point!r}")
        self.point = point


class PositivityError(DiscUnifError, ValueError):
    """Metric failed positive definiteness; ``vertex`` is the first offender."""

    def __init__(self, vertex, message="metric not positive definite"):
        super().__init__(f"{message} at vertex {vertex}")
        self.vertex = vertex


class BeltramiBoundError(DiscUnifError, ValueError):
    """A Beltrami coefficient violated its sup-norm bound."""


class OrientationError(DiscUnifError, ValueError):
    """A map failed the positive-Jacobian (orientation) requirement."""


class SolverError(DiscUnifError, RuntimeError):
    """Beltrami solve failed; ``diagnostics`` carries the iteration history."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics
