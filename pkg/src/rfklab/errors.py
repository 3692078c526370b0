"""Exception taxonomy shared by all rfklab modules."""


class RfkLabError(Exception):
    """Base class for all errors raised by rfklab."""


class InvalidDomainError(RfkLabError):
    """Degenerate or inconsistent domain geometry."""


class UnsupportedRegimeError(RfkLabError):
    """Robin parameters outside the supported sign regime (h_in*h_out < 0)."""


class InfeasibleMatchError(RfkLabError):
    """No annulus with the requested constraints exists (e.g. R^2 - |Omega|/pi < 0)."""


class IncompatibleDomainError(RfkLabError):
    """Robin-Robin matching residual above tolerance."""


class NoEigenvalueError(RfkLabError):
    """Eigenvalue scan exhausted its expansion budget without a bracket."""


class ShootingOverflowError(RfkLabError):
    """Non-finite values in the shooting integration, after one step halving."""


class StructureViolationError(RfkLabError):
    """Numerical output contradicts a structural guarantee (e.g. sigma uniqueness)."""


class MeshingError(RfkLabError):
    """Inverted or low-quality element during mesh construction."""


class EigensolveError(RfkLabError):
    """Inverse iteration failed to converge or shift retries exhausted."""


class InvalidTestFunctionError(RfkLabError):
    """Rayleigh quotient of a vector with zero mass norm."""


class DegenerateProfileError(RfkLabError):
    """Every level set of the distance field was empty."""


class InconsistentInputError(RfkLabError):
    """Profile, radial solution, or mesh built from mismatched inputs."""


class InvalidSeedError(RfkLabError):
    """Flow seed outside the closed domain."""


class DecompositionError(RfkLabError):
    """Too many unresolved cells in the basin decomposition."""


class GenerationError(RfkLabError):
    """Domain generator could not satisfy its constraint (bracket failure)."""
