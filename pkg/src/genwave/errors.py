"""Exception hierarchy shared by all genwave modules."""


class GenwaveError(Exception):
    """Base class for all errors raised by this package."""


class GeometryError(GenwaveError):
    """Degenerate or non-Lorentzian background geometry."""


class StencilError(GenwaveError):
    """A finite-difference stencil does not fit inside the valid region."""


class RankError(GenwaveError):
    """Tensor rank outside the supported range or inconsistent with an operation."""


class DomainError(GenwaveError):
    """Lens/domain construction failed (e.g. the lens collapses before t_max)."""


class ResolutionError(GenwaveError):
    """Grid too coarse to resolve a mollifier or an epsilon-scale feature."""


class ScenarioError(GenwaveError):
    """Scenario definition produced an invalid coefficient family."""


class InversionError(GenwaveError):
    """Pointwise metric inversion failed or did not verify."""


class HyperbolicityError(GenwaveError):
    """Characteristic roots are not real at some point."""


class InstabilityError(GenwaveError):
    """Non-finite values appeared during time stepping."""


class DegenerateNormalError(GenwaveError):
    """xi^0 vanished somewhere on the initial slice."""


class DataError(GenwaveError):
    """Input data unusable (too few points, negative energies, ...)."""


class ParseError(GenwaveError):
    """Expression syntax error, with byte offset and expected tokens."""

    def __init__(self, message: str, offset: int, expected: tuple[str, ...] = ()):
        super().__init__(message)
        self.offset = offset
        self.expected = expected


class EvalError(GenwaveError):
    """Expression evaluation hit a domain error; carries the offending subexpression."""

    def __init__(self, message: str, subexpr: str):
        super().__init__(message)
        self.subexpr = subexpr


class ConfigError(GenwaveError):
    """Scenario config file is malformed."""
