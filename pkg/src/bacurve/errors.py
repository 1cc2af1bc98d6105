"""Exception hierarchy shared by all engine layers."""


class EngineError(Exception):
    """Base class for every error raised by this package."""


# --- rational calculus ---

class PoleEvaluation(EngineError):
    """Evaluation requested at (or too close to) a pole."""


class InfiniteValue(EngineError):
    """Value at infinity is infinite (numerator degree exceeds pole degree)."""


class NotAPole(EngineError):
    """Residue requested at a point that is not a recorded pole or infinity."""


class WrongVanishingOrder(EngineError):
    """One-form does not vanish to the order required by the eps^2 expansion."""


# --- spectral data ---

class SpectralDataError(EngineError):
    """Base class for malformed or inconsistent spectral data."""


class DataSyntaxError(SpectralDataError):
    """Input text is not well-formed JSON."""


class SchemaError(SpectralDataError):
    """JSON is well-formed but a field is missing, duplicated or mistyped."""


class InvariantError(SpectralDataError):
    """A declared value violates a structural invariant; names the rule."""

    def __init__(self, rule: str, detail: str = ""):
        self.rule = rule
        super().__init__(f"{rule}: {detail}" if detail else rule)


class UnboundParameter(SpectralDataError):
    """An omega scale parameter is still marked 'solve'."""


class NoConstraint(SpectralDataError):
    """No node condition constrains the parameter to be solved."""


class Inconsistent(SpectralDataError):
    """Solved parameter value violates the remaining residue conditions."""

    def __init__(self, message: str, value: complex):
        self.value = value
        super().__init__(message)


# --- Baker-Akhiezer solve ---

class EssentialAtConstraint(EngineError):
    """A node or normalization point sits at an essential singularity."""


class SingularSystem(EngineError):
    """Linear system for the section coefficients is numerically singular."""


class EssentialPoint(EngineError):
    """Direct psi evaluation requested at an essential point (use eval_h)."""


class InvolutionMismatch(EngineError):
    """Exponential factors do not cancel structurally in the product form."""


# --- verification ---

class NoTau(EngineError):
    """Reality check requested but the data carries no antiholomorphic involution."""


class NotEgorovShape(EngineError):
    """Data does not satisfy the structural hypotheses of the Egorov checks."""


class ZeroLame(EngineError):
    """A Lame coefficient vanishes at the sample point."""
