"""Exception types shared across the package."""


class MdgError(Exception):
    """Base class for all package errors."""


class ZeroVector(MdgError):
    """A vector with (near-)zero norm cannot be normalized."""


class DimensionMismatch(MdgError):
    """Operands do not share the required dimensions."""


class NumericalError(MdgError):
    """A numerical invariant was violated beyond roundoff tolerance."""


class SingularGram(MdgError):
    """Gram matrix too degenerate for a finite gradient, even via the fallback."""


class EmptyBatch(MdgError):
    """Contrastive batch has fewer than two triplets."""


class InvalidRange(MdgError):
    """A scalar parameter lies outside its admissible range."""


class TimestepOutOfRange(MdgError):
    """Timestep index outside [0, T]."""


class TimestepOrder(MdgError):
    """Reverse-process step must go to an earlier (or equal) timestep."""


class UnknownConcept(MdgError):
    """Concept index does not name an existing component."""


class InvalidDims(MdgError):
    """World dimensions are inconsistent or too small."""


class EmptyInput(MdgError):
    """Metric input collection is empty."""


class TooFewSamples(MdgError):
    """Not enough samples to fit the required statistics."""


class NonFiniteInput(MdgError):
    """Input contains NaN or infinity."""


class ConfigError(MdgError):
    """Base class for configuration problems."""


class ConfigParse(ConfigError):
    """Configuration document could not be parsed."""


class ConfigInvalid(ConfigError):
    """Configuration parsed but fails validation."""


class InvariantViolation(MdgError):
    """A construction-time invariant could not be satisfied."""


class SchemaMismatch(MdgError):
    """Result artifacts disagree on schema, world hash, or pairing keys."""
