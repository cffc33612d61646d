"""Exception types shared across the package."""


class FlowinfillError(Exception):
    """Base class for package-specific errors."""


class ConfigError(FlowinfillError, ValueError):
    """A configuration value is out of its documented range or inconsistent."""


class ShapeMismatch(FlowinfillError, ValueError):
    """Two arrays that must agree on a dimension do not."""


class LengthOverflow(FlowinfillError, ValueError):
    """A token sequence is longer than the frame count it must pad up to."""


class InsufficientDuration(FlowinfillError, ValueError):
    """Requested generation window cannot hold the conditioning tokens."""


class MarkupError(FlowinfillError, ValueError):
    """Pronunciation markup is malformed (unbalanced or empty parentheses)."""


class UnknownSymbol(FlowinfillError, KeyError):
    """A phoneme symbol is not registered in the vocabulary."""


class VocabularyError(FlowinfillError, KeyError):
    """A character or token id is not covered by the vocabulary."""


class AlignmentError(FlowinfillError, ValueError):
    """An alignment is empty, overlapping, or does not cover its frame range."""


class SingularFlowStep(FlowinfillError, ArithmeticError):
    """Flow time too close to the endpoint: the target field denominator vanishes."""


class NumericalError(FlowinfillError, ArithmeticError):
    """Non-finite values appeared where finite numbers are required."""


class SimUndefined(FlowinfillError, ArithmeticError):
    """Speaker similarity is undefined because an embedding has zero norm."""


class EmptyReference(FlowinfillError, ValueError):
    """Character error rate against an empty reference is undefined."""
