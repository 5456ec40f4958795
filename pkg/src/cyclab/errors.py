"""Exception hierarchy shared by all cyclab modules."""


class CyclabError(Exception):
    """Base class for every error raised by cyclab."""


class BindingError(CyclabError, ValueError):
    """A sampled function is not bound to the measure it is used with."""


class ZeroWeightError(CyclabError, ValueError):
    """A reweighting function vanishes at an atom."""


class DomainError(CyclabError, ValueError):
    """An argument lies outside the domain of a map."""


class ConfigError(CyclabError, ValueError):
    """Invalid generator parameters or experiment configuration."""


class DecompositionError(CyclabError):
    """An alpha-set decomposition could not honour its mass budget."""


class BoundViolation(CyclabError, AssertionError):
    """A numerically checked inequality failed."""
