"""
Exceptions raised by the training engine and the analysis tools.

Each one subclasses a built-in so callers that only care about the broad
category (a bad value, an arithmetic failure) can catch that instead.
"""


class ConfigurationError(ValueError):
    """ A configuration value or diffusion schedule parameter is invalid. """


class ContractViolation(ValueError):
    """ An operation was called with inputs that break its preconditions
    (mismatched dimensions, negative weights, empty inputs, out-of-range steps). """


class NumericalError(ArithmeticError):
    """ A gradient, loss, sampler state or environment state stopped being finite. """


class DegenerateInputError(ValueError):
    """ A grid prior puts no mass where the optimal policy would need it. """


class MetricsParseError(ValueError):
    """ A metrics CSV could not be read. The message names the offending line. """
