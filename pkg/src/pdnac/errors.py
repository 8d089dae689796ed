"""Exception taxonomy shared across the package, with CLI exit codes."""


class PdnacError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class ConfigError(PdnacError):
    """Invalid configuration: bad schema, unknown keys, dimension mismatch."""

    exit_code = 2


class InfeasibleError(PdnacError):
    """The CMDP instance has no feasible policy (cost-LP optimum < 0)."""

    exit_code = 3


class NumericError(PdnacError):
    """A numeric computation failed (singular system, non-finite values)."""

    exit_code = 4


class ErgodicityError(NumericError):
    """The induced chain is not irreducible and aperiodic."""


class DivergenceError(NumericError):
    """An iterate left its stability region; signals a step-size problem."""
