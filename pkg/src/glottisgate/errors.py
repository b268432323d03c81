"""Exception hierarchy shared by the library and the CLI."""


class GlottisGateError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class InvalidInputError(GlottisGateError, ValueError):
    exit_code = 2


class MissingInputError(GlottisGateError, FileNotFoundError):
    exit_code = 2


class InvalidConfigError(GlottisGateError, ValueError):
    exit_code = 3


class InvalidStateError(GlottisGateError, RuntimeError):
    exit_code = 1


class MissingPredictionError(GlottisGateError, KeyError):
    exit_code = 2

    def __str__(self):
        return Exception.__str__(self)


class FeatureDisabledError(GlottisGateError, RuntimeError):
    exit_code = 4
