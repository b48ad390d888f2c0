class CoronaLabError(Exception):
    """Base class for every error raised by the toolkit."""


class InputError(CoronaLabError, ValueError):
    pass


class DegenerateSpaceError(CoronaLabError):
    pass


class ConstructionError(CoronaLabError):
    pass


class EmptyScaleError(CoronaLabError):
    """Fewer than two sample points lie outside the requested ball."""


class ConnectivityError(CoronaLabError):
    pass


class ResourceError(CoronaLabError):
    def __init__(self, message, required=None):
        super().__init__(message)
        self.required = required


class PreconditionError(CoronaLabError):
    def __init__(self, message, witness=None):
        super().__init__(message)
        self.witness = witness


class ConfigError(CoronaLabError):
    pass
