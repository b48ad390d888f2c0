"""Finite-sample toolkit for sublinear Higson coronas and Euclidean cones."""
from .errors import (
    ConfigError,
    ConnectivityError,
    ConstructionError,
    CoronaLabError,
    DegenerateSpaceError,
    EmptyScaleError,
    InputError,
    PreconditionError,
    ResourceError,
)
from .spaces import SCHEMA_VERSION

__version__ = "0.1.0"
