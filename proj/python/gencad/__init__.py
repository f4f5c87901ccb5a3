"""Image-to-CAD pipeline bindings."""

from ._gencad import *  # noqa: F401,F403
from ._gencad import (
    CadSequence,
    ConfigError,
    DependencyError,
    GencadError,
    GeometryError,
    ParseError,
    RangeError,
    Solid,
)

__version__ = "0.1.0"
