"""Preprocessing for immersed finite element analysis on B-spline background meshes."""
from .errors import ConfigError, InvariantError, ProtocolError, CutprepError

__version__ = "0.1.0"
