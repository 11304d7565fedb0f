"""Multibump solutions of semilinear elliptic equations in thin tubes around curves."""
from .config import RunConfig, load_config, parse_config
from .errors import TubeBumpsError

__all__ = ["RunConfig", "load_config", "parse_config", "TubeBumpsError"]
__version__ = "0.1.0"
