"""Bitcoin block-file parsing and user-graph analytics toolkit."""

from ._accel import BACKEND as accel_backend

__version__ = "0.1.0"

__all__ = ["accel_backend", "__version__"]
