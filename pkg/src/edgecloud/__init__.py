"""Transit feed pipeline: mobile edge cleaning, a stream fabric, and an hourly graph store."""

from ._accel import BACKEND

__version__ = "0.1.0"

__all__ = ["BACKEND", "__version__"]
