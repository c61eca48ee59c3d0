"""Regional atrial stiffness estimation with emulators, history matching and MCMC."""

from .errors import AtriaFitError

__version__ = "0.1.0"

__all__ = ["AtriaFitError", "__version__"]
