"""mol2adr - Generate adverse drug reaction labels from molecular structure."""

__version__ = "1.0.0"

from .core import Mol2AdrPipeline, Predictor

__all__ = ["Mol2AdrPipeline", "Predictor", "__version__"]
