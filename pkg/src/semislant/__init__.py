"""Numerical checks of semi-slant Riemannian map structure."""
from .analysis import AnalysisReport, analyze
from .catalog import builtin
from .mapcore import MapSpec
from .sampling import SamplePlan

__version__ = "0.1.0"

__all__ = ["AnalysisReport", "MapSpec", "SamplePlan", "analyze", "builtin"]
