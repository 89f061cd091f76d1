"""Stochastic matching models on graphs and hypergraphs."""
from .errors import MatchkitError, NotStableError, NumericError, UnsupportedKindError, ValidationError
from .measures import Measure, uniform
from .policies import PolicySpec
from .structures import MatchingStructure, load_structure, named

__version__ = "0.1.0"

__all__ = ["MatchkitError", "NotStableError", "NumericError", "UnsupportedKindError",
           "ValidationError", "Measure", "uniform", "PolicySpec", "MatchingStructure",
           "load_structure", "named", "__version__"]
