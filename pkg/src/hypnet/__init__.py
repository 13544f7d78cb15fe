"""Literature-based hypothesis generation over layered knowledge networks.

Build a knowledge network from a document corpus (tokens, phrases,
embeddings, kNN layers, TF-IDF cross edges, curated backbone), answer
term-pair queries with shortest-path document clouds and topic models,
rank hypotheses with embedding metrics, and validate with cut-year ROC
experiments.
"""

__version__ = "0.1.0"

from .errors import (
    DegeneratePairError,
    DisconnectedError,
    HypnetError,
    NetworkFormatError,
    OovError,
    UnknownTermError,
)
from .query import HypothesisResult, QueryConfig, run_query
from .system import HypothesisSystem, PipelineConfig, build_system

__all__ = [
    "HypnetError",
    "OovError",
    "UnknownTermError",
    "DisconnectedError",
    "DegeneratePairError",
    "NetworkFormatError",
    "HypothesisSystem",
    "PipelineConfig",
    "build_system",
    "HypothesisResult",
    "QueryConfig",
    "run_query",
    "__version__",
]
