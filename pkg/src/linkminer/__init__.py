"""Mining missing hyperlinks to a target page from human navigation traces.

The pipeline: ingest a reference snapshot (link graph, texts, anchor
statistics) and navigation traces, mine candidate source pages per target,
rank them (inlink relatedness, low-rank adjacency residual, or raw path
frequency), and evaluate suggestions against link-edit-history labels.
"""

__version__ = "0.1.0"

from .errors import (
    ConvergenceError,
    CorpusFormatError,
    GroundTruthError,
    IneligibleEvaluationError,
    InfeasibleConfigError,
    LinkMinerError,
    RankingError,
    TraceFormatError,
    UnknownArticleError,
)

__all__ = [
    "ConvergenceError",
    "CorpusFormatError",
    "GroundTruthError",
    "IneligibleEvaluationError",
    "InfeasibleConfigError",
    "LinkMinerError",
    "RankingError",
    "TraceFormatError",
    "UnknownArticleError",
    "__version__",
]
