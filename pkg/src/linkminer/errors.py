"""Exception hierarchy; the CLI maps each class to a stable error code."""


class LinkMinerError(Exception):
    """Base class for all library errors."""

    code = "error"


class CorpusFormatError(LinkMinerError):
    """Malformed corpus input (links, titles, anchors, texts)."""

    code = "parse-failure"


class TraceFormatError(LinkMinerError):
    """Malformed or inconsistent navigation trace input."""

    code = "parse-failure"


class UnknownArticleError(LinkMinerError):
    """An article id or title that does not exist in the corpus."""

    code = "unknown-article"


class RankingError(LinkMinerError):
    """Ranking method applied to an incompatible candidate set."""

    code = "invalid-ranking"


class ConvergenceError(LinkMinerError):
    """Iterative factorization did not converge within its budget."""

    code = "no-convergence"

    def __init__(self, message: str, residual: float | None = None):
        super().__init__(message)
        self.residual = residual


class GroundTruthError(LinkMinerError):
    """Label computation violated a precondition."""

    code = "invalid-ground-truth"


class InfeasibleConfigError(LinkMinerError):
    """A configuration that cannot produce a valid world or run."""

    code = "infeasible-config"


class IneligibleEvaluationError(LinkMinerError):
    """No target satisfies the evaluation eligibility rule."""

    code = "ineligible-evaluation"
