"""Exception hierarchy shared by all fdr modules."""


class FdrError(Exception):
    """Base class for every error raised by fdr."""


class EmptyCloud(FdrError):
    pass


class NonFiniteInput(FdrError):
    pass


class GridMismatch(FdrError):
    pass


class ShapeMismatch(FdrError):
    pass


class NonpositiveCurvature(FdrError):
    pass


class NonFiniteIterate(FdrError):
    """The primal-dual iteration produced NaN or inf."""


class SolverFailure(FdrError):
    pass


class AllCandidatesFailed(FdrError):
    pass


class TooFewReps(FdrError):
    pass


class ConfigError(FdrError):
    pass
