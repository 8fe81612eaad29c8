"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class StabCVError(Exception):
    exit_code = 1


class ConfigError(StabCVError, ValueError):
    exit_code = 2


class DataError(StabCVError, ValueError):
    exit_code = 3


class NumericalError(StabCVError, ArithmeticError):
    exit_code = 4


class FoldCountError(ConfigError):
    pass


class SparsityError(ConfigError):
    pass


class MetricDomainError(DataError):
    pass


class UnpairedError(DataError):
    pass


class FitError(NumericalError):
    """A learner failed while fitting on the training part of a fold."""

    def __init__(self, message, fold=None):
        super().__init__(message if fold is None else f"fold {fold}: {message}")
        self.fold = fold
