import numpy as np


class ConfigError(Exception):
    pass


class DatasetError(ValueError):
    pass


class SingularMatrixError(np.linalg.LinAlgError):
    pass


class InvalidStateError(ValueError):
    pass


class NumericalConsistencyError(ArithmeticError):
    pass


class OptimizationError(RuntimeError):
    pass


class ModelFormatError(ValueError):
    pass


class BenchmarkError(RuntimeError):
    pass
