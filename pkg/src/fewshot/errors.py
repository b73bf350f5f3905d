"""Exception hierarchy.

The three top-level families map onto CLI exit codes: configuration
problems exit with 2, data/artifact problems with 3 and numerical
failures with 4.
"""


class FewShotError(Exception):
    exit_code = 1


class ConfigError(FewShotError):
    """Bad configuration: unknown keys, type mismatches, invalid values."""

    exit_code = 2

    def __init__(self, message, key=None):
        self.key = key
        super().__init__(f"{key}: {message}" if key else message)


class DataError(FewShotError):
    exit_code = 3


class NumericError(FewShotError, ArithmeticError):
    exit_code = 4


# tensor-core
class DimensionError(FewShotError, ValueError):
    pass


class LabelError(FewShotError, ValueError):
    pass


class RankError(FewShotError, ValueError):
    pass


class ConnectivityError(FewShotError, ValueError):
    pass


class NonFiniteError(NumericError):
    pass


class SingularError(NumericError):
    pass


class ParameterError(FewShotError, ValueError):
    pass


# data
class ManifestError(DataError):
    pass


class MissingManifestError(ManifestError, FileNotFoundError):
    pass


class MalformedRowError(ManifestError):
    pass


class DuplicateIdError(ManifestError):
    pass


class EmptyClassError(ManifestError):
    pass


class CapacityError(DataError):
    pass


class TransformError(DataError):
    pass


class DisjointnessError(DataError):
    pass


# models / methods / engine
class RegistryError(ConfigError):
    pass


class CoverageError(FewShotError, ValueError):
    pass


class StateError(DataError):
    """Missing or corrupted run artifacts, or an unfitted head."""


class MethodConfigError(ConfigError):
    pass


class TrainingError(NumericError):
    pass


class AdaptationError(NumericError):
    pass


class ProtocolViolationError(DataError):
    pass


class MetaGradientError(NumericError):
    pass
