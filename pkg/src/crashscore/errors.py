"""Exception hierarchy.

The CLI maps each family to an exit status: ConfigError -> 2, DataError -> 3,
anything else derived from CrashScoreError -> 4.
"""


class CrashScoreError(Exception):
    pass


class ConfigError(CrashScoreError):
    pass


class DataError(CrashScoreError):
    pass


class SchemaError(DataError):
    pass


class LoadError(DataError):
    pass


class ModelFormatError(DataError):
    pass


class ExtractionError(DataError):
    pass


class SplitError(CrashScoreError):
    pass


class TrainingError(CrashScoreError):
    pass


class PredictionError(CrashScoreError):
    pass


class ClassificationError(CrashScoreError):
    pass


class ExplanationError(CrashScoreError):
    pass


class MetricError(CrashScoreError):
    pass


class AnalysisError(CrashScoreError):
    pass
