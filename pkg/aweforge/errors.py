"""
Exception hierarchy. The CLI maps each family to an exit code through :attr:`AweForgeError.exit_code`.
"""

from typing import Iterable


class AweForgeError(Exception):
    exit_code = 1


class ConfigurationError(AweForgeError):
    """
    Invalid configuration, incompatible dimensions or an invalid spec.
    """

    exit_code = 2


class DimensionMismatch(ConfigurationError):
    def __init__(self, what, expected, received):
        super().__init__(
            f"Dimension mismatch for {what}: expected {expected} but received {received}."
        )


class DataError(AweForgeError):
    exit_code = 3


class FormatError(DataError):
    def __init__(self, path, field, detail=""):
        self.path = path
        self.field = field
        super().__init__(
            f"Invalid field `{field}` in {path}" + (f": {detail}." if detail else ".")
        )


class InputError(DataError):
    pass


class UnknownUtterances(DataError):
    def __init__(self, utterance_ids: Iterable[str]):
        self.utterance_ids = sorted(set(utterance_ids))
        super().__init__(
            f"Unknown utterance ids: {', '.join(self.utterance_ids)}."
        )


class SamplingError(DataError):
    pass


class EvaluationError(DataError):
    pass


class StratificationError(EvaluationError):
    pass


class TrainingError(AweForgeError):
    exit_code = 4


class NonFiniteGradient(TrainingError):
    def __init__(self, layer):
        self.layer = layer
        super().__init__(f"Non-finite gradient found in layer `{layer}`.")


class UsageError(AweForgeError):
    """
    Programming misuse, e.g., a backward call with a stale cache.
    """


class StageError(AweForgeError):
    def __init__(self, stage, cause: BaseException):
        self.stage = stage
        self.cause = cause
        self.exit_code = getattr(cause, "exit_code", 1)
        super().__init__(f"Stage `{stage}` failed: {cause}")
