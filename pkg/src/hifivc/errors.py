class HifiVCError(Exception):
    pass


class ContractError(HifiVCError, ValueError):
    """Caller violated an input contract (shape, rate, dimension)."""


class EmptyInputError(ContractError):
    pass


class ConfigurationError(HifiVCError):
    """A required adapter or backend is not available."""


class CheckpointMismatchError(HifiVCError):
    pass


class TrainingDivergedError(HifiVCError):
    def __init__(self, message: str, report: dict):
        super().__init__(f"{message}: {report}")
        self.report = report


class BiasGuardError(HifiVCError):
    """Evaluation ASR is the same model used for content encoding."""
