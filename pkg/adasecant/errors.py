from typing import Optional


class AdasecantError(Exception):
    pass


class NumericsError(AdasecantError):
    pass


class LayoutError(NumericsError):
    pass


class UnknownBlockError(NumericsError):
    pass


class NonFiniteError(NumericsError):
    def __init__(self, stage: str, index: int, value: Optional[float] = None):
        self.stage = stage
        self.index = index
        self.value = value
        super().__init__(f"Non-finite value {value!r} at parameter {index} during {stage}")


class DegenerateStatisticsError(AdasecantError):
    pass


class ProblemError(AdasecantError):
    pass


class ConfigError(AdasecantError):
    pass


class ExperimentAbort(AdasecantError):
    def __init__(self, message: str, step: int, last_good_step: Optional[int]):
        self.step = step
        self.last_good_step = last_good_step
        super().__init__(f"{message} (step {step}, last good step {last_good_step})")


class OutputError(AdasecantError):
    def __init__(self, message: str, path: str):
        self.path = path
        super().__init__(message)
