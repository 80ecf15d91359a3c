"""Exception hierarchy shared by every flagtune module."""


class FlagTuneError(Exception):
    """Base class for all flagtune errors."""


class ParseError(FlagTuneError):
    pass


class DuplicateFlag(FlagTuneError):
    def __init__(self, name: str):
        super().__init__(f"duplicate flag name: {name!r}")
        self.name = name


class UnknownFlag(FlagTuneError):
    def __init__(self, name: str):
        super().__init__(f"unknown flag: {name!r}")
        self.name = name


class LengthMismatch(FlagTuneError):
    pass


class InvalidConfig(FlagTuneError):
    pass


class EmptyPopulation(FlagTuneError):
    pass


class HarnessError(FlagTuneError):
    """A compile or run step failed; ``diagnostics`` holds captured output."""

    status = "error"

    def __init__(self, message: str, diagnostics: str = ""):
        super().__init__(message)
        self.diagnostics = diagnostics


class CompileError(HarnessError):
    status = "CompileError"


class CompileTimeout(HarnessError):
    status = "CompileTimeout"


class RunError(HarnessError):
    status = "RunError"


class RunTimeout(HarnessError):
    status = "RunTimeout"


class InvalidModel(FlagTuneError):
    pass


class InvalidSpace(FlagTuneError):
    pass


class BaselineFailure(FlagTuneError):
    pass
