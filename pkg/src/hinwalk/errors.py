"""Exception hierarchy. The CLI maps each family to an exit code."""


class HinError(Exception):
    exit_code = 1


class ConfigError(HinError, ValueError):
    exit_code = 2


class DataError(HinError, ValueError):
    exit_code = 3


class ParseError(DataError):
    def __init__(self, message, line=None, source=None):
        self.line = line
        self.source = source
        where = ""
        if source is not None:
            where += f"{source}:"
        if line is not None:
            where += f"{line}: "
        elif where:
            where += " "
        super().__init__(where + message)


class ValidationError(DataError):
    pass


class MissingArtifactError(DataError):
    def __init__(self, artifact, hint=""):
        self.artifact = str(artifact)
        msg = f"missing artifact: {self.artifact}"
        if hint:
            msg += f" ({hint})"
        super().__init__(msg)


class ContractError(HinError, RuntimeError):
    """An operation was called outside its precondition (e.g. illegal action)."""


class NumericError(HinError, ArithmeticError):
    exit_code = 4

    def __init__(self, message, step=None):
        self.step = step
        if step is not None:
            message = f"{message} (step {step})"
        super().__init__(message)
