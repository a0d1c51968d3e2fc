"""Exception hierarchy.

Validation-type errors (bad inputs, bad config) subclass ``ValidationError`` so the
CLI can map them to exit code 2; everything raised while a pipeline runs is
wrapped into ``PipelineError`` (exit code 3).
"""


class DispCancelError(Exception):
    pass


class ValidationError(DispCancelError, ValueError):
    pass


class AlignmentError(ValidationError):
    """omega0 is not on a grid point; snap it first."""


class RangeError(ValidationError):
    pass


class DomainError(ValidationError):
    """Wavelength/frequency outside a medium's supported band, or at a pole."""


class SymmetryError(ValidationError):
    pass


class ConsistencyError(DispCancelError):
    pass


class DegenerateGridError(DispCancelError):
    pass


class CentroidError(DispCancelError):
    pass


class NoDipError(DispCancelError):
    pass


class FitError(DispCancelError):
    pass


class FilterSpecError(ValidationError):
    pass


class ParseError(ValidationError):
    def __init__(self, message, line=None, path=None):
        self.line = line
        self.path = path
        where = ""
        if path is not None:
            where += f"{path}"
        if line is not None:
            where += f":{line}" if where else f"line {line}"
        super().__init__(f"{where}: {message}" if where else message)


class ConfigError(ValidationError):
    def __init__(self, message, key=None):
        self.key = key
        super().__init__(f"{key}: {message}" if key else message)


class PipelineError(DispCancelError):
    def __init__(self, stage, message, parameter=None):
        self.stage = stage
        self.parameter = parameter
        detail = f" (parameter: {parameter})" if parameter else ""
        super().__init__(f"stage '{stage}' failed{detail}: {message}")
