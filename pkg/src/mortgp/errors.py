"""Exception types raised across the package."""


class MortGPError(Exception):
    """Base class for all package errors."""


# spline_mean
class DegenerateKnots(MortGPError, ValueError):
    pass


class SingularDesign(MortGPError, ValueError):
    pass


# gp_core
class NotPositiveDefinite(MortGPError, ArithmeticError):
    pass


class FitFailed(MortGPError, RuntimeError):
    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = list(diagnostics or [])


# demography
class SurfaceFitFailed(MortGPError, RuntimeError):
    def __init__(self, message, failures=None):
        super().__init__(message)
        self.failures = dict(failures or {})


class MissingAgeModel(MortGPError, KeyError):
    def __init__(self, age):
        super().__init__(f"no fitted model for age {age}")
        self.age = age


# baselines
class IncompleteSurface(MortGPError, ValueError):
    pass


# evaluation
class ShapeError(MortGPError, ValueError):
    pass


class WindowOverrun(MortGPError, ValueError):
    pass


# data_io
class ParseError(MortGPError, ValueError):
    def __init__(self, message, line_no=None):
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)
        self.line_no = line_no


class DuplicateCell(ParseError):
    pass


class MissingAgeRange(MortGPError, ValueError):
    pass
