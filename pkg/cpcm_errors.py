"""Exception hierarchy shared by every CPCM module.

The CLI maps these onto exit codes: input/precondition problems exit with 2,
numerical failures with 3.
"""


class CpcmError(ValueError):
    """Base class for all toolkit errors"""


class DomainError(CpcmError):
    """Parameter outside its domain, value outside a support, or probability outside (0,1)"""


class PreconditionError(CpcmError):
    """An operation was called with inputs that violate its preconditions"""


class DegenerateInputError(PreconditionError):
    """Constant vectors or covariates with no spread"""


class CapacityError(PreconditionError):
    """Requested problem size is beyond what exhaustive search supports"""


class NumericalError(CpcmError):
    """A numerical routine could not produce a trustworthy result"""


def exit_code_for(error: BaseException) -> int:
    """Exit status the CLI reports for an exception"""
    if isinstance(error, (DomainError, PreconditionError)):
        return 2
    return 3
