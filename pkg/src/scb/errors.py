"""Exception hierarchy.

Errors fall into three families that map onto CLI exit codes:
input problems (2), numeric precondition failures (3) and internal
invariant violations (4).
"""


class ScbError(Exception):
    exit_code = 1


class InputError(ScbError, ValueError):
    exit_code = 2


class NumericError(ScbError, ValueError):
    exit_code = 3


class InvariantViolation(ScbError, RuntimeError):
    exit_code = 4


class EmptyData(InputError):
    pass


class ColumnNotFound(InputError, KeyError):
    def __str__(self):
        return str(self.args[0]) if self.args else ""


class AllRowsInvalid(InputError):
    pass


class SeriesTooShort(InputError):
    pass


class NotAKernel(NumericError):
    pass


class DomainError(NumericError):
    pass


class BandwidthTooLarge(NumericError):
    pass


class DensityTooSmall(NumericError):
    pass


class EmptyWindow(NumericError):
    pass


class SingularFit(NumericError):
    pass


class InvalidReps(NumericError):
    pass


class Diverged(NumericError):
    pass


class FileNotFound(InputError):
    pass


class IoError(ScbError):
    exit_code = 2
