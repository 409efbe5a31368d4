"""Exception hierarchy.

Every error raised by the toolkit derives from :class:`HistolimeError`. The three
intermediate classes carry the CLI exit code so commands can map failures without
enumerating every concrete type.
"""


class HistolimeError(Exception):
    exit_code = 1


class InputError(HistolimeError):
    """Bad input data, files, or arguments."""

    exit_code = 2


class BackendError(HistolimeError):
    """A model backend could not be reached or misbehaved."""

    exit_code = 3


class NumericalError(HistolimeError):
    """An algorithm could not produce a result."""

    exit_code = 4


# imaging
class DecodeError(InputError):
    pass


class UnsupportedFormat(InputError):
    pass


class EncodeError(InputError):
    pass


class InvalidAugmentSpec(InputError, ValueError):
    pass


# dataset
class MissingClassDirectory(InputError):
    pass


class EmptyCorpus(InputError, ValueError):
    pass


class BadRatios(InputError, ValueError):
    pass


class ManifestParseError(InputError):
    def __init__(self, message, line=None, field=None):
        self.line = line
        self.field = field
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field is not None:
            where.append(f"field {field}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)


# gateway
class ManifestError(InputError):
    pass


class ShapeError(InputError, ValueError):
    pass


class BackendUnavailable(BackendError):
    pass


class BackendFailure(BackendError):
    pass


# metrics
class LengthMismatch(InputError, ValueError):
    pass


class UndefinedMetric(NumericalError, ZeroDivisionError):
    pass


# lime
class SegmentationError(NumericalError):
    pass


class SingularSystem(NumericalError):
    pass


# curves
class EpochLogError(InputError):
    def __init__(self, message, line=None):
        self.line = line
        super().__init__(f"line {line}: {message}" if line is not None else message)
