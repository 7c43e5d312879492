class GTrieError(Exception):
    """Base class for all library errors."""


class ValidationError(GTrieError, ValueError):
    pass


class NotAProbabilityVector(ValidationError):
    pass


class Explosive(ValidationError):
    pass


class CapExceeded(GTrieError, RuntimeError):
    def __init__(self, which, limit):
        self.which = which
        self.limit = limit
        super().__init__(f"{which} cap {limit} exceeded")


class RootCheckFailed(GTrieError, ArithmeticError):
    pass


class TruncationNotCertified(GTrieError, ArithmeticError):
    pass


class AlphaTooSmall(ValidationError):
    pass


class PoleAt(ValidationError):
    pass


class UniformCase(ValidationError):
    pass


class BatchFailed(GTrieError, RuntimeError):
    pass
