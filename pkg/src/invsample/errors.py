"""Exception hierarchy shared by the library and the command-line front end."""


class InvSampleError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(InvSampleError, ValueError):
    """An argument lies outside the domain where a formula is defined."""


class ConvergenceError(InvSampleError, ArithmeticError):
    """A numerical solver failed to reach its residual tolerance."""


class RootNotBracketedError(ConvergenceError):
    """A root search found zero or several sign changes on its interval."""


class StoppingError(InvSampleError):
    """Misuse of a stopping state (ingesting after stop, estimating before)."""


class StreamExhaustedError(InvSampleError):
    """A finite sample stream ended before the sample sum reached the threshold."""

    def __init__(self, count, sample_sum, gamma):
        super().__init__(
            f"stream exhausted after {count} samples with sum {sample_sum!r} < gamma={gamma!r}"
        )
        self.count = count
        self.sample_sum = sample_sum
        self.gamma = gamma


class CapExceededError(InvSampleError):
    """The sample count hit the hard cap before stopping."""

    def __init__(self, cap, trial=None):
        where = "" if trial is None else f" in trial {trial}"
        super().__init__(f"sample-size cap {cap} exceeded{where}")
        self.cap = cap
        self.trial = trial
