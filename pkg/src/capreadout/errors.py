"""Exception types raised by the simulator.

All of them derive from ``ValueError`` or ``RuntimeError`` so callers that
only care about "bad input" vs "simulation failed" can catch the builtins.
"""


class AliasingError(ValueError):
    """A requested tone or cutoff sits at or above the Nyquist frequency."""


class OverRangeError(ValueError):
    """Bridge deflection would drive a sensing capacitance to zero or below."""


class ResolutionError(ValueError):
    """Time step too coarse for the transient oscillator simulation."""


class StallError(RuntimeError):
    """The oscillator comparator never toggled within the allowed window."""


class SampleFailure(RuntimeError):
    """A Monte Carlo sample failed; ``index`` names the offending sample."""

    def __init__(self, index, cause):
        super().__init__(f"Monte Carlo sample {index} failed: {cause}")
        self.index = index
        self.cause = cause
