"""Exception hierarchy.

Errors that come from user input (bad files, bad column roles, bad
arguments) derive from :class:`UserError` so the command line front end
can map them to exit status 2.
"""


class UserError(Exception):
    """Base class for errors caused by user-supplied input."""


class InvalidInput(UserError, ValueError):
    """Malformed arrays or arguments (non-finite entries, shape mismatch)."""


class SpecError(UserError, KeyError):
    """Column-role mapping refers to absent columns or is incomplete."""

    def __str__(self):
        # KeyError quotes its argument; keep the plain message
        return str(self.args[0]) if self.args else ""


class DataError(UserError, ValueError):
    """Missing or non-numeric cells in the named columns."""


class IdentificationDataError(DataError):
    """Exact rank failure: the model is not identified on these data."""


class DegenerateDimsError(DataError):
    """Sample too small for the degrees of freedom the statistics need."""


class DrawError(RuntimeError):
    """A null-error sampler produced non-finite values."""

    def __init__(self, message, draw_index=None):
        super().__init__(message)
        self.draw_index = draw_index
