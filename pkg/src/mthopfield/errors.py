"""Exception types shared across the package."""


class InputError(ValueError):
    """Malformed or inconsistent input data (bad records, bad config values)."""


class UndefinedMetricError(ValueError):
    """A ranking metric was requested on a degenerate score/label set."""


class NonConvergenceError(RuntimeError):
    """Raised by the CLI when non-convergent dynamics are configured as fatal."""
