"""Exception types shared across the package.

The CLI maps ``ConfigError`` (bad files, bad flags, dimension mismatches) to
exit code 2 and every other failure to exit code 1.
"""


class ConfigError(ValueError):
    """A scenario, network file, or flag combination is invalid."""


class ValidationError(ConfigError):
    """A loaded model violates a structural invariant (names the violation)."""


class IntegrationBlowupError(RuntimeError):
    """State left the finite/bounded region during a rollout."""

    def __init__(self, step: int, max_abs: float):
        self.step = step
        self.max_abs = max_abs
        super().__init__(
            f"integration blew up at step {step} (max |state| = {max_abs:.3e}); "
            "reduce the step size or the controller gains"
        )


class DegenerateFitError(RuntimeError):
    """Too few usable points to fit a decay envelope."""


class BracketError(RuntimeError):
    """A scalar root bracket could not be established."""
