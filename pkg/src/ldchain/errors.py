"""Exception hierarchy shared across the package."""


class ConfigError(ValueError):
    """Invalid configuration (dimensions, signs, mutually exclusive fields, bad JSON)."""


class NumericalFailure(RuntimeError):
    """Base class for failures of a numerical procedure (exit code 2 in the CLI)."""


class ScgfBasinError(NumericalFailure):
    """Newton ascent left the positive-definite Gaussian basin for some mode.

    Signals a tilt strength beyond the convergence radius of the variational
    principle; the offending Fourier mode index is stored in ``mode``.
    """

    def __init__(self, mode: int, detail: str = ""):
        self.mode = mode
        msg = f"SCGF out of Gaussian basin at mode k={mode}"
        if detail:
            msg += f" ({detail})"
        super().__init__(msg)


class RiccatiExistenceError(NumericalFailure):
    """The tilted-generator eigenvalue does not exist at this tilt.

    Raised when the Hamiltonian matrix has eigenvalues on (or numerically
    touching) the imaginary axis, or the stable subspace is not a graph over
    the state block.  ``margin`` is the distance of the spectrum to the axis.
    """

    def __init__(self, margin: float, detail: str = ""):
        self.margin = margin
        msg = f"SCGF divergent or tilt outside analyticity strip (spectral margin {margin:.3e})"
        if detail:
            msg += f": {detail}"
        super().__init__(msg)


class BlowupError(NumericalFailure):
    """Trajectory integration exceeded the |q|,|p| <= 1e12 safety bound."""

    def __init__(self, step: int, replica: int = 0):
        self.step = step
        self.replica = replica
        super().__init__(
            f"numerical blow-up at step {step} (replica {replica}); "
            "reduce dt or check the drive strength"
        )
