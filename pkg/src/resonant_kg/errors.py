"""Exception hierarchy shared by all modules."""


class ResonanceError(Exception):
    """Base class for every error raised by the package."""


class NoSignChange(ResonanceError):
    """The resonance function keeps its sign on the requested bracket."""


class OrderingViolation(ResonanceError):
    """Resonance functions are not ordered l_j < l_m for j < m."""

    def __init__(self, j, m, t2, x2):
        self.j, self.m, self.t2, self.x2 = j, m, t2, x2
        super().__init__(f"l_{j} >= l_{m} at t2={t2:.6g}, x2={x2:.6g}")


class CausticDetected(ResonanceError):
    """Rays of the eikonal solution cross inside the requested domain."""


class Unsupported(ResonanceError):
    """The requested operation is not available for this input."""


class TangentialCrossing(ResonanceError):
    """The characteristics touch the resonance curve (phi ~ 0)."""


class NonpositivePhi(ResonanceError):
    """The layer slope phi must be strictly positive."""


class SpanTooNarrow(ResonanceError):
    """The layer integral has not converged on the requested sigma span."""


class NaNDetected(ResonanceError):
    """A non-finite value appeared during time stepping."""

    def __init__(self, step_index):
        self.step_index = step_index
        super().__init__(f"non-finite field after step {step_index}")


class ResolutionLoss(ResonanceError):
    """Envelope spectrum no longer decays to the resolution floor."""


class CarrierOverlap(ResonanceError):
    """Two carriers are too close in wavenumber to be separated."""


class LayerOverlap(ResonanceError):
    """Two resonance layers are closer than the validity margin."""


class ConfigError(ResonanceError):
    """Invalid experiment configuration."""

__all__ = [name for name, obj in list(globals().items()) if isinstance(obj, type) and issubclass(obj, Exception)]
