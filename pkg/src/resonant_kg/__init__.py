"""Resonant wave-packet generation in the driven cubic Klein-Gordon equation.

Closed-form asymptotics (forced oscillations, layer jump, NLS envelopes)
next to a pseudo-spectral direct solver and the tools to compare them.
"""

__version__ = "0.1.0"

from .errors import *  # noqa: F401,F403
from .phase import (  # noqa: F401
    CarrierPhase,
    ForcingProfile,
    MultipleOfS,
    PhaseModel,
    characteristic_xi,
    check_mode_ordering,
    eval_resonance,
    resonance_time,
    solve_eikonal,
)
