"""Convergence regions and certificates for accelerated gradient descent under the Regularity Condition."""
from .model import (AGDParams, QuadForm, RCParams, SectorBound, StateSpace, build_original_system,
                    build_rc_quadform, build_shifted_quadform, build_shifted_system, rc_to_sector,
                    sector_to_rc)

__version__ = "0.1.0"

__all__ = [
    "AGDParams", "QuadForm", "RCParams", "SectorBound", "StateSpace", "build_original_system",
    "build_rc_quadform", "build_shifted_quadform", "build_shifted_system", "rc_to_sector", "sector_to_rc",
]
