"""Solitary waves of the Schroedinger equation with a point nonlinear oscillator."""
from .model import (
    DegenerateParametrization,
    DomainError,
    FieldState,
    Grid,
    NoSolitaryWave,
    NonlinearCoupling,
    SolitaryWave,
    SolwaveError,
    SpectralCase,
    ZeroMuError,
    check_spectral_condition,
    coupling_eval,
    mu_omega,
    solitary_from_C,
    solitary_from_omega,
    tangent_frame,
)

__version__ = "0.1.0"
