"""
Resonance fluorescence of a trapped, laser-cooled three-level atom.

The atom is a Lambda system held in a harmonic trap and cooled into a dark
state by two lasers at two-photon resonance. The emission spectrum is
computed to second order in the Lamb-Dicke parameters:

* ``model`` builds the expansion operators of the master equation,
* ``perturbation`` gives the phonon coefficients and the perturbative
  eigen-elements,
* ``spectrum`` assembles pole weights into motional sidebands and the
  Mollow-type inelastic spectrum,
* ``oracle`` solves the full master equation on a truncated Fock space
  as an independent reference.

Units are hbar = nu = 1; frequencies are measured from laser 1.
"""

from .core import (
    DefectiveSpectrumError,
    InvalidArgument,
    NumericalFailure,
    SingularResolventError,
)
from .model import ExpansionOperators, ModelParams, build_expansion
from .oracle import build_full_liouvillian, oracle_spectrum, steady_state
from .perturbation import (
    HeatingRegimeError,
    PhononCoefficients,
    correct_eigenspace,
    phonon_coefficients,
)
from .spectrum import SpectrumResult, compute_spectrum, sideband_closed_form

__version__ = "0.1.0"

__all__ = [
    "DefectiveSpectrumError",
    "ExpansionOperators",
    "HeatingRegimeError",
    "InvalidArgument",
    "ModelParams",
    "NumericalFailure",
    "PhononCoefficients",
    "SingularResolventError",
    "SpectrumResult",
    "build_expansion",
    "build_full_liouvillian",
    "compute_spectrum",
    "correct_eigenspace",
    "oracle_spectrum",
    "phonon_coefficients",
    "sideband_closed_form",
    "steady_state",
    "__version__",
]
