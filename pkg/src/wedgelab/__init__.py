"""Numerical laboratory for a self-similar wedge reduction of 2D buoyant flow.

The package provides grids and adapted derivatives on the wedge strip,
closed-form blow-up backgrounds, the face ODE system, the stream-function
elliptic solver, weighted energies and bootstrap envelopes, a remainder
simulator, and a verification suite that ties the wedge system back to the
Cartesian formulation it descends from.
"""

from .background import (BackgroundBundle, SeedParams, blowup_time,
                         build_bundle, closed_form_VU, coefficient_scan,
                         eval_background, localization_check)
from .elliptic import EllipticOperator, apply_operator, reconstruct_vg
from .energy import (EnvelopeParams, bernoulli_envelope, bootstrap_check,
                     energy_Ek, initial_energy, transfer_detector)
from .errors import (ConfigError, NumericError, VerificationError,
                     WedgeError)
from .grid import ScalarField, WedgeGrid, make_field, xi_lattice
from .ridge import (RidgeSpec, clm_map_check, closed_form_ridge,
                    fit_blowup_time, integrate_ridge)
from .simulate import RemainderState, SimConfig, eval_rhs, make_state, run
from .verify import (compatibility_evolution, pressure_recovery_check,
                     reduction_suite, stream_function_check)

__version__ = "0.1.0"

__all__ = [
    "BackgroundBundle", "SeedParams", "blowup_time", "build_bundle",
    "closed_form_VU", "coefficient_scan", "eval_background",
    "localization_check",
    "EllipticOperator", "apply_operator", "reconstruct_vg",
    "EnvelopeParams", "bernoulli_envelope", "bootstrap_check", "energy_Ek",
    "initial_energy", "transfer_detector",
    "ConfigError", "NumericError", "VerificationError", "WedgeError",
    "ScalarField", "WedgeGrid", "make_field", "xi_lattice",
    "RidgeSpec", "clm_map_check", "closed_form_ridge", "fit_blowup_time",
    "integrate_ridge",
    "RemainderState", "SimConfig", "eval_rhs", "make_state", "run",
    "compatibility_evolution", "pressure_recovery_check", "reduction_suite",
    "stream_function_check",
    "__version__",
]
