"""Desk-scale laboratory for partial-regularity bounds of hyperdissipative
Navier-Stokes flows with dissipation exponent alpha in (1, 5/4).

Subpackages, by concern:

- bounds: closed-form dimension bounds L, J, the five-margin feasibility
  system, and the gamma optimizer.
- extension: the degenerate fourth-order extension profile, its energy
  constant c_alpha, and weighted extension energies.
- fields / solver: periodic pseudo-spectral state and the fractional
  Navier-Stokes time stepper with exact integrating factor.
- quantities: scale-invariant local quantities on space-time cylinders
  and the lemma-ratio diagnostics.
- boxdim: anisotropic (parabolic) box-counting dimension estimation.
- config / snapshots / cli / figures: run configuration, the snapshot
  container format, the command-line interface, and figure rendering.
"""

from .bounds import (
    AlphaParams,
    BoundCurve,
    ConstraintMargins,
    ExponentTriplet,
    GammaWitness,
    IterParams,
    OptimizeResult,
    bound_curve,
    constraint_margins,
    default_alpha_grid,
    eta_from,
    eval_J,
    eval_J_expanded,
    eval_L,
    exponent_triplet,
    iteration_bound,
    nzeta_star,
    optimize_gamma,
    zeta_admissibility_bound,
)

__all__ = [
    "AlphaParams",
    "BoundCurve",
    "ConstraintMargins",
    "ExponentTriplet",
    "GammaWitness",
    "IterParams",
    "OptimizeResult",
    "bound_curve",
    "constraint_margins",
    "default_alpha_grid",
    "eta_from",
    "eval_J",
    "eval_J_expanded",
    "eval_L",
    "exponent_triplet",
    "iteration_bound",
    "nzeta_star",
    "optimize_gamma",
    "zeta_admissibility_bound",
]

__version__ = "0.1.0"
