"""Biaxial nematic toolkit: 12-constant Oseen-Frank energy, constrained minimization and
a 2-D simplified Ericksen-Leslie solver for orthonormal director pairs (n, m)."""

from .energy import (
    EnergyBreakdown,
    FrankConstants,
    blowup_form,
    ellipticity_margin,
    frank_density,
    frank_terms,
    modified_density,
    modified_total,
    total_energy,
    variational_gradient,
)
from .errors import BiaxialError
from .fields import (
    DirectorPairField,
    GridSpec,
    ScalarField,
    VectorField2D,
    constraint_residuals,
    retract,
    tangent_project,
)
from .hydro import (
    ConcentrationReport,
    EnergyBudget,
    FlowState,
    concentration_scan,
    energy_budget,
    flow_step,
    pressure_projection,
    y_quantities,
)
from .minimize import MinimizeConfig, MinimizeResult, el_residual, minimize, scaled_energy_scan

__version__ = "0.1.0"
