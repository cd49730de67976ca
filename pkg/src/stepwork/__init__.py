"""Quantum free-energy changes from step-wise pulling work distributions."""

from .errors import (
    DensityFloor,
    EnumerationCap,
    GridTooNarrow,
    MassLeak,
    NonPositiveAverage,
    StepworkError,
)
from .free_energy import (
    FreeEnergyProfile,
    approx_free_energy,
    exponential_average,
    free_energy_profile,
    ground_state_closed_form_center,
    ground_state_closed_form_spring,
    low_temp_estimate_center,
    reference_free_energy,
    spring_low_temp_limit,
)
from .pathways import (
    PathwayClass,
    PathwayDecomposition,
    TransitionRecord,
    decompose_free_energy,
    find_optimal_transitions,
    overlap_measure,
    pathway_work_distribution,
    residual_12a,
    residual_12b,
    residual_13,
    total_pathway_distribution,
)
from .protocol import (
    GridSpec,
    PullSchedule,
    build_center_schedule,
    build_spring_schedule,
    default_temperature_sweep,
)
from .spectra import (
    OscillatorSpectrum,
    ProtocolKind,
    analytic_free_energy_center,
    analytic_free_energy_spring,
    analytic_target_spring,
    center_eigenvalue,
    center_prob_density,
    delta_f_target_center,
    hermite_poly,
    spring_eigenvalue,
    spring_frequency,
    spring_prob_density,
    thermal_position_variance,
)
from .workdist import (
    GriddedDensity,
    WorkLedger,
    fluctuation_density,
    pushforward_step_density,
    run_work_recursion,
    step_work_map,
    work_moments,
    work_recursion_step,
)

__version__ = "0.1.0"
