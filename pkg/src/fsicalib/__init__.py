"""Calibration of a rotating-cylinder fluid-structure device.

The package couples a quadratic finite element solver for the coupled
solid/fluid angular velocity equation with two inverters for the material
parameters (c1, rho_s, mu_f): a CMA-ES search over a PDE misfit and a
dense network trained on synthetic corpora.
"""

from .banded import BandedMatrix, BandedSPDSolver
from .cmaes import (
    CmaEs,
    CmaesConfig,
    CmaesResult,
    MisfitProblem,
    cmaes_minimize,
    misfit_loss,
    recovery_report,
)
from .dataset import (
    DEFAULT_RANGES,
    Dataset,
    DatasetMeta,
    NormalizationStats,
    ProbeGrid,
    fit_normalization,
    generate_dataset,
    load_dataset,
    make_dataset,
    normalize_inputs,
    normalize_labels,
    denormalize_inputs,
    denormalize_labels,
    observe,
    sample_parameters,
    save_dataset,
    split,
    uniform_probe_grid,
)
from .mlp import (
    InverterModel,
    TrainConfig,
    TrainReport,
    fit_inverter,
    forward,
    init_params,
    load_model,
    loss_and_gradient,
    mean_relative_errors,
    save_model,
    train,
)
from .solver import (
    CylinderSolver,
    Interpolator,
    Mesh,
    PhysicalParams,
    SolutionState,
    SolverConfig,
    build_mesh,
    evaluate_at,
    simulate,
    steady_state_profile,
)
from .studies import (
    CANONICAL_TRUTH,
    StudyResult,
    StudySpec,
    run_architecture_study,
    run_cmaes_baseline,
    run_probes_study,
    run_samples_study,
    run_study,
    write_study_outputs,
)

__version__ = "0.1.0"
