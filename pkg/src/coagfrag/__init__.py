"""Exact simulation and verification tools for merge-split jump processes."""

from .errors import (
    CannotSampleError,
    CoagFragError,
    ConfigurationError,
    EventIndexError,
    InvalidMassError,
    NumericError,
    ParameterError,
    TruncationError,
)
from .state import MassSequence, coalesce, fragment, norm, reorder
from .kernels import (
    CoagulationKernel,
    FragmentationKernel,
    coagulation_kernel,
    custom_coagulation_kernel,
    custom_fragmentation_kernel,
    eval_coag,
    eval_frag,
    fragmentation_kernel,
    sup_box,
)
from .dislocation import (
    DislocationAtom,
    DislocationMeasure,
    c_beta_lambda,
    preset_measure,
    project_atom,
    restrict,
    sample_atom,
    truncation_tails,
)
from .metrics import (
    InequalityCheck,
    InequalityReport,
    check_inequalities,
    dist_d,
    dist_delta,
    distance_constant,
    equality_showcase_case,
    random_case,
)
from .simulate import (
    EventRecord,
    SimConfig,
    Trajectory,
    count_growth_bound,
    coupling_rate_constant,
    generator_apply,
    martingale_residual,
    moment_growth_bound,
    run_replicas,
    simulate,
    simulate_coupled,
    step,
    total_rates,
)
from .oracle import (
    ComparisonReport,
    MasterSolution,
    StateGraph,
    compare_empirical,
    enumerate_states,
    expectation,
    master_equation_solve,
    observable_marginal,
)

__version__ = "0.1.0"
