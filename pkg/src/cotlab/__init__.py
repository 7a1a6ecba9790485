"""In-context linear regression with a linear self-attention layer:
training dynamics, test-time chain-of-thought scaling, task hardness, and
simplex-constrained task selection, with seeded CSV experiment runners."""

from .tasks import (
    CovarianceSpec,
    DomainError,
    GammaMatrix,
    MomentEstimate,
    TaskFamilySpec,
    TaskMixture,
    fourth_moment_closed,
    fourth_moment_closed_mixture,
    fourth_moment_mc,
    gamma_multi,
    gamma_single,
    haar_orthogonal,
    hardness,
    make_covariance,
    power_law_spectrum,
)
from .prompts import (
    Embedding,
    PromptBatch,
    build_cot_embedding,
    build_train_embedding,
    sample_prompt,
)
from .lsa import LsaParams, extract_weight, lsa_forward, optimal_params, structured_params
from .training import (
    TrainConfig,
    TrainTrace,
    check_support_invariance,
    empirical_loss,
    population_grad,
    population_loss,
    train_empirical,
    train_population,
)
from .cot import (
    CotResult,
    closed_form_k_step,
    cot_rollout,
    cot_step,
    mc_test_error,
    mc_test_error_curve,
)
from .bounds import (
    BoundReport,
    bound_corollary,
    bound_cot_leading,
    bound_direct,
    bound_multitask,
)
from .selection import (
    SelectionProblem,
    SelectionResult,
    build_quadratic,
    eval_nonconvex_objective,
    hard_task_mass,
    simplex_project,
    solve_selection,
)
from .experiments import (
    ExperimentConfig,
    RunRecord,
    run_overthink,
    run_scaling,
    run_select,
    run_tradeoff,
    run_verify,
    write_records,
)

__version__ = "0.1.0"
