"""Multiple testing with compound e-values.

A compound e-value vector spends one shared expectation budget across all
null hypotheses instead of one unit per hypothesis; the e-BH procedure turns
any such vector into an FDR-controlling rejection set, and conversely every
FDR procedure arises that way. This package provides the value types and
calibrators, the procedures (e-BH, weighted p-BH, BY, derandomization,
p-merging), the empirical-Bayes and universal-inference constructions for
simultaneous t-tests, Monte Carlo validity estimators, and the simulation
benchmark, plus a command-line frontend (``compound-evalues``).
"""

from .core import (
    ApproxBudget,
    Calibrator,
    EVector,
    PVector,
    apply_weights,
    calibrate_e_to_p,
    calibrate_p_to_e,
    convex_combine,
    epsilon_to_delta,
)
from .errors import ConfigError, DataError, NumericalError
from .procedures import (
    MergeSpec,
    ProcedureResult,
    by_procedure,
    derandomize,
    ebh,
    implied_compound_evalues,
    merge_pvalues,
    pbh,
    star_approx_fdr_bound,
    tighten_compound,
    weighted_pbh,
)
from .mixtures import (
    CuiSolver,
    DiscreteMixture,
    Localization,
    SummaryStats,
    bayes_factor,
    build_localization,
    chisq_scale_cdf,
    chisq_scale_density,
    cui_evalue,
    default_variance_grid,
    lui_evalue,
    normal_loglik,
    npmle_certificate,
    npmle_fit,
    odp_evalues,
    odp_general_utility,
    ui_evalue,
)
from .asymptotics import (
    BudgetEstimate,
    clt_evalue,
    estimate_approx_budget,
    estimate_compound_budget,
    mixture_clt_evalue,
    sum_of_squares_compound,
)
from .simbench import (
    METHODS,
    MethodResult,
    Scenario,
    TestingProblem,
    default_scenarios,
    estimate_fdr_power,
    generate_scenario_data,
    run_method,
    run_study,
)

__version__ = "0.1.0"
