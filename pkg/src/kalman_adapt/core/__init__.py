from kalman_adapt.core.belief import (
    GaussianBelief,
    PrecisionBelief,
    from_information,
    symmetrize_and_floor,
    to_information,
)
from kalman_adapt.core.linear_filter import (
    FilterStep,
    Observation,
    StateSpaceModel,
    diagonal_step,
    diagonal_update,
    predict,
    predict_information,
    project_diagonal,
    run_filter,
    run_information_filter,
    update,
    update_information,
)
from kalman_adapt.core.observability import (
    BoundednessReport,
    ContractionReport,
    GainAnnealingReport,
    GramianReport,
    MSEReport,
    check_boundedness,
    check_contraction,
    check_information_accumulation,
    gain_annealing,
    gramian,
    mse_vs_trace,
    probe_boundedness,
    window_gramians,
)
from kalman_adapt.core.optimization_limits import (
    RegressionDataset,
    RegretCurve,
    batch_posterior,
    gd_limit_step,
    growth_exponent,
    regret_curve,
    ridge_baseline,
    sgd_baseline,
)
