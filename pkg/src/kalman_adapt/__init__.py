"""
kalman_adapt
------------

kalman_adapt treats adaptation of a frozen model as Bayesian state estimation. A low-dimensional adaptation state x perturbs frozen base parameters through a fixed embedding, θ = θ_0 + B x, and every observation (a labeled regression sample, a demonstration token, a spectral measurement) updates a Gaussian belief N(μ, P) over x with the Kalman recursion. No gradient step ever writes θ_0.

The library consists of:
- the filter core: Gaussian and precision beliefs, predict/update in moment and information form, a diagonal-covariance approximation
- analysis: observability Gramians, information accumulation, covariance contraction, boundedness, the MSE envelope and gain annealing
- optimization limits: batch posterior (RLS) oracle, the gradient-descent limit of the update, SGD and ridge baselines, regret
- adaptation of a toy token model through linearized token observations
- spectral coefficient estimation on cosine and graph-Laplacian bases
- experiment drivers and the `kalman-adapt` command line

# Example of use

## Filter a regression stream

```python
>>> import numpy as np
>>> from kalman_adapt import GaussianBelief, StateSpaceModel, RegressionDataset, run_filter, batch_posterior
>>> rng = np.random.default_rng(0)
>>> truth = np.array([1.0, -2.0])
>>> phi = rng.standard_normal((20, 2))
>>> data = RegressionDataset(phi, phi @ truth + 0.1 * rng.standard_normal(20), noise_var=0.01)
>>> prior = GaussianBelief.isotropic(2, 10.0)
>>> steps = run_filter(StateSpaceModel.random_walk(2), prior, data.observations)
>>> np.allclose(steps[-1].posterior.mean, batch_posterior(data, prior).mean)
True
>>> steps[-1].posterior.trace < 0.01 * prior.trace
True
```

## Adapt a frozen token model without gradients

```python
>>> from kalman_adapt import ToyTokenModel, AdaptationSubspace, generate_task, ekf_adapt
>>> model = ToyTokenModel(seed=0)
>>> subspace = AdaptationSubspace.random(model.base_params, 2, rng)
>>> task = generate_task(model, subspace, rng)
>>> result = ekf_adapt(model, subspace, GaussianBelief.isotropic(2, 1.0), task.demonstration,
...                    heldout=(task.heldout_contexts, task.heldout_targets))
>>> result.trace_series[-1] < result.trace_series[0]
True
```

## Run an experiment from the command line

```
$ kalman-adapt fewshot --seed 0 --seed 1 --out results/fewshot
$ kalman-adapt verify
```
"""

from kalman_adapt.core.belief import GaussianBelief, PrecisionBelief, from_information, to_information
from kalman_adapt.core.linear_filter import (
    FilterStep,
    Observation,
    StateSpaceModel,
    diagonal_update,
    predict,
    run_filter,
    run_information_filter,
    update,
)
from kalman_adapt.core.observability import (
    check_boundedness,
    check_contraction,
    check_information_accumulation,
    gain_annealing,
    gramian,
    mse_vs_trace,
)
from kalman_adapt.core.optimization_limits import (
    RegressionDataset,
    batch_posterior,
    gd_limit_step,
    regret_curve,
    ridge_baseline,
    sgd_baseline,
)
from kalman_adapt.adaptation import (
    AdaptationResult,
    AdaptationSubspace,
    AdaptationTask,
    TokenObservation,
    ToyTokenModel,
    ekf_adapt,
    generate_task,
    linearize_token,
    prompt_gramian,
)
from kalman_adapt.spectral import (
    SpectralBasis,
    SpectralSignal,
    spectral_filter_run,
    spectral_observation,
)
from kalman_adapt.experiments import (
    CalibrationReport,
    ExperimentResult,
    ExperimentTrace,
    compute_calibration,
    run_fewshot_regression,
    run_spectral_experiment,
    run_streaming_shift,
    run_toy_llm,
)
from kalman_adapt.exceptions import KalmanAdaptException
