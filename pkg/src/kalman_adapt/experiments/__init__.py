from kalman_adapt.experiments.trace import (
    RECORD_FIELDS,
    ExperimentResult,
    ExperimentTrace,
    StepRecord,
    half_life,
    map_seeds,
    seed_streams,
)
from kalman_adapt.experiments.calibration import CalibrationReport, PredictiveEvents, compute_calibration
from kalman_adapt.experiments.fewshot import FeatureKind, FewShotConfig, run_fewshot_regression
from kalman_adapt.experiments.shift import ShiftConfig, run_streaming_shift
from kalman_adapt.experiments.toy_llm import ToyLLMConfig, run_toy_llm
from kalman_adapt.experiments.spectral_run import BasisKind, SpectralConfig, run_spectral, run_spectral_experiment
