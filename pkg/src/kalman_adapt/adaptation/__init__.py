from kalman_adapt.adaptation.toy_model import ToyTokenModel, context_target_pairs
from kalman_adapt.adaptation.subspace import (
    AdaptationResult,
    AdaptationSubspace,
    AdaptationTask,
    TokenObservation,
    ekf_adapt,
    generate_task,
    linearize_token,
    prompt_gramian,
)
