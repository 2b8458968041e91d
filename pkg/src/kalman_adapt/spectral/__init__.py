from kalman_adapt.spectral.basis import (
    SpectralBasis,
    SpectralRun,
    SpectralSignal,
    spectral_filter_run,
    spectral_observation,
)
