"""Study orchestration: phantoms, noise, configuration, persistence, CLI."""

from .config import ConfigError, SignalSpec, StudyConfig, load_config
from .phantoms import (PhantomFormatError, generate_sparse_phantom, load_phantom, make_signal,
                       save_phantom, wavelet_sparsity)
from .study import (RankingResult, ReconStudyResult, prepare_study, run_ranking_study,
                    run_recon_study, simulate_measurement, stream_rng)

__all__ = [
    "ConfigError",
    "PhantomFormatError",
    "RankingResult",
    "ReconStudyResult",
    "SignalSpec",
    "StudyConfig",
    "generate_sparse_phantom",
    "load_config",
    "load_phantom",
    "make_signal",
    "prepare_study",
    "run_ranking_study",
    "run_recon_study",
    "save_phantom",
    "simulate_measurement",
    "stream_rng",
    "wavelet_sparsity",
]
