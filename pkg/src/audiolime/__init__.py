"""audiolime: listenable explanations for black-box audio tagger predictions.

A clip is decomposed into components that are themselves audio (separated
sources gated into time segments, or spectrogram grid regions for the
baseline), a seeded set of binary masks over those components is rendered
and scored by the black box, and an L2-regularized linear surrogate fit
to the scores ranks the components. The top-k positive components are
the explanation, and their mixture is playable audio.
"""

from .audio import AudioClip, Spectrogram, istft, load_wav, resample, save_wav, stft
from .decomposition import (
    Component,
    ComponentSet,
    SeparatorSpec,
    build_component_set,
    compose,
    load_stems,
    render_batch,
    segment_boundaries,
    separate_hpss,
)
from .engine import (
    Explanation,
    PerturbationSet,
    SurrogateModel,
    build_decomposition,
    derive_seed,
    explain,
    explain_clip,
    fit_ridge,
    positive_components,
    reference_clip,
    sample_masks,
    score_perturbations,
)
from .errors import (
    AmbiguousMaskError,
    AudioLimeError,
    InvalidInputError,
    PredictorError,
    SingularSystemError,
    WavFormatError,
)
from .evaluation import EvalConfig, FidelityReport, FidelityTrial, export_report, run_fidelity
from .predictor import (
    PredictorSpec,
    TagScores,
    open_predictor,
    parse_predictor_flag,
    predict,
    toy_energy_tagger,
    toy_linear_tagger,
)
from .slime import GridSpec, build_grid_component_set

__version__ = "0.1.0"

__all__ = [
    "AmbiguousMaskError",
    "AudioClip",
    "AudioLimeError",
    "Component",
    "ComponentSet",
    "EvalConfig",
    "Explanation",
    "FidelityReport",
    "FidelityTrial",
    "GridSpec",
    "InvalidInputError",
    "PerturbationSet",
    "PredictorError",
    "PredictorSpec",
    "SeparatorSpec",
    "SingularSystemError",
    "Spectrogram",
    "SurrogateModel",
    "TagScores",
    "WavFormatError",
    "build_component_set",
    "build_decomposition",
    "build_grid_component_set",
    "compose",
    "derive_seed",
    "explain",
    "explain_clip",
    "export_report",
    "fit_ridge",
    "istft",
    "load_stems",
    "load_wav",
    "open_predictor",
    "parse_predictor_flag",
    "positive_components",
    "predict",
    "reference_clip",
    "render_batch",
    "resample",
    "run_fidelity",
    "sample_masks",
    "save_wav",
    "score_perturbations",
    "segment_boundaries",
    "separate_hpss",
    "stft",
    "toy_energy_tagger",
    "toy_linear_tagger",
]
