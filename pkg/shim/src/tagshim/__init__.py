"""Standalone tagging server for the audiolime predictor protocol."""

from .adapter import external_model
from .heuristics import RULE_BASED_TAGS, onset_energy_share, rule_based_scores, spectral_flatness
from .server import MODES, PROTOCOL_VERSION, ShimConfig, serve

__version__ = "0.1.0"

__all__ = [
    "MODES",
    "PROTOCOL_VERSION",
    "RULE_BASED_TAGS",
    "ShimConfig",
    "external_model",
    "onset_energy_share",
    "rule_based_scores",
    "serve",
    "spectral_flatness",
]
