"""Deterministic rule-based tagger over {tonal, percussive, quiet}.

Frame-wise spectral flatness separates pitched content from broadband
content, the share of energy arriving in sudden-attack frames separates
transients from sustained sound, and overall RMS drives the quiet
score. Everything is a pure function of the samples, so repeated
requests for the same audio always get byte-identical scores.
"""

import numpy as np

RULE_BASED_TAGS = ("tonal", "percussive", "quiet")

_QUIET_SCALE = 0.01
_FRAME = 512
# a frame is an attack when its energy jumps by at least this factor
_ONSET_JUMP = 2.0
_EPS = 1e-30


def _frame_energies(samples: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    usable = len(samples) - len(samples) % _FRAME
    frames = samples[:usable].reshape(-1, _FRAME)
    return frames, np.sum(np.square(frames), axis=1)


def spectral_flatness(samples: np.ndarray) -> float:
    """Energy-weighted mean of per-frame flatness, in [0, 1].

    Flatness of one frame is the geometric over arithmetic mean of its
    power spectrum: near 0 for pitched frames, near 1 for impulses and
    noise. Weighting by frame energy makes a click train read as flat
    even though its long-term spectrum is a comb. An all-zero signal is
    defined as perfectly flat.
    """
    frames, energy = _frame_energies(samples)
    total = float(energy.sum())
    if len(frames) == 0 or total <= _EPS:
        return 1.0
    power = np.abs(np.fft.rfft(frames, axis=1)) ** 2
    log_mean = np.mean(np.log(power + _EPS), axis=1)
    flat = np.exp(log_mean) / (power.mean(axis=1) + _EPS)
    return float(min(1.0, np.dot(flat, energy) / total))


def onset_energy_share(samples: np.ndarray) -> float:
    """Fraction of total energy held by frames whose energy jumps >= 2x.

    Click trains concentrate nearly all energy in attack frames; steady
    tones and noise have none.
    """
    _, energy = _frame_energies(samples)
    total = float(energy.sum())
    if len(energy) < 2 or total <= _EPS:
        return 0.0
    attacks = energy[1:] >= _ONSET_JUMP * (energy[:-1] + _EPS)
    return float(energy[1:][attacks].sum() / total)


def rule_based_scores(samples: np.ndarray, sample_rate: int) -> dict:
    """Score one clip; returns {tag: score} with scores summing to 1."""
    samples = np.asarray(samples, dtype=np.float64)
    rms = float(np.sqrt(np.mean(np.square(samples)))) if len(samples) else 0.0
    quiet = float(np.exp(-rms / _QUIET_SCALE))
    # pitched content is spectrally peaked and sustained; everything
    # else (impulses, noise) counts toward percussive
    share_tonal = (1.0 - spectral_flatness(samples)) * (
        1.0 - onset_energy_share(samples)
    )
    rest = 1.0 - quiet
    return {
        "tonal": rest * share_tonal,
        "percussive": rest * (1.0 - share_tonal),
        "quiet": quiet,
    }
