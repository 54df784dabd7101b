"""Mono audio container, WAV I/O, spectral transforms, and resampling.

All functions are pure and all containers are immutable after
construction, so everything here is safe to use from concurrent code.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.io import wavfile
from scipy.signal import get_window

from .errors import InvalidInputError, WavFormatError

DEFAULT_WINDOW = 2048
DEFAULT_HOP = 512

# Denominator floor for the overlap-add normalization; positions with less
# window coverage than this are left unscaled (they only occur in padding).
_WINDOW_SUM_FLOOR = 1e-10


@dataclass(frozen=True, eq=False)
class AudioClip:
    """Immutable mono sample buffer with its sample rate."""

    samples: np.ndarray
    sample_rate: int

    def __post_init__(self) -> None:
        arr = np.asarray(self.samples, dtype=np.float32)
        if arr.ndim != 1:
            raise InvalidInputError(f"samples must be mono (1-D), got shape {arr.shape}")
        if arr.size < 1:
            raise InvalidInputError("samples must contain at least one value")
        if not np.isfinite(arr).all():
            raise InvalidInputError("samples contain NaN or Inf")
        if int(self.sample_rate) < 1:
            raise InvalidInputError(f"sample_rate must be >= 1, got {self.sample_rate}")
        arr = arr.copy() if arr is self.samples or arr.flags.writeable else arr
        arr.setflags(write=False)
        object.__setattr__(self, "samples", arr)
        object.__setattr__(self, "sample_rate", int(self.sample_rate))

    def __len__(self) -> int:
        return int(self.samples.size)

    @property
    def duration(self) -> float:
        """Clip length in seconds."""
        return len(self) / self.sample_rate

    def rms(self) -> float:
        return float(np.sqrt(np.mean(np.square(self.samples, dtype=np.float64))))


@dataclass(frozen=True, eq=False)
class Spectrogram:
    """Complex STFT coefficients, frequency bins x frames."""

    complex_bins: np.ndarray
    window_size: int
    hop_size: int
    sample_rate: int

    def __post_init__(self) -> None:
        bins = np.asarray(self.complex_bins, dtype=np.complex128)
        if bins.ndim != 2:
            raise InvalidInputError(f"complex_bins must be 2-D, got shape {bins.shape}")
        if bins.shape[0] != self.window_size // 2 + 1:
            raise InvalidInputError(
                f"expected {self.window_size // 2 + 1} frequency bins for "
                f"window_size {self.window_size}, got {bins.shape[0]}"
            )
        if self.hop_size > self.window_size:
            raise InvalidInputError(
                f"hop_size {self.hop_size} exceeds window_size {self.window_size}"
            )
        bins = bins.copy() if bins is self.complex_bins or bins.flags.writeable else bins
        bins.setflags(write=False)
        object.__setattr__(self, "complex_bins", bins)

    @property
    def num_frames(self) -> int:
        return int(self.complex_bins.shape[1])

    @property
    def num_bins(self) -> int:
        return int(self.complex_bins.shape[0])

    def magnitude(self) -> np.ndarray:
        return np.abs(self.complex_bins)


def _decode_pcm(data: np.ndarray, path: str) -> np.ndarray:
    """Scale integer/float WAV payloads to float32 in [-1, 1]."""
    if data.dtype == np.float32:
        return data
    if data.dtype == np.int16:
        return (data / 32768.0).astype(np.float32)
    if data.dtype == np.int32:
        # scipy left-justifies 24-bit payloads into int32, so one divisor
        # covers both PCM-24 and PCM-32.
        return (data / 2147483648.0).astype(np.float32)
    raise WavFormatError(
        f"{path}: unsupported encoding {data.dtype} "
        "(expected PCM-16, PCM-24, PCM-32, or float-32)"
    )


def load_wav(path: str | Path, target_rate: int | None = None) -> AudioClip:
    """Read a RIFF/WAVE file as a mono AudioClip.

    Stereo input is downmixed by the per-sample arithmetic mean. If
    ``target_rate`` is given and differs from the file's rate, the clip is
    resampled (linear interpolation).
    """
    path = os.fspath(path)
    try:
        rate, data = wavfile.read(path)
    except FileNotFoundError as exc:
        raise WavFormatError(f"{path}: unreadable file: {exc}") from exc
    except (OSError, ValueError) as exc:
        raise WavFormatError(f"{path}: not a readable WAV file: {exc}") from exc
    if data.size == 0:
        raise WavFormatError(f"{path}: zero-length audio")
    if data.ndim == 2:
        if data.shape[1] > 2:
            raise WavFormatError(
                f"{path}: unsupported channel count {data.shape[1]} (expected 1 or 2)"
            )
        samples = _decode_pcm(data, path)
        samples = samples.mean(axis=1, dtype=np.float64).astype(np.float32)
    elif data.ndim == 1:
        samples = _decode_pcm(data, path)
    else:
        raise WavFormatError(f"{path}: unsupported sample layout with {data.ndim} axes")
    clip = AudioClip(samples, int(rate))
    if target_rate is not None and int(target_rate) != clip.sample_rate:
        clip = resample(clip, int(target_rate))
    return clip


def save_wav(clip: AudioClip, path: str | Path) -> None:
    """Write ``clip`` as a float-32 WAV; load_wav round-trips it bit-exactly."""
    arr = np.asarray(clip.samples, dtype=np.float32)
    if not np.isfinite(arr).all():
        raise WavFormatError(f"{os.fspath(path)}: refusing to write non-finite samples")
    try:
        wavfile.write(os.fspath(path), clip.sample_rate, arr)
    except OSError as exc:
        raise WavFormatError(f"{os.fspath(path)}: unwritable path: {exc}") from exc


def _hann(window_size: int) -> np.ndarray:
    # Periodic Hann; satisfies constant overlap-add for hop <= window/2.
    return get_window("hann", window_size, fftbins=True).astype(np.float64)


def stft(clip: AudioClip, window_size: int = DEFAULT_WINDOW, hop_size: int = DEFAULT_HOP) -> Spectrogram:
    """Hann-windowed complex STFT with centered (reflection-padded) frames.

    The signal is reflection-padded by window_size/2 on both ends, then
    framed every ``hop_size`` samples, giving floor(len/hop) + 1 frames.
    """
    problems = []
    if window_size < 2 or window_size & (window_size - 1):
        problems.append(f"window_size {window_size} is not a power of two")
    if hop_size < 1 or (window_size % hop_size if hop_size else 1):
        problems.append(f"hop_size {hop_size} does not divide window_size {window_size}")
    if len(clip) < window_size:
        problems.append(f"clip length {len(clip)} is shorter than window_size {window_size}")
    if problems:
        raise InvalidInputError("; ".join(problems))

    pad = window_size // 2
    x = np.pad(clip.samples.astype(np.float64), pad, mode="reflect")
    n_frames = (x.size - window_size) // hop_size + 1
    frames = np.lib.stride_tricks.sliding_window_view(x, window_size)[::hop_size][:n_frames]
    spec = np.fft.rfft(frames * _hann(window_size), axis=1).T
    return Spectrogram(spec, window_size, hop_size, clip.sample_rate)


def istft(spec: Spectrogram, length: int) -> AudioClip:
    """Invert an STFT by windowed overlap-add with window-sum normalization.

    Works on masked spectrograms as well; for an unmodified stft output the
    round trip reproduces the input within 1e-4 maximum absolute error.
    """
    if length < 1:
        raise InvalidInputError(f"length must be >= 1, got {length}")
    window_size, hop_size = spec.window_size, spec.hop_size
    win = _hann(window_size)
    frames = np.fft.irfft(spec.complex_bins.T, n=window_size, axis=1) * win
    n_frames = frames.shape[0]
    padded_len = window_size + (n_frames - 1) * hop_size
    y = np.zeros(padded_len, dtype=np.float64)
    wsum = np.zeros(padded_len, dtype=np.float64)
    win_sq = win * win
    for m in range(n_frames):
        start = m * hop_size
        y[start : start + window_size] += frames[m]
        wsum[start : start + window_size] += win_sq
    covered = wsum > _WINDOW_SUM_FLOOR
    y[covered] /= wsum[covered]
    pad = window_size // 2
    out = y[pad : pad + length]
    if out.size < length:
        out = np.pad(out, (0, length - out.size))
    return AudioClip(out.astype(np.float32), spec.sample_rate)


def resample(clip: AudioClip, target_rate: int) -> AudioClip:
    """Linear-interpolation resampling (utility grade, not band-limited).

    Output length is round(len * target_rate / source_rate). Quality is
    sufficient for bridging rate mismatches with external predictors; it is
    not meant for high-fidelity rate conversion.
    """
    target_rate = int(target_rate)
    if target_rate < 1:
        raise InvalidInputError(f"target_rate must be >= 1, got {target_rate}")
    if target_rate == clip.sample_rate:
        return clip
    n_in = len(clip)
    n_out = max(1, round(n_in * target_rate / clip.sample_rate))
    positions = np.arange(n_out, dtype=np.float64) * (clip.sample_rate / target_rate)
    out = np.interp(positions, np.arange(n_in, dtype=np.float64), clip.samples.astype(np.float64))
    return AudioClip(out.astype(np.float32), target_rate)
