"""Interpretable decomposition: separated sources x time segments.

A clip is split into C estimated sources (built-in
harmonic/percussive separation or a directory of external stems) and
each source is gated into tau time segments, giving d' = C * tau
listenable components. `compose` maps a binary mask over those
components back to audio by plain summation.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.ndimage import median_filter

from .audio import (
    DEFAULT_HOP,
    DEFAULT_WINDOW,
    AudioClip,
    Spectrogram,
    istft,
    load_wav,
    resample,
    stft,
)
from .errors import InvalidInputError, WavFormatError

HPSS_KERNEL = 17
HPSS_MASK_EXPONENT = 2.0


@dataclass(frozen=True, eq=False)
class Component:
    """One source restricted to one time segment, zero elsewhere."""

    source_label: str
    segment_index: int
    audio: AudioClip


@dataclass(frozen=True, eq=False)
class ComponentSet:
    """All d' = C * tau components of a clip, source-major order."""

    components: tuple[Component, ...]
    num_sources: int
    num_segments: int
    original: AudioClip

    def __post_init__(self) -> None:
        if len(self.components) != self.num_sources * self.num_segments:
            raise InvalidInputError(
                f"expected {self.num_sources * self.num_segments} components, "
                f"got {len(self.components)}"
            )
        object.__setattr__(self, "components", tuple(self.components))

    def __len__(self) -> int:
        return len(self.components)

    @property
    def labels(self) -> list[str]:
        """Human-readable name per component, e.g. "vocals[2/4]"."""
        return [
            f"{c.source_label}[{c.segment_index + 1}/{self.num_segments}]"
            for c in self.components
        ]


@dataclass(frozen=True)
class SeparatorSpec:
    """Configuration for the source-separation stage."""

    kind: str = "hpss_builtin"
    window_size: int = DEFAULT_WINDOW
    hop_size: int = DEFAULT_HOP
    harmonic_kernel: int = HPSS_KERNEL
    percussive_kernel: int = HPSS_KERNEL
    mask_exponent: float = HPSS_MASK_EXPONENT
    stems_directory: str | None = None
    strict: bool = False

    def __post_init__(self) -> None:
        if self.kind not in ("hpss_builtin", "stems_directory"):
            raise InvalidInputError(f"unknown separator kind {self.kind!r}")
        for name in ("harmonic_kernel", "percussive_kernel"):
            k = getattr(self, name)
            if k < 3 or k % 2 == 0:
                raise InvalidInputError(f"{name} must be odd and >= 3, got {k}")
        if self.kind == "stems_directory" and not self.stems_directory:
            raise InvalidInputError("stems_directory separator needs a directory path")


def separate_hpss(clip: AudioClip, spec: SeparatorSpec | None = None) -> list[tuple[str, AudioClip]]:
    """Split a clip into (harmonic, percussive) estimates via median-filter masking.

    Median filtering the magnitude STFT across time enhances sustained
    (harmonic) content; filtering across frequency enhances transient
    (percussive) content. Soft masks from the enhanced magnitudes are
    applied to the complex STFT and inverted, so the two estimates sum
    to the clip's STFT round trip.
    """
    spec = spec or SeparatorSpec()
    sg = stft(clip, spec.window_size, spec.hop_size)
    mag = sg.magnitude()
    harm = median_filter(mag, size=(1, spec.harmonic_kernel), mode="nearest")
    perc = median_filter(mag, size=(spec.percussive_kernel, 1), mode="nearest")
    p = spec.mask_exponent
    harm_p = np.power(harm, p)
    perc_p = np.power(perc, p)
    total = harm_p + perc_p
    zero = total == 0.0
    with np.errstate(invalid="ignore", divide="ignore"):
        mask_h = np.where(zero, 0.5, harm_p / np.where(zero, 1.0, total))
    mask_p = 1.0 - mask_h
    out = []
    for label, mask in (("harmonic", mask_h), ("percussive", mask_p)):
        masked = Spectrogram(sg.complex_bins * mask, sg.window_size, sg.hop_size, sg.sample_rate)
        out.append((label, istft(masked, len(clip))))
    return out


def load_stems(
    directory: str | Path,
    expected_length: int,
    expected_rate: int,
    strict: bool = False,
) -> list[tuple[str, AudioClip]]:
    """Load `<dir>/<label>.wav` stems, normalized to a common rate and length.

    Labels come from file stems and are returned in lexicographic order.
    Stems are resampled to ``expected_rate`` (an error under ``strict``)
    and padded or truncated to ``expected_length``; a mismatch of more
    than 1% of the expected length emits a warning.
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise InvalidInputError(f"{directory}: not a directory")
    paths = sorted(directory.glob("*.wav"), key=lambda p: p.stem)
    if len(paths) < 2:
        raise WavFormatError(f"{directory}: need at least 2 sources, found {len(paths)}")
    stems = []
    for path in paths:
        clip = load_wav(path)
        if clip.sample_rate != expected_rate:
            if strict:
                raise WavFormatError(
                    f"{path}: sample rate {clip.sample_rate} != expected {expected_rate} "
                    "and strict mode forbids resampling"
                )
            clip = resample(clip, expected_rate)
        n = len(clip)
        if n != expected_length:
            if abs(n - expected_length) > 0.01 * expected_length:
                warnings.warn(
                    f"{path}: length {n} differs from expected {expected_length} "
                    f"by more than 1%; padding/truncating",
                    stacklevel=2,
                )
            samples = clip.samples
            if n > expected_length:
                samples = samples[:expected_length]
            else:
                samples = np.pad(samples, (0, expected_length - n))
            clip = AudioClip(samples, expected_rate)
        stems.append((path.stem, clip))
    return stems


def segment_boundaries(length: int, tau: int) -> list[int]:
    """tau+1 boundary positions round(i*length/tau); remainder goes to the last segment."""
    bounds = []
    for i in range(tau + 1):
        q, r = divmod(i * length, tau)
        # round-half-even without float error: bump on remainder > 1/2,
        # or == 1/2 when the floor is odd
        bounds.append(q + (1 if (2 * r > tau or (2 * r == tau and q % 2 == 1)) else 0))
    bounds[0], bounds[-1] = 0, length
    return bounds


def build_component_set(
    clip: AudioClip,
    sources: list[tuple[str, AudioClip]],
    tau: int = 1,
) -> ComponentSet:
    """Gate each source into tau hard-cut time segments.

    Output order is source-major, segment-minor, following the order of
    ``sources``. Within each source the segments partition the stem
    exactly, so summing a source's components reproduces the stem.
    """
    if tau < 1:
        raise InvalidInputError(f"tau must be >= 1, got {tau}")
    if tau > len(clip):
        raise InvalidInputError(f"tau {tau} exceeds clip length {len(clip)} samples")
    if not sources:
        raise InvalidInputError("need at least one source")
    for label, source in sources:
        if len(source) != len(clip):
            raise InvalidInputError(
                f"source {label!r} length {len(source)} != clip length {len(clip)}"
            )
        if source.sample_rate != clip.sample_rate:
            raise InvalidInputError(
                f"source {label!r} rate {source.sample_rate} != clip rate {clip.sample_rate}"
            )
    bounds = segment_boundaries(len(clip), tau)
    components = []
    for label, source in sources:
        for seg in range(tau):
            gated = np.zeros(len(clip), dtype=np.float32)
            gated[bounds[seg] : bounds[seg + 1]] = source.samples[bounds[seg] : bounds[seg + 1]]
            components.append(Component(label, seg, AudioClip(gated, clip.sample_rate)))
    return ComponentSet(tuple(components), len(sources), tau, clip)


def _mask_array(mask, d: int) -> np.ndarray:
    arr = np.asarray(mask)
    if arr.shape != (d,):
        raise InvalidInputError(f"mask length {arr.shape} != component count {d}")
    if not np.isin(arr, (0, 1)).all():
        raise InvalidInputError("mask must be binary (0/1 entries only)")
    return arr.astype(np.float64)


def compose(component_set: ComponentSet, mask) -> AudioClip:
    """Mix the components selected by a binary mask; no normalization.

    Summation runs in component-index order in float64 and is cast to
    float32 once. Disjoint masks compose additively bit-for-bit when at
    every sample all contributions come from one of the two masks (for
    example masks covering disjoint time segments) or from exactly one
    component each, which holds everywhere for the two-source builtin
    separation. Other disjoint unions agree to float32 rounding of the
    partial sums.
    """
    arr = _mask_array(mask, len(component_set))
    total = np.zeros(len(component_set.original), dtype=np.float64)
    for bit, comp in zip(arr, component_set.components):
        if bit:
            total += comp.audio.samples.astype(np.float64)
    return AudioClip(total.astype(np.float32), component_set.original.sample_rate)


def render_batch(component_set: ComponentSet, masks: np.ndarray) -> np.ndarray:
    """compose() for a whole mask matrix at once, returning float32 rows.

    Bit-identical to calling compose per row: each row is accumulated in
    float64 in component-index order (masked matmul keeps that order)
    and cast to float32 once.
    """
    masks = np.asarray(masks)
    if masks.ndim != 2 or masks.shape[1] != len(component_set):
        raise InvalidInputError(
            f"mask matrix shape {masks.shape} incompatible with "
            f"{len(component_set)} components"
        )
    if not np.isin(masks, (0, 1)).all():
        raise InvalidInputError("mask matrix must be binary (0/1 entries only)")
    stack = [c.audio.samples.astype(np.float64) for c in component_set.components]
    length = len(component_set.original)
    out = np.empty((masks.shape[0], length), dtype=np.float32)
    for i, row in enumerate(np.asarray(masks, dtype=bool)):
        total = np.zeros(length, dtype=np.float64)
        for j in np.flatnonzero(row):
            total += stack[j]
        out[i] = total.astype(np.float32)
    return out
