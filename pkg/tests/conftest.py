"""Shared synthesis helpers for the test suite.

Clips are built from seeded generators so every test is reproducible;
the dominance corpus and voice clips are the same generators the
acceptance suite uses.
"""

from __future__ import annotations

import numpy as np
import pytest

from audiolime import AudioClip, build_component_set
from audiolime.engine import derive_seed

SR = 8000


def sine_clip(freq: float = 440.0, amp: float = 0.3, sr: int = SR, length: int = 16384) -> AudioClip:
    t = np.arange(length) / sr
    return AudioClip((amp * np.sin(2 * np.pi * freq * t)).astype(np.float32), sr)


def click_clip(spacing: int, amp: float = 0.8, sr: int = SR, length: int = 16384) -> AudioClip:
    samples = np.zeros(length, dtype=np.float32)
    samples[::spacing] = amp
    return AudioClip(samples, sr)


def noise_clip(seed: int, amp: float = 0.1, sr: int = SR, length: int = 16384) -> AudioClip:
    rng = np.random.default_rng(seed)
    return AudioClip((amp * rng.standard_normal(length)).astype(np.float32), sr)


def dominance_clip(index: int, sr: int = SR, length: int = SR) -> AudioClip:
    """Sine with a strong first half and faint second half, over a click bed.

    The faint harmonic segment alone reads as "quiet", so a random draw
    from the positive-weight set degrades fidelity while the surrogate's
    top choice does not.
    """
    rng = np.random.default_rng(np.random.PCG64(derive_seed("corpus", index)))
    freq = rng.uniform(300.0, 900.0)
    strong = rng.uniform(0.2, 0.3)
    weak = rng.uniform(0.006, 0.010)
    t = np.arange(length) / sr
    amp = np.where(t < length / (2 * sr), strong, weak)
    sine = amp * np.sin(2 * np.pi * freq * t)
    clicks = np.zeros(length)
    step = int(rng.integers(400, 700))
    offset = int(rng.integers(0, step))
    clicks[offset::step] = rng.uniform(0.4, 0.7)
    return AudioClip((sine + clicks).astype(np.float32), sr)


def voice_clip(run: int, sr: int = SR, length: int = 4 * SR) -> AudioClip:
    """Sustained tone over sparse clicks; long enough for a 1/3-length
    segment to span more frames than the harmonic median kernel."""
    rng = np.random.default_rng(np.random.PCG64(derive_seed("voice", run)))
    t = np.arange(length) / sr
    tone = 0.15 * np.sin(2 * np.pi * rng.uniform(200.0, 500.0) * t)
    clicks = np.zeros(length)
    step = int(rng.integers(500, 900))
    clicks[int(rng.integers(0, step))::step] = 0.5
    return AudioClip((tone + clicks).astype(np.float32), sr)


def oracle_component_set(length: int = 240, tau: int = 2):
    """Three pure-tone stems gated into segments; masks are exactly
    recoverable by energy matching, so toy_linear is an oracle on it."""
    t = np.arange(length) / SR
    stems = [
        ("alto", 0.30 * np.sin(2 * np.pi * 400.0 * t)),
        ("bass", 0.25 * np.sin(2 * np.pi * 150.0 * t)),
        ("treble", 0.20 * np.sin(2 * np.pi * 1200.0 * t)),
    ]
    sources = [(name, AudioClip(s.astype(np.float32), SR)) for name, s in stems]
    mix = AudioClip(sum(s for _, s in stems).astype(np.float32), SR)
    return build_component_set(mix, sources, tau)


def exhaustive_masks(d: int) -> np.ndarray:
    """All 2^d masks with the all-ones row first."""
    rows = [[(m >> j) & 1 for j in range(d)] for m in range(2 ** d)]
    ones = (1 << d) - 1
    order = [ones] + [m for m in range(2 ** d) if m != ones]
    return np.array([rows[m] for m in order], dtype=np.uint8)


@pytest.fixture
def tmp_wav_dir(tmp_path):
    return tmp_path


ACCEPTANCE_LINES: list[str] = []


def record_acceptance(name: str, ok: bool, detail: str) -> None:
    """Collect one pass/fail line per acceptance criterion; printed in the
    terminal summary so it survives pytest's output capture."""
    ACCEPTANCE_LINES.append(f"{'PASS' if ok else 'FAIL'} {name}: {detail}")


def pytest_terminal_summary(terminalreporter, exitstatus, config) -> None:
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
