import struct

import numpy as np
import pytest

from audiolime import (
    AudioClip,
    InvalidInputError,
    Spectrogram,
    WavFormatError,
    istft,
    load_wav,
    resample,
    save_wav,
    stft,
)

from conftest import SR, noise_clip, sine_clip


def write_wav(path, rate, channels, bits_per_sample, audio_format, frames: bytes) -> None:
    """Hand-roll a RIFF/WAVE file so the loader is tested against raw bytes."""
    byte_rate = rate * channels * bits_per_sample // 8
    block_align = channels * bits_per_sample // 8
    fmt = struct.pack(
        "<HHIIHH", audio_format, channels, rate, byte_rate, block_align, bits_per_sample
    )
    body = b"WAVE" + b"fmt " + struct.pack("<I", len(fmt)) + fmt
    body += b"data" + struct.pack("<I", len(frames)) + frames
    with open(path, "wb") as fh:
        fh.write(b"RIFF" + struct.pack("<I", len(body)) + body)


def test_audioclip_validation() -> None:
    with pytest.raises(InvalidInputError):
        AudioClip(np.zeros((2, 2), dtype=np.float32), SR)
    with pytest.raises(InvalidInputError):
        AudioClip(np.zeros(0, dtype=np.float32), SR)
    with pytest.raises(InvalidInputError):
        AudioClip(np.array([0.0, np.nan], dtype=np.float32), SR)
    with pytest.raises(InvalidInputError):
        AudioClip(np.zeros(4, dtype=np.float32), 0)


def test_audioclip_is_immutable() -> None:
    clip = sine_clip(length=64)
    with pytest.raises(ValueError):
        clip.samples[0] = 1.0


def test_load_pcm16(tmp_path) -> None:
    values = [-32768, -16384, 0, 16384, 32767]
    frames = struct.pack("<5h", *values)
    path = tmp_path / "pcm16.wav"
    write_wav(path, SR, 1, 16, 1, frames)
    clip = load_wav(path)
    expected = np.array(values, dtype=np.float64) / 32768.0
    assert clip.sample_rate == SR
    assert np.allclose(clip.samples, expected, atol=1e-7)


def test_load_pcm24(tmp_path) -> None:
    # 0x400000 is +0.5 in signed 24-bit fixed point
    values = [0x400000, -0x800000, 0x7FFFFF, 0]
    frames = b"".join(struct.pack("<i", v << 8)[1:4] for v in values)
    path = tmp_path / "pcm24.wav"
    write_wav(path, SR, 1, 24, 1, frames)
    clip = load_wav(path)
    expected = np.array(values, dtype=np.float64) / (2 ** 23)
    assert np.allclose(clip.samples, expected, atol=1e-6)


def test_load_pcm32(tmp_path) -> None:
    values = [2 ** 30, -(2 ** 31), 2 ** 31 - 1]
    frames = struct.pack("<3i", *values)
    path = tmp_path / "pcm32.wav"
    write_wav(path, SR, 1, 32, 1, frames)
    clip = load_wav(path)
    expected = np.array(values, dtype=np.float64) / (2 ** 31)
    assert np.allclose(clip.samples, expected, atol=1e-7)


def test_load_float32(tmp_path) -> None:
    values = np.array([0.25, -1.0, 0.5, 1.0], dtype=np.float32)
    path = tmp_path / "f32.wav"
    write_wav(path, SR, 1, 32, 3, values.tobytes())
    clip = load_wav(path)
    assert clip.samples.tobytes() == values.tobytes()


def test_load_stereo_downmix(tmp_path) -> None:
    left = np.array([0.5, -0.5], dtype=np.float32)
    right = np.array([0.25, 0.25], dtype=np.float32)
    frames = np.stack([left, right], axis=1).tobytes()
    path = tmp_path / "stereo.wav"
    write_wav(path, SR, 2, 32, 3, frames)
    clip = load_wav(path)
    assert np.allclose(clip.samples, [(0.5 + 0.25) / 2, (-0.5 + 0.25) / 2])


def test_load_rejects_unsupported(tmp_path) -> None:
    path = tmp_path / "u8.wav"
    write_wav(path, SR, 1, 8, 1, bytes([0, 128, 255]))
    with pytest.raises(WavFormatError, match="encoding"):
        load_wav(path)

    path = tmp_path / "f64.wav"
    write_wav(path, SR, 1, 64, 3, struct.pack("<2d", 0.1, 0.2))
    with pytest.raises(WavFormatError, match="encoding"):
        load_wav(path)

    path = tmp_path / "quad.wav"
    frames = np.zeros((4, 4), dtype=np.float32).tobytes()
    write_wav(path, SR, 4, 32, 3, frames)
    with pytest.raises(WavFormatError, match="channel count"):
        load_wav(path)


def test_load_rejects_garbage(tmp_path) -> None:
    path = tmp_path / "noise.bin"
    path.write_bytes(b"this is not audio")
    with pytest.raises(WavFormatError):
        load_wav(path)
    with pytest.raises(WavFormatError):
        load_wav(tmp_path / "missing.wav")


def test_load_rejects_empty_payload(tmp_path) -> None:
    path = tmp_path / "empty.wav"
    write_wav(path, SR, 1, 16, 1, b"")
    with pytest.raises(WavFormatError, match="zero-length"):
        load_wav(path)


def test_save_load_roundtrip_bit_exact(tmp_path) -> None:
    clip = noise_clip(seed=11, length=5000)
    path = tmp_path / "roundtrip.wav"
    save_wav(clip, path)
    back = load_wav(path)
    assert back.sample_rate == clip.sample_rate
    assert back.samples.tobytes() == clip.samples.tobytes()


def test_load_with_target_rate(tmp_path) -> None:
    clip = sine_clip(length=8000)
    path = tmp_path / "in.wav"
    save_wav(clip, path)
    back = load_wav(path, target_rate=4000)
    assert back.sample_rate == 4000
    assert len(back) == 4000


def test_stft_shapes_and_preconditions() -> None:
    clip = noise_clip(seed=3, length=10240)
    spec = stft(clip, 2048, 512)
    assert spec.num_bins == 2048 // 2 + 1
    assert spec.num_frames == 10240 // 512 + 1
    with pytest.raises(InvalidInputError, match="power of two"):
        stft(clip, 1000, 500)
    with pytest.raises(InvalidInputError, match="does not divide"):
        stft(clip, 2048, 600)
    with pytest.raises(InvalidInputError, match="shorter than window_size"):
        stft(noise_clip(seed=4, length=1024), 2048, 512)


def test_stft_linearity() -> None:
    a = noise_clip(seed=5, length=6000)
    b = sine_clip(length=6000)
    mixed = AudioClip(
        (a.samples.astype(np.float64) + b.samples.astype(np.float64)).astype(np.float32), SR
    )
    lhs = stft(mixed).complex_bins
    rhs = stft(a).complex_bins + stft(b).complex_bins
    assert np.abs(lhs - rhs).max() <= 1e-5


def test_stft_istft_roundtrip_white_noise() -> None:
    for length in (2048, 5000, 16384):
        clip = noise_clip(seed=length, length=length)
        out = istft(stft(clip), length)
        assert np.abs(out.samples - clip.samples).max() <= 1e-4


def test_istft_length_control() -> None:
    clip = noise_clip(seed=9, length=4096)
    spec = stft(clip)
    short = istft(spec, 1000)
    assert len(short) == 1000
    assert np.abs(short.samples - clip.samples[:1000]).max() <= 1e-4
    long = istft(spec, 6000)
    assert len(long) == 6000
    with pytest.raises(InvalidInputError):
        istft(spec, 0)


def test_spectrogram_validation() -> None:
    with pytest.raises(InvalidInputError, match="frequency bins"):
        Spectrogram(np.zeros((100, 4), dtype=complex), 2048, 512, SR)
    with pytest.raises(InvalidInputError, match="exceeds window_size"):
        Spectrogram(np.zeros((1025, 4), dtype=complex), 2048, 4096, SR)


def test_tone_lands_in_expected_bin() -> None:
    t = np.arange(44100) / 44100.0
    clip = AudioClip((0.5 * np.sin(2 * np.pi * 1000.0 * t)).astype(np.float32), 44100)
    spec = stft(clip)
    peak = int(np.argmax(np.abs(spec.complex_bins).mean(axis=1)))
    assert peak == round(1000 * 2048 / 44100)  # bin 46


def test_resample_preserves_tone() -> None:
    clip = sine_clip(freq=440.0, length=16384)
    down = resample(clip, 4000)
    assert len(down) == round(16384 * 4000 / 8000)
    spectrum = np.abs(np.fft.rfft(down.samples.astype(np.float64)))
    peak_hz = np.argmax(spectrum) * 4000 / len(down)
    assert abs(peak_hz - 440.0) < 2.0


def test_resample_identity_and_lengths() -> None:
    clip = sine_clip(length=1000)
    assert resample(clip, SR) is clip
    up = resample(clip, 12000)
    assert up.sample_rate == 12000
    assert len(up) == round(1000 * 12000 / 8000)
    with pytest.raises(InvalidInputError):
        resample(clip, 0)


def test_save_rejects_bad_path(tmp_path) -> None:
    clip = sine_clip(length=100)
    with pytest.raises(WavFormatError):
        save_wav(clip, tmp_path / "nope" / "deeper" / "x.wav")
