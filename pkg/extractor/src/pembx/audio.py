"""WAV decoding, mono mixdown, resampling, and window splitting."""

from __future__ import annotations

import math
import wave
from pathlib import Path

import numpy as np
from scipy.signal import resample_poly

from .errors import AudioReadError


def read_wav(path: str | Path) -> tuple[np.ndarray, int]:
    """Decode a PCM WAV file.

    Returns (samples, sample_rate) where samples is float64 with shape
    (frames, channels) and values in [-1, 1]. Supports 8-, 16-, 24- and
    32-bit integer PCM. Anything unreadable raises AudioReadError.
    """
    try:
        with wave.open(str(path), "rb") as handle:
            channels = handle.getnchannels()
            width = handle.getsampwidth()
            rate = handle.getframerate()
            frames = handle.getnframes()
            raw = handle.readframes(frames)
    except (OSError, wave.Error, EOFError) as exc:
        raise AudioReadError(f"cannot read {path}: {exc}") from exc
    if frames == 0 or not raw:
        raise AudioReadError(f"{path} contains no audio frames")
    if channels < 1 or rate < 1:
        raise AudioReadError(f"{path} has a malformed format header")
    samples = _decode_pcm(raw, width, path)
    if samples.size % channels != 0:
        raise AudioReadError(f"{path}: payload is not a whole number of frames")
    return samples.reshape(-1, channels), rate


def _decode_pcm(raw: bytes, width: int, path: str | Path) -> np.ndarray:
    if width == 1:
        # 8-bit WAV is unsigned
        return (np.frombuffer(raw, dtype=np.uint8).astype(np.float64) - 128.0) / 128.0
    if width == 2:
        return np.frombuffer(raw, dtype="<i2").astype(np.float64) / 32768.0
    if width == 3:
        triplets = np.frombuffer(raw, dtype=np.uint8)
        if triplets.size % 3 != 0:
            raise AudioReadError(f"{path}: truncated 24-bit payload")
        triplets = triplets.reshape(-1, 3).astype(np.int32)
        value = triplets[:, 0] | (triplets[:, 1] << 8) | (triplets[:, 2] << 16)
        value = np.where(value >= 1 << 23, value - (1 << 24), value)
        return value.astype(np.float64) / float(1 << 23)
    if width == 4:
        return np.frombuffer(raw, dtype="<i4").astype(np.float64) / float(1 << 31)
    raise AudioReadError(f"{path}: unsupported sample width {width} bytes")


def to_mono(samples: np.ndarray) -> np.ndarray:
    """Average the channels of a (frames, channels) array into 1-D."""
    if samples.ndim == 1:
        return samples
    return samples.mean(axis=1)


def resample(samples: np.ndarray, rate_in: int, rate_out: int) -> np.ndarray:
    """Polyphase resampling of a 1-D signal; identity when rates match."""
    if rate_in == rate_out:
        return samples
    divisor = math.gcd(rate_in, rate_out)
    return resample_poly(samples, rate_out // divisor, rate_in // divisor)


def split_windows(samples: np.ndarray, window_len: int) -> list[np.ndarray]:
    """Cut a 1-D signal into non-overlapping windows of window_len samples.

    The final window keeps whatever remains, so the concatenation of the
    pieces reproduces the input exactly.
    """
    if window_len < 1:
        raise ValueError("window_len must be at least 1 sample")
    return [samples[start : start + window_len] for start in range(0, len(samples), window_len)]
