"""Frozen-encoder wrappers and a deterministic offline stand-in.

The registry records each supported checkpoint's geometry: hidden
width per layer, transformer depth, and samples per output frame at
the 24 kHz input rate. Two backends share one interface:

    encode(samples, spec, layers) -> float32 (frames, width * len(layers))

"simulated" derives per-frame summary statistics and pushes them
through a fixed random projection per (model, layer), so identical
audio always yields identical bytes and no weights are needed.
"hf" loads the real checkpoint and reads its hidden states; when the
weights cannot be fetched it raises BackendUnavailableError.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import BackendUnavailableError, ConfigError

_FEATURE_COUNT = 8


@dataclass(frozen=True)
class EncoderSpec:
    name: str
    checkpoint: str
    layer_width: int
    num_layers: int
    frame_hop: int
    sample_rate: int = 24000


ENCODERS = {
    "muq": EncoderSpec("muq", "OpenMuQ/MuQ-large-msd-iter", 1024, 12, 960),
    "mert": EncoderSpec("mert", "m-a-p/MERT-v1-330M", 1024, 24, 320),
}


def get_spec(model: str) -> EncoderSpec:
    try:
        return ENCODERS[model]
    except KeyError:
        known = ", ".join(sorted(ENCODERS))
        raise ConfigError(f"unknown model {model!r}; choose one of: {known}") from None


def get_backend(name: str):
    try:
        factory = _BACKENDS[name]
    except KeyError:
        known = ", ".join(sorted(_BACKENDS))
        raise ConfigError(f"unknown backend {name!r}; choose one of: {known}") from None
    return factory()


def frame_features(samples: np.ndarray, hop: int) -> np.ndarray:
    """Per-frame summary statistics of a 1-D signal.

    The signal is zero-padded to a whole number of hop-length frames,
    matching how convolutional front ends round up, so every input of
    at least one sample produces at least one frame.
    """
    n_frames = max(1, math.ceil(len(samples) / hop))
    padded = np.zeros(n_frames * hop, dtype=np.float64)
    padded[: len(samples)] = samples
    frames = padded.reshape(n_frames, hop)

    mean = frames.mean(axis=1)
    std = frames.std(axis=1)
    rms = np.sqrt((frames**2).mean(axis=1))
    low = frames.min(axis=1)
    high = frames.max(axis=1)
    signs = np.signbit(frames)
    zcr = (signs[:, 1:] != signs[:, :-1]).mean(axis=1)
    diff_rms = np.sqrt((np.diff(frames, axis=1) ** 2).mean(axis=1))
    position = (np.arange(n_frames, dtype=np.float64) + 0.5) / n_frames
    return np.stack([mean, std, rms, low, high, zcr, diff_rms, position], axis=1)


def _layer_seed(model: str, layer: int) -> int:
    digest = hashlib.sha256(f"{model}:{layer}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "little")


class SimulatedBackend:
    """Content-dependent pseudo-embeddings with the real geometry."""

    name = "simulated"

    def encode(self, samples: np.ndarray, spec: EncoderSpec, layers: Sequence[int]) -> np.ndarray:
        feats = frame_features(samples, spec.frame_hop)
        blocks = []
        for layer in layers:
            rng = np.random.default_rng(_layer_seed(spec.name, layer))
            weight = rng.normal(0.0, 0.5, size=(_FEATURE_COUNT, spec.layer_width))
            bias = rng.normal(0.0, 0.1, size=spec.layer_width)
            blocks.append(np.tanh(feats @ weight + bias))
        return np.hstack(blocks).astype(np.float32)


class HFBackend:
    """Real checkpoints through torch; needs the weights to be fetchable."""

    name = "hf"

    def __init__(self) -> None:
        self._models: dict[str, object] = {}

    def _load(self, spec: EncoderSpec):
        if spec.name in self._models:
            return self._models[spec.name]
        try:
            import torch  # noqa: F401
            from transformers import AutoModel

            model = AutoModel.from_pretrained(spec.checkpoint, trust_remote_code=True)
        except Exception as exc:
            raise BackendUnavailableError(
                f"cannot load checkpoint {spec.checkpoint}: {exc}"
            ) from exc
        model.eval()
        self._models[spec.name] = model
        return model

    def encode(self, samples: np.ndarray, spec: EncoderSpec, layers: Sequence[int]) -> np.ndarray:
        import torch

        model = self._load(spec)
        batch = torch.from_numpy(np.asarray(samples, dtype=np.float32))[None, :]
        with torch.no_grad():
            out = model(batch, output_hidden_states=True)
        # hidden_states[0] is the pre-transformer embedding; layer k is 1-based
        states = out.hidden_states
        blocks = [states[layer][0].cpu().numpy() for layer in layers]
        return np.hstack(blocks).astype(np.float32)


_BACKENDS = {
    SimulatedBackend.name: SimulatedBackend,
    HFBackend.name: HFBackend,
}
