"""Job descriptions and the extraction pipeline around the encoders."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import audio
from .encoders import EncoderSpec, get_backend, get_spec
from .errors import ConfigError, ExtractorError
from .pemb import pemb_filename, write_pemb

DEFAULT_LAYERS = (9, 10, 11, 12)


@dataclass
class ExtractionJob:
    """Everything needed to turn one audio file into one PEMB file."""

    audio_path: str
    segment_id: str
    rendition: str
    model: str = "muq"
    layers: Sequence[int] = field(default_factory=lambda: list(DEFAULT_LAYERS))
    max_segment_seconds: float = 10.0
    target_sample_rate: int = 24000

    def validate(self) -> EncoderSpec:
        """Check the description against the model registry; returns the spec."""
        spec = get_spec(self.model)
        for name, value in (("segment_id", self.segment_id), ("rendition", self.rendition)):
            if not value or not str(value).strip():
                raise ConfigError(f"{name} must be a non-empty string")
            if "/" in value or "\\" in value:
                raise ConfigError(f"{name} {value!r} must not contain path separators")
        layers = list(self.layers)
        if not layers:
            raise ConfigError("layers must not be empty")
        if len(set(layers)) != len(layers):
            raise ConfigError(f"layers {layers} contain duplicates")
        for layer in layers:
            if not isinstance(layer, int) or isinstance(layer, bool):
                raise ConfigError(f"layer {layer!r} is not an integer")
            if not 1 <= layer <= spec.num_layers:
                raise ConfigError(
                    f"layer {layer} out of range for {self.model} (1..{spec.num_layers})"
                )
        if not self.max_segment_seconds > 0:
            raise ConfigError("max_segment_seconds must be positive")
        if self.target_sample_rate < 1:
            raise ConfigError("target_sample_rate must be positive")
        return spec


def extract(job: ExtractionJob, output_dir: str | Path, backend: str | object = "simulated") -> Path:
    """Run one job end to end; returns the path of the written PEMB file."""
    spec = job.validate()
    engine = get_backend(backend) if isinstance(backend, str) else backend

    samples, rate = audio.read_wav(job.audio_path)
    mono = audio.to_mono(samples)
    mono = audio.resample(mono, rate, job.target_sample_rate)

    window_len = max(1, int(round(job.max_segment_seconds * job.target_sample_rate)))
    layers = sorted(int(layer) for layer in job.layers)
    pieces = [engine.encode(window, spec, layers) for window in audio.split_windows(mono, window_len)]
    matrix = np.vstack(pieces)

    out_dir = Path(output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    target = out_dir / pemb_filename(job.segment_id, job.rendition)
    write_pemb(target, job.segment_id, job.rendition, layers, matrix)
    return target


def extract_batch(
    jobs: Sequence[ExtractionJob],
    output_dir: str | Path,
    backend: str | object = "simulated",
    manifest_name: str = "manifest.json",
) -> dict:
    """Run every job, collecting failures instead of aborting.

    Writes a manifest covering the successful jobs (an empty list when
    none succeed) and, when anything failed, a failures.json next to
    it. Returns a summary with both.
    """
    engine = get_backend(backend) if isinstance(backend, str) else backend
    out_dir = Path(output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    entries: list[dict] = []
    failures: list[dict] = []
    seen: set[tuple[str, str]] = set()
    for job in jobs:
        key = (job.segment_id, job.rendition)
        try:
            if key in seen:
                raise ConfigError(
                    f"duplicate segment/rendition pair {job.segment_id!r}/{job.rendition!r}"
                )
            path = extract(job, out_dir, engine)
        except ExtractorError as exc:
            failures.append(
                {
                    "audio_path": str(job.audio_path),
                    "segment_id": job.segment_id,
                    "rendition": job.rendition,
                    "error": type(exc).__name__,
                    "message": str(exc),
                }
            )
            continue
        seen.add(key)
        entries.append(
            {
                "segment_id": job.segment_id,
                "rendition": job.rendition,
                "embedding_path": path.name,
            }
        )

    manifest_path = out_dir / manifest_name
    manifest_path.write_text(json.dumps(entries, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    failures_path = None
    if failures:
        failures_path = out_dir / "failures.json"
        failures_path.write_text(json.dumps(failures, indent=2) + "\n", encoding="utf-8")
    return {
        "manifest": str(manifest_path),
        "entries": len(entries),
        "failures": failures,
        "failure_report": str(failures_path) if failures_path else None,
    }
