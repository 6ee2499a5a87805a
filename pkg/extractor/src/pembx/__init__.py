"""Turn audio files into frame-embedding (PEMB) files plus a manifest.

The pipeline is: read WAV, mix to mono, resample to the encoder's
native rate, split into bounded windows, run a frozen encoder, and
concatenate the requested layers per frame. Output is one ``.pemb``
file per (segment, rendition) pair and a ``manifest.json`` listing
them, byte-compatible with the downstream evaluation harness.
"""

from .errors import (
    AudioReadError,
    BackendUnavailableError,
    ConfigError,
    ExtractorError,
    WriteError,
)
from .extract import ExtractionJob, extract, extract_batch

__all__ = [
    "AudioReadError",
    "BackendUnavailableError",
    "ConfigError",
    "ExtractionJob",
    "ExtractorError",
    "WriteError",
    "extract",
    "extract_batch",
]

__version__ = "0.1.0"
