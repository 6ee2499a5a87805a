"""Shared audio fixtures."""

import pytest

from wavhelpers import tone, write_wav


@pytest.fixture
def tone_wav(tmp_path):
    """One second of a 220 Hz tone at 24 kHz, 16-bit mono."""
    return write_wav(tmp_path / "tone.wav", tone(1.0, 24000), 24000)
