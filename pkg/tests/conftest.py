"""Session fixtures; the corpus builders themselves live in corpora.py."""

from __future__ import annotations

from pathlib import Path

import pytest

from corpora import make_linear_corpus


@pytest.fixture(scope="session")
def linear_corpus(tmp_path_factory) -> tuple[Path, Path, dict]:
    root = tmp_path_factory.mktemp("linear_corpus")
    return make_linear_corpus(root)
