"""Label ingestion, piece-level folds, and train/validation/test splits.

Segments are grouped by piece, and splitting always happens at the piece
level so no piece contributes to both training and testing. A rendition
tag names the soundfont a segment was synthesized with; the split modes
control how the rendition ensemble is used:

* ``all``                  every rendition of a selected piece is included
* ``single:<tag>``         only the named rendition is used anywhere
* ``leave_one_out:<tag>``  the named rendition appears only in the test set
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, TextIO

import numpy as np

from .errors import (
    ContractError,
    DuplicateError,
    InfeasibleSplitError,
    LabelRangeError,
    MissingRenditionError,
    SchemaError,
)
from .rng import SplitMix64, derive_seed

DIMENSION_NAMES: tuple[str, ...] = (
    "timing",
    "articulation_length",
    "articulation_touch",
    "pedal_amount",
    "pedal_clarity",
    "timbre_variety",
    "timbre_depth",
    "timbre_brightness",
    "timbre_loudness",
    "dynamic_range",
    "tempo",
    "space",
    "balance",
    "drama",
    "mood_valence",
    "mood_energy",
    "mood_imagination",
    "sophistication",
    "interpretation",
)

N_DIMENSIONS = len(DIMENSION_NAMES)

_KEY_COLUMNS = ("segment_id", "piece_id", "rendition")

PairKey = tuple[str, str]  # (segment_id, rendition)


@dataclass(eq=False)
class LabeledSegment:
    """One annotated (segment, rendition) row with its 19 targets in [0, 1]."""

    segment_id: str
    piece_id: str
    rendition: str
    targets: np.ndarray  # shape (19,), float64

    def __post_init__(self):
        self.targets = np.asarray(self.targets, dtype=np.float64)

    @property
    def pair(self) -> PairKey:
        return (self.segment_id, self.rendition)


@dataclass
class FoldAssignment:
    """Piece -> fold index map; every segment inherits its piece's fold."""

    fold_count: int
    mapping: dict[str, int]

    def fold_of(self, piece_id: str) -> int:
        return self.mapping[piece_id]

    def pieces_in(self, fold: int) -> list[str]:
        return sorted(p for p, f in self.mapping.items() if f == fold)


@dataclass
class SplitPlan:
    """Disjoint (segment_id, rendition) lists for one train/val/test split."""

    train: list[PairKey]
    validation: list[PairKey]
    test: list[PairKey]
    held_out_rendition: str | None = None


def _open_text(source: str | Path | TextIO) -> tuple[TextIO, bool]:
    if isinstance(source, (str, Path)):
        return open(source, "r", encoding="utf-8", newline=""), True
    return source, False


def load_labels(source: str | Path | TextIO) -> list[LabeledSegment]:
    """Parse a labels CSV into validated segments, preserving row order.

    Expected header: ``segment_id,piece_id,rendition,<19 dimension names>``.
    """
    fh, owned = _open_text(source)
    try:
        reader = csv.DictReader(fh)
        header = reader.fieldnames or []
        missing = [c for c in (*_KEY_COLUMNS, *DIMENSION_NAMES) if c not in header]
        if missing:
            raise SchemaError(f"labels table missing columns: {missing}")

        segments: list[LabeledSegment] = []
        seen: set[PairKey] = set()
        for row_idx, row in enumerate(reader):
            targets = np.empty(N_DIMENSIONS, dtype=np.float64)
            for j, name in enumerate(DIMENSION_NAMES):
                cell = row[name]
                try:
                    value = float(cell)
                except (TypeError, ValueError) as exc:
                    raise SchemaError(
                        f"row {row_idx}, column {name!r}: unparseable value {cell!r}"
                    ) from exc
                if not np.isfinite(value) or value < 0.0 or value > 1.0:
                    raise LabelRangeError(
                        f"row {row_idx}, column {name!r}: value {value} outside [0, 1]",
                        row=row_idx,
                        column=name,
                    )
                targets[j] = value
            seg = LabeledSegment(
                segment_id=row["segment_id"],
                piece_id=row["piece_id"],
                rendition=row["rendition"],
                targets=targets,
            )
            if seg.pair in seen:
                raise DuplicateError(f"duplicate (segment_id, rendition) pair {seg.pair}")
            seen.add(seg.pair)
            segments.append(seg)
        return segments
    finally:
        if owned:
            fh.close()


def write_labels(segments: Iterable[LabeledSegment], destination: str | Path | TextIO) -> None:
    """Inverse of load_labels; used by tools that synthesize datasets."""
    fh, owned = _open_text_w(destination)
    try:
        writer = csv.writer(fh)
        writer.writerow([*_KEY_COLUMNS, *DIMENSION_NAMES])
        for seg in segments:
            writer.writerow(
                [seg.segment_id, seg.piece_id, seg.rendition]
                + [repr(float(v)) for v in seg.targets]
            )
    finally:
        if owned:
            fh.close()


def _open_text_w(destination: str | Path | TextIO) -> tuple[TextIO, bool]:
    if isinstance(destination, (str, Path)):
        return open(destination, "w", encoding="utf-8", newline=""), True
    return destination, False


def unique_pieces(segments: Iterable[LabeledSegment]) -> list[str]:
    return sorted({seg.piece_id for seg in segments})


def assign_folds(pieces: list[str], k: int, seed: int) -> FoldAssignment:
    """Deterministically assign pieces to k folds, sizes differing by <= 1.

    Pieces are sorted, shuffled by a splitmix64 permutation of ``seed``,
    and dealt round-robin, so the mapping is a pure function of
    (pieces, k, seed).
    """
    if not pieces:
        raise ContractError("assign_folds needs a non-empty piece list")
    if k < 2:
        raise ContractError(f"fold count must be >= 2, got {k}")
    unique = sorted(set(pieces))
    if len(unique) != len(pieces):
        raise DuplicateError("piece list contains duplicates")
    if k > len(unique):
        raise InfeasibleSplitError(
            f"cannot split {len(unique)} pieces into {k} folds"
        )
    order = SplitMix64(seed).permutation(len(unique))
    mapping = {unique[piece_idx]: pos % k for pos, piece_idx in enumerate(order)}
    return FoldAssignment(fold_count=k, mapping=mapping)


def _parse_renditions_mode(mode: str) -> tuple[str, str | None]:
    if mode == "all":
        return "all", None
    for prefix in ("single:", "leave_one_out:"):
        if mode.startswith(prefix):
            tag = mode[len(prefix):]
            if not tag:
                raise ContractError(f"renditions mode {mode!r} names no tag")
            return prefix[:-1], tag
    raise ContractError(
        f"unknown renditions mode {mode!r}; expected 'all', 'single:<tag>' "
        "or 'leave_one_out:<tag>'"
    )


def make_split(
    fold: FoldAssignment,
    test_fold: int,
    val_fraction: float,
    segments: list[LabeledSegment],
    renditions_mode: str = "all",
    seed: int = 42,
) -> SplitPlan:
    """Build one train/validation/test split from a fold assignment.

    Validation is carved piece-wise out of the non-test folds: the pool of
    training pieces is shuffled with a stream derived from ``seed`` and
    roughly ``val_fraction`` of them (at least one) become validation
    pieces. Pieces never straddle split boundaries.
    """
    if not (0 <= test_fold < fold.fold_count):
        raise ContractError(
            f"test_fold {test_fold} out of range for {fold.fold_count} folds"
        )
    if not (0.0 < val_fraction < 1.0):
        raise ContractError(f"val_fraction must be in (0, 1), got {val_fraction}")
    if not segments:
        raise ContractError("make_split needs a non-empty segment list")

    kind, tag = _parse_renditions_mode(renditions_mode)
    if tag is not None:
        known = {seg.rendition for seg in segments}
        if tag not in known:
            raise MissingRenditionError(
                f"rendition {tag!r} not present (known: {sorted(known)})"
            )

    unknown = sorted({s.piece_id for s in segments} - set(fold.mapping))
    if unknown:
        raise ContractError(f"segments reference pieces without a fold: {unknown}")

    test_pieces = {p for p, f in fold.mapping.items() if f == test_fold}
    pool = sorted(p for p, f in fold.mapping.items() if f != test_fold)
    if len(pool) < 2:
        raise InfeasibleSplitError(
            "need at least 2 non-test pieces to carve a validation set, "
            f"got {len(pool)}"
        )
    rng = SplitMix64(derive_seed(seed, f"validation-fold{test_fold}"))
    shuffled = rng.shuffled(pool)
    n_val = min(len(pool) - 1, max(1, round(val_fraction * len(pool))))
    val_pieces = set(shuffled[:n_val])
    train_pieces = set(shuffled[n_val:])

    def keep(seg: LabeledSegment, in_test: bool) -> bool:
        if kind == "all":
            return True
        if kind == "single":
            return seg.rendition == tag
        # leave_one_out: held-out tag exists only in test
        return (seg.rendition == tag) == in_test

    train: list[PairKey] = []
    validation: list[PairKey] = []
    test: list[PairKey] = []
    for seg in segments:
        if seg.piece_id in test_pieces:
            if keep(seg, in_test=True):
                test.append(seg.pair)
        elif seg.piece_id in val_pieces:
            if keep(seg, in_test=False):
                validation.append(seg.pair)
        elif seg.piece_id in train_pieces:
            if keep(seg, in_test=False):
                train.append(seg.pair)
    return SplitPlan(
        train=train,
        validation=validation,
        test=test,
        held_out_rendition=tag if kind == "leave_one_out" else None,
    )


# --- embedding manifest ------------------------------------------------------

@dataclass
class ManifestEntry:
    segment_id: str
    rendition: str
    embedding_path: str

    @property
    def pair(self) -> PairKey:
        return (self.segment_id, self.rendition)


def load_manifest(source: str | Path | TextIO) -> list[ManifestEntry]:
    """Parse the manifest JSON: an array of segment/rendition/path records."""
    if isinstance(source, (str, Path)):
        text = Path(source).read_text(encoding="utf-8")
    else:
        text = source.read()
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise SchemaError(f"manifest is not valid JSON: {exc}") from exc
    if not isinstance(raw, list):
        raise SchemaError("manifest must be a JSON array")
    entries: list[ManifestEntry] = []
    seen: set[PairKey] = set()
    for i, item in enumerate(raw):
        if not isinstance(item, dict):
            raise SchemaError(f"manifest entry {i} is not an object")
        missing = [k for k in ("segment_id", "rendition", "embedding_path") if k not in item]
        if missing:
            raise SchemaError(f"manifest entry {i} missing keys: {missing}")
        entry = ManifestEntry(
            segment_id=str(item["segment_id"]),
            rendition=str(item["rendition"]),
            embedding_path=str(item["embedding_path"]),
        )
        if entry.pair in seen:
            raise DuplicateError(f"manifest repeats pair {entry.pair}")
        seen.add(entry.pair)
        entries.append(entry)
    return entries


def write_manifest(entries: Iterable[ManifestEntry], destination: str | Path) -> None:
    payload = [
        {
            "segment_id": e.segment_id,
            "rendition": e.rendition,
            "embedding_path": e.embedding_path,
        }
        for e in entries
    ]
    Path(destination).write_text(
        json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
