"""Post-hoc analyses over prediction sets.

Late fusion (fixed-weight and per-dimension gated), error-correlation
diagnostics between two models, spread of predictions across performers
of the same piece, and rank correlation against an external difficulty
table. Everything operates on plain prediction vectors keyed by segment
id, so these analyses are independent of how the predictions were made.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from . import metrics, stats
from .dataset import DIMENSION_NAMES
from .errors import (
    AlignmentError,
    ContractError,
    DivergenceError,
    DuplicateError,
    LabelRangeError,
    SchemaError,
)


@dataclass(eq=False)
class PredictionSet:
    """One model's predictions: segment_id -> fixed-width score vector."""

    model_label: str
    entries: dict[str, np.ndarray]

    def __post_init__(self):
        self.entries = {
            k: np.asarray(v, dtype=np.float64) for k, v in self.entries.items()
        }

    def validate(self) -> None:
        dim = None
        for seg, vec in self.entries.items():
            if vec.ndim != 1:
                raise ContractError(f"entry {seg!r} is not a vector")
            if dim is None:
                dim = vec.shape[0]
            elif vec.shape[0] != dim:
                raise ContractError(
                    f"entry {seg!r} has dim {vec.shape[0]}, expected {dim}"
                )
            if not np.all(np.isfinite(vec)):
                raise ContractError(f"non-finite prediction for segment {seg!r}")

    @property
    def dim(self) -> int:
        if not self.entries:
            raise ContractError("empty prediction set has no dimensionality")
        return next(iter(self.entries.values())).shape[0]

    def ids(self) -> list[str]:
        return sorted(self.entries)

    def matrix(self, ids: Sequence[str]) -> np.ndarray:
        missing = [s for s in ids if s not in self.entries]
        if missing:
            raise AlignmentError(
                f"{self.model_label}: missing {len(missing)} segments, first {missing[0]!r}"
            )
        return np.stack([self.entries[s] for s in ids])


def aligned_ids(a: PredictionSet, b: PredictionSet) -> list[str]:
    ids_a, ids_b = set(a.entries), set(b.entries)
    if ids_a != ids_b:
        only_a = sorted(ids_a - ids_b)[:5]
        only_b = sorted(ids_b - ids_a)[:5]
        raise AlignmentError(
            f"segment sets differ: only in {a.model_label}: {only_a}; "
            f"only in {b.model_label}: {only_b}"
        )
    return sorted(ids_a)


def _targets_map(targets) -> Mapping[str, np.ndarray]:
    if isinstance(targets, PredictionSet):
        return targets.entries
    return {k: np.asarray(v, dtype=np.float64) for k, v in targets.items()}


# ---------------------------------------------------------------------------
# fusion


def weighted_fusion(a: PredictionSet, b: PredictionSet, alpha: float) -> PredictionSet:
    """Convex combination alpha*a + (1-alpha)*b per segment and dimension."""
    if not 0.0 <= alpha <= 1.0:
        raise ContractError(f"alpha must be in [0, 1], got {alpha}")
    ids = aligned_ids(a, b)
    entries = {
        seg: alpha * a.entries[seg] + (1.0 - alpha) * b.entries[seg] for seg in ids
    }
    label = f"weighted[{alpha:g}]({a.model_label},{b.model_label})"
    return PredictionSet(label, entries)


def select_fusion_weight(
    a: PredictionSet,
    b: PredictionSet,
    targets,
    validation_ids: Sequence[str],
    grid_step: float = 0.05,
) -> float:
    """Grid-search the fusion weight on validation mean per-dimension R².

    The grid is {0, grid_step, ..., 1}; grid_step must divide 1 evenly.
    Ties are broken toward 0.5, then toward the smaller alpha.
    """
    if not validation_ids:
        raise ContractError("empty validation id list")
    steps = round(1.0 / grid_step)
    if steps < 1 or abs(steps * grid_step - 1.0) > 1e-9:
        raise ContractError(f"grid_step {grid_step} does not divide 1 evenly")
    ids = list(validation_ids)
    tmap = _targets_map(targets)
    missing = [s for s in ids if s not in tmap]
    if missing:
        raise AlignmentError(f"targets missing for {len(missing)} ids, first {missing[0]!r}")
    ma = a.matrix(ids)
    mb = b.matrix(ids)
    mt = np.stack([tmap[s] for s in ids])
    best_alpha = 0.5
    best_key = None
    for i in range(steps + 1):
        alpha = i / steps
        fused = alpha * ma + (1.0 - alpha) * mb
        score = float(metrics.r2_per_dimension(fused, mt).mean())
        # Maximize score; tie-break by distance to 0.5, then smaller alpha.
        key = (-score, abs(alpha - 0.5), alpha)
        if best_key is None or key < best_key:
            best_key = key
            best_alpha = alpha
    return best_alpha


@dataclass(eq=False)
class GateParams:
    """Per-dimension gate pre-activations for gated fusion."""

    logits: np.ndarray

    def __post_init__(self):
        self.logits = np.asarray(self.logits, dtype=np.float64)

    def validate(self) -> None:
        if self.logits.ndim != 1:
            raise ContractError("gate logits must be a vector")
        if not np.all(np.isfinite(self.logits)):
            raise ContractError("non-finite gate logits")

    @classmethod
    def zeros(cls, dim: int) -> "GateParams":
        return cls(np.zeros(dim))


@dataclass
class GateFitConfig:
    steps: int = 500
    lr: float = 0.1

    def validate(self) -> None:
        if self.steps < 1:
            raise ContractError(f"steps must be >= 1, got {self.steps}")
        if self.lr <= 0.0:
            raise ContractError(f"lr must be positive, got {self.lr}")


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def gated_fusion(a: PredictionSet, b: PredictionSet, gate: GateParams) -> PredictionSet:
    """Per-dimension soft gate: out_d = g_d*a_d + (1-g_d)*b_d, g = logistic(logits).

    With logits all zero every gate is exactly 0.5 and the result equals
    weighted_fusion(a, b, 0.5) bit for bit (same expression order).
    """
    gate.validate()
    ids = aligned_ids(a, b)
    g = _sigmoid(gate.logits)
    if g.shape[0] != a.dim:
        raise ContractError(f"gate dim {g.shape[0]} != prediction dim {a.dim}")
    entries = {seg: g * a.entries[seg] + (1.0 - g) * b.entries[seg] for seg in ids}
    label = f"gated({a.model_label},{b.model_label})"
    return PredictionSet(label, entries)


def gate_objective(
    a_rows: np.ndarray, b_rows: np.ndarray, t_rows: np.ndarray, logits: np.ndarray
) -> tuple[float, np.ndarray]:
    """MSE of the gated combination and its exact gradient w.r.t. logits."""
    g = _sigmoid(logits)
    out = g * a_rows + (1.0 - g) * b_rows
    diff = out - t_rows
    n, d = out.shape
    loss = float((diff * diff).sum() / (n * d))
    grad = (2.0 / (n * d)) * (diff * (a_rows - b_rows)).sum(axis=0) * g * (1.0 - g)
    return loss, grad


def fit_gate(
    a: PredictionSet,
    b: PredictionSet,
    targets,
    train_ids: Sequence[str],
    config: GateFitConfig | None = None,
) -> GateParams:
    """Full-batch gradient descent on the gate logits (zeros init)."""
    config = config or GateFitConfig()
    config.validate()
    if not train_ids:
        raise ContractError("empty training id list for gate fitting")
    ids = list(train_ids)
    tmap = _targets_map(targets)
    missing = [s for s in ids if s not in tmap]
    if missing:
        raise AlignmentError(f"targets missing for {len(missing)} ids, first {missing[0]!r}")
    ma = a.matrix(ids)
    mb = b.matrix(ids)
    mt = np.stack([tmap[s] for s in ids])
    logits = np.zeros(ma.shape[1])
    for step in range(config.steps):
        loss, grad = gate_objective(ma, mb, mt, logits)
        if not math.isfinite(loss) or not np.all(np.isfinite(grad)):
            raise DivergenceError(f"gate fit diverged at step {step}")
        logits -= config.lr * grad
    return GateParams(logits)


# ---------------------------------------------------------------------------
# diagnostics


def per_segment_mse(preds: PredictionSet, targets) -> tuple[list[str], np.ndarray]:
    """Per-segment mean squared error across dimensions, in sorted-id order."""
    tmap = _targets_map(targets)
    ids = preds.ids()
    missing = [s for s in ids if s not in tmap]
    if missing:
        raise AlignmentError(f"targets missing for {len(missing)} ids, first {missing[0]!r}")
    p = preds.matrix(ids)
    t = np.stack([tmap[s] for s in ids])
    if p.shape != t.shape:
        raise AlignmentError(f"prediction shape {p.shape} != target shape {t.shape}")
    return ids, ((p - t) ** 2).mean(axis=1)


def error_correlation(a: PredictionSet, b: PredictionSet, targets) -> float:
    """Pearson correlation between two models' per-segment MSE series.

    High values mean the models fail on the same segments, which predicts
    weak fusion gains.
    """
    ids = aligned_ids(a, b)
    if len(ids) < 2:
        raise ContractError(f"error correlation needs >= 2 segments, got {len(ids)}")
    _, err_a = per_segment_mse(a, targets)
    _, err_b = per_segment_mse(b, targets)
    return stats.pearson(err_a, err_b)


def paired_error_series(
    a: PredictionSet, b: PredictionSet, targets
) -> stats.PairedErrorSeries:
    ids = aligned_ids(a, b)
    _, err_a = per_segment_mse(a, targets)
    _, err_b = per_segment_mse(b, targets)
    return stats.PairedErrorSeries(ids, err_a, err_b)


def intra_piece_consistency(
    preds: PredictionSet,
    performer_map: Mapping[str, tuple[str, str]],
) -> tuple[np.ndarray, float]:
    """Spread of predictions across different performances of one piece.

    For every piece with at least two performances, take the per-dimension
    sample standard deviation across its prediction vectors; average those
    per dimension over pieces. Returns (per-dimension mean std, overall
    mean across dimensions). Low values mean the model scores a piece
    consistently no matter who performs it.
    """
    preds.validate()
    missing = [s for s in preds.entries if s not in performer_map]
    if missing:
        raise AlignmentError(
            f"performer map missing {len(missing)} segments, first {missing[0]!r}"
        )
    by_piece: dict[str, list[np.ndarray]] = {}
    for seg in preds.ids():
        piece_id, _performer = performer_map[seg]
        by_piece.setdefault(piece_id, []).append(preds.entries[seg])
    multi = {k: np.stack(v) for k, v in sorted(by_piece.items()) if len(v) >= 2}
    if not multi:
        raise ContractError("no piece has two or more performances")
    per_piece = np.stack([m.std(axis=0, ddof=1) for m in multi.values()])
    per_dimension = per_piece.mean(axis=0)
    return per_dimension, float(per_dimension.mean())


@dataclass(eq=False)
class DifficultyTable:
    """External piece-level difficulty ratings on a 0..10 scale."""

    entries: dict[str, float]

    def validate(self) -> None:
        for piece, rating in self.entries.items():
            if not math.isfinite(rating) or not 0.0 <= rating <= 10.0:
                raise LabelRangeError(
                    f"rating {rating} for piece {piece!r} outside [0, 10]",
                    column="rating",
                )


AGGREGATE_MODES = ("mean_of_dimensions", "per_dimension")


def difficulty_correlation(
    preds: PredictionSet,
    table: DifficultyTable,
    piece_of: Mapping[str, str],
    aggregate: str = "mean_of_dimensions",
) -> tuple[float, np.ndarray, dict]:
    """Spearman correlation of piece-level predictions with difficulty.

    Piece-level prediction is the mean over the piece's segments. The
    per-dimension correlations are always computed; `aggregate` chooses
    the headline: "mean_of_dimensions" correlates the across-dimension
    mean score (with its own p-value), "per_dimension" averages the 19
    per-dimension correlations instead.
    """
    if aggregate not in AGGREGATE_MODES:
        raise ContractError(f"unknown aggregate {aggregate!r}, expected one of {AGGREGATE_MODES}")
    preds.validate()
    table.validate()
    missing = [s for s in preds.entries if s not in piece_of]
    if missing:
        raise AlignmentError(
            f"piece mapping missing {len(missing)} segments, first {missing[0]!r}"
        )
    by_piece: dict[str, list[np.ndarray]] = {}
    for seg in preds.ids():
        piece = piece_of[seg]
        if piece in table.entries:
            by_piece.setdefault(piece, []).append(preds.entries[seg])
    if len(by_piece) < 3:
        raise ContractError(
            f"need >= 3 pieces present in both predictions and table, got {len(by_piece)}"
        )
    pieces = sorted(by_piece)
    piece_preds = np.stack([np.stack(by_piece[p]).mean(axis=0) for p in pieces])
    ratings = np.array([table.entries[p] for p in pieces])

    dim = piece_preds.shape[1]
    per_dim_rho = np.empty(dim)
    per_dim_p = np.empty(dim)
    for d in range(dim):
        per_dim_rho[d], per_dim_p[d] = stats.spearman(piece_preds[:, d], ratings)
    if aggregate == "mean_of_dimensions":
        overall_rho, overall_p = stats.spearman(piece_preds.mean(axis=1), ratings)
    else:
        overall_rho = float(per_dim_rho.mean())
        overall_p = None
    p_values = {
        "overall": overall_p,
        "per_dimension": per_dim_p.tolist(),
    }
    return overall_rho, per_dim_rho, p_values


# ---------------------------------------------------------------------------
# file formats


def _dim_names(dim: int) -> list[str]:
    return list(DIMENSION_NAMES) if dim == len(DIMENSION_NAMES) else [f"d{i}" for i in range(dim)]


def write_predictions(path, preds: PredictionSet) -> None:
    preds.validate()
    if not preds.entries:
        raise ContractError("refusing to write an empty prediction set")
    path = Path(path)
    names = _dim_names(preds.dim)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["segment_id", *names])
        for seg in preds.ids():
            writer.writerow([seg, *[repr(float(v)) for v in preds.entries[seg]]])


def load_predictions(path, model_label: str | None = None) -> PredictionSet:
    path = Path(path)
    label = model_label if model_label is not None else path.stem
    entries: dict[str, np.ndarray] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0] != "segment_id" or len(header) < 2:
            raise SchemaError(f"{path}: expected header 'segment_id,<dim columns>'")
        width = len(header) - 1
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != width + 1:
                raise SchemaError(f"{path}:{lineno}: expected {width + 1} cells, got {len(row)}")
            seg = row[0]
            if seg in entries:
                raise DuplicateError(f"{path}:{lineno}: duplicate segment id {seg!r}")
            try:
                vec = np.array([float(c) for c in row[1:]], dtype=np.float64)
            except ValueError as exc:
                raise SchemaError(f"{path}:{lineno}: {exc}") from exc
            if not np.all(np.isfinite(vec)):
                raise SchemaError(f"{path}:{lineno}: non-finite prediction value")
            entries[seg] = vec
    ps = PredictionSet(label, entries)
    ps.validate()
    return ps


def load_difficulty(path) -> DifficultyTable:
    path = Path(path)
    entries: dict[str, float] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["piece_id", "rating"]:
            raise SchemaError(f"{path}: expected header 'piece_id,rating'")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 2:
                raise SchemaError(f"{path}:{lineno}: expected 2 cells, got {len(row)}")
            piece, raw = row
            if piece in entries:
                raise DuplicateError(f"{path}:{lineno}: duplicate piece id {piece!r}")
            try:
                entries[piece] = float(raw)
            except ValueError as exc:
                raise SchemaError(f"{path}:{lineno}: {exc}") from exc
    table = DifficultyTable(entries)
    table.validate()
    return table


def load_performer_map(path) -> dict[str, tuple[str, str]]:
    path = Path(path)
    mapping: dict[str, tuple[str, str]] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != ["segment_id", "piece_id", "performer_id"]:
            raise SchemaError(f"{path}: expected header 'segment_id,piece_id,performer_id'")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 3:
                raise SchemaError(f"{path}:{lineno}: expected 3 cells, got {len(row)}")
            seg, piece, performer = row
            if seg in mapping:
                raise DuplicateError(f"{path}:{lineno}: duplicate segment id {seg!r}")
            mapping[seg] = (piece, performer)
    return mapping
