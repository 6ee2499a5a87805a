"""Coefficient-of-determination metrics and evaluation reports.

Two R^2 conventions coexist and are always reported side by side:

* per-dimension: one R^2 per target dimension, each about that
  dimension's own target mean; the headline is their arithmetic mean.
* pooled: all (sample, dimension) pairs treated as one regression,
  with a single grand-mean total sum of squares.

The two differ whenever dimensions have unequal variances, so reports
label both explicitly instead of guessing which one a reader expects.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .dataset import DIMENSION_NAMES, N_DIMENSIONS
from .errors import AlignmentError, ContractError, DegenerateDimensionError


def _as_matrix_pair(preds, targets) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(preds, dtype=np.float64)
    t = np.asarray(targets, dtype=np.float64)
    if p.ndim == 1:
        p = p[:, None]
    if t.ndim == 1:
        t = t[:, None]
    if p.shape != t.shape:
        raise ContractError(f"prediction shape {p.shape} != target shape {t.shape}")
    if p.shape[0] < 2:
        raise ContractError(f"need at least 2 samples, got {p.shape[0]}")
    return p, t


def r2_per_dimension(preds, targets) -> np.ndarray:
    """R^2 for each column: 1 - SS_res / SS_tot about the column target mean."""
    p, t = _as_matrix_pair(preds, targets)
    ss_res = ((t - p) ** 2).sum(axis=0)
    ss_tot = ((t - t.mean(axis=0)) ** 2).sum(axis=0)
    # Zero variance means "all values equal", tested exactly; the float
    # ss_tot of a constant column need not come out as exactly 0.
    degenerate = np.nonzero((t == t[0]).all(axis=0) | (ss_tot == 0.0))[0]
    if degenerate.size:
        d = int(degenerate[0])
        name = DIMENSION_NAMES[d] if t.shape[1] == N_DIMENSIONS else str(d)
        raise DegenerateDimensionError(
            f"target dimension {name!r} has zero variance; R^2 undefined"
        )
    return 1.0 - ss_res / ss_tot


def mean_per_dimension_r2(preds, targets) -> float:
    return float(r2_per_dimension(preds, targets).mean())


def r2_pooled(preds, targets) -> float:
    """Single R^2 over all (sample, dimension) pairs with one grand mean."""
    p, t = _as_matrix_pair(preds, targets)
    ss_res = ((t - p) ** 2).sum()
    ss_tot = ((t - t.mean()) ** 2).sum()
    if ss_tot == 0.0 or bool((t == t.flat[0]).all()):
        raise DegenerateDimensionError("targets have zero total variance; R^2 undefined")
    return float(1.0 - ss_res / ss_tot)


def segment_set_hash(segment_ids: Iterable[str]) -> str:
    """Order-independent fingerprint of a segment id set."""
    joined = "\n".join(sorted(segment_ids)).encode("utf-8")
    return hashlib.sha256(joined).hexdigest()[:16]


@dataclass
class EvalReport:
    """Per-dimension and aggregate R^2 for one prediction set, plus provenance."""

    per_dimension_r2: dict[str, float]
    mean_per_dimension_r2: float
    pooled_r2: float
    n_segments: int
    config_fingerprint: str = ""
    segment_set_hash: str = ""
    significance: dict | None = None
    bootstrap: dict | None = None

    def to_dict(self) -> dict:
        out = {
            "per_dimension_r2": {k: self.per_dimension_r2[k] for k in sorted(self.per_dimension_r2)},
            "mean_per_dimension_r2": self.mean_per_dimension_r2,
            "pooled_r2": self.pooled_r2,
            "n_segments": self.n_segments,
            "config_fingerprint": self.config_fingerprint,
            "segment_set_hash": self.segment_set_hash,
        }
        if self.significance is not None:
            out["significance"] = self.significance
        if self.bootstrap is not None:
            out["bootstrap"] = self.bootstrap
        return out

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2) + "\n"

    @classmethod
    def from_dict(cls, raw: dict) -> "EvalReport":
        return cls(
            per_dimension_r2=dict(raw["per_dimension_r2"]),
            mean_per_dimension_r2=float(raw["mean_per_dimension_r2"]),
            pooled_r2=float(raw["pooled_r2"]),
            n_segments=int(raw["n_segments"]),
            config_fingerprint=raw.get("config_fingerprint", ""),
            segment_set_hash=raw.get("segment_set_hash", ""),
            significance=raw.get("significance"),
            bootstrap=raw.get("bootstrap"),
        )


def make_report(
    preds,
    targets,
    segment_ids: Sequence[str],
    config_fingerprint: str = "",
    dimension_names: Sequence[str] = DIMENSION_NAMES,
) -> EvalReport:
    p, t = _as_matrix_pair(preds, targets)
    if len(segment_ids) != p.shape[0]:
        raise ContractError(
            f"{len(segment_ids)} segment ids for {p.shape[0]} prediction rows"
        )
    if p.shape[1] != len(dimension_names):
        raise ContractError(
            f"{p.shape[1]} prediction columns for {len(dimension_names)} dimension names"
        )
    per_dim = r2_per_dimension(p, t)
    return EvalReport(
        per_dimension_r2={name: float(v) for name, v in zip(dimension_names, per_dim)},
        mean_per_dimension_r2=float(per_dim.mean()),
        pooled_r2=r2_pooled(p, t),
        n_segments=p.shape[0],
        config_fingerprint=config_fingerprint,
        segment_set_hash=segment_set_hash(segment_ids),
    )


def dimension_deltas(report_a: EvalReport, report_b: EvalReport) -> list[tuple[str, float]]:
    """Per-dimension R^2 differences a - b, sorted descending by delta."""
    if set(report_a.per_dimension_r2) != set(report_b.per_dimension_r2):
        raise AlignmentError("reports cover different dimension sets")
    if (
        report_a.segment_set_hash
        and report_b.segment_set_hash
        and report_a.segment_set_hash != report_b.segment_set_hash
    ):
        raise AlignmentError(
            "reports were computed over different segment sets: "
            f"{report_a.segment_set_hash} vs {report_b.segment_set_hash}"
        )
    deltas = [
        (name, report_a.per_dimension_r2[name] - report_b.per_dimension_r2[name])
        for name in report_a.per_dimension_r2
    ]
    deltas.sort(key=lambda item: (-item[1], item[0]))
    return deltas
