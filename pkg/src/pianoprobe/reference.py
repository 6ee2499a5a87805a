"""Published benchmark numbers for the task this harness reproduces.

These are context values surfaced next to locally computed results in
reports, so a reader can tell at a glance whether a run is in the
expected ballpark. They are not targets the test suite asserts against:
reaching them requires the full rendered corpus and pretrained-encoder
inference, neither of which ships with this package.
"""

from __future__ import annotations

# Headline regression quality (mean per-dimension R^2) of the best audio
# configuration, with its 95% bootstrap interval, and the symbolic baseline.
AUDIO_BEST_R2 = 0.537
AUDIO_BEST_R2_CI = (0.465, 0.575)
SYMBOLIC_BASELINE_R2 = 0.347

# Weighted late fusion of the audio and symbolic models.
FUSION_WEIGHTED_R2 = 0.524

# Audio-vs-symbolic significance on per-segment MSE series (n = 1202).
PAIRED_T = -10.71
PAIRED_T_P = 2.08e-25
WILCOXON_P = 2.16e-29
COHENS_D = 0.31
N_SEGMENTS = 1202

# Pearson correlation between the two models' per-segment errors.
ERROR_CORRELATION = 0.738

# Pooling ablation (mean per-dimension R^2 by pooling strategy).
POOLING_ABLATION = {
    "mean": 0.405,
    "attention": 0.369,
    "lstm": 0.327,
    "max": 0.316,
}

# Loss ablation under otherwise identical settings.
LOSS_ABLATION = {
    "mse": 0.405,
    "ccc": 0.363,
}

# Encoder layer-range ablation (mean per-dimension R^2 by layer block).
# MuQ has 12 transformer layers; MERT's checkpoint here has 24.
LAYER_ABLATION = {
    "muq": {
        "1-4 (early)": 0.438,
        "5-8 (mid)": 0.467,
        "9-12 (late)": 0.533,
        "1-12 (all)": 0.510,
    },
    "mert": {
        "1-6 (early)": 0.397,
        "7-12 (mid)": 0.433,
        "13-24 (late)": 0.426,
    },
}

# External validations: rank correlation against expert difficulty ratings
# (overall and the single-dimension example), and the mean intra-piece
# standard deviation of predictions across performers.
DIFFICULTY_SPEARMAN = 0.623
DIFFICULTY_SPEARMAN_TIMING = 0.604
INTRA_PIECE_STD = 0.020
INTRA_PIECE_N_PIECES = 206
INTRA_PIECE_N_RECORDINGS = 631

# The six synthesis renditions used as an augmentation ensemble.
RENDITIONS = (
    "steinway_d",
    "yamaha_c5",
    "kawai_k2",
    "upright_u4",
    "honky_tonk",
    "worn_out",
)


def summary() -> dict:
    """All reference values as one JSON-ready dictionary."""
    return {
        "audio_best_r2": AUDIO_BEST_R2,
        "audio_best_r2_ci": list(AUDIO_BEST_R2_CI),
        "symbolic_baseline_r2": SYMBOLIC_BASELINE_R2,
        "fusion_weighted_r2": FUSION_WEIGHTED_R2,
        "paired_t": PAIRED_T,
        "paired_t_p": PAIRED_T_P,
        "wilcoxon_p": WILCOXON_P,
        "cohens_d": COHENS_D,
        "n_segments": N_SEGMENTS,
        "error_correlation": ERROR_CORRELATION,
        "pooling_ablation": dict(POOLING_ABLATION),
        "loss_ablation": dict(LOSS_ABLATION),
        "layer_ablation": {k: dict(v) for k, v in LAYER_ABLATION.items()},
        "difficulty_spearman": DIFFICULTY_SPEARMAN,
        "difficulty_spearman_timing": DIFFICULTY_SPEARMAN_TIMING,
        "intra_piece_std": INTRA_PIECE_STD,
        "intra_piece_n_pieces": INTRA_PIECE_N_PIECES,
        "intra_piece_n_recordings": INTRA_PIECE_N_RECORDINGS,
        "renditions": list(RENDITIONS),
    }
