"""Two-layer MLP regressor with hand-rolled backprop and Adam.

Everything here runs in float64 and consumes randomness only through the
seeded generators in `rng`, so a training run is a pure function of
(split, features, labels, config). That buys two things: finite-difference
gradient checks that actually pass at tight tolerances, and bit-identical
retraining across runs and machines.

The model is ŷ = W2 · ReLU(mask ⊙ (W1 z + b1)) + b2 with inverted dropout
(mask entries are 0 or 1/(1−p)) and unconstrained outputs.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from . import metrics
from .dataset import PairKey, SplitPlan
from .errors import (
    ContractError,
    CorruptionError,
    DivergenceError,
    FormatError,
    InsufficientBatchError,
    StoreIOError,
)
from .pooling import AttentionPoolParams, attention_pool, attention_pool_backward
from .rng import SplitMix64, derive_seed

CCC_EPSILON = 1e-8

LOSS_NAMES = ("mse", "ccc", "hybrid")


# ---------------------------------------------------------------------------
# parameters and optimizer state


@dataclass(eq=False)
class RegressorParams:
    """Weights of the 2-layer regressor. Arrays are float64 and mutable."""

    W1: np.ndarray  # (hidden, in)
    b1: np.ndarray  # (hidden,)
    W2: np.ndarray  # (out, hidden)
    b2: np.ndarray  # (out,)

    @property
    def n_in(self) -> int:
        return self.W1.shape[1]

    @property
    def hidden(self) -> int:
        return self.W1.shape[0]

    @property
    def out(self) -> int:
        return self.W2.shape[0]

    def validate(self) -> None:
        if self.W1.shape != (self.hidden, self.n_in):
            raise ContractError("W1 shape inconsistent")
        if self.b1.shape != (self.hidden,):
            raise ContractError(f"b1 shape {self.b1.shape} != ({self.hidden},)")
        if self.W2.shape != (self.out, self.hidden):
            raise ContractError(
                f"W2 shape {self.W2.shape} incompatible with hidden={self.hidden}"
            )
        if self.b2.shape != (self.out,):
            raise ContractError(f"b2 shape {self.b2.shape} != ({self.out},)")
        for name, block in self.blocks().items():
            if not np.all(np.isfinite(block)):
                raise ContractError(f"non-finite values in parameter block {name}")

    def blocks(self) -> dict[str, np.ndarray]:
        """Named parameter blocks in the fixed checkpoint order."""
        return {"W1": self.W1, "b1": self.b1, "W2": self.W2, "b2": self.b2}

    def copy(self) -> "RegressorParams":
        return RegressorParams(
            self.W1.copy(), self.b1.copy(), self.W2.copy(), self.b2.copy()
        )

    @classmethod
    def init(
        cls, n_in: int, hidden: int, out: int, seed: int
    ) -> "RegressorParams":
        """Seeded uniform init in ±sqrt(6/fan_in) per layer; biases zero.

        Draw order is W1 row-major then W2 row-major from a single
        SplitMix64 stream, so the layout is reproducible from the seed
        alone in any implementation of the same generator.
        """
        if n_in < 1 or hidden < 1 or out < 1:
            raise ContractError(
                f"invalid regressor geometry in={n_in} hidden={hidden} out={out}"
            )
        gen = SplitMix64(seed)
        limit1 = math.sqrt(6.0 / n_in)
        W1 = (gen.uniform_array(hidden * n_in) * 2.0 - 1.0).reshape(hidden, n_in) * limit1
        limit2 = math.sqrt(6.0 / hidden)
        W2 = (gen.uniform_array(out * hidden) * 2.0 - 1.0).reshape(out, hidden) * limit2
        return cls(W1, np.zeros(hidden), W2, np.zeros(out))


@dataclass(eq=False)
class AdamState:
    """Adam moments over a named block set, plus the optimizer constants."""

    first_moments: dict[str, np.ndarray]
    second_moments: dict[str, np.ndarray]
    step_count: int = 0
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    weight_decay: float = 1e-5

    @classmethod
    def for_blocks(cls, blocks: Mapping[str, np.ndarray], **kwargs) -> "AdamState":
        return cls(
            first_moments={k: np.zeros_like(v) for k, v in blocks.items()},
            second_moments={k: np.zeros_like(v) for k, v in blocks.items()},
            **kwargs,
        )


@dataclass
class TrainConfig:
    max_epochs: int = 200
    batch_size: int = 64
    patience: int = 15
    dropout_p: float = 0.3
    loss: str = "mse"
    loss_lambda: float = 0.5  # hybrid mix: lambda*mse + (1-lambda)*ccc
    seed: int = 42
    hidden: int = 512
    lr: float = 1e-4
    weight_decay: float = 1e-5
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8

    def validate(self) -> None:
        if self.max_epochs < 1:
            raise ContractError(f"max_epochs must be >= 1, got {self.max_epochs}")
        if self.batch_size < 1:
            raise ContractError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.patience < 1:
            raise ContractError(f"patience must be >= 1, got {self.patience}")
        if not 0.0 <= self.dropout_p < 1.0:
            raise ContractError(f"dropout_p must be in [0, 1), got {self.dropout_p}")
        if self.loss not in LOSS_NAMES:
            raise ContractError(f"unknown loss {self.loss!r}, expected one of {LOSS_NAMES}")
        if not 0.0 <= self.loss_lambda <= 1.0:
            raise ContractError(f"loss_lambda must be in [0, 1], got {self.loss_lambda}")
        if self.hidden < 1:
            raise ContractError(f"hidden must be >= 1, got {self.hidden}")

    def to_dict(self) -> dict:
        return {
            "max_epochs": self.max_epochs,
            "batch_size": self.batch_size,
            "patience": self.patience,
            "dropout_p": self.dropout_p,
            "loss": self.loss,
            "loss_lambda": self.loss_lambda,
            "seed": self.seed,
            "hidden": self.hidden,
            "lr": self.lr,
            "weight_decay": self.weight_decay,
            "beta1": self.beta1,
            "beta2": self.beta2,
            "epsilon": self.epsilon,
        }

    @classmethod
    def from_dict(cls, raw: Mapping) -> "TrainConfig":
        cfg = cls(**{k: raw[k] for k in raw})
        cfg.validate()
        return cfg


# ---------------------------------------------------------------------------
# forward / backward


@dataclass(eq=False)
class ForwardCache:
    inputs: np.ndarray       # (B, in)
    masked_pre: np.ndarray   # (B, hidden), after dropout mask, before ReLU
    hidden_act: np.ndarray   # (B, hidden)
    dropout_mask: np.ndarray | None
    params: RegressorParams
    single: bool             # caller passed a 1-D vector


def forward(
    params: RegressorParams,
    z: np.ndarray,
    dropout_mask: np.ndarray | None = None,
) -> tuple[np.ndarray, ForwardCache]:
    """ŷ = W2 · ReLU(mask ⊙ (W1 z + b1)) + b2; accepts one vector or a batch."""
    z = np.asarray(z, dtype=np.float64)
    single = z.ndim == 1
    if single:
        z = z[None, :]
    if z.ndim != 2 or z.shape[1] != params.n_in:
        raise ContractError(
            f"input shape {z.shape} incompatible with in-dim {params.n_in}"
        )
    pre = z @ params.W1.T + params.b1
    if dropout_mask is not None:
        mask = np.asarray(dropout_mask, dtype=np.float64)
        if mask.shape != (params.hidden,):
            raise ContractError(
                f"dropout mask shape {mask.shape} != ({params.hidden},)"
            )
        masked = pre * mask
    else:
        mask = None
        masked = pre
    act = np.maximum(masked, 0.0)
    pred = act @ params.W2.T + params.b2
    cache = ForwardCache(z, masked, act, mask, params, single)
    return (pred[0] if single else pred), cache


def backward(
    cache: ForwardCache, loss_grad: np.ndarray
) -> tuple[dict[str, np.ndarray], np.ndarray]:
    """Exact gradients for every parameter block, plus the input gradient.

    The input gradient is what a learned pooling layer upstream consumes;
    for fixed pooled features it is simply ignored.
    """
    g = np.asarray(loss_grad, dtype=np.float64)
    if g.ndim == 1:
        g = g[None, :]
    p = cache.params
    if g.shape != (cache.inputs.shape[0], p.out):
        raise ContractError(
            f"loss gradient shape {loss_grad.shape} does not match cached batch "
            f"({cache.inputs.shape[0]}, {p.out})"
        )
    grad_W2 = g.T @ cache.hidden_act
    grad_b2 = g.sum(axis=0)
    d_act = g @ p.W2
    # ReLU subgradient is 0 at exactly 0 (strict inequality).
    d_masked = d_act * (cache.masked_pre > 0.0)
    d_pre = d_masked * cache.dropout_mask if cache.dropout_mask is not None else d_masked
    grad_W1 = d_pre.T @ cache.inputs
    grad_b1 = d_pre.sum(axis=0)
    grad_z = d_pre @ p.W1
    grads = {"W1": grad_W1, "b1": grad_b1, "W2": grad_W2, "b2": grad_b2}
    return grads, (grad_z[0] if cache.single else grad_z)


def make_dropout_mask(gen: SplitMix64, hidden: int, p: float) -> np.ndarray:
    """Inverted dropout mask: 0 with probability p, else 1/(1−p)."""
    u = gen.uniform_array(hidden)
    return np.where(u >= p, 1.0 / (1.0 - p), 0.0)


# ---------------------------------------------------------------------------
# losses


def _loss_pair(pred, target) -> tuple[np.ndarray, np.ndarray]:
    p = np.asarray(pred, dtype=np.float64)
    t = np.asarray(target, dtype=np.float64)
    if p.ndim == 1:
        p = p[None, :]
    if t.ndim == 1:
        t = t[None, :]
    if p.shape != t.shape:
        raise ContractError(f"prediction shape {p.shape} != target shape {t.shape}")
    if p.shape[0] == 0:
        raise ContractError("empty batch")
    return p, t


def mse_loss(pred, target) -> tuple[float, np.ndarray]:
    """Mean over the batch of the per-sample mean squared error across dims."""
    p, t = _loss_pair(pred, target)
    n, d = p.shape
    diff = p - t
    loss = float((diff * diff).sum() / (n * d))
    grad = 2.0 * diff / (n * d)
    return loss, grad


def ccc_loss(pred, target) -> tuple[float, np.ndarray]:
    """Concordance loss (1/D) Σ_d (1 − CCC_d) with population moments.

    CCC_d = 2·cov / (var_pred + var_target + (mean gap)² + ε); the gradient
    is the exact quotient-rule derivative, checked against central
    differences in the tests.
    """
    p, t = _loss_pair(pred, target)
    n, d = p.shape
    if n < 2:
        raise InsufficientBatchError(f"ccc_loss needs a batch of >= 2, got {n}")
    mp = p.mean(axis=0)
    mt = t.mean(axis=0)
    cp = p - mp
    ct = t - mt
    cov = (cp * ct).sum(axis=0) / n
    var_p = (cp * cp).sum(axis=0) / n
    var_t = (ct * ct).sum(axis=0) / n
    gap = mp - mt
    denom = var_p + var_t + gap * gap + CCC_EPSILON
    ccc = 2.0 * cov / denom
    loss = float((1.0 - ccc).mean())
    # dCCC/dp_id via quotient rule; dcov/dp = (t-mt)/n, dvar_p/dp = 2(p-mp)/n,
    # d(gap²)/dp = 2·gap/n.
    d_num = 2.0 * ct / n
    d_den = 2.0 * cp / n + 2.0 * gap / n
    d_ccc = (d_num * denom - 2.0 * cov * d_den) / (denom * denom)
    grad = -d_ccc / d
    return loss, grad


def hybrid_loss(pred, target, lam: float) -> tuple[float, np.ndarray]:
    if not 0.0 <= lam <= 1.0:
        raise ContractError(f"lambda must be in [0, 1], got {lam}")
    if lam == 1.0:
        return mse_loss(pred, target)
    if lam == 0.0:
        return ccc_loss(pred, target)
    l_m, g_m = mse_loss(pred, target)
    l_c, g_c = ccc_loss(pred, target)
    return lam * l_m + (1.0 - lam) * l_c, lam * g_m + (1.0 - lam) * g_c


def loss_function(config: TrainConfig) -> Callable[[np.ndarray, np.ndarray], tuple[float, np.ndarray]]:
    if config.loss == "mse":
        return mse_loss
    if config.loss == "ccc":
        return ccc_loss
    if config.loss == "hybrid":
        lam = config.loss_lambda
        return lambda p, t: hybrid_loss(p, t, lam)
    raise ContractError(f"unknown loss {config.loss!r}")


# ---------------------------------------------------------------------------
# optimizer


def adam_step(
    blocks: Mapping[str, np.ndarray],
    grads: Mapping[str, np.ndarray],
    state: AdamState,
) -> None:
    """One Adam update, in place.

    Decoupled weight decay shrinks the parameters first (it never enters
    the moment estimates), then the bias-corrected moment update applies.
    """
    for name in blocks:
        if name not in grads:
            raise ContractError(f"missing gradient for block {name}")
        if not np.all(np.isfinite(grads[name])):
            raise DivergenceError(f"non-finite gradient in block {name}")
    state.step_count += 1
    t = state.step_count
    c1 = 1.0 - state.beta1**t
    c2 = 1.0 - state.beta2**t
    for name, param in blocks.items():
        g = grads[name]
        if state.weight_decay:
            param *= 1.0 - state.lr * state.weight_decay
        m = state.first_moments[name]
        v = state.second_moments[name]
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * (g * g)
        param -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.epsilon)


# ---------------------------------------------------------------------------
# training loops


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    validation_r2: float


@dataclass
class TrainLog:
    epochs: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    best_validation_r2: float = float("-inf")
    stopped_early: bool = False

    def to_dict(self) -> dict:
        return {
            "epochs": [
                {"epoch": e.epoch, "train_loss": e.train_loss, "validation_r2": e.validation_r2}
                for e in self.epochs
            ],
            "best_epoch": self.best_epoch,
            "best_validation_r2": self.best_validation_r2,
            "stopped_early": self.stopped_early,
        }


def _feature_vector(value) -> np.ndarray:
    values = getattr(value, "values", value)
    return np.asarray(values, dtype=np.float64)


def _gather(
    pairs: Sequence[PairKey],
    features: Mapping[PairKey, object],
    labels: Mapping[PairKey, object],
    role: str,
) -> tuple[np.ndarray, np.ndarray]:
    missing = [p for p in pairs if p not in features]
    if missing:
        raise ContractError(f"{role} features missing for {len(missing)} pairs, first {missing[0]}")
    missing = [p for p in pairs if p not in labels]
    if missing:
        raise ContractError(f"{role} labels missing for {len(missing)} pairs, first {missing[0]}")
    X = np.stack([_feature_vector(features[p]) for p in pairs])
    Y = np.stack([np.asarray(labels[p], dtype=np.float64) for p in pairs])
    return X, Y


def _batch_slices(n: int, batch_size: int) -> list[np.ndarray]:
    return [np.arange(start, min(start + batch_size, n)) for start in range(0, n, batch_size)]


def train(
    split: SplitPlan,
    features: Mapping[PairKey, object],
    labels: Mapping[PairKey, object],
    config: TrainConfig,
) -> tuple[RegressorParams, TrainLog]:
    """Mini-batch training with early stopping on validation mean per-dim R².

    RNG streams are derived from config.seed by label: "init" for weights,
    "shuffle" for the epoch permutations (one continuing stream), "dropout"
    for per-batch masks. Identical inputs give bit-identical parameters.
    """
    config.validate()
    if not split.train:
        raise ContractError("empty training split")
    if not split.validation:
        raise ContractError("empty validation split")
    X_train, Y_train = _gather(split.train, features, labels, "train")
    X_val, Y_val = _gather(split.validation, features, labels, "validation")

    params = RegressorParams.init(
        X_train.shape[1], config.hidden, Y_train.shape[1], derive_seed(config.seed, "init")
    )
    state = AdamState.for_blocks(
        params.blocks(),
        lr=config.lr,
        beta1=config.beta1,
        beta2=config.beta2,
        epsilon=config.epsilon,
        weight_decay=config.weight_decay,
    )
    compute_loss = loss_function(config)
    shuffle_gen = SplitMix64(derive_seed(config.seed, "shuffle"))
    dropout_gen = SplitMix64(derive_seed(config.seed, "dropout"))

    log = TrainLog()
    best = params.copy()
    epochs_since_best = 0
    n = X_train.shape[0]
    for epoch in range(1, config.max_epochs + 1):
        order = np.asarray(shuffle_gen.permutation(n), dtype=np.int64)
        epoch_loss = 0.0
        batches = _batch_slices(n, config.batch_size)
        for b, sl in enumerate(batches):
            idx = order[sl]
            mask = (
                make_dropout_mask(dropout_gen, config.hidden, config.dropout_p)
                if config.dropout_p > 0.0
                else None
            )
            pred, cache = forward(params, X_train[idx], mask)
            loss, grad = compute_loss(pred, Y_train[idx])
            if not math.isfinite(loss):
                raise DivergenceError(f"non-finite loss at epoch {epoch} batch {b}")
            grads, _ = backward(cache, grad)
            adam_step(params.blocks(), grads, state)
            epoch_loss += loss * len(idx)
        val_pred, _ = forward(params, X_val)
        val_r2 = float(metrics.r2_per_dimension(val_pred, Y_val).mean())
        log.epochs.append(EpochRecord(epoch, epoch_loss / n, val_r2))
        if val_r2 > log.best_validation_r2:
            log.best_validation_r2 = val_r2
            log.best_epoch = epoch
            best = params.copy()
            epochs_since_best = 0
        else:
            epochs_since_best += 1
            if epochs_since_best >= config.patience:
                log.stopped_early = True
                break
    return best, log


def train_attention(
    split: SplitPlan,
    sequences: Mapping[PairKey, np.ndarray],
    labels: Mapping[PairKey, object],
    config: TrainConfig,
) -> tuple[RegressorParams, AttentionPoolParams, TrainLog]:
    """Joint training of the regressor and the attention pooling scorer.

    Pooling runs inside the batch loop with the current scorer, and the
    input gradient from `backward` is routed through
    `attention_pool_backward` per sequence. Adam covers all six blocks.
    """
    config.validate()
    if not split.train:
        raise ContractError("empty training split")
    if not split.validation:
        raise ContractError("empty validation split")
    for role, pairs in (("train", split.train), ("validation", split.validation)):
        missing = [p for p in pairs if p not in sequences]
        if missing:
            raise ContractError(
                f"{role} sequences missing for {len(missing)} pairs, first {missing[0]}"
            )
    train_seqs = [np.asarray(sequences[p], dtype=np.float64) for p in split.train]
    val_seqs = [np.asarray(sequences[p], dtype=np.float64) for p in split.validation]
    Y_train = np.stack([np.asarray(labels[p], dtype=np.float64) for p in split.train])
    Y_val = np.stack([np.asarray(labels[p], dtype=np.float64) for p in split.validation])
    dim = train_seqs[0].shape[1]

    params = RegressorParams.init(
        dim, config.hidden, Y_train.shape[1], derive_seed(config.seed, "init")
    )
    attn = AttentionPoolParams.zeros(dim)
    # The scalar bias is mirrored into a 1-element array so Adam can treat
    # all six blocks uniformly; attn.score_bias is synced after each step.
    att_b = np.zeros(1)
    blocks = {**params.blocks(), "att_w": attn.score_weights, "att_b": att_b}
    state = AdamState.for_blocks(
        blocks,
        lr=config.lr,
        beta1=config.beta1,
        beta2=config.beta2,
        epsilon=config.epsilon,
        weight_decay=config.weight_decay,
    )
    compute_loss = loss_function(config)
    shuffle_gen = SplitMix64(derive_seed(config.seed, "shuffle"))
    dropout_gen = SplitMix64(derive_seed(config.seed, "dropout"))

    def pool_batch(seqs: list[np.ndarray]) -> np.ndarray:
        return np.stack([attention_pool(s, attn)[0].values for s in seqs])

    log = TrainLog()
    best_params = params.copy()
    best_attn = attn.copy()
    epochs_since_best = 0
    n = len(train_seqs)
    for epoch in range(1, config.max_epochs + 1):
        order = np.asarray(shuffle_gen.permutation(n), dtype=np.int64)
        epoch_loss = 0.0
        for b, sl in enumerate(_batch_slices(n, config.batch_size)):
            idx = order[sl]
            batch_seqs = [train_seqs[i] for i in idx]
            Z = pool_batch(batch_seqs)
            mask = (
                make_dropout_mask(dropout_gen, config.hidden, config.dropout_p)
                if config.dropout_p > 0.0
                else None
            )
            pred, cache = forward(params, Z, mask)
            loss, grad = compute_loss(pred, Y_train[idx])
            if not math.isfinite(loss):
                raise DivergenceError(f"non-finite loss at epoch {epoch} batch {b}")
            grads, z_grads = backward(cache, grad)
            gw = np.zeros(dim)
            gb = 0.0
            for seq, zg in zip(batch_seqs, z_grads):
                g_attn, _ = attention_pool_backward(seq, attn, zg)
                gw += g_attn.score_weights
                gb += g_attn.score_bias
            grads["att_w"] = gw
            grads["att_b"] = np.array([gb])
            adam_step(blocks, grads, state)
            attn.score_bias = float(att_b[0])
            epoch_loss += loss * len(idx)
        val_pred, _ = forward(params, pool_batch(val_seqs))
        val_r2 = float(metrics.r2_per_dimension(val_pred, Y_val).mean())
        log.epochs.append(EpochRecord(epoch, epoch_loss / n, val_r2))
        if val_r2 > log.best_validation_r2:
            log.best_validation_r2 = val_r2
            log.best_epoch = epoch
            best_params = params.copy()
            best_attn = attn.copy()
            epochs_since_best = 0
        else:
            epochs_since_best += 1
            if epochs_since_best >= config.patience:
                log.stopped_early = True
                break
    return best_params, best_attn, log


# ---------------------------------------------------------------------------
# checkpoints

CHECKPOINT_VERSION = 1


def save_checkpoint(
    path,
    params: RegressorParams,
    config_fingerprint: str = "",
    attention: AttentionPoolParams | None = None,
) -> None:
    """Binary checkpoint: u32 header length, JSON header, float64 LE blocks.

    Block payloads follow in exactly the order the header lists them:
    W1, b1, W2, b2, then att_w/att_b when attention pooling was trained.
    """
    params.validate()
    blocks = dict(params.blocks())
    if attention is not None:
        blocks["att_w"] = attention.score_weights
        blocks["att_b"] = np.array([attention.score_bias])
    header = {
        "version": CHECKPOINT_VERSION,
        "config_fingerprint": config_fingerprint,
        "blocks": [{"name": k, "shape": list(v.shape)} for k, v in blocks.items()],
    }
    header_bytes = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
    try:
        with open(path, "wb") as fh:
            fh.write(struct.pack("<I", len(header_bytes)))
            fh.write(header_bytes)
            for block in blocks.values():
                fh.write(np.ascontiguousarray(block, dtype="<f8").tobytes())
    except OSError as exc:
        raise StoreIOError(f"cannot write checkpoint {path}: {exc}") from exc


def load_checkpoint(path) -> tuple[RegressorParams, AttentionPoolParams | None, str]:
    try:
        with open(path, "rb") as fh:
            raw = fh.read()
    except OSError as exc:
        raise StoreIOError(f"cannot read checkpoint {path}: {exc}") from exc
    if len(raw) < 4:
        raise CorruptionError(f"checkpoint {path} truncated before header length")
    (header_len,) = struct.unpack_from("<I", raw, 0)
    if len(raw) < 4 + header_len:
        raise CorruptionError(f"checkpoint {path} truncated inside header")
    try:
        header = json.loads(raw[4 : 4 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"checkpoint {path} header is not valid JSON: {exc}") from exc
    if header.get("version") != CHECKPOINT_VERSION:
        raise FormatError(f"unsupported checkpoint version {header.get('version')!r}")
    offset = 4 + header_len
    blocks: dict[str, np.ndarray] = {}
    for entry in header["blocks"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        nbytes = count * 8
        if offset + nbytes > len(raw):
            raise CorruptionError(
                f"checkpoint {path} truncated in block {entry['name']!r}"
            )
        arr = np.frombuffer(raw[offset : offset + nbytes], dtype="<f8").reshape(shape)
        blocks[entry["name"]] = arr.astype(np.float64)
        offset += nbytes
    if offset != len(raw):
        raise CorruptionError(f"checkpoint {path} has {len(raw) - offset} trailing bytes")
    for required in ("W1", "b1", "W2", "b2"):
        if required not in blocks:
            raise FormatError(f"checkpoint {path} missing block {required!r}")
    params = RegressorParams(blocks["W1"], blocks["b1"], blocks["W2"], blocks["b2"])
    params.validate()
    attention = None
    if "att_w" in blocks:
        bias_block = blocks.get("att_b", np.zeros(1))
        attention = AttentionPoolParams(blocks["att_w"], float(bias_block.reshape(-1)[0]))
    return params, attention, header.get("config_fingerprint", "")
