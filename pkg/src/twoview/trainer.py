"""Paired-view training loop: combined loss, Adam, early stopping, checkpoints.

One step stacks both views of a batch into a single 2N-image forward pass
through the shared encoder, applies weighted cross-entropy to all 2N
predictions plus the consistency penalty to the N representation pairs, and
takes one Adam step on `ce + alpha * consistency`.

Everything downstream of (config, seed) is bitwise deterministic: parameter
init, the per-epoch shuffle, and every augmentation draw are keyed by
derived sub-seeds, and evaluation consumes no randomness at all.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .augment import STRATEGY_KINDS, AugStrategy, RngStream, derive_seed, make_pair
from .losses import PENALTY_KINDS, LossConfig, batch_ce, batch_consistency, total_loss
from .metrics import MetricReport, ScoredSet, compute_report
from .model import (
    ClassifierParams,
    EncoderParams,
    ModelConfig,
    StageParams,
    classifier_forward,
    encoder_forward,
    init_params,
    model_probs,
    named_parameters,
)
from .ndgrad import EPS_NORM, Adam, ContractError, DegenerateVectorError, Tensor


class CheckpointError(Exception):
    """A checkpoint file failed to parse or verify; the message says where."""


MAGIC = b"CORECKPT"
FORMAT_VERSION = 1

_FNV_BASIS = 0xCBF29CE484222325
_FNV_PRIME = 0x100000001B3
_U64 = 0xFFFFFFFFFFFFFFFF


def fnv1a(data: bytes) -> int:
    """64-bit FNV-1a over the byte string."""
    h = _FNV_BASIS
    for b in data:
        h = ((h ^ b) * _FNV_PRIME) & _U64
    return h


@dataclass(frozen=True)
class TrainConfig:
    pairs_per_batch: int = 32
    max_epochs: int = 30
    patience: int = 5
    lr: float = 2e-4
    alpha: float = 1.0
    penalty: str = "cos"
    aug: str = "raaug"
    w_real: float = 4.0
    w_fake: float = 1.0
    seed: int = 0
    model: ModelConfig = field(default_factory=ModelConfig)

    def __post_init__(self):
        if not isinstance(self.pairs_per_batch, int) or self.pairs_per_batch < 1:
            raise ContractError(f"pairs_per_batch must be >= 1, got {self.pairs_per_batch}")
        if not isinstance(self.max_epochs, int) or self.max_epochs < 1:
            raise ContractError(f"max_epochs must be >= 1, got {self.max_epochs}")
        if not isinstance(self.patience, int) or self.patience < 1:
            raise ContractError(f"patience must be >= 1, got {self.patience}")
        if not self.lr > 0:
            raise ContractError(f"lr must be > 0, got {self.lr}")
        if self.alpha < 0:
            raise ContractError(f"alpha must be >= 0, got {self.alpha}")
        if self.penalty not in PENALTY_KINDS:
            raise ContractError(f"penalty must be one of {PENALTY_KINDS}, got {self.penalty!r}")
        if self.aug not in STRATEGY_KINDS:
            raise ContractError(f"aug must be one of {STRATEGY_KINDS}, got {self.aug!r}")
        if self.w_real <= 0 or self.w_fake <= 0:
            raise ContractError(f"class weights must be positive, got ({self.w_real}, {self.w_fake})")
        if not isinstance(self.seed, int) or not 0 <= self.seed < 2**64:
            raise ContractError(f"seed must be an unsigned 64-bit int, got {self.seed!r}")

    def loss_config(self) -> LossConfig:
        return LossConfig(
            penalty=self.penalty, alpha=self.alpha, w_real=self.w_real, w_fake=self.w_fake
        )


@dataclass(frozen=True)
class EpochRecord:
    epoch: int  # 1-based
    ce_loss: float  # mean per pair over the epoch's full batches
    consistency_loss: float  # mean per pair; exactly 0.0 when alpha == 0
    val_auc: float
    seconds: float


@dataclass
class TrainHistory:
    epochs: list[EpochRecord] = field(default_factory=list)

    def to_csv(self, path, deterministic_seconds: bool = True) -> None:
        """Write the per-epoch log.

        Wall time is an observation, not a function of the seed, so by
        default the seconds column is written as 0.0 to keep the exported
        file a pure function of (config, seed); the in-memory records keep
        the measured values.
        """
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["epoch", "ce_loss", "consistency_loss", "val_auc", "seconds"])
            for r in self.epochs:
                seconds = 0.0 if deterministic_seconds else r.seconds
                writer.writerow(
                    [r.epoch, repr(r.ce_loss), repr(r.consistency_loss), repr(r.val_auc), repr(seconds)]
                )


class EarlyStopper:
    """Maximize a metric with strict-improvement patience counting."""

    def __init__(self, patience: int):
        if not isinstance(patience, int) or patience < 1:
            raise ContractError(f"patience must be >= 1, got {patience}")
        self.patience = patience
        self.best = -np.inf
        self.best_epoch = 0
        self.stale = 0

    def update(self, epoch: int, value: float) -> bool:
        """Record one epoch's metric; True iff it strictly improved the best."""
        if value > self.best:
            self.best = value
            self.best_epoch = epoch
            self.stale = 0
            return True
        self.stale += 1
        return False

    @property
    def should_stop(self) -> bool:
        return self.stale >= self.patience


# -- checkpoints ----------------------------------------------------------------


@dataclass
class Checkpoint:
    config: ModelConfig
    params: dict[str, np.ndarray]
    adam_m: dict[str, np.ndarray]
    adam_v: dict[str, np.ndarray]
    adam_t: int
    lr: float
    beta1: float
    beta2: float
    eps: float
    epoch: int
    best_val_auc: float
    seed: int


def _expected_param_shapes(config: ModelConfig) -> dict[str, tuple[int, ...]]:
    c0 = config.channels[0]
    shapes: dict[str, tuple[int, ...]] = {
        "encoder/stem/weight": (c0, 3, 3, 3),
        "encoder/stem/bias": (c0,),
    }
    for i, (c_in, c_out) in enumerate(zip(config.channels, config.channels[1:])):
        shapes[f"encoder/stage{i}/depthwise"] = (c_in, 3, 3)
        shapes[f"encoder/stage{i}/pointwise"] = (c_out, c_in)
        shapes[f"encoder/stage{i}/bias"] = (c_out,)
    shapes["classifier/weight"] = (2, config.d)
    shapes["classifier/bias"] = (2,)
    return shapes


def snapshot_checkpoint(
    enc: EncoderParams,
    cls: ClassifierParams,
    opt: Adam,
    config: ModelConfig,
    epoch: int,
    best_val_auc: float,
    seed: int,
) -> Checkpoint:
    """Deep-copy the current model and optimizer state."""
    names = named_parameters(enc, cls)
    return Checkpoint(
        config=config,
        params={name: p.data.copy() for name, p in names.items()},
        adam_m={name: opt.m[name].copy() for name in names},
        adam_v={name: opt.v[name].copy() for name in names},
        adam_t=opt.t,
        lr=opt.lr,
        beta1=opt.beta1,
        beta2=opt.beta2,
        eps=opt.eps,
        epoch=epoch,
        best_val_auc=float(best_val_auc),
        seed=int(seed),
    )


def params_from_checkpoint(ckpt: Checkpoint) -> tuple[EncoderParams, ClassifierParams]:
    """Rebuild live (trainable) parameter structures from stored arrays."""

    def t(name):
        return Tensor(ckpt.params[name].copy(), requires_grad=True)

    enc = EncoderParams(stem_weight=t("encoder/stem/weight"), stem_bias=t("encoder/stem/bias"))
    for i in range(ckpt.config.n_stages):
        enc.stages.append(
            StageParams(
                depthwise=t(f"encoder/stage{i}/depthwise"),
                pointwise=t(f"encoder/stage{i}/pointwise"),
                bias=t(f"encoder/stage{i}/bias"),
            )
        )
    cls = ClassifierParams(weight=t("classifier/weight"), bias=t("classifier/bias"))
    return enc, cls


def optimizer_from_checkpoint(ckpt: Checkpoint, params: dict[str, Tensor]) -> Adam:
    opt = Adam(params, lr=ckpt.lr, beta1=ckpt.beta1, beta2=ckpt.beta2, eps=ckpt.eps)
    opt.t = ckpt.adam_t
    opt.m = {name: ckpt.adam_m[name].copy() for name in params}
    opt.v = {name: ckpt.adam_v[name].copy() for name in params}
    return opt


def _tensor_table(ckpt: Checkpoint) -> dict[str, np.ndarray]:
    """Flatten the checkpoint into the named-tensor table the format stores.

    Scalar metadata rides along as rank-1 float64 tensors; the seed is split
    into 32-bit halves because a float64 cannot hold every u64 exactly.
    """
    table: dict[str, np.ndarray] = {
        "config/input_size": np.array([ckpt.config.input_size], dtype=np.float64),
        "config/channels": np.array(ckpt.config.channels, dtype=np.float64),
        "config/num_classes": np.array([ckpt.config.num_classes], dtype=np.float64),
    }
    for name, arr in ckpt.params.items():
        table[name] = arr
    table["adam/t"] = np.array([ckpt.adam_t], dtype=np.float64)
    table["adam/lr"] = np.array([ckpt.lr], dtype=np.float64)
    table["adam/beta1"] = np.array([ckpt.beta1], dtype=np.float64)
    table["adam/beta2"] = np.array([ckpt.beta2], dtype=np.float64)
    table["adam/eps"] = np.array([ckpt.eps], dtype=np.float64)
    for name, arr in ckpt.adam_m.items():
        table[f"adam/m/{name}"] = arr
    for name, arr in ckpt.adam_v.items():
        table[f"adam/v/{name}"] = arr
    table["meta/epoch"] = np.array([ckpt.epoch], dtype=np.float64)
    table["meta/best_val_auc"] = np.array([ckpt.best_val_auc], dtype=np.float64)
    table["meta/seed"] = np.array(
        [ckpt.seed >> 32, ckpt.seed & 0xFFFFFFFF], dtype=np.float64
    )
    return table


def save_checkpoint(path, ckpt: Checkpoint) -> None:
    """Binary named-tensor container with a trailing integrity checksum."""
    table = _tensor_table(ckpt)
    body = bytearray()
    body += MAGIC
    body += FORMAT_VERSION.to_bytes(4, "little")
    body += len(table).to_bytes(4, "little")
    for name, arr in table.items():
        name_b = name.encode("utf-8")
        arr = np.ascontiguousarray(arr, dtype=np.float64)
        body += len(name_b).to_bytes(2, "little")
        body += name_b
        body += arr.ndim.to_bytes(1, "little")
        for dim in arr.shape:
            body += int(dim).to_bytes(4, "little")
        body += arr.astype("<f8", copy=False).tobytes()
    body += fnv1a(bytes(body)).to_bytes(8, "little")
    Path(path).write_bytes(bytes(body))


class _Reader:
    def __init__(self, data: bytes, path):
        self.data = data
        self.off = 0
        self.path = path

    def take(self, n: int, what: str) -> bytes:
        if self.off + n > len(self.data):
            raise CheckpointError(f"{self.path}: truncated at offset {self.off} while reading {what}")
        chunk = self.data[self.off : self.off + n]
        self.off += n
        return chunk

    def u(self, n: int, what: str) -> int:
        return int.from_bytes(self.take(n, what), "little")


def _parse_tensor_table(data: bytes, path) -> dict[str, np.ndarray]:
    if len(data) < len(MAGIC) + 4 + 4 + 8:
        raise CheckpointError(f"{path}: truncated at offset {len(data)}: shorter than a valid header")
    if data[: len(MAGIC)] != MAGIC:
        raise CheckpointError(f"{path}: bad magic {data[:len(MAGIC)]!r}, expected {MAGIC!r}")
    body, stored = data[:-8], int.from_bytes(data[-8:], "little")

    reader = _Reader(body, path)
    reader.take(len(MAGIC), "magic")
    version = reader.u(4, "version")
    if version != FORMAT_VERSION:
        raise CheckpointError(f"{path}: unsupported format version {version}, expected {FORMAT_VERSION}")
    count = reader.u(4, "tensor count")
    table: dict[str, np.ndarray] = {}
    for _ in range(count):
        name_len = reader.u(2, "name length")
        try:
            name = reader.take(name_len, "tensor name").decode("utf-8")
        except UnicodeDecodeError as exc:
            raise CheckpointError(f"{path}: tensor name is not valid UTF-8") from exc
        if name in table:
            raise CheckpointError(f"{path}: duplicate tensor {name!r}")
        rank = reader.u(1, f"rank of {name}")
        if rank < 1:
            raise CheckpointError(f"{path}: tensor {name!r} has rank 0")
        dims = tuple(reader.u(4, f"dim {i} of {name}") for i in range(rank))
        if any(d < 1 for d in dims):
            raise CheckpointError(f"{path}: tensor {name!r} has a zero dimension")
        n_values = int(np.prod(dims))
        payload = reader.take(8 * n_values, f"payload of {name}")
        table[name] = np.frombuffer(payload, dtype="<f8").reshape(dims).astype(np.float64)
    if reader.off != len(body):
        raise CheckpointError(f"{path}: {len(body) - reader.off} trailing bytes after the tensor table")

    actual = fnv1a(body)
    if actual != stored:
        raise CheckpointError(
            f"{path}: checksum mismatch (stored {stored:#018x}, computed {actual:#018x})"
        )
    return table


def load_checkpoint(path) -> Checkpoint:
    path = Path(path)
    if not path.exists():
        raise CheckpointError(f"{path}: no such file")
    table = _parse_tensor_table(path.read_bytes(), path)

    def pull(name, what="tensor"):
        if name not in table:
            raise CheckpointError(f"{path}: missing {what} {name!r}")
        return table.pop(name)

    config = ModelConfig(
        input_size=int(pull("config/input_size", "config entry")[0]),
        channels=tuple(int(c) for c in pull("config/channels", "config entry")),
        num_classes=int(pull("config/num_classes", "config entry")[0]),
    )
    expected = _expected_param_shapes(config)
    params: dict[str, np.ndarray] = {}
    for name, shape in expected.items():
        arr = pull(name, "parameter")
        if arr.shape != shape:
            raise CheckpointError(f"{path}: parameter {name!r} has shape {arr.shape}, expected {shape}")
        params[name] = arr
    adam_t = int(pull("adam/t", "optimizer entry")[0])
    lr = float(pull("adam/lr", "optimizer entry")[0])
    beta1 = float(pull("adam/beta1", "optimizer entry")[0])
    beta2 = float(pull("adam/beta2", "optimizer entry")[0])
    eps = float(pull("adam/eps", "optimizer entry")[0])
    adam_m, adam_v = {}, {}
    for name, shape in expected.items():
        m = pull(f"adam/m/{name}", "optimizer moment")
        v = pull(f"adam/v/{name}", "optimizer moment")
        if m.shape != shape or v.shape != shape:
            raise CheckpointError(f"{path}: optimizer moments for {name!r} have the wrong shape")
        adam_m[name], adam_v[name] = m, v
    epoch = int(pull("meta/epoch", "metadata")[0])
    best_val_auc = float(pull("meta/best_val_auc", "metadata")[0])
    seed_halves = pull("meta/seed", "metadata")
    if seed_halves.shape != (2,):
        raise CheckpointError(f"{path}: meta/seed must hold two 32-bit halves")
    seed = (int(seed_halves[0]) << 32) | int(seed_halves[1])
    if table:
        raise CheckpointError(f"{path}: unexpected tensors {sorted(table)}")
    return Checkpoint(
        config=config,
        params=params,
        adam_m=adam_m,
        adam_v=adam_v,
        adam_t=adam_t,
        lr=lr,
        beta1=beta1,
        beta2=beta2,
        eps=eps,
        epoch=epoch,
        best_val_auc=best_val_auc,
        seed=seed,
    )


# -- the loop itself ------------------------------------------------------------


def _stack_views(pairs) -> np.ndarray:
    """[2N,3,S,S]: view-1 rows first, then view-2 rows, same pair order."""
    x1 = np.stack([p.x1 for p in pairs]).transpose(0, 3, 1, 2)
    x2 = np.stack([p.x2 for p in pairs]).transpose(0, 3, 1, 2)
    return np.concatenate([x1, x2], axis=0)


def _check_representations(reps: np.ndarray, pairs) -> None:
    n = len(pairs)
    norms = np.linalg.norm(reps, axis=1)
    bad = np.flatnonzero(norms <= EPS_NORM)
    if bad.size:
        i = int(bad[0])
        pair = pairs[i % n]
        raise DegenerateVectorError(
            f"sample {pair.source_id!r} (view {i // n + 1}) produced an all-zero representation"
        )


def train_step(
    pairs, enc: EncoderParams, cls: ClassifierParams, opt: Adam, loss_cfg: LossConfig
) -> tuple[float, float]:
    """One optimizer step on a batch of view pairs; returns (ce, consistency) sums."""
    if not pairs:
        raise ContractError("train_step needs a non-empty batch")
    n = len(pairs)
    batch = Tensor(_stack_views(pairs))
    reps, _ = encoder_forward(batch, enc)
    _check_representations(reps.data, pairs)
    probs = classifier_forward(reps, cls)
    labels = np.array([p.label for p in pairs])

    ce = batch_ce(probs[:n], probs[n:], labels, (loss_cfg.w_real, loss_cfg.w_fake))
    if loss_cfg.alpha > 0 and loss_cfg.penalty != "none":
        consistency = batch_consistency(reps[:n], reps[n:], loss_cfg.penalty)
        loss = total_loss(ce, consistency, loss_cfg.alpha)
        c_value = consistency.item()
    else:
        # alpha = 0 must be bit-identical to a CE-only trainer, so the
        # consistency graph is never built
        loss = ce
        c_value = 0.0
    opt.zero_grad()
    loss.backward()
    opt.step()
    return ce.item(), c_value


def _labels_of(samples) -> np.ndarray:
    return np.array([s.label for s in samples])


def _require_both_classes(samples, name: str) -> None:
    labels = _labels_of(samples)
    if not samples or (labels == 0).sum() == 0 or (labels == 1).sum() == 0:
        raise ContractError(f"{name} split needs samples of both classes")


def train(config: TrainConfig, dataset, on_epoch=None) -> tuple[Checkpoint, TrainHistory]:
    """Full run: epoch loop, validation-AUC early stopping, best-checkpoint pick.

    `dataset` provides .train and .val sample lists.  Returns the checkpoint
    of the epoch with the highest validation AUC (strict-improvement
    comparison, patience from the config) and the per-epoch history.
    """
    train_samples = dataset.train
    _require_both_classes(train_samples, "train")
    _require_both_classes(dataset.val, "val")
    n = config.pairs_per_batch
    n_batches = len(train_samples) // n
    if n_batches == 0:
        raise ContractError(
            f"pairs_per_batch {n} exceeds the training split size {len(train_samples)}"
        )

    enc, cls = init_params(config.model, derive_seed(config.seed, "init"))
    opt = Adam(named_parameters(enc, cls), lr=config.lr)
    loss_cfg = config.loss_config()
    strategy = AugStrategy(kind=config.aug)
    stopper = EarlyStopper(config.patience)
    shuffle_seed = derive_seed(config.seed, "shuffle")
    aug_seed = derive_seed(config.seed, "aug")

    history = TrainHistory()
    best: Checkpoint | None = None
    for epoch in range(1, config.max_epochs + 1):
        t0 = time.perf_counter()
        perm = RngStream(shuffle_seed, epoch, 0, 0).generator().permutation(len(train_samples))
        ce_total = 0.0
        c_total = 0.0
        for b in range(n_batches):  # the last partial batch is dropped
            pairs = [
                make_pair(
                    train_samples[i].image,
                    train_samples[i].label,
                    strategy,
                    RngStream(aug_seed, epoch, int(i), 0),
                    RngStream(aug_seed, epoch, int(i), 1),
                    source_id=train_samples[i].source_id,
                )
                for i in perm[b * n : (b + 1) * n]
            ]
            ce, consistency = train_step(pairs, enc, cls, opt, loss_cfg)
            ce_total += ce
            c_total += consistency
        val_auc = evaluate(enc, cls, dataset.val).auc
        record = EpochRecord(
            epoch=epoch,
            ce_loss=ce_total / (n_batches * n),
            consistency_loss=c_total / (n_batches * n),
            val_auc=val_auc,
            seconds=time.perf_counter() - t0,
        )
        history.epochs.append(record)
        if on_epoch is not None:
            on_epoch(record)
        if stopper.update(epoch, val_auc):
            best = snapshot_checkpoint(enc, cls, opt, config.model, epoch, val_auc, config.seed)
        if stopper.should_stop:
            break
    assert best is not None  # epoch 1 always improves on -inf
    return best, history


def score_samples(
    enc: EncoderParams, cls: ClassifierParams, samples, batch_size: int = 64
) -> ScoredSet:
    """Un-augmented single-view inference: one P(fake) score per sample."""
    if not samples:
        raise ContractError("score_samples needs a non-empty sample list")
    scores = []
    for start in range(0, len(samples), batch_size):
        chunk = samples[start : start + batch_size]
        x = np.stack([s.image for s in chunk]).transpose(0, 3, 1, 2)
        scores.append(model_probs(Tensor(x), enc, cls).data)
    return ScoredSet(scores=np.concatenate(scores), labels=_labels_of(samples))


def evaluate(enc: EncoderParams, cls: ClassifierParams, samples, batch_size: int = 64) -> MetricReport:
    return compute_report(score_samples(enc, cls, samples, batch_size))


def cross_view_distance(
    enc: EncoderParams, samples, strategy: AugStrategy, seed: int, batch_size: int = 64
) -> float:
    """Mean cosine-consistency penalty between two fresh views of each sample.

    The quantity the consistency term minimizes, measured on held-out data:
    one addressed view pair per sample, (1 - cos)^2 between the two
    representations, averaged over the split.
    """
    if not samples:
        raise ContractError("cross_view_distance needs a non-empty sample list")
    total = 0.0
    for start in range(0, len(samples), batch_size):
        chunk = samples[start : start + batch_size]
        pairs = [
            make_pair(
                s.image,
                s.label,
                strategy,
                RngStream(seed, 0, start + j, 0),
                RngStream(seed, 0, start + j, 1),
                source_id=s.source_id,
            )
            for j, s in enumerate(chunk)
        ]
        reps, _ = encoder_forward(Tensor(_stack_views(pairs)), enc)
        _check_representations(reps.data, pairs)
        m = len(chunk)
        f1, f2 = reps.data[:m], reps.data[m:]
        n1 = f1 / np.linalg.norm(f1, axis=1, keepdims=True)
        n2 = f2 / np.linalg.norm(f2, axis=1, keepdims=True)
        dots = (n1 * n2).sum(axis=1)
        total += float(((1.0 - dots) ** 2).sum())
    return total / len(samples)
