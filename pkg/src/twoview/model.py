"""The shared encoder, the linear+softmax classifier, and CAM extraction.

The encoder is a small separable-conv stack: a 3x3 stem, then one
(separable conv, ReLU, 2x2 average pool) block per stage.  Global average
pooling of the final maps gives the d-dimensional representation; the same
maps feed class activation mapping, so the heatmap and the representation
describe the same evidence.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import ndgrad
from .ndgrad import (
    ContractError,
    ShapeError,
    Tensor,
    avg_pool2,
    conv2d,
    dense,
    global_avg_pool,
    relu,
    separable_conv2d,
    softmax,
)


@dataclass(frozen=True)
class ModelConfig:
    """Architecture shape: input size, channel plan, and the derived rep width d.

    channels[0] is the stem width; each later entry is one separable stage,
    and each stage halves the spatial size.  d equals the last channel count.
    """

    input_size: int = 64
    channels: tuple[int, ...] = (16, 32, 64, 128)
    num_classes: int = 2

    def __post_init__(self):
        if self.num_classes != 2:
            raise ContractError(f"binary task: num_classes is fixed at 2, got {self.num_classes}")
        if len(self.channels) < 2 or any(c < 1 for c in self.channels):
            raise ContractError(f"channel plan needs >= 2 positive entries, got {self.channels}")
        if self.input_size % (2**self.n_stages) != 0:
            raise ContractError(
                f"input size {self.input_size} must be divisible by 2^{self.n_stages}"
            )

    @property
    def n_stages(self) -> int:
        return len(self.channels) - 1

    @property
    def d(self) -> int:
        return self.channels[-1]

    @property
    def map_size(self) -> int:
        return self.input_size // (2**self.n_stages)


@dataclass
class StageParams:
    depthwise: Tensor  # [C, 3, 3]
    pointwise: Tensor  # [O, C]
    bias: Tensor  # [O]


@dataclass
class EncoderParams:
    stem_weight: Tensor  # [c0, 3, 3, 3]
    stem_bias: Tensor  # [c0]
    stages: list[StageParams] = field(default_factory=list)


@dataclass
class ClassifierParams:
    weight: Tensor  # [2, d]
    bias: Tensor  # [2]


def init_params(
    config: ModelConfig, seed: int
) -> tuple[EncoderParams, ClassifierParams]:
    """Fresh parameters, uniform in +-sqrt(1/fan_in) per layer, in a fixed draw order."""
    gen = np.random.default_rng(int(seed))

    def uniform(shape, fan_in):
        bound = np.sqrt(1.0 / fan_in)
        return Tensor(gen.uniform(-bound, bound, shape), requires_grad=True)

    c0 = config.channels[0]
    enc = EncoderParams(
        stem_weight=uniform((c0, 3, 3, 3), fan_in=3 * 3 * 3),
        stem_bias=uniform((c0,), fan_in=3 * 3 * 3),
    )
    for c_in, c_out in zip(config.channels, config.channels[1:]):
        enc.stages.append(
            StageParams(
                depthwise=uniform((c_in, 3, 3), fan_in=3 * 3),
                pointwise=uniform((c_out, c_in), fan_in=c_in),
                bias=uniform((c_out,), fan_in=c_in),
            )
        )
    cls = ClassifierParams(
        weight=uniform((2, config.d), fan_in=config.d),
        bias=uniform((2,), fan_in=config.d),
    )
    return enc, cls


def named_parameters(enc: EncoderParams, cls: ClassifierParams) -> dict[str, Tensor]:
    """Stable name -> tensor map; the order defines checkpoint layout."""
    out: dict[str, Tensor] = {
        "encoder/stem/weight": enc.stem_weight,
        "encoder/stem/bias": enc.stem_bias,
    }
    for i, stage in enumerate(enc.stages):
        out[f"encoder/stage{i}/depthwise"] = stage.depthwise
        out[f"encoder/stage{i}/pointwise"] = stage.pointwise
        out[f"encoder/stage{i}/bias"] = stage.bias
    out["classifier/weight"] = cls.weight
    out["classifier/bias"] = cls.bias
    return out


def count_parameters(enc: EncoderParams, cls: ClassifierParams) -> int:
    return sum(p.size for p in named_parameters(enc, cls).values())


def encoder_forward(batch: Tensor, enc: EncoderParams) -> tuple[Tensor, Tensor]:
    """[B,3,S,S] -> (reps [B,d], feature maps [B,d,s,s]).

    reps is exactly global_avg_pool(maps); the maps are returned for CAM.
    """
    if batch.ndim != 4 or batch.shape[1] != enc.stem_weight.shape[1]:
        raise ShapeError(
            f"encoder expects [B,{enc.stem_weight.shape[1]},S,S], got {batch.shape}"
        )
    h = relu(conv2d(batch, enc.stem_weight, enc.stem_bias, stride=1, pad=1))
    for stage in enc.stages:
        h = avg_pool2(relu(separable_conv2d(h, stage.depthwise, stage.pointwise, stage.bias)))
    return global_avg_pool(h), h


def relu_kink_margin(batch: Tensor, enc: EncoderParams) -> float:
    """Smallest |pre-activation| any relu sees on this batch.

    Finite-difference gradient checks only converge where the loss is
    locally smooth, so a probe point is valid only if this margin exceeds
    the activation shift the parameter perturbation can cause.  Mirrors
    encoder_forward's chain, re-exposing what relu consumes.
    """
    pre = conv2d(batch, enc.stem_weight, enc.stem_bias, stride=1, pad=1)
    margin = float(np.abs(pre.data).min())
    h = relu(pre)
    for stage in enc.stages:
        pre = separable_conv2d(h, stage.depthwise, stage.pointwise, stage.bias)
        margin = min(margin, float(np.abs(pre.data).min()))
        h = avg_pool2(relu(pre))
    return margin


def classifier_forward(reps: Tensor, cls: ClassifierParams) -> Tensor:
    """[B,d] -> per-sample probability of the fake class (softmax column 1)."""
    if reps.ndim != 2 or reps.shape[1] != cls.weight.shape[1]:
        raise ShapeError(f"classifier expects [B,{cls.weight.shape[1]}], got {reps.shape}")
    probs = softmax(dense(reps, cls.weight, cls.bias))
    return probs[:, 1]


def model_probs(batch: Tensor, enc: EncoderParams, cls: ClassifierParams) -> Tensor:
    reps, _ = encoder_forward(batch, enc)
    return classifier_forward(reps, cls)


def cam(feature_maps, cls: ClassifierParams, class_index: int) -> np.ndarray:
    """Classifier-weighted sum of the final maps, min-max normalized to [0,1].

    The bias plays no part; a constant weighted sum normalizes to all zeros.
    """
    maps = feature_maps.data if isinstance(feature_maps, Tensor) else np.asarray(feature_maps)
    if maps.ndim != 3:
        raise ShapeError(f"cam expects [d,s,s] feature maps, got {maps.shape}")
    if class_index not in (0, 1):
        raise ContractError(f"class index must be 0 or 1, got {class_index}")
    weights = cls.weight.data[class_index]
    if weights.shape[0] != maps.shape[0]:
        raise ShapeError(
            f"classifier width {weights.shape[0]} does not match {maps.shape[0]} channels"
        )
    heat = np.einsum("k,kij->ij", weights, maps)
    lo = heat.min()
    hi = heat.max()
    if hi - lo <= ndgrad.EPS_NORM:
        return np.zeros_like(heat)
    return (heat - lo) / (hi - lo)
