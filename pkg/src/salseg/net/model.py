"""Joint semantic + saliency networks at toy scale.

Five wirings share one backbone that reduces resolution by 8:

* ``V0_SHARED_HEADS``: two 1x1 prediction heads straight on the backbone.
* ``V1_SEQUENTIAL``: semantic head, then a 3x3 conv on the semantic logits
  produces the saliency logits.
* ``V2_BRANCHES``: unshared task branches, each followed by its head.
* ``V3_REFINED``: V2 plus a 3x3 conv over the concatenated predictions that
  yields a refined saliency map.
* ``V4_GATED``: saliency-branch features are concatenated onto the backbone
  features and a 1x1 conv restores the channel count before the semantic
  branch.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from ..masks import BinaryMask, DomainError, LabelMask
from . import ops
from .ops import Node, ShapeError


class Variant(str, enum.Enum):
    V0_SHARED_HEADS = "v0"
    V1_SEQUENTIAL = "v1"
    V2_BRANCHES = "v2"
    V3_REFINED = "v3"
    V4_GATED = "v4"

    @classmethod
    def parse(cls, s) -> "Variant":
        if isinstance(s, cls):
            return s
        s = str(s).strip().lower()
        for v in cls:
            if s in (v.value, v.name.lower()):
                return v
        raise DomainError(f"unknown variant {s!r}; expected one of {[v.value for v in cls]}")


@dataclass(frozen=True)
class LayerSpec:
    kind: str  # "conv" or "relu"
    in_ch: int = 0
    out_ch: int = 0
    kernel: int = 3
    stride: int = 1
    dilation: int = 1
    pad: Optional[int] = None  # None -> "same" padding for stride 1

    def __post_init__(self):
        if self.kind not in ("conv", "relu"):
            raise DomainError(f"unsupported layer kind {self.kind!r}")
        if self.kind == "conv" and self.pad is None:
            object.__setattr__(self, "pad", self.dilation * (self.kernel - 1) // 2)

    def out_size(self, size: int) -> int:
        if self.kind != "conv":
            return size
        return (size + 2 * self.pad - self.dilation * (self.kernel - 1) - 1) // self.stride + 1


def conv(in_ch, out_ch, kernel=3, stride=1, dilation=1, pad=None) -> LayerSpec:
    return LayerSpec("conv", in_ch, out_ch, kernel, stride, dilation, pad)


RELU = LayerSpec("relu")


def default_backbone(in_channels=3, width=16) -> tuple:
    """Three stride-2 3x3 convs to reach 1/8 resolution, then a dilated 3x3."""
    return (
        conv(in_channels, width, stride=2), RELU,
        conv(width, width, stride=2), RELU,
        conv(width, width, stride=2), RELU,
        conv(width, width, dilation=2), RELU,
    )


def default_branch(width=16, depth=2) -> tuple:
    layers = []
    for _ in range(depth):
        layers += [conv(width, width), RELU]
    return tuple(layers)


def _out_channels(layers, default):
    convs = [l for l in layers if l.kind == "conv"]
    return convs[-1].out_ch if convs else default


@dataclass(frozen=True)
class VariantConfig:
    variant: Variant
    backbone: tuple = field(default_factory=default_backbone)
    branch: tuple = field(default_factory=default_branch)
    num_sem_classes: int = 21
    num_sal_classes: int = 2

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant.parse(self.variant))
        object.__setattr__(self, "backbone", tuple(self.backbone))
        object.__setattr__(self, "branch", tuple(self.branch))
        factor = int(np.prod([l.stride for l in self.backbone if l.kind == "conv"]))
        if factor != 8:
            raise DomainError(f"backbone must downsample by exactly 8, got {factor}")
        _chain("backbone", self.backbone, self.in_channels)
        _chain("branch", self.branch, self.feature_channels)
        if any(l.kind == "conv" and l.stride != 1 for l in self.branch):
            raise DomainError("branch layers must keep resolution (stride 1)")
        if self.num_sem_classes < 2 or self.num_sal_classes < 2:
            raise DomainError("each task needs at least two classes")

    @property
    def in_channels(self) -> int:
        return next(l.in_ch for l in self.backbone if l.kind == "conv")

    @property
    def feature_channels(self) -> int:
        return _out_channels(self.backbone, self.in_channels)

    @property
    def branch_channels(self) -> int:
        return _out_channels(self.branch, self.feature_channels)

    def with_variant(self, variant) -> "VariantConfig":
        return replace(self, variant=Variant.parse(variant))


def _chain(where, layers, ch):
    for i, l in enumerate(layers):
        if l.kind == "conv":
            if l.in_ch != ch:
                raise ShapeError(f"{where}.{i}", f"expects {l.in_ch} input channels, receives {ch}")
            ch = l.out_ch


def make_config(variant, num_sem_classes=21, in_channels=3, width=16, branch_depth=2) -> VariantConfig:
    return VariantConfig(
        variant=variant,
        backbone=default_backbone(in_channels, width),
        branch=default_branch(width, branch_depth),
        num_sem_classes=num_sem_classes,
    )


def param_shapes(cfg: VariantConfig) -> dict[str, tuple]:
    """Every parameter's name and shape, in a fixed order."""
    shapes: dict[str, tuple] = {}

    def add(name, spec: LayerSpec):
        shapes[f"{name}.weight"] = (spec.out_ch, spec.in_ch, spec.kernel, spec.kernel)
        shapes[f"{name}.bias"] = (spec.out_ch,)

    for i, l in enumerate(cfg.backbone):
        if l.kind == "conv":
            add(f"backbone.{i}", l)
    feat, br = cfg.feature_channels, cfg.branch_channels
    C, S = cfg.num_sem_classes, cfg.num_sal_classes
    v = cfg.variant
    if v in (Variant.V2_BRANCHES, Variant.V3_REFINED, Variant.V4_GATED):
        for task in ("sem", "sal"):
            for i, l in enumerate(cfg.branch):
                if l.kind == "conv":
                    add(f"{task}_branch.{i}", l)
        if v is Variant.V4_GATED:
            add("gate", conv(feat + br, feat, kernel=1))
        add("sem_head", conv(br, C, kernel=1))
        add("sal_head", conv(br, S, kernel=1))
        if v is Variant.V3_REFINED:
            add("refine", conv(C + S, S))
    else:
        add("sem_head", conv(feat, C, kernel=1))
        if v is Variant.V0_SHARED_HEADS:
            add("sal_head", conv(feat, S, kernel=1))
        else:
            add("sem_to_sal", conv(C, S))
    return shapes


BIAS_INIT = 0.01  # keeps ReLU inputs off the kink where upstream activations are all zero


def init_params(cfg: VariantConfig, seed: int = 0) -> dict[str, np.ndarray]:
    """He (fan-in) normal weights, small constant biases."""
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape in param_shapes(cfg).items():
        if name.endswith(".weight"):
            fan_in = shape[1] * shape[2] * shape[3]
            params[name] = rng.normal(0.0, np.sqrt(2.0 / fan_in), size=shape)
        else:
            params[name] = np.full(shape, BIAS_INIT)
    return params


@dataclass
class ForwardOutputs:
    S_theta: np.ndarray
    S_d: np.ndarray
    S_d_r: Optional[np.ndarray] = None


def _layer_spec_for(name, cfg):
    """Recover conv hyperparameters for a named parameter group."""
    if name.startswith("backbone."):
        return cfg.backbone[int(name.split(".")[1])]
    if name.startswith(("sem_branch.", "sal_branch.")):
        return cfg.branch[int(name.split(".")[1])]
    if name in ("refine", "sem_to_sal"):
        return conv(0, 0, kernel=3)
    return conv(0, 0, kernel=1)


class _Builder:
    def __init__(self, cfg, params):
        self.cfg = cfg
        expected = param_shapes(cfg)
        missing = set(expected) - set(params)
        if missing:
            raise ShapeError(sorted(missing)[0], "parameter missing")
        self.nodes = {}
        for name, shape in expected.items():
            value = np.asarray(params[name], dtype=np.float64)
            if value.shape != shape:
                raise ShapeError(name, f"expected shape {shape}, got {value.shape}")
            self.nodes[name] = Node(value, name=name)

    def conv(self, x, name):
        spec = _layer_spec_for(name, self.cfg)
        return ops.conv(x, self.nodes[f"{name}.weight"], self.nodes[f"{name}.bias"],
                        spec.stride, spec.dilation, spec.pad, name=name)

    def stack(self, x, prefix, layers):
        for i, l in enumerate(layers):
            x = self.conv(x, f"{prefix}.{i}") if l.kind == "conv" else ops.relu(x, f"{prefix}.{i}")
        return x


def build_graph(x, cfg: VariantConfig, params):
    """Forward pass that keeps the graph; returns (outputs, param nodes)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 4 or x.shape[1] != cfg.in_channels:
        raise ShapeError("input", f"expected (n, {cfg.in_channels}, h, w), got {x.shape}")
    if x.shape[2] % 8 or x.shape[3] % 8:
        raise ShapeError("input", f"spatial size {x.shape[2:]} not divisible by 8")
    b = _Builder(cfg, params)
    feat = b.stack(Node(x, name="input"), "backbone", cfg.backbone)
    v = cfg.variant
    refined = None
    if v is Variant.V0_SHARED_HEADS:
        sem = b.conv(feat, "sem_head")
        sal = b.conv(feat, "sal_head")
    elif v is Variant.V1_SEQUENTIAL:
        sem = b.conv(feat, "sem_head")
        sal = b.conv(sem, "sem_to_sal")
    else:
        sal_feat = b.stack(feat, "sal_branch", cfg.branch)
        sem_in = feat
        if v is Variant.V4_GATED:
            sem_in = b.conv(ops.concat([feat, sal_feat], name="gate.concat"), "gate")
        sem = b.conv(b.stack(sem_in, "sem_branch", cfg.branch), "sem_head")
        sal = b.conv(sal_feat, "sal_head")
        if v is Variant.V3_REFINED:
            refined = b.conv(ops.concat([sem, sal], name="refine.concat"), "refine")
    expect = (x.shape[2] // 8, x.shape[3] // 8)
    for node in (sem, sal, refined):
        if node is not None and node.value.shape[2:] != expect:
            raise ShapeError(node.name, f"prediction size {node.value.shape[2:]} != {expect}")
    return (sem, sal, refined), b.nodes


def forward(x, cfg: VariantConfig, params) -> ForwardOutputs:
    (sem, sal, refined), _ = build_graph(x, cfg, params)
    return ForwardOutputs(sem.value, sal.value, None if refined is None else refined.value)


def downsample_labels(gt, target):
    """Nearest-neighbour downsampling taking the top-left pixel of each block.

    Accepts a ``LabelMask``, ``BinaryMask`` or bare 2-D array and returns the
    same kind.
    """
    arr = gt.labels if isinstance(gt, LabelMask) else gt.bits if isinstance(gt, BinaryMask) else np.asarray(gt)
    th, tw = target
    H, W = arr.shape[-2:]
    if th <= 0 or tw <= 0 or H % th or W % tw:
        raise DomainError(f"cannot downsample {H}x{W} to {th}x{tw}: ratio not integral")
    small = arr[..., :: H // th, :: W // tw]
    if isinstance(gt, LabelMask):
        return LabelMask(small, gt.num_categories)
    if isinstance(gt, BinaryMask):
        return BinaryMask(small)
    return small
