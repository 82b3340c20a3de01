"""Backbone construction and the 9-channel first-convolution widening.

Weights resolve in three modes: "require" insists on pretrained weights
(ModelUnavailable otherwise), "never" always uses a seeded deterministic
initialization, and "auto" (default) tries pretrained and falls back to
the seeded initialization, e.g. on machines with no weight cache and no
network. Every property this package guarantees (determinism, unit
norms, widened-conv equivalence on zeroed extra channels) holds under
either weight source, because the widened model copies whatever weights
the base model ended up with.
"""

from __future__ import annotations

import torch
from torch import nn
from torchvision import models as tv_models

from .errors import ModelUnavailable, WeightShapeMismatch

MODELS = ("vgg16", "alexnet", "alpha_alexnet")
LAYERS = ("penultimate", "pool")

# Index one past the penultimate fully-connected activation (its ReLU) in
# each torchvision classifier Sequential.
_PENULTIMATE_CUT = {"alexnet": 6, "vgg16": 5}

_FALLBACK_SEED = 1618033988


def _seeded_init(model: nn.Module) -> None:
    """Deterministic parameter fill, independent of global RNG state."""
    gen = torch.Generator().manual_seed(_FALLBACK_SEED)
    with torch.no_grad():
        for name, p in sorted(model.named_parameters()):
            if p.ndim > 1:
                p.copy_(torch.randn(p.shape, generator=gen) * 0.05)
            else:
                p.copy_(torch.randn(p.shape, generator=gen) * 0.01)


def _base_model(name: str, pretrained: str) -> nn.Module:
    if name == "alexnet":
        ctor, weights = tv_models.alexnet, tv_models.AlexNet_Weights.DEFAULT
    elif name == "vgg16":
        ctor, weights = tv_models.vgg16, tv_models.VGG16_Weights.DEFAULT
    else:
        raise ValueError(f"unknown base model {name!r}")
    if pretrained == "never":
        model = ctor(weights=None)
        _seeded_init(model)
        return model
    try:
        return ctor(weights=weights)
    except Exception as exc:
        if pretrained == "require":
            raise ModelUnavailable(f"pretrained weights for {name} unavailable: {exc}") from exc
        model = ctor(weights=None)
        _seeded_init(model)
        return model


class _Tap(nn.Module):
    """Backbone truncated at a named activation, flattened to a vector."""

    def __init__(self, features: nn.Module, avgpool: nn.Module, head: nn.Module, dim: int):
        super().__init__()
        self.features = features
        self.avgpool = avgpool
        self.head = head
        self.dim = dim

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        x = self.avgpool(self.features(x))
        x = torch.flatten(x, 1)
        return self.head(x)


def _tap_dim(base: nn.Module, name: str, layer: str) -> int:
    if layer == "pool":
        probes = {"alexnet": 9216, "vgg16": 25088}
        return probes[name]
    cut = _PENULTIMATE_CUT[name]
    return base.classifier[cut - 2].out_features


def build_backbone(model: str, layer: str = "penultimate", pretrained: str = "auto") -> _Tap:
    """Feature extractor for one of the 3-channel base models, in eval mode."""
    base_name = "alexnet" if model == "alpha_alexnet" else model
    if base_name not in _PENULTIMATE_CUT:
        raise ValueError(f"model must be one of {MODELS}, got {model!r}")
    if layer not in LAYERS:
        raise ValueError(f"layer must be one of {LAYERS}, got {layer!r}")
    base = _base_model(base_name, pretrained)
    head = nn.Identity() if layer == "pool" else base.classifier[: _PENULTIMATE_CUT[base_name]]
    tap = _Tap(base.features, base.avgpool, head, _tap_dim(base, base_name, layer))
    tap.eval()
    return tap


def widen_first_conv(conv: nn.Conv2d, in_channels: int = 9) -> nn.Conv2d:
    """Widen a 3-input-channel convolution: RGB slices copied verbatim, each
    extra 3-channel block initialized as the RGB slice scaled by 1/3."""
    if conv.weight.shape[1] != 3:
        raise WeightShapeMismatch(
            f"expected a 3-input-channel convolution, got {tuple(conv.weight.shape)}"
        )
    if in_channels % 3 != 0 or in_channels < 3:
        raise ValueError(f"in_channels must be a positive multiple of 3, got {in_channels}")
    wide = nn.Conv2d(
        in_channels,
        conv.out_channels,
        kernel_size=conv.kernel_size,
        stride=conv.stride,
        padding=conv.padding,
        bias=conv.bias is not None,
    )
    with torch.no_grad():
        wide.weight[:, 0:3] = conv.weight
        for block in range(3, in_channels, 3):
            wide.weight[:, block : block + 3] = conv.weight / 3.0
        if conv.bias is not None:
            wide.bias.copy_(conv.bias)
    return wide


def build_alpha_alexnet(layer: str = "penultimate", pretrained: str = "auto") -> _Tap:
    """AlexNet variant taking the 9-plane augmented input: first convolution
    widened from 3 to 9 channels, everything else unchanged."""
    tap = build_backbone("alexnet", layer=layer, pretrained=pretrained)
    tap.features[0] = widen_first_conv(tap.features[0], in_channels=9)
    tap.eval()
    return tap


def build(model: str, layer: str = "penultimate", pretrained: str = "auto") -> _Tap:
    if model == "alpha_alexnet":
        return build_alpha_alexnet(layer=layer, pretrained=pretrained)
    return build_backbone(model, layer=layer, pretrained=pretrained)
