"""Backbone taps and the 9-channel first-convolution widening."""

from __future__ import annotations

import numpy as np
import pytest

pytest.importorskip("prodreid_bridge")
import torch

from prodreid_bridge import WeightShapeMismatch, build, build_alpha_alexnet, build_backbone
from prodreid_bridge.models import widen_first_conv


def test_zeroed_extra_channels_match_base_alexnet():
    alpha = build_alpha_alexnet()
    alex = build_backbone("alexnet")
    x = torch.rand(2, 3, 64, 64, generator=torch.Generator().manual_seed(0))
    nine = torch.zeros(2, 9, 64, 64)
    nine[:, 0:3] = x
    with torch.no_grad():
        a = alpha(nine).numpy()
        b = alex(x).numpy()
    assert a.shape == b.shape == (2, 4096)
    assert np.abs(a - b).max() < 1e-4


def test_alpha_forward_finite_and_deterministic():
    model = build_alpha_alexnet(pretrained="never")
    x = torch.rand(1, 9, 64, 64, generator=torch.Generator().manual_seed(1))
    with torch.no_grad():
        first = model(x)
        second = model(x)
    assert first.shape == (1, model.dim)
    assert torch.isfinite(first).all()
    assert torch.equal(first, second)  # eval mode: dropout disabled


def test_tap_dimensions():
    assert build_backbone("alexnet", pretrained="never").dim == 4096
    assert build_backbone("alexnet", layer="pool", pretrained="never").dim == 9216
    assert build_backbone("vgg16", pretrained="never").dim == 4096
    assert build_backbone("vgg16", layer="pool", pretrained="never").dim == 25088


def test_vgg16_forward_shape():
    model = build("vgg16", layer="penultimate", pretrained="never")
    x = torch.rand(1, 3, 64, 64, generator=torch.Generator().manual_seed(2))
    with torch.no_grad():
        v = model(x)
    assert v.shape == (1, 4096)
    assert torch.isfinite(v).all()


def test_widen_copies_and_scales():
    conv = torch.nn.Conv2d(3, 8, kernel_size=3, padding=1)
    wide = widen_first_conv(conv, in_channels=9)
    assert torch.equal(wide.weight[:, 0:3], conv.weight)
    assert torch.allclose(wide.weight[:, 3:6], conv.weight / 3.0)
    assert torch.allclose(wide.weight[:, 6:9], conv.weight / 3.0)
    assert torch.equal(wide.bias, conv.bias)


def test_widen_rejects_wrong_shape():
    nine_in = torch.nn.Conv2d(9, 8, kernel_size=3)
    with pytest.raises(WeightShapeMismatch):
        widen_first_conv(nine_in)
    with pytest.raises(ValueError):
        widen_first_conv(torch.nn.Conv2d(3, 8, kernel_size=3), in_channels=7)


def test_seeded_fallback_reproducible():
    a = build_backbone("alexnet", pretrained="never")
    b = build_backbone("alexnet", pretrained="never")
    for (name_a, pa), (name_b, pb) in zip(
        sorted(a.state_dict().items()), sorted(b.state_dict().items())
    ):
        assert name_a == name_b
        assert torch.equal(pa, pb), name_a


def test_build_validation():
    with pytest.raises(ValueError):
        build_backbone("resnet50")
    with pytest.raises(ValueError):
        build_backbone("alexnet", layer="logits")
