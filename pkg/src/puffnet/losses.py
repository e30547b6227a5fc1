"""Perceptual feature pyramid and the weighted training objective."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

from .core import functional as F
from .core.module import Module, kaiming, zeros
from .core.rng import Rng
from .core.tensor import NonFiniteError, ShapeError, Tensor

STAGE_WIDTHS = (16, 32, 64, 128, 128)


class PerceptualNet(Module):
    """Frozen 5-stage conv pyramid standing in for a pretrained classifier's feature layers."""

    def __init__(self, seed: int = 0, widths: tuple[int, ...] = STAGE_WIDTHS):
        rng = Rng(seed).child("perceptual")
        chans = (3, *widths)
        self.weights = [kaiming(rng.child(f"w{i}"), (chans[i + 1], chans[i], 3, 3), chans[i] * 9)
                        for i in range(len(widths))]
        self.biases = [zeros(w) for w in widths]
        self.set_trainable(False)

    @classmethod
    def from_file(cls, path) -> PerceptualNet:
        from .checkpoint import read_tensors

        net = cls()
        tensors = read_tensors(path)
        own = dict(net.named_tensors())
        for name, arr in tensors.items():
            if name not in own:
                raise KeyError(f"unknown tensor {name!r} in perceptual weight file")
            if own[name].shape != arr.shape:
                raise ShapeError(f"{name}: file has {arr.shape}, net expects {own[name].shape}")
            own[name].data[...] = arr
        return net


def features(img: Tensor, net: PerceptualNet) -> list[Tensor]:
    n = len(net.weights)
    h, w = img.shape[-2:]
    if h < 2 ** (n - 1) * 2 or w < 2 ** (n - 1) * 2:
        raise ShapeError(f"image {h}x{w} is too small for {n} stages (need at least {2 ** n}x{2 ** n})")
    out = []
    x = img
    for i, (wt, b) in enumerate(zip(net.weights, net.biases)):
        if i:
            x = F.avg_pool2(x)
        x = F.relu(F.conv2d(x, wt, b))
        out.append(x)
    return out


def feature_distance(fa: list[Tensor], fb: list[Tensor]) -> Tensor:
    terms = [F.mse(a, b) for a, b in zip(fa, fb)]
    return F.mul(_sum(terms), 1.0 / len(terms))


def _sum(terms: list[Tensor]) -> Tensor:
    total = terms[0]
    for t in terms[1:]:
        total = F.add(total, t)
    return total


def channel_stats(feat: Tensor) -> tuple[Tensor, Tensor]:
    """Per-channel spatial mean and biased variance of ``(B, C, H, W)``."""
    return F.mean(feat, axis=(2, 3)), F.var(feat, axis=(2, 3))


def content_loss(out: Tensor, content: Tensor, net: PerceptualNet, *,
                 content_feats: list[Tensor] | None = None, out_feats: list[Tensor] | None = None) -> Tensor:
    if out.shape != content.shape:
        raise ShapeError(f"content loss needs equal shapes, got {out.shape} and {content.shape}")
    fo = out_feats if out_feats is not None else features(out, net)
    fc = content_feats if content_feats is not None else features(content, net)
    return feature_distance(fo, fc)


def style_loss(out: Tensor, style: Tensor, net: PerceptualNet, *,
               style_feats: list[Tensor] | None = None, out_feats: list[Tensor] | None = None) -> Tensor:
    if out.shape[:2] != style.shape[:2]:
        raise ShapeError(f"style loss needs matching batch/channels, got {out.shape} and {style.shape}")
    fo = out_feats if out_feats is not None else features(out, net)
    fs = style_feats if style_feats is not None else features(style, net)
    return style_distance(fo, fs)


def style_distance(fa: list[Tensor], fb: list[Tensor]) -> Tensor:
    terms = []
    for a, b in zip(fa, fb):
        mu_a, var_a = channel_stats(a)
        mu_b, var_b = channel_stats(b)
        terms.append(F.add(F.mse(mu_a, mu_b), F.mse(var_a, var_b)))
    return F.mul(_sum(terms), 1.0 / len(terms))


@dataclass(frozen=True)
class LossWeights:
    content: float = 7.0
    style: float = 10.0
    extractor: float = 20.0
    identity_pixel: float = 70.0
    identity_feature: float = 1.0
    content_extractor: float = 0.7
    style_extractor: float = 1.0

    def __post_init__(self):
        for k, v in asdict(self).items():
            if v < 0:
                raise ValueError(f"loss weight {k} must be nonnegative, got {v}")

    @classmethod
    def zero(cls) -> LossWeights:
        return cls(0, 0, 0, 0, 0, 0, 0)


def extractor_loss(content: Tensor, style: Tensor, pure_cc: Tensor, pure_cs: Tensor,
                   pure_sc: Tensor, pure_ss: Tensor, net: PerceptualNet,
                   w: LossWeights = LossWeights(), feats: dict | None = None) -> Tensor:
    """Content loss on the content extractor's outputs, style loss on the style extractor's."""
    feats = feats or {}
    fc = feats.get("content") or features(content, net)
    fs = feats.get("style") or features(style, net)
    parts = extractor_parts(pure_cc, pure_cs, pure_sc, pure_ss, fc, fs, net)
    return combine_extractor_parts(parts, w)


def extractor_parts(pure_cc, pure_cs, pure_sc, pure_ss, fc, fs, net) -> dict[str, Tensor]:
    return {
        "cc": feature_distance(features(pure_cc, net), fc),
        "cs": style_distance(features(pure_cs, net), fc),
        "sc": feature_distance(features(pure_sc, net), fs),
        "ss": style_distance(features(pure_ss, net), fs),
    }


def combine_extractor_parts(parts: dict[str, Tensor], w: LossWeights) -> Tensor:
    return _sum([F.mul(parts["cc"], w.content_extractor), F.mul(parts["cs"], w.style_extractor),
                 F.mul(parts["sc"], w.content_extractor), F.mul(parts["ss"], w.style_extractor)])


def identity_losses(recon_c: Tensor, content: Tensor, recon_s: Tensor, style: Tensor,
                    net: PerceptualNet, feats: dict | None = None) -> tuple[Tensor, Tensor]:
    """Pixel-space and feature-space reconstruction errors for same-image stylization."""
    for a, b in ((recon_c, content), (recon_s, style)):
        if a.shape != b.shape:
            raise ShapeError(f"identity loss needs equal shapes, got {a.shape} and {b.shape}")
    feats = feats or {}
    fc = feats.get("content") or features(content, net)
    fs = feats.get("style") or features(style, net)
    pixel = F.add(F.mse(recon_c, content), F.mse(recon_s, style))
    feature = F.add(feature_distance(features(recon_c, net), fc),
                    feature_distance(features(recon_s, net), fs))
    return pixel, feature


LOSS_TERMS = ("content", "style", "extractor", "identity_pixel", "identity_feature")


def total_loss(parts: dict[str, Tensor], w: LossWeights = LossWeights()) -> Tensor:
    """Weighted sum over the five terms named in ``LOSS_TERMS``."""
    weighted = []
    for name in LOSS_TERMS:
        t = parts[name]
        if not math.isfinite(t.item()):
            raise NonFiniteError(f"loss term {name!r} is not finite ({t.item()})")
        weighted.append(F.mul(t, getattr(w, name)))
    return _sum(weighted)
