from __future__ import annotations

from dataclasses import asdict, dataclass, fields

from .core.module import Module
from .core.patches import patchify
from .core.rng import Rng
from .core.tensor import ShapeError, Tensor
from .extractors import ContentExtractor, StyleExtractor, extract_content, extract_style
from .stylizer import Stylizer, encoder_layer, initial_output_embedding


@dataclass
class ModelConfig:
    dim: int = 32
    heads: int = 2
    layers: int = 3
    patch: int = 8
    ffn_mult: int = 2
    cape_grid: int = 18
    pe: str = "cape"
    out_embed_mode: str = "content"
    content_channels: int = 16
    content_blocks: int = 2
    style_dim: int = 32
    style_heads: int = 2
    style_blocks: int = 2
    seed: int = 0

    @classmethod
    def full_scale(cls, **kw) -> ModelConfig:
        return cls(**{"dim": 192, "heads": 8, **kw})

    @classmethod
    def from_dict(cls, d: dict) -> ModelConfig:
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in known})

    def to_dict(self) -> dict:
        return asdict(self)


class PuffNetModel(Module):
    def __init__(self, config: ModelConfig | None = None):
        cfg = config or ModelConfig()
        self._config = cfg
        rng = Rng(cfg.seed)
        self.content = ContentExtractor(rng.child("content"), cfg.content_channels, cfg.content_blocks)
        self.style = StyleExtractor(rng.child("style"), cfg.style_dim, cfg.style_heads,
                                    cfg.style_blocks, cfg.patch)
        self.stylizer = Stylizer(rng.child("stylizer"), cfg.dim, cfg.heads, cfg.layers, cfg.patch,
                                 cfg.ffn_mult, cfg.cape_grid, cfg.pe, cfg.out_embed_mode)

    @property
    def config(self) -> ModelConfig:
        return self._config

    def embed_rng(self) -> Rng:
        return Rng(self._config.seed).child("out_embed")


def _check_image(img: Tensor, patch: int, what: str):
    if img.ndim != 4 or img.shape[1] != 3:
        raise ShapeError(f"{what} must be (1, 3, H, W), got {img.shape}")
    if img.shape[2] % patch or img.shape[3] % patch:
        raise ShapeError(f"{what} size {img.shape[2]}x{img.shape[3]} is not divisible by {patch}")


def stylize_pure(pure_content: Tensor, pure_style: Tensor, model: PuffNetModel,
                 rng: Rng | None = None, trace: dict | None = None) -> Tensor:
    """Run the encoder and decoder on already-extracted images."""
    st = model.stylizer
    eps_c = patchify(pure_content, st.patch, st.proj)
    eps_s = patchify(pure_style, st.patch, st.proj)
    pos = st.positions(eps_c)
    if st.out_embed_mode == "random" and rng is None:
        rng = model.embed_rng()
    stream = initial_output_embedding(st.out_embed_mode, eps_c.tokens, eps_s.tokens, rng)
    if trace is not None:
        trace.update(eps_c=eps_c.tokens.data, eps_s=eps_s.tokens.data,
                     eps_o=stream.data, positions=pos.data, grid=eps_c.grid)
    for layer in st.layers:
        stream = encoder_layer(stream, eps_s.tokens, layer, pos)
    return st.decoder(stream, eps_c.grid)


def stylize(content: Tensor, style: Tensor, model: PuffNetModel, rng: Rng | None = None,
            trace: dict | None = None) -> Tensor:
    """Stylize ``content`` with ``style``; both ``(1, 3, H, W)`` in [0, 1], H and W multiples of 8."""
    patch = model.stylizer.patch
    _check_image(content, patch, "content image")
    _check_image(style, patch, "style image")
    return stylize_pure(extract_content(content, model.content), extract_style(style, model.style),
                        model, rng, trace)
