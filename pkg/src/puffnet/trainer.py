from __future__ import annotations

import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from .checkpoint import load_checkpoint, load_params, save_checkpoint
from .core import functional as F
from .core.tensor import NonFiniteError, Tensor, backward, no_grad
from .extractors import extract_content, extract_style
from .losses import (
    LossWeights,
    PerceptualNet,
    feature_distance,
    style_distance,
    combine_extractor_parts,
    extractor_parts,
    features,
    total_loss,
)
from .model import ModelConfig, PuffNetModel, stylize_pure

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    total_iters: int = 500
    base_lr: float = 5e-4
    warmup_steps: int | None = None  # None -> 4% of total_iters
    freeze_fraction: float = 0.12
    crop: int = 64
    batch: int = 1
    seed: int = 0
    content_dir: str | None = None
    style_dir: str | None = None
    checkpoint_every: int = 0
    checkpoint_path: str | None = None

    def __post_init__(self):
        if self.warmup_steps is None:
            self.warmup_steps = max(1, round(0.04 * self.total_iters))
        if not 0 < self.freeze_fraction < 1:
            raise ValueError(f"freeze_fraction must lie in (0, 1), got {self.freeze_fraction}")
        if not 0 <= self.warmup_steps < self.total_iters:
            raise ValueError(f"warmup_steps ({self.warmup_steps}) must be below total_iters ({self.total_iters})")
        if self.crop % 8:
            raise ValueError(f"crop ({self.crop}) must be divisible by 8")
        if self.batch != 1:
            raise ValueError("only batch size 1 is supported")

    @property
    def freeze_at(self) -> float:
        return self.freeze_fraction * self.total_iters

    def to_dict(self) -> dict:
        return asdict(self)


def lr_at(t: int, cfg: TrainConfig) -> float:
    """Linear warmup to ``base_lr`` over ``warmup_steps``, constant afterwards."""
    if t < cfg.warmup_steps:
        return cfg.base_lr * t / cfg.warmup_steps
    return cfg.base_lr


@dataclass
class AdamState:
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: list[tuple[str, Tensor]], state: AdamState, lr: float):
    """Bias-corrected Adam update in place; clears the gradients it consumed."""
    if lr < 0:
        raise ValueError("learning rate must be nonnegative")
    for name, p in params:
        if p.grad is None:
            raise RuntimeError(f"parameter {name!r} has no gradient")
    state.t += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for name, p in params:
        g = p.grad
        m = state.m.setdefault(name, np.zeros_like(p.data))
        v = state.v.setdefault(name, np.zeros_like(p.data))
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p.data -= (lr * (m / c1) / (np.sqrt(v / c2) + state.eps)).astype(np.float32)
        p.grad = None


def trainable(model: PuffNetModel) -> list[tuple[str, Tensor]]:
    return [(n, t) for n, t in model.named_tensors() if t.requires_grad]


def apply_freeze(model: PuffNetModel, cfg: TrainConfig, t: int):
    model.style.set_trainable(t < cfg.freeze_at)


def compute_losses(content: Tensor, style: Tensor, model: PuffNetModel, net: PerceptualNet,
                   w: LossWeights) -> tuple[Tensor, dict[str, Tensor], dict[str, Tensor]]:
    """Forward pass for one pair; returns (total, the five terms, the images produced)."""
    pure_cc = extract_content(content, model.content)
    pure_sc = extract_content(style, model.content)
    pure_cs = extract_style(content, model.style)
    pure_ss = extract_style(style, model.style)
    rng = model.embed_rng()
    out = stylize_pure(pure_cc, pure_ss, model, rng)
    recon_c = stylize_pure(pure_cc, pure_cs, model, rng)
    recon_s = stylize_pure(pure_sc, pure_ss, model, rng)

    with no_grad():
        fc = features(content, net)
        fs = features(style, net)
    fo = features(out, net)
    ex = extractor_parts(pure_cc, pure_cs, pure_sc, pure_ss, fc, fs, net)
    parts = {
        "content": feature_distance(fo, fc),
        "style": style_distance(fo, fs),
        "extractor": combine_extractor_parts(ex, w),
        "identity_pixel": F.add(F.mse(recon_c, content), F.mse(recon_s, style)),
        "identity_feature": F.add(feature_distance(features(recon_c, net), fc),
                                  feature_distance(features(recon_s, net), fs)),
    }
    images = {"output": out, "recon_content": recon_c, "recon_style": recon_s,
              "pure_cc": pure_cc, "pure_cs": pure_cs, "pure_sc": pure_sc, "pure_ss": pure_ss}
    return total_loss(parts, w), parts, images


def train_step(batch: tuple[Tensor, Tensor], model: PuffNetModel, opt: AdamState, cfg: TrainConfig,
               t: int, net: PerceptualNet, w: LossWeights = LossWeights()) -> dict[str, float]:
    """One optimisation step at iteration ``t`` (1-based); returns the five terms and the total."""
    apply_freeze(model, cfg, t)
    content, style = batch
    total, parts, _ = compute_losses(content, style, model, net, w)
    report = {k: v.item() for k, v in parts.items()}
    report["total"] = total.item()
    for k, v in report.items():
        if not np.isfinite(v):
            raise NonFiniteError(f"loss term {k!r} is not finite at step {t}")
    backward(total)
    adam_step(trainable(model), opt, lr_at(t, cfg))
    model.zero_grad()
    return report


class Trainer:
    """Owns model, optimiser and data for a run; iterations are numbered from 1."""

    def __init__(self, cfg: TrainConfig, data, model: PuffNetModel | None = None,
                 model_config: ModelConfig | None = None, weights: LossWeights = LossWeights(),
                 net: PerceptualNet | None = None):
        self.cfg = cfg
        self.data = data
        self.model = model or PuffNetModel(model_config or ModelConfig(seed=cfg.seed))
        self.weights = weights
        self.net = net or PerceptualNet()
        self.opt = AdamState()
        self.iteration = 0
        self.history: list[dict[str, float]] = []

    def step(self) -> dict[str, float]:
        t = self.iteration + 1
        report = train_step(self.data.batch(t), self.model, self.opt, self.cfg, t, self.net, self.weights)
        self.iteration = t
        self.history.append(report)
        if self.cfg.checkpoint_every and self.cfg.checkpoint_path and t % self.cfg.checkpoint_every == 0:
            self.save(self.cfg.checkpoint_path)
        return report

    def run(self, until: int | None = None, callback=None) -> list[dict[str, float]]:
        end = self.cfg.total_iters if until is None else until
        while self.iteration < end:
            report = self.step()
            if callback is not None:
                callback(self.iteration, report)
            if self.iteration % 50 == 0 or self.iteration == end:
                log.info("step %d total %.5f", self.iteration, report["total"])
        return self.history

    def save(self, path):
        save_checkpoint(path, self.model, self.opt, self.iteration, {"train": self.cfg.to_dict()})

    @classmethod
    def resume(cls, path, cfg: TrainConfig, data, weights: LossWeights = LossWeights(),
               net: PerceptualNet | None = None) -> Trainer:
        ck = load_checkpoint(path)
        model = PuffNetModel(ModelConfig.from_dict(ck.config.get("model", {})))
        load_params(model, ck.params)
        tr = cls(cfg, data, model=model, weights=weights, net=net)
        tr.opt.t = ck.adam_t
        tr.opt.m = {k: v.copy() for k, v in ck.adam_m.items()}
        tr.opt.v = {k: v.copy() for k, v in ck.adam_v.items()}
        tr.iteration = ck.iteration
        return tr

