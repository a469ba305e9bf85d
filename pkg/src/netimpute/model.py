"""Sequence-to-sequence imputation network and the base loss terms.

The network reads one token per coarse interval (all channel/operator
measurements stacked as features), runs a small transformer encoder over the
context, and expands each token into ``zoom`` fine-grained values.  Inputs
and outputs are normalized internally with affine statistics fit on the
training split; the forward pass returns physical units, clamped to be
non-negative.  Rounding of integer channels is deferred to the repair stage.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import torch
from torch import nn

from .errors import ConfigError, DataError
from .series import CoarseBundle, FineSeries, WindowExample

CHECKPOINT_MAGIC = "netimpute-checkpoint"
CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class ModelConfig:
    layers: int = 3
    width: int = 128
    heads: int = 4
    ff_width: int = 256
    dropout: float = 0.0
    seed: int = 0

    def __post_init__(self):
        if self.width % self.heads != 0:
            raise ConfigError(f"width {self.width} not divisible by heads {self.heads}")


@dataclass(frozen=True)
class NormStats:
    """Per-feature affine normalization, fit on the training split."""

    in_mean: tuple[float, ...]
    in_std: tuple[float, ...]
    out_mean: float
    out_std: float


def fit_norm(inputs: np.ndarray, targets: np.ndarray) -> NormStats:
    in_mean = inputs.reshape(-1, inputs.shape[-1]).mean(axis=0)
    in_std = inputs.reshape(-1, inputs.shape[-1]).std(axis=0)
    in_std = np.where(in_std < 1e-9, 1.0, in_std)
    out_std = float(targets.std())
    return NormStats(
        tuple(float(v) for v in in_mean),
        tuple(float(v) for v in in_std),
        float(targets.mean()),
        out_std if out_std > 1e-9 else 1.0,
    )


def encode_inputs(examples: Sequence[WindowExample]) -> np.ndarray:
    """Stack coarse bundles into a [N, context_len, entries] feature array."""
    layout = examples[0].input.layout()
    out = np.empty((len(examples), examples[0].input.context_len, len(layout)))
    for i, ex in enumerate(examples):
        if ex.input.layout() != layout:
            raise DataError(f"example {i} has a different bundle layout")
        for j, e in enumerate(ex.input.entries):
            out[i, :, j] = e.values
    return out


def encode_targets(examples: Sequence[WindowExample]) -> np.ndarray:
    return np.stack([ex.target.values for ex in examples])


class ImputationModel(nn.Module):
    """Transformer encoder over coarse intervals with a per-interval
    expansion head producing ``zoom`` fine values."""

    def __init__(
        self,
        config: ModelConfig,
        layout: tuple[tuple[str, str, int, int], ...],
        zoom: int,
        context_len: int,
        norm: NormStats,
        target_channel: str,
        target_domain: str,
        granularity_ms: float = 1.0,
    ):
        super().__init__()
        self.config = config
        self.layout = tuple(tuple(e) for e in layout)
        self.zoom = zoom
        self.context_len = context_len
        self.target_channel = target_channel
        self.target_domain = target_domain
        self.granularity_ms = granularity_ms
        self.meta: dict = {"trained": False}

        n_features = len(layout)
        with torch.random.fork_rng():
            torch.manual_seed(config.seed)
            self.embed = nn.Linear(n_features, config.width)
            self.pos = nn.Parameter(torch.randn(1, context_len, config.width) * 0.02)
            layer = nn.TransformerEncoderLayer(
                d_model=config.width,
                nhead=config.heads,
                dim_feedforward=config.ff_width,
                dropout=config.dropout,
                batch_first=True,
                activation="gelu",
            )
            self.encoder = nn.TransformerEncoder(layer, num_layers=config.layers)
            self.head = nn.Linear(config.width, zoom)
        self.register_buffer("in_mean", torch.tensor(norm.in_mean, dtype=torch.float32))
        self.register_buffer("in_std", torch.tensor(norm.in_std, dtype=torch.float32))
        self.register_buffer("out_mean", torch.tensor(float(norm.out_mean)))
        self.register_buffer("out_std", torch.tensor(float(norm.out_std)))

    @property
    def norm(self) -> NormStats:
        return NormStats(
            tuple(self.in_mean.tolist()),
            tuple(self.in_std.tolist()),
            float(self.out_mean),
            float(self.out_std),
        )

    def forward(self, coarse: torch.Tensor) -> torch.Tensor:
        """coarse: [B, context_len, entries] physical units ->
        [B, context_len*zoom] non-negative physical fine values."""
        if coarse.ndim != 3 or coarse.shape[1] != self.context_len or \
                coarse.shape[2] != len(self.layout):
            raise DataError(
                f"input shape {tuple(coarse.shape)} does not match layout "
                f"[B, {self.context_len}, {len(self.layout)}]"
            )
        z = (coarse - self.in_mean) / self.in_std
        h = self.embed(z) + self.pos
        h = self.encoder(h)
        y = self.head(h)  # [B, N_c, zoom] normalized
        out = y.reshape(y.shape[0], -1) * self.out_std + self.out_mean
        return out.clamp_min(0.0)

    def normalize_fine(self, values: torch.Tensor) -> torch.Tensor:
        return (values - self.out_mean) / self.out_std

    def check_bundle(self, bundle: CoarseBundle) -> None:
        if bundle.layout() == self.layout:
            return
        have = set(bundle.layout())
        for entry in self.layout:
            if entry not in have:
                ch, kind, window, offset = entry
                raise DataError(
                    f"input bundle is missing entry {ch}.{kind} "
                    f"(window={window}, offset={offset}) required by the checkpoint"
                )
        raise DataError(
            f"bundle layout {bundle.layout()} does not match checkpoint layout {self.layout}"
        )

    @torch.no_grad()
    def impute(self, bundle: CoarseBundle) -> FineSeries:
        """Impute one window (eval mode, deterministic)."""
        self.check_bundle(bundle)
        was_training = self.training
        self.eval()
        x = torch.tensor(
            np.stack([e.values for e in bundle.entries], axis=-1)[None, ...],
            dtype=torch.float32,
        )
        out = self.forward(x)[0].numpy().astype(np.float64)
        if was_training:
            self.train()
        return FineSeries(self.target_channel, out, self.granularity_ms, "nonneg_real")


def build_model(
    config: ModelConfig, examples: Sequence[WindowExample], norm: NormStats | None = None
) -> ImputationModel:
    """Construct a model matching a dataset's bundle layout."""
    if not examples:
        raise DataError("cannot build a model from an empty dataset")
    first = examples[0]
    if norm is None:
        norm = fit_norm(encode_inputs(examples), encode_targets(examples))
    return ImputationModel(
        config,
        first.input.layout(),
        zoom=first.input.zoom,
        context_len=first.input.context_len,
        norm=norm,
        target_channel=first.target.channel,
        target_domain=first.target.domain,
        granularity_ms=first.target.granularity_ms,
    )


# --------------------------------------------------------------------------
# loss terms


def _pair(a, b) -> tuple[torch.Tensor, torch.Tensor, bool]:
    torch_in = isinstance(a, torch.Tensor) or isinstance(b, torch.Tensor)

    def conv(v):
        if isinstance(v, torch.Tensor):
            return v
        if isinstance(v, FineSeries):
            v = v.values
        return torch.as_tensor(np.array(v, dtype=np.float64))

    ta, tb = conv(a), conv(b)
    if ta.shape != tb.shape:
        raise DataError(f"length mismatch: {tuple(ta.shape)} vs {tuple(tb.shape)}")
    return ta, tb, torch_in


def mse(a, b):
    """Mean squared pointwise difference."""
    ta, tb, torch_in = _pair(a, b)
    out = ((ta - tb) ** 2).mean()
    return out if torch_in else float(out)


def emd(a, b):
    """Earth mover's distance between the two value distributions:
    mean |sorted(a) - sorted(b)| along time.  Invariant to any permutation of
    time indices, so a time-shifted burst costs nothing."""
    ta, tb, torch_in = _pair(a, b)
    sa, _ = torch.sort(ta, dim=-1)
    sb, _ = torch.sort(tb, dim=-1)
    out = (sa - sb).abs().mean()
    return out if torch_in else float(out)


def l_combine(out, target, emd_weight: float = 1.0):
    """Pointwise closeness plus distribution closeness."""
    if emd_weight < 0:
        raise ConfigError("emd_weight must be non-negative")
    base = mse(out, target)
    if emd_weight == 0:
        return base
    return base + emd_weight * emd(out, target)


# --------------------------------------------------------------------------
# checkpoints


def save_checkpoint(model: ImputationModel, path: str | Path, meta: Mapping | None = None) -> None:
    payload = {
        "magic": CHECKPOINT_MAGIC,
        "version": CHECKPOINT_VERSION,
        "model_config": asdict(model.config),
        "layout": [list(e) for e in model.layout],
        "zoom": model.zoom,
        "context_len": model.context_len,
        "target_channel": model.target_channel,
        "target_domain": model.target_domain,
        "granularity_ms": model.granularity_ms,
        "norm": {
            "in_mean": list(model.norm.in_mean),
            "in_std": list(model.norm.in_std),
            "out_mean": model.norm.out_mean,
            "out_std": model.norm.out_std,
        },
        "meta": dict(model.meta, **(meta or {})),
        "state_dict": model.state_dict(),
    }
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    tmp = Path(path).with_suffix(".tmp")
    torch.save(payload, tmp)
    tmp.replace(path)


def load_checkpoint(path: str | Path) -> ImputationModel:
    path = Path(path)
    if not path.exists():
        raise DataError(f"no such checkpoint: {path}")
    try:
        payload = torch.load(path, weights_only=True)
    except Exception as exc:
        raise DataError(f"{path}: not a readable checkpoint ({exc})") from None
    if not isinstance(payload, dict) or payload.get("magic") != CHECKPOINT_MAGIC:
        raise DataError(f"{path}: missing checkpoint magic; refusing to load")
    if payload.get("version") != CHECKPOINT_VERSION:
        raise DataError(
            f"{path}: checkpoint version {payload.get('version')} "
            f"!= supported {CHECKPOINT_VERSION}"
        )
    norm = NormStats(
        tuple(payload["norm"]["in_mean"]),
        tuple(payload["norm"]["in_std"]),
        payload["norm"]["out_mean"],
        payload["norm"]["out_std"],
    )
    model = ImputationModel(
        ModelConfig(**payload["model_config"]),
        tuple(tuple(e) for e in payload["layout"]),
        zoom=payload["zoom"],
        context_len=payload["context_len"],
        norm=norm,
        target_channel=payload["target_channel"],
        target_domain=payload["target_domain"],
        granularity_ms=payload.get("granularity_ms", 1.0),
    )
    model.load_state_dict(payload["state_dict"])
    model.meta = dict(payload.get("meta", {}))
    model.eval()
    return model
