"""GSA-Net assembly: lifting, pre-norm group attention blocks, pooled readout."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .attention import AttentionWeights, FeatureMap, NeighborhoodSpec, init_attention_weights
from .encoding import EncodingFunction, encoding_from_config
from .errors import DimensionError
from .groups import GroupSpec, group_to_config
from .gsa import GroupFeatureMap, group_attend, lift_attend_fast
from .tensor import LinearMap, layer_norm, read_records, swish, write_records

DEFAULT_HEADS = 9


@dataclass(frozen=True)
class NetworkConfig:
    group: GroupSpec
    blocks: int = 2
    channels: tuple = (8, 8)
    heads: int = DEFAULT_HEADS
    nbhd: NeighborhoodSpec = NeighborhoodSpec("grid_window", 5)
    encoding: dict = field(default_factory=lambda: {"mode": "fourier", "seed": 42, "num_features": 64})
    seed: int = 42
    c_in: int = 1
    c_out: int = 10
    head_dim: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "channels", tuple(int(c) for c in self.channels))
        if self.blocks < 1:
            raise ValueError("a network needs at least one block")
        if len(self.channels) != self.blocks:
            raise ValueError(f"channels lists {len(self.channels)} entries for {self.blocks} blocks")
        if self.heads < 1:
            raise ValueError("heads must be >= 1")
        if min(self.channels) < 1 or self.c_in < 1 or self.c_out < 1:
            raise ValueError("channel counts must be positive")


@dataclass(frozen=True)
class Block:
    gain: np.ndarray
    shift: np.ndarray
    attention: AttentionWeights
    encoding: EncodingFunction


@dataclass(frozen=True)
class GsaNetwork:
    config: NetworkConfig
    lifting: AttentionWeights
    lift_encoding: EncodingFunction
    blocks: tuple
    readout: LinearMap

    @property
    def num_parameters(self) -> int:
        total = self.lifting.num_parameters + self.readout.num_parameters
        for b in self.blocks:
            total += b.gain.size + b.shift.size + b.attention.num_parameters
        return total

    def named_arrays(self) -> list:
        """``(name, array)`` pairs: lifting, blocks ascending, readout."""
        out = []
        for tag, arr in zip(("qry", "key", "val", "out_weight", "out_bias"), self.lifting.arrays()):
            out.append((f"lifting.{tag}", arr))
        for b, blk in enumerate(self.blocks):
            out.append((f"block{b}.ln_gain", blk.gain))
            out.append((f"block{b}.ln_shift", blk.shift))
            for tag, arr in zip(("qry", "key", "val", "out_weight", "out_bias"), blk.attention.arrays()):
                out.append((f"block{b}.{tag}", arr))
        out.append(("readout.weight", self.readout.weight))
        out.append(("readout.bias", self.readout.bias))
        return out


def build(config: NetworkConfig) -> GsaNetwork:
    """Seeded Gaussian init (std 1/sqrt(fan_in)); attention biases zero, readout bias random."""
    rng = np.random.default_rng(config.seed)
    ch = config.channels
    enc_cfg = dict(config.encoding)
    base_seed = int(enc_cfg.get("seed", 42))
    radius = config.nbhd.n // 2 if config.nbhd.kind == "grid_window" else 4
    lifting = init_attention_weights(rng, config.c_in, ch[0], config.heads, config.head_dim)
    lift_enc = encoding_from_config({**enc_cfg, "seed": base_seed}, config.c_in, None, radius)
    blocks = []
    for b in range(config.blocks):
        c_prev = ch[b - 1] if b > 0 else ch[0]
        gain = np.ones(c_prev)
        shift = np.zeros(c_prev)
        att = init_attention_weights(rng, c_prev, ch[b], config.heads, config.head_dim)
        enc = encoding_from_config({**enc_cfg, "seed": base_seed + 1 + b}, c_prev, config.group, radius)
        blocks.append(Block(gain, shift, att, enc))
    w = rng.standard_normal((ch[-1], config.c_out)) / math.sqrt(ch[-1])
    bias = rng.standard_normal(config.c_out) / math.sqrt(ch[-1])
    return GsaNetwork(config, lifting, lift_enc, tuple(blocks), LinearMap(w, bias))


def forward(net: GsaNetwork, f: FeatureMap, return_taps: bool = False):
    """Logits ``[C_out]``; with ``return_taps`` also the lifted map and each block's output."""
    cfg = net.config
    if f.channels != cfg.c_in:
        raise DimensionError(f"network expects {cfg.c_in} input channels, got {f.channels}")
    x = lift_attend_fast(net.lifting, f, net.lift_encoding, cfg.group, cfg.nbhd)
    taps = [x]
    for blk in net.blocks:
        normed = GroupFeatureMap(x.positions, x.group, layer_norm(x.values, blk.gain, blk.shift), x.elements)
        y = group_attend(blk.attention, normed, blk.encoding, cfg.nbhd, path="fast")
        x = GroupFeatureMap(y.positions, y.group, swish(y.values), y.elements)
        taps.append(x)
    pooled = x.values.max(axis=1).mean(axis=0)
    logits = net.readout(pooled)
    return (logits, taps) if return_taps else logits


def block_apply(net: GsaNetwork, b: int, x: GroupFeatureMap) -> GroupFeatureMap:
    """Run block ``b`` alone on a lifted map (used to audit intermediate equivariance)."""
    blk = net.blocks[b]
    normed = GroupFeatureMap(x.positions, x.group, layer_norm(x.values, blk.gain, blk.shift), x.elements)
    y = group_attend(blk.attention, normed, blk.encoding, net.config.nbhd, path="fast")
    return GroupFeatureMap(y.positions, y.group, swish(y.values), y.elements)


def save_weights(net: GsaNetwork, directory) -> Path:
    """Write ``weights.gsat`` (concatenated records) and ``manifest.json``."""
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    named = net.named_arrays()
    offsets = write_records(d / "weights.gsat", [a for _, a in named])
    manifest = {
        "group": group_to_config(net.config.group),
        "num_parameters": net.num_parameters,
        "tensors": [
            {"name": name, "shape": list(arr.shape), "offset": off} for (name, arr), off in zip(named, offsets)
        ],
    }
    (d / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    return d


def load_arrays(directory) -> dict:
    d = Path(directory)
    manifest = json.loads((d / "manifest.json").read_text())
    arrays = read_records(d / "weights.gsat", len(manifest["tensors"]))
    return {t["name"]: a for t, a in zip(manifest["tensors"], arrays)}
