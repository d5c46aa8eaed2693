"""Multi-head self-attention on sets with positions.

Three positional regimes are supported: none, absolute (encoding added to
queries and keys) and relative (encoding of ``x(j) - x(i)`` added to keys).
Scores are evaluated only on in-neighborhood pairs and scattered into a dense
masked matrix before the softmax.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .encoding import EncodingFunction, PositionTable, encode_spatial
from .errors import DimensionError, EmptyNeighborhoodError, UnsupportedNeighborhoodError
from .tensor import LinearMap, as_tensor, check_finite, softmax

MEMBERSHIP_TOL = 1e-9


@dataclass(frozen=True)
class AttentionWeights:
    """Per-head projections stacked as ``[heads, C_in, C_h]`` plus the output map."""

    qry: np.ndarray
    key: np.ndarray
    val: np.ndarray
    out: LinearMap

    def __post_init__(self):
        for name in ("qry", "key", "val"):
            object.__setattr__(self, name, as_tensor(getattr(self, name), 3))
        if not (self.qry.shape == self.key.shape == self.val.shape):
            raise DimensionError(
                f"query/key/value shapes differ: {self.qry.shape}, {self.key.shape}, {self.val.shape}"
            )
        if self.out.c_in != self.heads * self.head_dim:
            raise DimensionError(
                f"output map expects {self.out.c_in} inputs but heads produce {self.heads * self.head_dim}"
            )

    @property
    def heads(self) -> int:
        return self.qry.shape[0]

    @property
    def c_in(self) -> int:
        return self.qry.shape[1]

    @property
    def head_dim(self) -> int:
        return self.qry.shape[2]

    @property
    def c_out(self) -> int:
        return self.out.c_out

    @property
    def num_parameters(self) -> int:
        return self.qry.size + self.key.size + self.val.size + self.out.num_parameters

    def arrays(self) -> list:
        out = [self.qry, self.key, self.val, self.out.weight]
        return out + ([self.out.bias] if self.out.bias is not None else [])


def init_attention_weights(
    rng: np.random.Generator,
    c_in: int,
    c_out: int,
    heads: int,
    head_dim: Optional[int] = None,
    bias: str = "zero",
) -> AttentionWeights:
    """Gaussian init with std ``1/sqrt(fan_in)``; ``bias`` is ``zero``, ``random`` or ``none``."""
    if heads < 1:
        raise ValueError("heads must be >= 1")
    c_h = head_dim if head_dim is not None else max(1, c_out // heads)
    qry = rng.standard_normal((heads, c_in, c_h)) / math.sqrt(c_in)
    key = rng.standard_normal((heads, c_in, c_h)) / math.sqrt(c_in)
    val = rng.standard_normal((heads, c_in, c_h)) / math.sqrt(c_in)
    w_out = rng.standard_normal((heads * c_h, c_out)) / math.sqrt(heads * c_h)
    if bias == "zero":
        b = np.zeros(c_out)
    elif bias == "random":
        b = rng.standard_normal(c_out) / math.sqrt(heads * c_h)
    elif bias == "none":
        b = None
    else:
        raise ValueError(f"unknown bias mode {bias!r}")
    return AttentionWeights(qry, key, val, LinearMap(w_out, b))


@dataclass(frozen=True)
class NeighborhoodSpec:
    """``global``, ``grid_window`` (odd ``n``, square window) or ``radius`` (Euclidean ``r``)."""

    kind: str = "global"
    n: int = 3
    r: float = 1.0

    def __post_init__(self):
        if self.kind not in ("global", "grid_window", "radius"):
            raise ValueError(f"unknown neighborhood kind {self.kind!r}")
        if self.kind == "grid_window" and (self.n < 1 or self.n % 2 == 0):
            raise ValueError(f"grid_window size must be odd and positive, got {self.n}")
        if self.kind == "radius" and not self.r > 0:
            raise ValueError(f"radius must be positive, got {self.r}")

    def mask(self, positions: PositionTable, scale: float = 1.0) -> np.ndarray:
        """``[N, N]`` boolean membership ``mask[i, j] = j in N(i)``; ``scale`` widens the extent."""
        n = positions.n
        if self.kind == "global":
            return np.ones((n, n), dtype=bool)
        off = positions.offsets()
        if self.kind == "grid_window":
            if positions.spacing is None:
                raise UnsupportedNeighborhoodError("grid_window neighborhoods need a grid position table")
            half = (self.n // 2) * positions.spacing * scale
            return np.all(np.abs(off) <= half + MEMBERSHIP_TOL, axis=-1)
        dist = np.sqrt((off * off).sum(axis=-1))
        return dist <= self.r * scale + MEMBERSHIP_TOL


@dataclass(frozen=True)
class FeatureMap:
    positions: PositionTable
    values: np.ndarray

    def __post_init__(self):
        v = check_finite(as_tensor(self.values, 2), "feature values")
        if v.shape[0] != self.positions.n:
            raise DimensionError(f"{v.shape[0]} feature rows for {self.positions.n} positions")
        object.__setattr__(self, "values", v)

    @property
    def channels(self) -> int:
        return self.values.shape[1]


# -- kernel pieces --------------------------------------------------------------


def neighborhood_pairs(mask: np.ndarray, labels=None):
    """Row-major ``(I, J)`` index arrays of a membership mask; rejects empty rows."""
    empty = np.flatnonzero(~mask.any(axis=1))
    if empty.size:
        i = int(empty[0]) if labels is None else labels[int(empty[0])]
        raise EmptyNeighborhoodError(f"neighborhood of query {i} is empty")
    return np.nonzero(mask)


def project(x: np.ndarray, maps: np.ndarray) -> np.ndarray:
    """``[T, C_in] -> [heads, T, C_h]``."""
    return x @ maps


def pair_probabilities(scores: np.ndarray, I, J, shape) -> np.ndarray:
    """Scatter ``[heads, P]`` pair scores into ``[heads, n_q, n_k]`` and softmax over keys."""
    dense = np.zeros((scores.shape[0],) + tuple(shape))
    dense[:, I, J] = scores
    mask = np.zeros(shape, dtype=bool)
    mask[I, J] = True
    return softmax(dense, mask[None, :, :], axis=-1)


def combine_heads(w: AttentionWeights, head_out: np.ndarray, value_scale: float = 1.0) -> np.ndarray:
    """Concatenate ``[heads, T, C_h]`` in head order and apply the output map."""
    concat = np.ascontiguousarray(head_out.transpose(1, 0, 2)).reshape(head_out.shape[1], -1)
    if value_scale != 1.0:
        concat = concat * value_scale
    return check_finite(w.out(concat), "attention output")


def relative_pair_scores(
    w: AttentionWeights,
    x: np.ndarray,
    rho: np.ndarray,
    I,
    J,
    key_content: str = "j",
    path: str = "naive",
    cache: Optional[dict] = None,
    scale_scores: bool = False,
    rho_index=None,
) -> np.ndarray:
    """Scores ``<W_q x_i, W_k (x_src + rho_ij)>`` for each pair, ``[heads, P]``.

    ``naive`` projects the encoded keys pair by pair. ``fast`` splits the score
    into a content part, computed once and kept in ``cache``, plus a cross term
    ``<W_k^T W_q x_i, rho_ij>`` that is the only piece depending on ``rho``.
    With ``rho_index`` given, ``rho`` holds one row per distinct offset and
    pair ``p`` uses row ``rho_index[p]``.
    """
    src = J if key_content == "j" else I
    if key_content not in ("i", "j"):
        raise ValueError(f"key_content must be 'i' or 'j', got {key_content!r}")
    cache = {} if cache is None else cache
    if "q" not in cache:
        cache["q"] = project(x, w.qry)
    q = cache["q"]
    if path == "naive":
        if rho_index is not None:
            rho = rho[rho_index]
        keys = (x[src] + rho) @ w.key
        s = np.einsum("hpd,hpd->hp", q[:, I], keys)
    elif path == "fast":
        if "content" not in cache:
            k = project(x, w.key)
            cache["content"] = np.einsum("hpd,hpd->hp", q[:, I], k[:, src])
            cache["qk"] = q @ w.key.transpose(0, 2, 1)
        if rho_index is None:
            cross = np.einsum("hpc,pc->hp", cache["qk"][:, I], rho)
        else:
            cross = (cache["qk"] @ rho.T)[:, I, rho_index]
        s = cache["content"] + cross
    else:
        raise ValueError(f"path must be 'naive' or 'fast', got {path!r}")
    if scale_scores:
        s = s / math.sqrt(w.head_dim)
    return s


def _check_input(w: AttentionWeights, f: FeatureMap) -> None:
    if f.channels != w.c_in:
        raise DimensionError(f"feature map has {f.channels} channels, weights expect {w.c_in}")


# -- public operations ----------------------------------------------------------


def attention_scores(w: AttentionWeights, head: int, f: FeatureMap, i: int, j: int) -> float:
    """Unnormalized score ``<W_q^head f(i), W_k^head f(j)>``."""
    _check_input(w, f)
    for idx in (i, j):
        if not 0 <= idx < f.positions.n:
            raise IndexError(f"token index {idx} out of range")
    if not 0 <= head < w.heads:
        raise IndexError(f"head {head} out of range")
    return float((f.values[i] @ w.qry[head]) @ (f.values[j] @ w.key[head]))


def _finish(w, f, scores, I, J, x_val, return_probs, value_scale=1.0):
    n = f.positions.n
    probs = pair_probabilities(scores, I, J, (n, n))
    out = combine_heads(w, probs @ project(x_val, w.val), value_scale)
    fm = FeatureMap(f.positions, out)
    return (fm, probs) if return_probs else fm


def self_attend(w: AttentionWeights, f: FeatureMap, nbhd: NeighborhoodSpec = NeighborhoodSpec(),
                scale_scores: bool = False, return_probs: bool = False):
    """Position-free attention restricted to ``nbhd``."""
    _check_input(w, f)
    I, J = neighborhood_pairs(nbhd.mask(f.positions))
    q = project(f.values, w.qry)
    k = project(f.values, w.key)
    s = np.einsum("hpd,hpd->hp", q[:, I], k[:, J])
    if scale_scores:
        s = s / math.sqrt(w.head_dim)
    return _finish(w, f, s, I, J, f.values, return_probs)


def self_attend_absolute(w: AttentionWeights, f: FeatureMap, enc: EncodingFunction,
                         nbhd: NeighborhoodSpec = NeighborhoodSpec(), scale_scores: bool = False,
                         return_probs: bool = False):
    """Absolute positions: ``rho(x(i))`` is added before the query and key maps only."""
    _check_input(w, f)
    I, J = neighborhood_pairs(nbhd.mask(f.positions))
    xa = f.values + encode_spatial(enc, f.positions.positions)
    q = project(xa, w.qry)
    k = project(xa, w.key)
    s = np.einsum("hpd,hpd->hp", q[:, I], k[:, J])
    if scale_scores:
        s = s / math.sqrt(w.head_dim)
    return _finish(w, f, s, I, J, f.values, return_probs)


def self_attend_relative(w: AttentionWeights, f: FeatureMap, enc: EncodingFunction,
                         nbhd: NeighborhoodSpec = NeighborhoodSpec(), scale_scores: bool = False,
                         key_content: str = "j", return_probs: bool = False):
    """Relative positions: keys see ``f(j) + rho(x(j) - x(i))``; queries are encoding-free."""
    _check_input(w, f)
    I, J = neighborhood_pairs(nbhd.mask(f.positions))
    rho = encode_spatial(enc, f.positions.offsets()[I, J])
    s = relative_pair_scores(w, f.values, rho, I, J, key_content, "naive", scale_scores=scale_scores)
    return _finish(w, f, s, I, J, f.values, return_probs)
