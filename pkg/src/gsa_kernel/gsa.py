"""Lifting and group self-attention over R^2 x| H.

Lifted feature maps carry an explicit tuple of stabilizer elements along their
second axis. For finite groups this is the full enumeration; for dilations it
is a window of levels that the group action relabels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .attention import (
    AttentionWeights,
    FeatureMap,
    NeighborhoodSpec,
    combine_heads,
    neighborhood_pairs,
    pair_probabilities,
    project,
    relative_pair_scores,
)
from .encoding import (
    EncodingFunction,
    PositionTable,
    encode_group,
    encode_group_coords,
    encode_spatial,
    group_argument,
    stabilizer_coordinates,
    table_encoding,
)
from .errors import (
    DimensionError,
    GroupMismatchError,
    InsufficientHeadsError,
    NonEnumerableGroupError,
    UnsupportedNeighborhoodError,
)
from .groups import GroupSpec, StabilizerElement, act_on_point, haar_weight, inverse_stabilizer
from .tensor import LinearMap, as_tensor, check_finite

ONE_HOT_LOGIT = 40.0


@dataclass(frozen=True)
class GroupFeatureMap:
    """Values ``[N, |H|, C]`` on positions x stabilizer elements."""

    positions: PositionTable
    group: GroupSpec
    values: np.ndarray
    elements: Optional[tuple] = None

    def __post_init__(self):
        v = check_finite(as_tensor(self.values, 3), "group feature values")
        object.__setattr__(self, "values", v)
        elems = tuple(self.group.enumerate()) if self.elements is None else tuple(self.elements)
        for e in elems:
            if e.group != self.group:
                raise GroupMismatchError(f"element {e} does not belong to {self.group.name}")
        object.__setattr__(self, "elements", elems)
        if v.shape[0] != self.positions.n or v.shape[1] != len(elems):
            raise DimensionError(
                f"values {v.shape} do not match {self.positions.n} positions x {len(elems)} stabilizer elements"
            )

    @property
    def channels(self) -> int:
        return self.values.shape[2]

    @property
    def keys(self) -> list:
        return [e.key for e in self.elements]

    def slice(self, h: StabilizerElement) -> np.ndarray:
        return self.values[:, self.keys.index(h.key), :]


@dataclass(frozen=True)
class GroupNeighborhoodSpec:
    """Spatial neighborhood times a stabilizer part.

    ``stabilizer`` is ``"full"`` or a collection of element keys; ``(j, h_key)``
    is a neighbor of ``(i, h_query)`` when ``h_query^-1 h_key`` is in the set,
    which keeps membership invariant under left translation.
    """

    spatial: NeighborhoodSpec = NeighborhoodSpec()
    stabilizer: object = "full"

    def allows(self, h_query: StabilizerElement, h_key: StabilizerElement) -> bool:
        if self.stabilizer == "full":
            return True
        q = inverse_stabilizer(h_query) * h_key
        return q.key in {tuple(k) for k in self.stabilizer}


def _as_group_nbhd(nbhd) -> GroupNeighborhoodSpec:
    return nbhd if isinstance(nbhd, GroupNeighborhoodSpec) else GroupNeighborhoodSpec(nbhd)


def _enumerable(group: GroupSpec, elements) -> tuple:
    if elements is not None:
        return tuple(elements)
    try:
        return tuple(group.enumerate())
    except Exception as exc:  # pragma: no cover - enumerate is total for supported families
        raise NonEnumerableGroupError(str(exc)) from exc


def _haar_guard(group: GroupSpec, nbhd: NeighborhoodSpec) -> None:
    if group.family != "dilation":
        raise GroupMismatchError(f"Haar-normalized attention needs a dilation group, got {group.name}")
    if nbhd.kind == "grid_window":
        raise UnsupportedNeighborhoodError(
            "grid_window neighborhoods cannot be dilated; use a radius neighborhood"
        )


# -- lifting ------------------------------------------------------------------


def _lift(w, f, enc, group, nbhd, key_content, path, scale_scores, haar, weighted, elements):
    if f.channels != w.c_in:
        raise DimensionError(f"feature map has {f.channels} channels, weights expect {w.c_in}")
    elems = _enumerable(group, elements)
    off = f.positions.offsets()
    n = f.positions.n
    v = project(f.values, w.val)
    shared_mask = None if haar else nbhd.mask(f.positions)
    shared_pairs = None if haar else neighborhood_pairs(shared_mask)
    cache: dict = {}
    slices = []
    for h in elems:
        if haar:
            I, J = neighborhood_pairs(nbhd.mask(f.positions, scale=h.scale))
            cache = {}
        else:
            I, J = shared_pairs
        if path == "fast" and not haar:
            # grid offsets repeat across tokens: encode each distinct offset once
            if "offsets" not in cache:
                cache["offsets"] = np.unique(off[I, J], axis=0, return_inverse=True)
            uniq, inv = cache["offsets"]
            rho = encode_spatial(enc, act_on_point(inverse_stabilizer(h), uniq))
            s = relative_pair_scores(w, f.values, rho, I, J, key_content, path, cache, scale_scores,
                                     rho_index=inv.reshape(-1))
        else:
            rho = encode_spatial(enc, act_on_point(inverse_stabilizer(h), off[I, J]))
            s = relative_pair_scores(w, f.values, rho, I, J, key_content, path, cache, scale_scores)
        probs = pair_probabilities(s, I, J, (n, n))
        scale = haar_weight(h, group.d) if (haar and weighted) else 1.0
        slices.append(combine_heads(w, probs @ v, scale))
    return GroupFeatureMap(f.positions, group, np.stack(slices, axis=1), elems)


def lift_attend(w: AttentionWeights, f: FeatureMap, enc: EncodingFunction, group: GroupSpec,
                nbhd: NeighborhoodSpec = NeighborhoodSpec(), key_content: str = "j",
                scale_scores: bool = False, elements=None) -> GroupFeatureMap:
    """Lifting self-attention: one relative-attention pass per ``h`` with encoding ``rho(h^-1 delta)``."""
    return _lift(w, f, enc, group, nbhd, key_content, "naive", scale_scores, False, False, elements)


def lift_attend_fast(w: AttentionWeights, f: FeatureMap, enc: EncodingFunction, group: GroupSpec,
                     nbhd: NeighborhoodSpec = NeighborhoodSpec(), key_content: str = "j",
                     scale_scores: bool = False, elements=None) -> GroupFeatureMap:
    """Same result as :func:`lift_attend`; content scores are computed once and reused for every ``h``."""
    return _lift(w, f, enc, group, nbhd, key_content, "fast", scale_scores, False, False, elements)


def lift_attend_haar(w: AttentionWeights, f: FeatureMap, enc: EncodingFunction, group: GroupSpec,
                     nbhd: NeighborhoodSpec, weighted: bool = True, key_content: str = "j",
                     elements=None) -> GroupFeatureMap:
    """Dilation lifting: slice ``h`` uses the neighborhood scaled by ``h`` and weight ``h^-d``."""
    _haar_guard(group, nbhd)
    return _lift(w, f, enc, group, nbhd, key_content, "naive", False, True, weighted, elements)


# -- group attention ------------------------------------------------------------


def _group(w, f, enc, nbhd, stabilizer_argument, path, scale_scores, haar, weighted):
    if f.channels != w.c_in:
        raise DimensionError(f"feature map has {f.channels} channels, weights expect {w.c_in}")
    if enc.group is not None and enc.group != f.group:
        raise GroupMismatchError(f"encoding for {enc.group.name} applied to a {f.group.name} feature map")
    gn = _as_group_nbhd(nbhd)
    if haar:
        _haar_guard(f.group, gn.spatial)
    elems = f.elements
    G = len(elems)
    n = f.positions.n
    x = f.values.reshape(n * G, f.channels)
    v = project(x, w.val)
    off = f.positions.offsets()
    allowed = np.array([[gn.allows(a, b) for b in elems] for a in elems], dtype=bool)
    ht, hh = np.nonzero(allowed)
    shared = None if haar else neighborhood_pairs(gn.spatial.mask(f.positions))
    cache: dict = {}
    slices = []
    for h in elems:
        if haar:
            I, J = neighborhood_pairs(gn.spatial.mask(f.positions, scale=h.scale))
            cache = {}
        else:
            I, J = shared
        # stabilizer arguments depend only on (h_query, h_key) for this h
        args = [group_argument(h, elems[a], elems[b], stabilizer_argument) for a, b in zip(ht, hh)]
        uniq: dict = {}
        arg_idx = np.array([uniq.setdefault(a.key, len(uniq)) for a in args], dtype=np.int64)
        reps = {}
        for a in args:
            reps.setdefault(a.key, a)
        sp = act_on_point(inverse_stabilizer(h), off[I, J])
        if enc.mode == "fourier":
            coords = np.stack([stabilizer_coordinates(reps[k]) for k in uniq])
            table = encode_group_coords(enc, sp[:, None, :], coords[None, :, :])
        else:
            table = np.stack([encode_group(enc, sp, reps[k]) for k in uniq], axis=1)
        TI = (I[:, None] * G + ht[None, :]).reshape(-1)
        TJ = (J[:, None] * G + hh[None, :]).reshape(-1)
        rho = table[:, arg_idx, :].reshape(-1, enc.c_in)
        s = relative_pair_scores(w, x, rho, TI, TJ, "j", path, cache, scale_scores)
        probs = pair_probabilities(s, TI, TJ, (n * G, n * G))
        per_query = (probs @ v).reshape(w.heads, n, G, w.head_dim)
        summed = per_query.sum(axis=2)
        scale = haar_weight(h, f.group.d + 1) if (haar and weighted) else 1.0
        slices.append(combine_heads(w, summed, scale))
    return GroupFeatureMap(f.positions, f.group, np.stack(slices, axis=1), elems)


def group_attend(w: AttentionWeights, f: GroupFeatureMap, enc: EncodingFunction, nbhd=NeighborhoodSpec(),
                 stabilizer_argument: str = "relative", path: str = "naive",
                 scale_scores: bool = False) -> GroupFeatureMap:
    """Group self-attention.

    For each output ``h`` and query ``(i, h_query)`` the softmax runs jointly over
    ``(j, h_key)`` in the group neighborhood; head outputs are summed over
    ``h_query`` and the output map is applied after that sum.
    """
    return _group(w, f, enc, nbhd, stabilizer_argument, path, scale_scores, False, False)


def group_attend_haar(w: AttentionWeights, f: GroupFeatureMap, enc: EncodingFunction, nbhd,
                      weighted: bool = True, stabilizer_argument: str = "relative") -> GroupFeatureMap:
    """Dilation group attention: neighborhoods scaled by ``h``, weight ``h^-(d+1)``."""
    return _group(w, f, enc, nbhd, stabilizer_argument, "naive", False, True, weighted)


# -- convolution as attention -----------------------------------------------------


@dataclass(frozen=True)
class ConvolutionAttention:
    """Weights and table encoding that make relative attention act as a k x k convolution.

    Inputs must first be passed through :meth:`augment`, which appends three
    encoding slots and a constant channel. Query maps read the constant channel,
    key maps read the slots, so head ``(a, b)`` scores ``-alpha |delta - (a, b)|^2``
    up to a per-head constant and attends to that offset alone.
    """

    weights: AttentionWeights
    encoding: EncodingFunction
    k: int
    c_in: int

    @property
    def nbhd(self) -> NeighborhoodSpec:
        return NeighborhoodSpec("grid_window", self.k)

    def augment(self, values: np.ndarray) -> np.ndarray:
        extra = np.zeros((values.shape[0], 4))
        extra[:, 3] = 1.0
        return np.concatenate([values, extra], axis=1)


def express_convolution(kernel, grid: PositionTable, heads: Optional[int] = None,
                        alpha: float = ONE_HOT_LOGIT) -> ConvolutionAttention:
    """Build a :class:`ConvolutionAttention` for ``kernel[k, k, C_in, C_out]`` on ``grid``."""
    kernel = as_tensor(kernel, 4)
    k, k2, c_in, c_out = kernel.shape
    if k != k2 or k % 2 == 0:
        raise ValueError(f"kernel must be square with odd size, got {kernel.shape[:2]}")
    if not grid.is_grid:
        raise UnsupportedNeighborhoodError("express_convolution needs a grid position table")
    need = k * k
    if heads is not None and heads < need:
        raise InsufficientHeadsError(f"a {k}x{k} kernel needs {need} heads, only {heads} available")
    half = k // 2
    c_aug = c_in + 4
    c_h = max(3, c_out)
    qry = np.zeros((need, c_aug, c_h))
    key = np.zeros((need, c_aug, c_h))
    val = np.zeros((need, c_aug, c_h))
    w_out = np.zeros((need * c_h, c_out))
    head = 0
    for a in range(-half, half + 1):
        for b in range(-half, half + 1):
            qry[head, c_in + 3, :3] = alpha * np.array([2.0 * a, 2.0 * b, -1.0])
            key[head, c_in : c_in + 3, :3] = np.eye(3)
            val[head, :c_in, :c_out] = kernel[a + half, b + half]
            w_out[head * c_h : head * c_h + c_out, :] = np.eye(c_out)
            head += 1
    table = {}
    for a in range(-half, half + 1):
        for b in range(-half, half + 1):
            vec = np.zeros(c_aug)
            vec[c_in : c_in + 3] = (a, b, a * a + b * b)
            table[(a, b)] = vec
    enc = table_encoding(c_aug, table, unit=grid.spacing)
    weights = AttentionWeights(qry, key, val, LinearMap(w_out, np.zeros(c_out)))
    return ConvolutionAttention(weights, enc, k, c_in)


def convolve_via_attention(kernel, image: np.ndarray, spacing: float = 1.0,
                           heads: Optional[int] = None) -> np.ndarray:
    """Zero-padded cross-correlation of ``image[H, W, C_in]`` computed by relative attention."""
    from .attention import self_attend_relative

    kernel = as_tensor(kernel, 4)
    image = as_tensor(image, 3)
    half = kernel.shape[0] // 2
    hgt, wid, c_in = image.shape
    padded = np.zeros((hgt + 2 * half, wid + 2 * half, c_in))
    padded[half : half + hgt, half : half + wid] = image
    grid = PositionTable.grid(padded.shape[0], padded.shape[1], spacing)
    conv = express_convolution(kernel, grid, heads)
    fm = FeatureMap(grid, conv.augment(padded.reshape(-1, c_in)))
    out = self_attend_relative(conv.weights, fm, conv.encoding, conv.nbhd).values
    out = out.reshape(padded.shape[0], padded.shape[1], -1)
    return out[half : half + hgt, half : half + wid]
