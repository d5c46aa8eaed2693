"""Position tables and positional encodings.

The encoding is a fixed random Fourier feature map. It can be evaluated at any
real offset, so a group element transforms the encoding by acting on its
argument rather than by resampling stored values.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import DimensionError, GroupMismatchError, OffGridOffsetError
from .groups import (
    AffineElement,
    GroupSpec,
    StabilizerElement,
    _rotate,
    act_on_point,
    compose_stabilizer,
    inverse_stabilizer,
)

DEFAULT_NUM_FEATURES = 64
DEFAULT_STABILIZER_SCALE = 2.0
STABILIZER_ARGUMENTS = ("relative", "printed")


# -- positions ----------------------------------------------------------------


@dataclass(frozen=True)
class PositionTable:
    """The position function ``x: S -> R^2`` as an ``[N, 2]`` array.

    ``grid_shape`` is set only when the positions are exactly the centred lattice
    produced by :meth:`grid`. ``spacing`` survives transformations, which keeps
    the window size of a translated grid meaningful.
    """

    positions: np.ndarray
    grid_shape: Optional[tuple] = None
    spacing: Optional[float] = None

    def __post_init__(self):
        p = np.ascontiguousarray(np.asarray(self.positions, dtype=np.float64))
        if p.ndim != 2 or p.shape[1] != 2:
            raise DimensionError(f"positions must have shape [N, 2], got {p.shape}")
        if not np.all(np.isfinite(p)):
            raise ValueError("positions must be finite")
        object.__setattr__(self, "positions", p)
        if len(p) > 1:
            diff = p[:, None, :] - p[None, :, :]
            dist = np.abs(diff).max(axis=-1) + np.eye(len(p))
            if dist.min() < 1e-12:
                raise ValueError("positions must be pairwise distinct")

    @classmethod
    def grid(cls, height: int, width: int, spacing: float = 1.0) -> "PositionTable":
        """Row-major centred lattice ``((r - (H-1)/2) s, (c - (W-1)/2) s)``."""
        r, c = np.meshgrid(np.arange(height), np.arange(width), indexing="ij")
        pos = np.stack([(r - (height - 1) / 2.0) * spacing, (c - (width - 1) / 2.0) * spacing], axis=-1)
        return cls(pos.reshape(-1, 2), (int(height), int(width)), float(spacing))

    @classmethod
    def point_set(cls, positions, spacing: Optional[float] = None) -> "PositionTable":
        return cls(positions, None, spacing)

    @property
    def n(self) -> int:
        return self.positions.shape[0]

    @property
    def is_grid(self) -> bool:
        return self.grid_shape is not None

    def offsets(self) -> np.ndarray:
        """``[N, N, 2]`` array with entry ``[i, j] = x(j) - x(i)``."""
        return self.positions[None, :, :] - self.positions[:, None, :]

    def transformed(self, g: AffineElement) -> "PositionTable":
        """Positions mapped by ``x -> g . x``; the result is a point set."""
        return PositionTable(g.act(self.positions), None, self.spacing)


def relative_offset(positions: PositionTable, i: int, j: int) -> np.ndarray:
    n = positions.n
    for idx in (i, j):
        if not 0 <= idx < n:
            raise IndexError(f"token index {idx} out of range for {n} positions")
    return positions.positions[j] - positions.positions[i]


# -- stabilizer coordinates ---------------------------------------------------


def coordinate_dim(group: Optional[GroupSpec]) -> int:
    if group is None:
        return 0
    return 2 + int(group.has_reflection) + int(group.family == "dilation")


def stabilizer_coordinates(h: StabilizerElement) -> np.ndarray:
    """Embed ``h`` as ``(cos t, sin t[, +-1][, log_scale])``."""
    g = h.group
    parts = [_rotate(np.array([1.0, 0.0]), h.k, g.rotation_order)]
    if g.has_reflection:
        parts.append(np.array([-1.0 if h.reflect else 1.0]))
    if g.family == "dilation":
        parts.append(np.array([h.log_scale]))
    return np.concatenate(parts)


# -- encodings ----------------------------------------------------------------


@dataclass(frozen=True)
class EncodingFunction:
    """Positional encoding rho^P in ``fourier`` or ``table`` mode.

    Fourier mode evaluates ``cos(omega @ z + phases) @ projection`` where ``z`` is a
    spatial offset, optionally followed by stabilizer coordinates. Table mode
    looks up exact integer keys (offsets measured in units of ``unit``).
    """

    mode: str
    c_in: int
    group: Optional[GroupSpec] = None
    omega: Optional[np.ndarray] = field(default=None, repr=False)
    phases: Optional[np.ndarray] = field(default=None, repr=False)
    projection: Optional[np.ndarray] = field(default=None, repr=False)
    table: Optional[dict] = field(default=None, repr=False, compare=False)
    unit: float = 1.0
    seed: int = 0

    def __post_init__(self):
        if self.mode not in ("fourier", "table"):
            raise ValueError(f"encoding mode must be 'fourier' or 'table', got {self.mode!r}")
        if self.mode == "fourier":
            if self.omega is None or self.phases is None or self.projection is None:
                raise ValueError("fourier encoding needs omega, phases and projection")
            k = self.omega.shape[0]
            if self.omega.shape != (k, 2 + coordinate_dim(self.group)):
                raise DimensionError(f"omega shape {self.omega.shape} does not fit group {self.group}")
            if self.phases.shape != (k,) or self.projection.shape != (k, self.c_in):
                raise DimensionError("phases/projection shapes disagree with omega")
        elif self.table is None:
            raise ValueError("table encoding needs a table")

    @property
    def num_features(self) -> int:
        return 0 if self.omega is None else self.omega.shape[0]

    def _fourier(self, z: np.ndarray, cols: slice) -> np.ndarray:
        arg = z @ self.omega[:, cols].T + self.phases
        return np.cos(arg) @ self.projection

    def _table_key(self, delta: np.ndarray) -> tuple:
        q = delta / self.unit
        r = np.round(q)
        if np.any(np.abs(q - r) > 1e-9):
            raise OffGridOffsetError(
                f"offset {tuple(delta.tolist())} is not on the table lattice; use fourier mode for off-grid offsets"
            )
        return tuple(int(v) for v in r)

    def _lookup(self, key: tuple) -> np.ndarray:
        try:
            return self.table[key]
        except KeyError:
            raise OffGridOffsetError(
                f"no table entry for key {key}; use fourier mode for offsets outside the tabulated set"
            ) from None


def fourier_encoding(
    c_in: int,
    group: Optional[GroupSpec] = None,
    seed: int = 42,
    num_features: int = DEFAULT_NUM_FEATURES,
    length_scale: float = 1.0,
    stabilizer_scale: float = DEFAULT_STABILIZER_SCALE,
) -> EncodingFunction:
    """Seeded random Fourier features.

    Spatial frequencies ~ N(0, 1/length_scale^2), phases ~ U[0, 2 pi), projection
    ~ N(0, 1/K). Stabilizer frequency columns are drawn last so the spatial part
    does not depend on the group.
    """
    rng = np.random.default_rng(seed)
    k = int(num_features)
    omega_sp = rng.standard_normal((k, 2)) / length_scale
    phases = rng.uniform(0.0, 2.0 * math.pi, k)
    projection = rng.standard_normal((k, c_in)) / math.sqrt(k)
    omega_st = rng.standard_normal((k, coordinate_dim(group))) * stabilizer_scale
    omega = np.concatenate([omega_sp, omega_st], axis=1)
    return EncodingFunction("fourier", int(c_in), group, omega, phases, projection, seed=int(seed))


def table_encoding(c_in: int, table: dict, group: Optional[GroupSpec] = None, unit: float = 1.0) -> EncodingFunction:
    frozen = {tuple(int(v) for v in key): np.asarray(val, dtype=np.float64) for key, val in table.items()}
    for key, val in frozen.items():
        if val.shape != (c_in,):
            raise DimensionError(f"table entry {key} has shape {val.shape}, expected ({c_in},)")
    return EncodingFunction("table", int(c_in), group, table=frozen, unit=float(unit))


def tabulate(enc: EncodingFunction, radius: int, unit: float = 1.0) -> EncodingFunction:
    """Sample a fourier encoding on all integer offsets with ``|dx|, |dy| <= radius``.

    With a group attached, every enumerated stabilizer quotient is tabulated too.
    """
    table = {}
    rng = range(-radius, radius + 1)
    offsets = [(a, b) for a in rng for b in rng]
    for a, b in offsets:
        delta = np.array([a * unit, b * unit])
        table[(a, b)] = encode_spatial(enc, delta)
        if enc.group is not None:
            for h in _quotients(enc.group):
                table[(a, b) + h.key] = encode_group(enc, delta, h)
    return table_encoding(enc.c_in, table, enc.group, unit)


def _quotients(group: GroupSpec) -> list:
    elems = group.enumerate()
    seen = {}
    for a in elems:
        for b in elems:
            q = compose_stabilizer(inverse_stabilizer(a), b)
            seen.setdefault(q.key, q)
    return list(seen.values())


def encode_spatial(enc: EncodingFunction, delta) -> np.ndarray:
    """rho^P(delta) for a single offset ``[2]`` or a batch ``[..., 2]``."""
    delta = np.asarray(delta, dtype=np.float64)
    if delta.shape[-1] != 2:
        raise DimensionError(f"offsets must end in 2 coordinates, got shape {delta.shape}")
    if enc.mode == "fourier":
        return enc._fourier(delta, slice(0, 2))
    flat = delta.reshape(-1, 2)
    out = np.stack([enc._lookup(enc._table_key(d)) for d in flat]) if len(flat) else np.zeros((0, enc.c_in))
    return out.reshape(delta.shape[:-1] + (enc.c_in,))


def transform_encoding(enc: EncodingFunction, h: StabilizerElement, delta) -> np.ndarray:
    """L_h[rho](delta) = rho^P(h^-1 . delta)."""
    return encode_spatial(enc, act_on_point(inverse_stabilizer(h), delta))


def encode_group_coords(enc: EncodingFunction, delta, coords) -> np.ndarray:
    """Fourier evaluation on concatenated ``(delta, coords)``; shapes broadcast."""
    delta = np.asarray(delta, dtype=np.float64)
    coords = np.asarray(coords, dtype=np.float64)
    shape = np.broadcast_shapes(delta.shape[:-1], coords.shape[:-1])
    z = np.concatenate(
        [np.broadcast_to(delta, shape + delta.shape[-1:]), np.broadcast_to(coords, shape + coords.shape[-1:])],
        axis=-1,
    )
    return enc._fourier(z, slice(None))


def encode_group(enc: EncodingFunction, delta, h_rel: StabilizerElement) -> np.ndarray:
    """rho^P(delta, h_rel) with ``h_rel`` embedded by :func:`stabilizer_coordinates`."""
    if enc.group is None or h_rel.group != enc.group:
        raise GroupMismatchError(
            f"encoding built for {getattr(enc.group, 'name', None)} evaluated at an element of {h_rel.group.name}"
        )
    delta = np.asarray(delta, dtype=np.float64)
    if enc.mode == "fourier":
        return encode_group_coords(enc, delta, stabilizer_coordinates(h_rel))
    flat = delta.reshape(-1, 2)
    out = np.stack([enc._lookup(enc._table_key(d) + h_rel.key) for d in flat])
    return out.reshape(delta.shape[:-1] + (enc.c_in,))


def group_argument(
    h: StabilizerElement,
    h_query: StabilizerElement,
    h_key: StabilizerElement,
    stabilizer_argument: str = "relative",
) -> StabilizerElement:
    """Stabilizer argument of the encoding seen by output slice ``h``.

    ``relative``: ``(h^-1 h_query)^-1 (h^-1 h_key)``, which reduces to
    ``h_query^-1 h_key``; both endpoints move with ``h`` exactly as spatial
    positions do. ``printed``: ``h^-1 (h_query^-1 h_key)``, kept as a
    non-equivariant reference.
    """
    rel = compose_stabilizer(inverse_stabilizer(h_query), h_key)
    if stabilizer_argument == "relative":
        return rel
    if stabilizer_argument == "printed":
        return compose_stabilizer(inverse_stabilizer(h), rel)
    raise ValueError(f"stabilizer_argument must be one of {STABILIZER_ARGUMENTS}")


def transform_group_encoding(
    enc: EncodingFunction,
    h: StabilizerElement,
    delta,
    h_query: StabilizerElement,
    h_key: StabilizerElement,
    stabilizer_argument: str = "relative",
) -> np.ndarray:
    """L_h[rho]((i, h_query), (j, h_key)) for spatial offset ``delta = x(j) - x(i)``."""
    spatial = act_on_point(inverse_stabilizer(h), delta)
    return encode_group(enc, spatial, group_argument(h, h_query, h_key, stabilizer_argument))


def invariance_residual(
    enc: EncodingFunction,
    group: GroupSpec,
    samples: Sequence,
    kind: str = "relative_lifted",
    translations: Sequence = ((0.0, 0.0), (1.5, -0.5)),
    stabilizer_argument: str = "relative",
) -> float:
    """max over g = (y, h_bar) and samples of ``|L_g[rho] - rho|_inf``.

    ``samples`` holds ``delta`` offsets, or ``(delta, h_key)`` pairs for group
    encodings (the query sits at the identity). Kinds:

    * ``relative_lifted`` compares ``rho_{h_bar h}(h_bar delta)`` with ``rho_h(delta)``
      for every lifted slice ``h``; this is the identity the equivariance of
      lifting and group attention rests on.
    * ``relative`` compares ``rho(h_bar delta)`` with ``rho(delta)``.
    * ``absolute`` treats ``delta`` as a position and compares ``rho(g . x)``
      with ``rho(x)``.
    """
    if not samples:
        raise ValueError("invariance_residual needs at least one sample")
    worst = 0.0
    slices = group.enumerate()
    for hbar in group.enumerate():
        for y in translations:
            g = AffineElement(y, hbar)
            for s in samples:
                if isinstance(s, tuple) and len(s) == 2 and isinstance(s[1], StabilizerElement):
                    delta, h_key = np.asarray(s[0], dtype=np.float64), s[1]
                else:
                    delta, h_key = np.asarray(s, dtype=np.float64), None
                moved = act_on_point(hbar, delta)
                if kind == "absolute":
                    diffs = [encode_spatial(enc, g.act(delta)) - encode_spatial(enc, delta)]
                elif kind == "relative":
                    diffs = [encode_spatial(enc, moved) - encode_spatial(enc, delta)]
                elif kind == "relative_lifted":
                    diffs = []
                    for h in slices:
                        hh = compose_stabilizer(hbar, h)
                        if h_key is None:
                            a = transform_encoding(enc, hh, moved)
                            b = transform_encoding(enc, h, delta)
                        else:
                            e = group.identity()
                            a = transform_group_encoding(
                                enc, hh, moved, compose_stabilizer(hbar, e), compose_stabilizer(hbar, h_key),
                                stabilizer_argument,
                            )
                            b = transform_group_encoding(enc, h, delta, e, h_key, stabilizer_argument)
                        diffs.append(a - b)
                else:
                    raise ValueError(f"unknown invariance kind {kind!r}")
                for d in diffs:
                    worst = max(worst, float(np.max(np.abs(d))))
    return worst


def encoding_from_config(cfg: dict, c_in: int, group: Optional[GroupSpec], radius: int = 4) -> EncodingFunction:
    """Build an encoding from ``{"mode", "seed", "num_features", "length_scale"}``."""
    enc = fourier_encoding(
        c_in,
        group,
        seed=int(cfg.get("seed", 42)),
        num_features=int(cfg.get("num_features", DEFAULT_NUM_FEATURES)),
        length_scale=float(cfg.get("length_scale", 1.0)),
    )
    if cfg.get("mode", "fourier") == "table":
        return tabulate(enc, radius)
    return enc
