"""Stabilizer groups H and the affine groups R^2 x| H built on top of them.

Rotations and reflections are stored as integer indices, dilations as integer
levels of a fixed base factor, so every stabilizer product is exact integer
arithmetic. Only translations carry floating-point rounding.

Dihedral elements are written ``r^k m^s`` and act on the plane as the matrix
``R(2 pi k / n) @ M^s`` with ``M = diag(1, -1)`` (reflection across the first
axis, applied before the rotation).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Optional, Sequence

import numpy as np

from .errors import GroupMismatchError, NonEnumerableGroupError

FAMILIES = ("trivial", "cyclic", "dihedral", "dilation")
DEFAULT_LEVELS = (-1, 0, 1)


@dataclass(frozen=True)
class GroupSpec:
    """Description of a stabilizer group H acting on R^d (d = 2).

    ``levels`` and ``factor`` only matter for the dilation family, where the
    enumerated elements are ``factor ** level`` for each level in the window.
    """

    family: str
    n: int = 1
    levels: tuple = DEFAULT_LEVELS
    factor: float = 2.0
    d: int = 2

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown group family {self.family!r}; expected one of {FAMILIES}")
        if self.d != 2:
            raise ValueError("only planar groups (d = 2) are supported")
        if self.family in ("cyclic", "dihedral") and self.n < 1:
            raise ValueError(f"{self.family} group needs n >= 1, got {self.n}")
        if self.family == "trivial":
            object.__setattr__(self, "n", 1)
        if self.family == "dilation":
            levels = tuple(int(v) for v in self.levels)
            if len(set(levels)) != len(levels) or 0 not in levels:
                raise ValueError(f"dilation levels must be distinct and contain 0, got {levels}")
            if not (self.factor > 1.0 and math.isfinite(self.factor)):
                raise ValueError(f"dilation factor must be finite and > 1, got {self.factor}")
            object.__setattr__(self, "levels", tuple(sorted(levels)))
        else:
            object.__setattr__(self, "levels", (0,))

    # -- structure ------------------------------------------------------------

    @property
    def unimodular(self) -> bool:
        return self.family != "dilation"

    @property
    def has_reflection(self) -> bool:
        return self.family == "dihedral"

    @property
    def rotation_order(self) -> int:
        return self.n if self.family in ("cyclic", "dihedral") else 1

    @property
    def order(self) -> int:
        if self.family == "dilation":
            return len(self.levels)
        return self.rotation_order * (2 if self.has_reflection else 1)

    @property
    def name(self) -> str:
        """Model-designation style label (Z2, R4, Z2M, R8M, ...)."""
        if self.family == "trivial":
            return "Z2"
        if self.family == "cyclic":
            return f"R{self.n}"
        if self.family == "dihedral":
            return "Z2M" if self.n == 1 else f"R{self.n}M"
        return f"S{self.factor:g}"

    def identity(self) -> "StabilizerElement":
        return StabilizerElement(self, 0, False, 0)

    def element(self, k: int = 0, reflect: bool = False, level: int = 0) -> "StabilizerElement":
        if reflect and not self.has_reflection:
            raise GroupMismatchError(f"group {self.name} has no reflections")
        if level and self.family != "dilation":
            raise GroupMismatchError(f"group {self.name} has no dilations")
        return StabilizerElement(self, int(k) % self.rotation_order, bool(reflect), int(level))

    def rotation(self, k: int) -> "StabilizerElement":
        return self.element(k=k)

    def dilation(self, level: int) -> "StabilizerElement":
        return self.element(level=level)

    def enumerate(self) -> list["StabilizerElement"]:
        """All enumerated elements, identity first.

        Rotation index ascending, unreflected before reflected; for dilations
        the remaining levels follow the identity in ascending order.
        """
        if self.family == "dilation":
            rest = [lv for lv in self.levels if lv != 0]
            return [self.identity()] + [self.dilation(lv) for lv in rest]
        flags = (False, True) if self.has_reflection else (False,)
        return [self.element(k, s) for s in flags for k in range(self.rotation_order)]

    def index(self, h: "StabilizerElement") -> int:
        """Position of ``h`` in :meth:`enumerate`; raises KeyError if absent."""
        self._check(h)
        for idx, e in enumerate(self.enumerate()):
            if e.key == h.key:
                return idx
        raise KeyError(f"{h} lies outside the enumerated window of {self.name}")

    def contains(self, h: "StabilizerElement") -> bool:
        return h.group == self and (self.family != "dilation" or h.level in self.levels)

    def _check(self, h: "StabilizerElement") -> None:
        if h.group != self:
            raise GroupMismatchError(f"element of {h.group.name} used with group {self.name}")


@dataclass(frozen=True)
class StabilizerElement:
    """``r^k m^s`` times ``factor ** level``; at most one of the parts is non-trivial per family."""

    group: GroupSpec = field(repr=False)
    k: int = 0
    reflect: bool = False
    level: int = 0

    @property
    def key(self) -> tuple:
        return (self.k, int(self.reflect), self.level)

    @property
    def angle(self) -> float:
        return 2.0 * math.pi * self.k / self.group.rotation_order

    @property
    def scale(self) -> float:
        return float(self.group.factor ** self.level)

    @property
    def log_scale(self) -> float:
        return self.level * math.log(self.group.factor)

    def is_identity(self) -> bool:
        return self.key == (0, 0, 0)

    def __mul__(self, other: "StabilizerElement") -> "StabilizerElement":
        return compose_stabilizer(self, other)

    def inverse(self) -> "StabilizerElement":
        return inverse_stabilizer(self)

    def matrix(self) -> np.ndarray:
        """2x2 real matrix of the point action (f64 trig; for reference use)."""
        c, s = math.cos(self.angle), math.sin(self.angle)
        m = np.array([[c, -s], [s, c]])
        if self.reflect:
            m = m @ np.diag([1.0, -1.0])
        return m * self.scale

    def __str__(self) -> str:
        g = self.group
        if g.family == "dilation":
            return f"{g.factor:g}^{self.level}"
        return f"r^{self.k}" + ("m" if self.reflect else "")


def compose_stabilizer(h1: StabilizerElement, h2: StabilizerElement) -> StabilizerElement:
    if h1.group != h2.group:
        raise GroupMismatchError(f"cannot compose elements of {h1.group.name} and {h2.group.name}")
    n = h1.group.rotation_order
    k = (h1.k + (-h2.k if h1.reflect else h2.k)) % n
    return StabilizerElement(h1.group, k, h1.reflect != h2.reflect, h1.level + h2.level)


def inverse_stabilizer(h: StabilizerElement) -> StabilizerElement:
    n = h.group.rotation_order
    k = h.k if h.reflect else (-h.k) % n
    return StabilizerElement(h.group, k, h.reflect, -h.level)


def act_on_stabilizer(h: StabilizerElement, h_tilde: StabilizerElement) -> StabilizerElement:
    """Left product ``h . h_tilde``."""
    return compose_stabilizer(h, h_tilde)


def _rotate(points: np.ndarray, k: int, n: int) -> np.ndarray:
    if (4 * k) % n == 0:
        quarter = (4 * k // n) % 4
        x, y = points[..., 0], points[..., 1]
        if quarter == 0:
            return points.copy()
        if quarter == 1:
            return np.stack([-y, x], axis=-1)
        if quarter == 2:
            return np.stack([-x, -y], axis=-1)
        return np.stack([y, -x], axis=-1)
    theta = 2.0 * math.pi * k / n
    c, s = math.cos(theta), math.sin(theta)
    x, y = points[..., 0], points[..., 1]
    return np.stack([c * x - s * y, s * x + c * y], axis=-1)


def act_on_point(h: StabilizerElement, x) -> np.ndarray:
    """Apply ``h`` to one point ``[2]`` or a batch ``[..., 2]``."""
    pts = np.asarray(x, dtype=np.float64)
    if pts.shape[-1] != h.group.d:
        raise ValueError(f"point dimension {pts.shape[-1]} != {h.group.d}")
    if h.reflect:
        pts = np.stack([pts[..., 0], -pts[..., 1]], axis=-1)
    out = _rotate(pts, h.k, h.group.rotation_order)
    if h.level:
        out = out * h.scale
    return out


def haar_weight(h: StabilizerElement, exponent: int) -> float:
    """Modular normalization ``scale ** -exponent`` (1.0 on unimodular groups)."""
    if h.group.unimodular or h.level == 0:
        return 1.0
    return float(h.group.factor ** (-exponent * h.level))


@dataclass(frozen=True)
class AffineElement:
    """``g = (translation, stabilizer)`` acting by ``x -> stabilizer . x + translation``."""

    translation: tuple
    stabilizer: StabilizerElement

    def __post_init__(self):
        t = tuple(float(v) for v in np.asarray(self.translation, dtype=np.float64).reshape(-1))
        if len(t) != self.stabilizer.group.d:
            raise ValueError(f"translation must have {self.stabilizer.group.d} components")
        object.__setattr__(self, "translation", t)

    @property
    def group(self) -> GroupSpec:
        return self.stabilizer.group

    @classmethod
    def identity(cls, group: GroupSpec) -> "AffineElement":
        return cls((0.0,) * group.d, group.identity())

    def act(self, x) -> np.ndarray:
        return act_on_point(self.stabilizer, x) + np.asarray(self.translation)

    def __mul__(self, other: "AffineElement") -> "AffineElement":
        return compose(self, other)

    def inverse(self) -> "AffineElement":
        return inverse(self)


def compose(g1: AffineElement, g2: AffineElement) -> AffineElement:
    """Semidirect product ``(x1 + h1 . x2, h1 h2)``."""
    if g1.group != g2.group:
        raise GroupMismatchError(f"cannot compose elements of {g1.group.name} and {g2.group.name}")
    t = np.asarray(g1.translation) + act_on_point(g1.stabilizer, g2.translation)
    return AffineElement(tuple(t), compose_stabilizer(g1.stabilizer, g2.stabilizer))


def inverse(g: AffineElement) -> AffineElement:
    h_inv = inverse_stabilizer(g.stabilizer)
    return AffineElement(tuple(-act_on_point(h_inv, g.translation)), h_inv)


def cayley_table(group: GroupSpec) -> np.ndarray:
    """``table[a, b]`` = index of ``e_a e_b``, or -1 when the product leaves the window."""
    elems = group.enumerate()
    keys = {e.key: i for i, e in enumerate(elems)}
    table = np.full((len(elems), len(elems)), -1, dtype=np.int64)
    for a, ea in enumerate(elems):
        for b, eb in enumerate(elems):
            table[a, b] = keys.get((ea * eb).key, -1)
    return table


def left_shift(group: GroupSpec, h: StabilizerElement) -> np.ndarray:
    """Index map ``perm[b]`` = index of ``h e_b`` (-1 if outside a dilation window)."""
    group._check(h)
    keys = {e.key: i for i, e in enumerate(group.enumerate())}
    return np.array([keys.get((h * e).key, -1) for e in group.enumerate()], dtype=np.int64)


def check_axioms(group: GroupSpec) -> dict:
    """Exhaustive group-axiom audit over the enumeration.

    Dilation windows are not closed under products, so their closure check is
    carried out in the ambient integer lattice of levels, where every product
    is again a level and therefore a group element.
    """
    elems = group.enumerate()
    e = group.identity()
    failures: list[str] = []
    if len({x.key for x in elems}) != len(elems) or len(elems) != group.order:
        failures.append("enumeration not distinct or wrong size")
    if not elems[0].is_identity():
        failures.append("identity not first")
    keyset = {x.key for x in elems}
    for a in elems:
        if (a * e).key != a.key or (e * a).key != a.key:
            failures.append(f"identity law fails at {a}")
        ai = a.inverse()
        if not (a * ai).is_identity() or not (ai * a).is_identity():
            failures.append(f"inverse law fails at {a}")
        if group.family != "dilation" and ai.key not in keyset:
            failures.append(f"inverse of {a} not enumerated")
        for b in elems:
            ab = a * b
            if group.family != "dilation" and ab.key not in keyset:
                failures.append(f"{a}*{b} not enumerated")
            for c in elems:
                if ((ab * c).key) != ((a * (b * c)).key):
                    failures.append(f"associativity fails at {a},{b},{c}")
    return {"group": group.name, "order": len(elems), "failures": failures}


# -- designations and config --------------------------------------------------


def parse_designation(name: str) -> GroupSpec:
    """``Z2`` (translations only), ``Rn``, ``Z2M``, ``RnM``, ``Dn`` (= ``RnM``), ``Zn`` (n != 2)."""
    s = name.strip().upper()
    if s.endswith("_SA"):
        s = s[:-3]
    if s in ("Z2", "Z1", "TRIVIAL"):
        return GroupSpec("trivial")
    if s == "Z2M":
        return GroupSpec("dihedral", 1)
    try:
        if s.startswith("R") and s.endswith("M"):
            return GroupSpec("dihedral", int(s[1:-1]))
        if s.startswith("R") or s.startswith("Z"):
            return GroupSpec("cyclic", int(s[1:]))
        if s.startswith("D"):
            return GroupSpec("dihedral", int(s[1:]))
    except ValueError:
        pass
    raise ValueError(f"unrecognized group designation {name!r}")


def group_from_config(cfg: dict) -> GroupSpec:
    """Build a :class:`GroupSpec` from ``{"family": ..., "n": ..., "levels"|"log_scales": ...}``."""
    family = cfg.get("family", "trivial")
    if family != "dilation":
        return GroupSpec(family, int(cfg.get("n", 1)))
    factor = float(cfg.get("factor", 2.0))
    if "levels" in cfg:
        levels = tuple(int(v) for v in cfg["levels"])
    elif "log_scales" in cfg:
        step = math.log(factor)
        levels = []
        for s in cfg["log_scales"]:
            q = float(s) / step
            if abs(q - round(q)) > 1e-9:
                raise ValueError(f"log_scale {s} is not an integer multiple of ln({factor:g})")
            levels.append(int(round(q)))
        levels = tuple(levels)
    else:
        levels = DEFAULT_LEVELS
    return GroupSpec("dilation", levels=levels, factor=factor)


def group_to_config(group: GroupSpec) -> dict:
    if group.family == "dilation":
        return {"family": "dilation", "levels": list(group.levels), "factor": group.factor}
    return {"family": group.family, "n": group.n}
