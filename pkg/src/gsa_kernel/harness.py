"""Group actions on feature maps, two-path equivariance checks, oracles and the audit suite."""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .attention import (
    FeatureMap,
    NeighborhoodSpec,
    init_attention_weights,
    self_attend,
    self_attend_absolute,
    self_attend_relative,
)
from .encoding import PositionTable, fourier_encoding
from .errors import ConfigError, UnrepresentableActionError
from .groups import (
    AffineElement,
    GroupSpec,
    StabilizerElement,
    cayley_table,
    check_axioms,
    haar_weight,
    left_shift,
    parse_designation,
)
from .gsa import (
    GroupFeatureMap,
    convolve_via_attention,
    group_attend,
    group_attend_haar,
    lift_attend,
    lift_attend_fast,
    lift_attend_haar,
)
from .network import NetworkConfig, build, forward
from .tensor import as_tensor

LATTICE_TOL = 1e-9


# -- actions --------------------------------------------------------------------


@dataclass(frozen=True)
class GroupAction:
    """A transformation of feature maps.

    ``permutation``: values are re-indexed, ``new[i] = old[src[i]]``, with zero
    fill where ``src[i] == -1`` (the preimage left the domain). ``points``: the
    position table is mapped by ``g`` and values are kept. ``element`` is None for
    bare token permutations that do not come from the affine group.
    """

    element: Optional[AffineElement]
    realization: str
    src: Optional[np.ndarray] = None
    label: str = ""

    @property
    def stabilizer(self) -> Optional[StabilizerElement]:
        return None if self.element is None else self.element.stabilizer

    @property
    def valid(self) -> Optional[np.ndarray]:
        return None if self.src is None else self.src >= 0

    def stabilizer_shift(self, group: GroupSpec) -> np.ndarray:
        h = self.stabilizer
        if h is None:
            return np.arange(group.order)
        return left_shift(group, h)


def _lattice_index(positions: PositionTable, pts: np.ndarray) -> np.ndarray:
    hgt, wid = positions.grid_shape
    s = positions.spacing
    r = pts[:, 0] / s + (hgt - 1) / 2.0
    c = pts[:, 1] / s + (wid - 1) / 2.0
    rr, cc = np.round(r), np.round(c)
    if np.any(np.abs(r - rr) > LATTICE_TOL) or np.any(np.abs(c - cc) > LATTICE_TOL):
        raise UnrepresentableActionError(
            "group element does not map the grid lattice onto itself; use a point-set layout"
        )
    inside = (rr >= 0) & (rr < hgt) & (cc >= 0) & (cc < wid)
    return np.where(inside, rr * wid + cc, -1).astype(np.int64)


def make_action(g: AffineElement, positions: PositionTable, realization: Optional[str] = None,
                label: str = "") -> GroupAction:
    """Action of ``g`` on maps over ``positions`` (permutation on grids, points otherwise)."""
    realization = realization or ("permutation" if positions.is_grid else "points")
    label = label or _describe(g)
    if realization == "points":
        return GroupAction(g, "points", None, label)
    if realization != "permutation":
        raise ValueError(f"unknown realization {realization!r}")
    if not positions.is_grid:
        raise UnrepresentableActionError("permutation realization needs a grid layout")
    if g.stabilizer.level != 0:
        raise UnrepresentableActionError("dilations cannot act on a fixed grid by permutation")
    src = _lattice_index(positions, g.inverse().act(positions.positions))
    return GroupAction(g, "permutation", src, label)


def token_permutation(perm, label: str = "") -> GroupAction:
    """``L_pi f(i) = f(pi^-1(i))`` for a permutation ``perm[i] = pi(i)``."""
    perm = np.asarray(perm, dtype=np.int64)
    src = np.empty_like(perm)
    src[perm] = np.arange(len(perm))
    return GroupAction(None, "permutation", src, label or "token permutation")


def _describe(g: AffineElement) -> str:
    t = ",".join(f"{v:g}" for v in g.translation)
    return f"({t}; {g.stabilizer})"


def act_on_feature_map(a: GroupAction, f: FeatureMap) -> FeatureMap:
    if a.realization == "points":
        return FeatureMap(f.positions.transformed(a.element), f.values)
    if len(a.src) != f.positions.n:
        raise ValueError("action built for a different position table")
    vals = np.where(a.valid[:, None], f.values[np.maximum(a.src, 0)], 0.0)
    return FeatureMap(f.positions, vals)


def act_on_group_feature_map(a: GroupAction, f: GroupFeatureMap) -> GroupFeatureMap:
    """Spatial action plus relabelling ``h -> h_bar h`` of the stabilizer axis."""
    h = a.stabilizer
    elems = f.elements if h is None else tuple(h * e for e in f.elements)
    vals = f.values
    if a.realization == "permutation":
        vals = np.where(a.valid[:, None, None], vals[np.maximum(a.src, 0)], 0.0)
        positions = f.positions
    else:
        positions = f.positions.transformed(a.element)
    if f.group.family != "dilation":
        # finite groups: return the axis in canonical enumeration order
        canon = f.group.enumerate()
        order = [[e.key for e in elems].index(c.key) for c in canon]
        vals = vals[:, order, :]
        elems = tuple(canon)
    return GroupFeatureMap(positions, f.group, vals, elems)


def act(a: GroupAction, f):
    return act_on_group_feature_map(a, f) if isinstance(f, GroupFeatureMap) else act_on_feature_map(a, f)


def boundary_mask(a: GroupAction, nbhd: NeighborhoodSpec, positions: PositionTable) -> np.ndarray:
    """Tokens whose whole neighborhood, and the neighborhood of their preimage, stay in-domain."""
    if a.realization == "points" or a.src is None:
        return np.ones(positions.n, dtype=bool)
    m = nbhd.mask(positions)
    valid = a.valid
    src = np.maximum(a.src, 0)
    all_nb_valid = ~np.any(m & ~valid[None, :], axis=1)
    same_size = m.sum(axis=1) == m[src].sum(axis=1)
    return valid & all_nb_valid & same_size


# -- comparison -------------------------------------------------------------------


def difference(a, b, token_mask=None) -> float:
    """``max |a - b|`` over shared tokens and shared stabilizer keys."""
    if a.positions.n != b.positions.n or not np.allclose(a.positions.positions, b.positions.positions, atol=1e-9):
        raise ValueError("compared maps live on different positions")
    if isinstance(a, GroupFeatureMap):
        common = [k for k in a.keys if k in b.keys]
        va = a.values[:, [a.keys.index(k) for k in common]]
        vb = b.values[:, [b.keys.index(k) for k in common]]
    else:
        va, vb = a.values, b.values
    d = np.abs(va - vb)
    if token_mask is not None:
        d = d[token_mask]
    return float(d.max()) if d.size else 0.0


def _scaled(f, c: float):
    if c == 1.0:
        return f
    if isinstance(f, GroupFeatureMap):
        return GroupFeatureMap(f.positions, f.group, f.values * c, f.elements)
    return FeatureMap(f.positions, f.values * c)


# -- reports --------------------------------------------------------------------


@dataclass(frozen=True)
class AuditReport:
    claim: str
    residual: float
    threshold: float
    verdict: str
    kind: str = "positive"
    instance: str = ""
    seed: int = 0
    group: Optional[str] = None
    witness: Optional[dict] = None
    expected: str = "pass"

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"

    def to_json(self) -> dict:
        out = {
            "claim": self.claim,
            "residual": self.residual,
            "threshold": self.threshold,
            "verdict": self.verdict,
            "seed": self.seed,
            "kind": self.kind,
            "group": self.group,
            "instance": self.instance,
        }
        if self.witness is not None:
            out["witness"] = self.witness
        return out


def _verdict(kind: str, residual: float, threshold: float) -> str:
    if not math.isfinite(residual):
        return "fail"
    ok = residual <= threshold if kind == "positive" else residual >= threshold
    return "pass" if ok else "fail"


def _two_path(op, f, actions, nbhd=None, twist: Optional[int] = None):
    base = op(f)
    scale = 1.0 + float(np.max(np.abs(base.values)))
    residuals = []
    for a in actions:
        lhs = op(act(a, f))
        rhs = act(a, base)
        if twist is not None:
            rhs = _scaled(rhs, haar_weight(a.stabilizer, twist))
        mask = boundary_mask(a, nbhd, f.positions) if nbhd is not None else None
        if mask is not None and not mask.any():
            # nothing left to compare: refuse to report a vacuous zero
            residuals.append(math.inf)
            continue
        residuals.append(difference(lhs, rhs, mask) / scale)
    return residuals


def check_equivariance(op: Callable, f, actions: Sequence[GroupAction], tol: float, claim: str = "check",
                       nbhd: Optional[NeighborhoodSpec] = None, twist: Optional[int] = None,
                       **meta) -> AuditReport:
    """Two-path residual ``max_g |op(L_g f) - L_g op(f)|_inf / (1 + |op(f)|_inf)``.

    ``nbhd`` restricts the comparison to boundary-safe tokens for permutation
    actions. ``twist = e`` compares against ``haar_weight(h, e) L_g op(f)``.
    """
    res = _two_path(op, f, actions, nbhd, twist)
    r = max(res) if res else 0.0
    return AuditReport(claim, r, tol, _verdict("positive", r, tol), "positive", **meta)


def witness_non_equivariance(op: Callable, f, actions: Sequence[GroupAction], min_residual: float = 1e-3,
                             claim: str = "witness", nbhd: Optional[NeighborhoodSpec] = None,
                             twist: Optional[int] = None, **meta) -> AuditReport:
    """Negative claim: passes iff some action yields residual ``>= min_residual``."""
    res = _two_path(op, f, actions, nbhd, twist)
    best = int(np.argmax(res))
    r = res[best]
    witness = {"action": actions[best].label, "residual": r}
    return AuditReport(claim, r, min_residual, _verdict("negative", r, min_residual), "negative",
                       witness=witness, **meta)


# -- oracles --------------------------------------------------------------------


def conv_oracle(kernel, image) -> np.ndarray:
    """Zero-padded cross-correlation ``out[r, c] = sum_ab img[r+a, c+b] K[a+k//2, b+k//2]`` by loops."""
    kernel = as_tensor(kernel, 4)
    if isinstance(image, FeatureMap):
        hgt, wid = image.positions.grid_shape
        image = image.values.reshape(hgt, wid, -1)
    image = as_tensor(image, 3)
    k = kernel.shape[0]
    if k % 2 == 0:
        raise ValueError("kernel size must be odd")
    half = k // 2
    hgt, wid, c_in = image.shape
    c_out = kernel.shape[3]
    out = np.zeros((hgt, wid, c_out))
    for r in range(hgt):
        for c in range(wid):
            for a in range(-half, half + 1):
                for b in range(-half, half + 1):
                    rr, cc = r + a, c + b
                    if 0 <= rr < hgt and 0 <= cc < wid:
                        for ci in range(c_in):
                            for co in range(c_out):
                                out[r, c, co] += image[rr, cc, ci] * kernel[a + half, b + half, ci, co]
    return out


def matrix_cayley(group: GroupSpec) -> np.ndarray:
    """Cayley table recovered from 2x2 matrix products (matching by nearest matrix)."""
    elems = group.enumerate()
    mats = np.stack([e.matrix() for e in elems])
    table = np.full((len(elems), len(elems)), -1, dtype=np.int64)
    for a in range(len(elems)):
        for b in range(len(elems)):
            prod = mats[a] @ mats[b]
            d = np.abs(mats - prod).reshape(len(elems), -1).max(axis=1)
            if d.min() < 1e-9:
                table[a, b] = int(np.argmin(d))
    return table


# -- instances ------------------------------------------------------------------


def disc_points(rng: np.random.Generator, count: int, radius: float, nbhd_radii=(), margin: float = 1e-6):
    """``count`` uniform points in a disc, redrawn until no pair distance is within ``margin`` of a radius."""
    for _ in range(1000):
        r = radius * np.sqrt(rng.uniform(size=count))
        t = rng.uniform(0.0, 2.0 * math.pi, count)
        pts = np.stack([r * np.cos(t), r * np.sin(t)], axis=1)
        dist = np.sqrt(((pts[:, None] - pts[None]) ** 2).sum(-1))
        if all(np.abs(dist - nr).min() > margin for nr in nbhd_radii):
            return PositionTable.point_set(pts)
    raise RuntimeError("could not draw a point set clear of neighborhood boundaries")


DEFAULT_SUITE = {
    "seeds": {"weights": 42, "instance": 7},
    "grid": [8, 8],
    "heads": 3,
    "head_dim": 2,
    "channels": 4,
    "window": 5,
    "points": 24,
    "disc_radius": 2.0,
    "point_radius": 1.2,
    "encoding": {"mode": "fourier", "seed": 42, "num_features": 64},
    "haar_weights": True,
    "network": {"model": "R4", "blocks": 2, "channels": [6, 6], "heads": 9, "window": 3},
}


@dataclass
class Suite:
    """Seeded instances shared by the suite checks."""

    cfg: dict

    @property
    def seed_w(self) -> int:
        return int(self.cfg["seeds"]["weights"])

    @property
    def seed_i(self) -> int:
        return int(self.cfg["seeds"]["instance"])

    def rngs(self):
        return np.random.default_rng(self.seed_w), np.random.default_rng(self.seed_i)

    def weights(self, rng, c_in=None, c_out=None, bias="random"):
        c = int(self.cfg["channels"])
        return init_attention_weights(rng, c_in or c, c_out or c, int(self.cfg["heads"]),
                                      int(self.cfg["head_dim"]), bias)

    def encoding(self, c_in, group=None, seed_offset=0):
        e = self.cfg["encoding"]
        return fourier_encoding(c_in, group, seed=int(e.get("seed", 42)) + seed_offset,
                                num_features=int(e.get("num_features", 64)),
                                length_scale=float(e.get("length_scale", 1.0)))

    def grid(self):
        hgt, wid = self.cfg["grid"]
        return PositionTable.grid(int(hgt), int(wid))

    def window(self):
        return NeighborhoodSpec("grid_window", int(self.cfg["window"]))

    def points(self, rng, radii=None):
        r = float(self.cfg["point_radius"])
        radii = radii if radii is not None else (r,)
        return disc_points(rng, int(self.cfg["points"]), float(self.cfg["disc_radius"]), radii)

    def point_nbhd(self):
        return NeighborhoodSpec("radius", r=float(self.cfg["point_radius"]))


def _grid_actions(group: GroupSpec, pos: PositionTable, shifts=((0, 0), (1, -1))) -> list:
    return [make_action(AffineElement(y, h), pos) for h in group.enumerate() for y in shifts]


def _point_actions(group: GroupSpec, pos: PositionTable, rng, elements=None) -> list:
    elems = elements if elements is not None else group.enumerate()
    return [make_action(AffineElement(rng.uniform(-1.0, 1.0, 2), h), pos, "points") for h in elems]


def _lift_instance(s: Suite, name: str, layout: str):
    group = parse_designation(name)
    rng_w, rng_i = s.rngs()
    if layout == "grid":
        pos, nbhd = s.grid(), s.window()
        actions = _grid_actions(group, pos)
    else:
        pos, nbhd = s.points(rng_i), s.point_nbhd()
        actions = _point_actions(group, pos, rng_i)
    c = int(s.cfg["channels"])
    f = FeatureMap(pos, rng_i.standard_normal((pos.n, c)))
    w = s.weights(rng_w)
    enc = s.encoding(c)
    return group, f, w, enc, nbhd, actions


def _claim_axioms(s: Suite):
    groups = [GroupSpec("trivial")] + [GroupSpec("cyclic", n) for n in (4, 8, 12, 16)]
    groups += [GroupSpec("dihedral", n) for n in (4, 8)] + [GroupSpec("dilation", levels=(-1, 0, 1))]
    failures = 0
    names = []
    for g in groups:
        rep = check_axioms(g)
        failures += len(rep["failures"])
        names.append(g.name)
        if g.family != "dilation":
            failures += int(np.sum(cayley_table(g) != matrix_cayley(g)))
    r = float(failures)
    return AuditReport("G1-axioms", r, 0.0, _verdict("positive", r, 0.0), instance="axioms+matrix Cayley: " + " ".join(names))


def _claim_c1_global(s: Suite):
    rng_w, rng_i = s.rngs()
    c = int(s.cfg["channels"])
    pos = PositionTable.point_set(rng_i.standard_normal((16, 2)))
    f = FeatureMap(pos, rng_i.standard_normal((16, c)))
    w = s.weights(rng_w)
    actions = [token_permutation(rng_i.permutation(16), f"perm{k}") for k in range(20)]
    return check_equivariance(lambda x: self_attend(w, x), f, actions, 1e-10, "C1-permutation-global",
                              instance="16 tokens, global, 20 permutations", seed=s.seed_i)


def _claim_c1_local(s: Suite):
    rng_w, rng_i = s.rngs()
    c = int(s.cfg["channels"])
    pos = s.grid()
    f = FeatureMap(pos, rng_i.standard_normal((pos.n, c)))
    w = s.weights(rng_w)
    nbhd = NeighborhoodSpec("grid_window", 3)
    perm = np.arange(pos.n)
    perm[[0, pos.n // 2 + 3]] = perm[[pos.n // 2 + 3, 0]]
    return witness_non_equivariance(lambda x: self_attend(w, x, nbhd), f, [token_permutation(perm, "swap corner/centre")],
                                    1e-3, "C1-local-breaking", instance="grid, 3x3 window, transposition",
                                    seed=s.seed_i)


def _claim_c2(s: Suite, which: str):
    rng_w, rng_i = s.rngs()
    c = int(s.cfg["channels"])
    pos = s.points(rng_i)
    f = FeatureMap(pos, rng_i.standard_normal((pos.n, c)))
    w = s.weights(rng_w)
    enc = s.encoding(c)
    op = lambda x: self_attend_absolute(w, x, enc)
    if which == "translation":
        actions = [make_action(AffineElement(y, GroupSpec("trivial").identity()), pos, "points")
                   for y in ((1.0, 0.0), (0.0, -1.5), (0.7, 0.7))]
    else:
        actions = [token_permutation(rng_i.permutation(pos.n), f"perm{k}") for k in range(3)]
    return witness_non_equivariance(op, f, actions, 1e-3, f"C2-absolute-{which}",
                                    instance=f"{pos.n} disc points, global, absolute encoding", seed=s.seed_i)


def _claim_c3(s: Suite, which: str):
    rng_w, rng_i = s.rngs()
    c = int(s.cfg["channels"])
    pos = s.grid()
    f = FeatureMap(pos, rng_i.standard_normal((pos.n, c)))
    w = s.weights(rng_w)
    enc = s.encoding(c)
    e = GroupSpec("trivial").identity()
    shifts = ((1, 0), (0, -1), (2, 1), (-1, -2))
    if which == "local":
        nbhd = NeighborhoodSpec("grid_window", 3)
        actions = [make_action(AffineElement(y, e), pos) for y in shifts]
        return check_equivariance(lambda x: self_attend_relative(w, x, enc, nbhd), f, actions, 1e-10,
                                  "C3-relative-translation-local", nbhd=nbhd,
                                  instance="grid, 3x3 window, 4 lattice shifts, boundary-masked", seed=s.seed_i)
    actions = [make_action(AffineElement(y, e), pos, "points") for y in shifts]
    return check_equivariance(lambda x: self_attend_relative(w, x, enc), f, actions, 1e-10,
                              "C3-relative-translation-global",
                              instance="grid, global, 4 shifts, full comparison", seed=s.seed_i)


def _claim_c4(s: Suite, name: str, layout: str):
    group, f, w, enc, nbhd, actions = _lift_instance(s, name, layout)
    tol = 1e-10 if layout == "grid" else 1e-8
    masked = nbhd if layout == "grid" else None
    lname = "Z4" if name == "R4" else name
    rep = check_equivariance(lambda x: lift_attend(w, x, enc, group, nbhd), f, actions, tol,
                             f"C4-lifting-{lname}-{layout if layout == 'grid' else 'points'}", nbhd=masked,
                             instance=f"{f.positions.n} tokens, {nbhd.kind}, {len(actions)} actions",
                             seed=s.seed_i, group=group.name)
    return rep


def _claim_c5(s: Suite, name: str, layout: str):
    group = parse_designation(name)
    rng_w, rng_i = s.rngs()
    c = int(s.cfg["channels"])
    if layout == "grid":
        pos, nbhd = s.grid(), NeighborhoodSpec("grid_window", 3)
        actions = _grid_actions(group, pos)
    else:
        pos, nbhd = s.points(rng_i), s.point_nbhd()
        actions = _point_actions(group, pos, rng_i)
    F = GroupFeatureMap(pos, group, rng_i.standard_normal((pos.n, group.order, c)))
    w = s.weights(rng_w)
    enc = s.encoding(c, group, 1)
    # the stabilizer shift used by the action must be the Cayley left translation
    table = cayley_table(group)
    idx = {e.key: i for i, e in enumerate(group.enumerate())}
    shift_mismatch = sum(int(np.any(a.stabilizer_shift(group) != table[idx[a.stabilizer.key]])) for a in actions)
    tol = 1e-10 if layout == "grid" else 1e-8
    lname = "Z4" if name == "R4" else name
    rep = check_equivariance(lambda x: group_attend(w, x, enc, nbhd), F, actions, tol,
                             f"C5-group-{lname}-{layout if layout == 'grid' else 'points'}",
                             nbhd=nbhd if layout == "grid" else None,
                             instance=f"{pos.n} tokens x {group.order}, {nbhd.kind}, {len(actions)} actions",
                             seed=s.seed_i, group=group.name)
    if shift_mismatch:
        return AuditReport(rep.claim, math.inf, tol, "fail", instance=rep.instance + "; stabilizer shift mismatch",
                           seed=rep.seed, group=rep.group)
    return rep


def _dilation_instance(s: Suite):
    group = GroupSpec("dilation", levels=(-1, 0, 1))
    rng_w, rng_i = s.rngs()
    c = int(s.cfg["channels"])
    r = float(s.cfg["point_radius"])
    pos = s.points(rng_i, radii=[r * e.scale for e in group.enumerate()])
    nbhd = NeighborhoodSpec("radius", r=r)
    ups = [group.dilation(1), group.dilation(-1)]
    actions = [make_action(AffineElement(rng_i.uniform(-1.0, 1.0, 2), h), pos, "points") for h in ups]
    return group, rng_w, rng_i, pos, nbhd, actions, c


def _claim_haar(s: Suite, stage: str, variant: str):
    group, rng_w, rng_i, pos, nbhd, actions, c = _dilation_instance(s)
    w = s.weights(rng_w, bias="zero")
    weighted = variant == "weighted" and bool(s.cfg.get("haar_weights", True))
    if stage == "lift":
        f = FeatureMap(pos, rng_i.standard_normal((pos.n, c)))
        enc = s.encoding(c)
        op = lambda x: lift_attend_haar(w, x, enc, group, nbhd, weighted=weighted)
        twist = group.d
    else:
        f = GroupFeatureMap(pos, group, rng_i.standard_normal((pos.n, group.order, c)))
        enc = s.encoding(c, group, 1)
        op = lambda x: group_attend_haar(w, x, enc, nbhd, weighted=weighted)
        twist = group.d + 1
    inst = f"{pos.n} disc points, radius nbhd, levels {list(group.levels)}"
    meta = dict(instance=inst, seed=s.seed_i, group=group.name)
    if variant == "weighted":
        if not weighted:
            meta["instance"] += "; weights disabled by config"
        return check_equivariance(op, f, actions, 1e-8, f"H-haar-{stage}", twist=twist, **meta)
    if variant == "unweighted":
        return witness_non_equivariance(op, f, actions, 1e-2, f"H-haar-{stage}-unweighted", twist=twist, **meta)
    return check_equivariance(op, f, actions, 1e-8, f"H-haar-{stage}-unweighted-plain", **meta)


def _claim_conv(s: Suite):
    worst = 0.0
    for k in range(5):
        rng = np.random.default_rng(s.seed_i + k)
        kernel = rng.standard_normal((3, 3, 2, 2))
        image = rng.standard_normal((8, 8, 2))
        worst = max(worst, float(np.abs(convolve_via_attention(kernel, image) - conv_oracle(kernel, image)).max()))
    return AuditReport("X-express-conv", worst, 1e-6, _verdict("positive", worst, 1e-6),
                       instance="random 3x3 kernels, C_in=C_out=2, 8x8 images, 5 seeds", seed=s.seed_i)


def _claim_fast(s: Suite):
    worst = 0.0
    count = 0
    for name, layout in (("R4", "grid"), ("D4", "grid"), ("Z8", "points"), ("Z12", "points")):
        group, f, w, enc, nbhd, actions = _lift_instance(s, name, layout)
        for a in [None] + actions[:2]:
            x = f if a is None else act(a, f)
            d = np.abs(lift_attend_fast(w, x, enc, group, nbhd).values - lift_attend(w, x, enc, group, nbhd).values)
            worst = max(worst, float(d.max()))
            count += 1
    return AuditReport("F-fast-path", worst, 1e-12, _verdict("positive", worst, 1e-12),
                       instance=f"{count} lifting instances, fast vs naive", seed=s.seed_i)


def network_config(s: Suite, group: Optional[GroupSpec] = None) -> NetworkConfig:
    n = s.cfg["network"]
    blocks = int(n.get("blocks", 2))
    return NetworkConfig(
        group=group or parse_designation(n.get("model", "R4")),
        blocks=blocks,
        channels=tuple(n.get("channels", [6] * blocks)),
        heads=int(n.get("heads", 9)),
        nbhd=NeighborhoodSpec("grid_window", int(n.get("window", 3))),
        encoding=dict(s.cfg["encoding"]),
        seed=s.seed_w,
        c_in=1,
        c_out=int(n.get("c_out", 10)),
    )


def _network_instance(s: Suite):
    cfg = network_config(s)
    net = build(cfg)
    rng_i = np.random.default_rng(s.seed_i)
    pos = s.grid()
    f = FeatureMap(pos, rng_i.standard_normal((pos.n, 1)))
    actions = [make_action(AffineElement((0, 0), h), pos) for h in cfg.group.enumerate()]
    return cfg, net, f, actions


def _claim_net_invariance(s: Suite):
    cfg, net, f, actions = _network_instance(s)
    base = forward(net, f)
    r = max(float(np.abs(forward(net, act(a, f)) - base).max()) for a in actions)
    return AuditReport(f"N-invariance-{cfg.group.name}", r, 1e-8, _verdict("positive", r, 1e-8),
                       instance=f"{cfg.blocks}-block net, grid {list(s.cfg['grid'])}, {len(actions)} actions",
                       seed=s.seed_i, group=cfg.group.name)


def _claim_net_taps(s: Suite):
    cfg, net, f, actions = _network_instance(s)
    _, base_taps = forward(net, f, return_taps=True)
    worst = 0.0
    for a in actions:
        _, taps = forward(net, act(a, f), return_taps=True)
        for t0, t1 in zip(base_taps, taps):
            scale = 1.0 + float(np.abs(t0.values).max())
            worst = max(worst, difference(t1, act(a, t0)) / scale)
    return AuditReport(f"N-taps-{cfg.group.name}", worst, 1e-8, _verdict("positive", worst, 1e-8),
                       instance=f"lifting tap + {cfg.blocks} block taps", seed=s.seed_i, group=cfg.group.name)


def _claim_params(s: Suite):
    counts = {}
    for name in ("Z2", "R4", "R8", "R12", "R16"):
        counts[name] = build(network_config(s, parse_designation(name))).num_parameters
    r = float(max(counts.values()) - min(counts.values()))
    return AuditReport("P-param-count", r, 0.0, _verdict("positive", r, 0.0),
                       instance="parameter counts " + ", ".join(f"{k}={v}" for k, v in counts.items()))


def _registry(s: Suite) -> list:
    net_group = parse_designation(s.cfg["network"].get("model", "R4"))
    items = [
        ("G1-axioms", None, lambda: _claim_axioms(s)),
        ("C1-permutation-global", None, lambda: _claim_c1_global(s)),
        ("C1-local-breaking", None, lambda: _claim_c1_local(s)),
        ("C2-absolute-translation", None, lambda: _claim_c2(s, "translation")),
        ("C2-absolute-permutation", None, lambda: _claim_c2(s, "permutation")),
        ("C3-relative-translation-local", GroupSpec("trivial"), lambda: _claim_c3(s, "local")),
        ("C3-relative-translation-global", GroupSpec("trivial"), lambda: _claim_c3(s, "global")),
    ]
    for name, layout, label in (("R4", "grid", "Z4-grid"), ("D4", "grid", "D4-grid"),
                                ("Z8", "points", "Z8-points"), ("Z12", "points", "Z12-points")):
        g = parse_designation(name)
        items.append((f"C4-lifting-{label}", g, lambda n=name, l=layout: _claim_c4(s, n, l)))
        items.append((f"C5-group-{label}", g, lambda n=name, l=layout: _claim_c5(s, n, l)))
    dil = GroupSpec("dilation", levels=(-1, 0, 1))
    for stage in ("lift", "group"):
        items.append((f"H-haar-{stage}", dil, lambda st=stage: _claim_haar(s, st, "weighted")))
        items.append((f"H-haar-{stage}-unweighted", dil, lambda st=stage: _claim_haar(s, st, "unweighted")))
        items.append((f"H-haar-{stage}-unweighted-plain", dil, lambda st=stage: _claim_haar(s, st, "plain")))
    items += [
        ("X-express-conv", None, lambda: _claim_conv(s)),
        ("F-fast-path", None, lambda: _claim_fast(s)),
        (f"N-invariance-{net_group.name}", net_group, lambda: _claim_net_invariance(s)),
        (f"N-taps-{net_group.name}", net_group, lambda: _claim_net_taps(s)),
        ("P-param-count", None, lambda: _claim_params(s)),
    ]
    return items


def claim_ids(config: Optional[dict] = None) -> list:
    return sorted(cid for cid, _, _ in _registry(Suite(merge_suite_config(config or {}))))


def merge_suite_config(config: dict) -> dict:
    cfg = {k: (dict(v) if isinstance(v, dict) else v) for k, v in DEFAULT_SUITE.items()}
    for key, val in config.items():
        if isinstance(val, dict) and isinstance(cfg.get(key), dict):
            cfg[key] = {**cfg[key], **val}
        else:
            cfg[key] = val
    return cfg


def _matches(cid: str, patterns: Sequence[str]) -> bool:
    return any(cid == p or cid.startswith(p + "-") or cid.startswith(p) and p.endswith("-") for p in patterns)


def run_suite(config: Optional[dict] = None, claims: Optional[Sequence[str]] = None,
              group: Optional[str] = None, timings: Optional[dict] = None) -> list:
    """Run the selected checks; reports sorted by claim id.

    ``claims`` entries match a full id or an id prefix ending at a dash
    boundary (``C4`` selects every ``C4-...``). ``group`` keeps only checks
    tied to that group (designations such as ``R4`` or ``Z4``).
    """
    s = Suite(merge_suite_config(config or {}))
    wanted_group = parse_designation(group) if group else None
    reports = []
    for cid, g, fn in _registry(s):
        if claims and not _matches(cid, claims):
            continue
        if wanted_group is not None and g != wanted_group:
            continue
        t0 = time.perf_counter()
        rep = fn()
        if timings is not None:
            timings[cid] = time.perf_counter() - t0
        reports.append(rep)
    if claims and not reports and not group:
        raise ConfigError(f"no claim matches {list(claims)}")
    return sorted(reports, key=lambda r: r.claim)
