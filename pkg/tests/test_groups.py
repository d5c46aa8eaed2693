from __future__ import annotations

import itertools
import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gsa_kernel.errors import GroupMismatchError
from gsa_kernel.groups import (
    AffineElement,
    GroupSpec,
    act_on_point,
    act_on_stabilizer,
    cayley_table,
    check_axioms,
    compose,
    group_from_config,
    haar_weight,
    inverse,
    left_shift,
    parse_designation,
)

AXIOM_GROUPS = (
    [GroupSpec("trivial")]
    + [GroupSpec("cyclic", n) for n in (2, 4, 8, 12, 16)]
    + [GroupSpec("dihedral", n) for n in (2, 4, 8, 12, 16)]
    + [GroupSpec("dilation", levels=(-1, 0, 1)), GroupSpec("dilation", levels=(-2, -1, 0, 1, 2), factor=3.0)]
)


def oracle_matrix(n, k, reflect):
    """Independent matrix form: rotation by 2 pi k / n after the reflection diag(1, -1)."""
    t = 2 * math.pi * k / n
    rot = np.array([[math.cos(t), -math.sin(t)], [math.sin(t), math.cos(t)]])
    return rot @ np.diag([1.0, -1.0]) if reflect else rot


def test_z4_examples():
    z4 = GroupSpec("cyclic", 4)
    assert (z4.rotation(1) * z4.rotation(3)).is_identity()
    assert act_on_stabilizer(z4.rotation(3), z4.rotation(2)) == z4.rotation(1)
    assert act_on_stabilizer(z4.identity(), z4.rotation(2)) == z4.rotation(2)
    assert len(z4.enumerate()) == 4


def test_identity_composition():
    d4 = GroupSpec("dihedral", 4)
    g = AffineElement((1.5, -2.0), d4.element(3, True))
    assert compose(AffineElement.identity(d4), g) == g
    assert inverse(AffineElement.identity(d4)) == AffineElement.identity(d4)
    t = AffineElement((2.0, 3.0), d4.identity())
    assert inverse(t) == AffineElement((-2.0, -3.0), d4.identity())


@pytest.mark.parametrize("n", [4, 8])
def test_dihedral_cayley_matches_matrix_oracle(n):
    g = GroupSpec("dihedral", n)
    elems = g.enumerate()
    mats = [oracle_matrix(n, e.k, e.reflect) for e in elems]
    pairs = 0
    for a, b in itertools.product(range(len(elems)), repeat=2):
        prod = mats[a] @ mats[b]
        c = elems.index(elems[a] * elems[b])
        assert np.allclose(mats[c], prod, atol=1e-12)
        pairs += 1
    assert pairs == (2 * n) ** 2


def test_d4_inverse_laws_with_translations():
    d4 = GroupSpec("dihedral", 4)
    rng = np.random.default_rng(0)
    for h in d4.enumerate():
        g = AffineElement(rng.standard_normal(2), h)
        for prod in (compose(g, inverse(g)), compose(inverse(g), g)):
            assert prod.stabilizer.is_identity()
            assert np.max(np.abs(prod.translation)) <= 1e-12


def test_point_actions():
    z4 = GroupSpec("cyclic", 4)
    assert np.array_equal(act_on_point(z4.rotation(1), [1.0, 0.0]), [0.0, 1.0])
    z2m = GroupSpec("dihedral", 1)
    assert np.array_equal(act_on_point(z2m.element(0, True), [1.0, 2.0]), [1.0, -2.0])
    mpmath.mp.dps = 40
    expect = [float(mpmath.cos(mpmath.pi / 4)), float(mpmath.sin(mpmath.pi / 4))]
    got = act_on_point(GroupSpec("cyclic", 8).rotation(1), [1.0, 0.0])
    assert np.max(np.abs(got - expect)) <= 1e-15


def test_quarter_turns_are_exact():
    z12 = GroupSpec("cyclic", 12)
    x = np.array([0.1, 0.7])
    # 3 steps of 30 degrees is exactly a quarter turn: swap and sign flip, no trig
    assert np.array_equal(act_on_point(z12.rotation(3), x), [-0.7, 0.1])
    assert np.array_equal(act_on_point(z12.rotation(6), x), [-0.1, -0.7])


@pytest.mark.parametrize("group", AXIOM_GROUPS, ids=lambda g: g.name + str(g.levels))
def test_group_axioms_exhaustive(group):
    rep = check_axioms(group)
    assert rep["failures"] == []
    assert rep["order"] == group.order


@pytest.mark.parametrize("group", AXIOM_GROUPS[:-2], ids=lambda g: g.name)
def test_finite_closure_and_inverse(group):
    table = cayley_table(group)
    assert np.all(table >= 0)
    # Latin square: every row and column is a permutation
    for row in table:
        assert sorted(row) == list(range(group.order))
    for col in table.T:
        assert sorted(col) == list(range(group.order))


def test_enumeration_order():
    d4 = GroupSpec("dihedral", 4)
    keys = [e.key for e in d4.enumerate()]
    assert keys == [(0, 0, 0), (1, 0, 0), (2, 0, 0), (3, 0, 0), (0, 1, 0), (1, 1, 0), (2, 1, 0), (3, 1, 0)]
    dil = GroupSpec("dilation", levels=(1, -1, 0))
    assert [e.level for e in dil.enumerate()] == [0, -1, 1]
    assert len(GroupSpec("dihedral", 4).enumerate()) == 8


def test_unimodular_flag():
    for g in AXIOM_GROUPS:
        assert g.unimodular == (g.family != "dilation")


def test_haar_weights():
    z8 = GroupSpec("cyclic", 8)
    assert all(haar_weight(h, 2) == 1.0 for h in z8.enumerate())
    dil = GroupSpec("dilation")
    assert haar_weight(dil.dilation(1), 2) == 0.25
    assert haar_weight(dil.dilation(1), 3) == 0.125
    assert haar_weight(dil.dilation(-1), 2) == 4.0


@settings(max_examples=50, deadline=None)
@given(st.integers(-4, 4), st.integers(-4, 4), st.sampled_from([2, 3]))
def test_haar_multiplicative(a, b, e):
    dil = GroupSpec("dilation", levels=(-1, 0, 1))
    h1, h2 = dil.dilation(a), dil.dilation(b)
    assert haar_weight(h1 * h2, e) == haar_weight(h1, e) * haar_weight(h2, e)


@settings(max_examples=100, deadline=None)
@given(
    st.sampled_from(AXIOM_GROUPS),
    st.integers(0, 100),
    st.integers(0, 100),
    st.tuples(st.floats(-10, 10), st.floats(-10, 10)),
)
def test_action_compatibility(group, a, b, x):
    elems = group.enumerate()
    h1, h2 = elems[a % len(elems)], elems[b % len(elems)]
    lhs = act_on_point(h1 * h2, x)
    rhs = act_on_point(h1, act_on_point(h2, x))
    assert np.max(np.abs(lhs - rhs)) <= 1e-12 * (1 + np.max(np.abs(x))) * max(1.0, h1.scale * h2.scale)


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 15), st.integers(0, 15), st.integers(0, 15), st.integers(0, 2**31 - 1))
def test_affine_associativity_and_action(a, b, c, seed):
    d8 = GroupSpec("dihedral", 8)
    e = d8.enumerate()
    rng = np.random.default_rng(seed)
    g1, g2, g3 = (AffineElement(rng.standard_normal(2), e[i]) for i in (a, b, c))
    left, right = compose(compose(g1, g2), g3), compose(g1, compose(g2, g3))
    assert left.stabilizer == right.stabilizer
    assert np.allclose(left.translation, right.translation, atol=1e-12)
    x = rng.standard_normal(2)
    assert np.allclose(compose(g1, g2).act(x), g1.act(g2.act(x)), atol=1e-12)


def test_mixed_groups_rejected():
    with pytest.raises(GroupMismatchError):
        GroupSpec("cyclic", 4).rotation(1) * GroupSpec("cyclic", 8).rotation(1)
    with pytest.raises(GroupMismatchError):
        compose(AffineElement.identity(GroupSpec("cyclic", 4)), AffineElement.identity(GroupSpec("cyclic", 8)))
    with pytest.raises(GroupMismatchError):
        GroupSpec("cyclic", 4).element(1, True)


def test_left_shift_is_cayley_row():
    d4 = GroupSpec("dihedral", 4)
    table = cayley_table(d4)
    for i, h in enumerate(d4.enumerate()):
        assert np.array_equal(left_shift(d4, h), table[i])


def test_designations():
    assert parse_designation("Z2").family == "trivial"
    assert parse_designation("R4_SA") == GroupSpec("cyclic", 4)
    assert parse_designation("Z2M") == GroupSpec("dihedral", 1)
    assert parse_designation("R4M") == parse_designation("D4") == GroupSpec("dihedral", 4)
    assert parse_designation("Z8") == GroupSpec("cyclic", 8)
    assert GroupSpec("dihedral", 8).name == "R8M"
    with pytest.raises(ValueError):
        parse_designation("Q7")


def test_group_config():
    g = group_from_config({"family": "dilation", "log_scales": [-math.log(2), 0.0, math.log(2)]})
    assert g.levels == (-1, 0, 1)
    assert group_from_config({"family": "cyclic", "n": 8}) == GroupSpec("cyclic", 8)
    with pytest.raises(ValueError):
        group_from_config({"family": "dilation", "log_scales": [0.0, 0.3]})
    with pytest.raises(ValueError):
        GroupSpec("dilation", levels=(1, 2))
