from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gsa_kernel.attention import (
    AttentionWeights,
    FeatureMap,
    NeighborhoodSpec,
    attention_scores,
    init_attention_weights,
    neighborhood_pairs,
    self_attend,
    self_attend_absolute,
    self_attend_relative,
)
from gsa_kernel.encoding import PositionTable, encode_spatial, fourier_encoding
from gsa_kernel.errors import DimensionError, EmptyNeighborhoodError, UnsupportedNeighborhoodError
from gsa_kernel.tensor import LinearMap


def rowsoftmax(a):
    e = np.exp(a - a.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def dense_oracle(w, x, xq=None, xk=None):
    """Matrix form: concat_h softmax(Xq Wq (Xk Wk)^T) X Wv, then W_out, b_out."""
    xq = x if xq is None else xq
    xk = x if xk is None else xk
    heads = [rowsoftmax((xq @ w.qry[h]) @ (xk @ w.key[h]).T) @ (x @ w.val[h]) for h in range(w.heads)]
    return np.concatenate(heads, axis=1) @ w.out.weight + w.out.bias


def relative_oracle(w, x, pos, enc, mask):
    n = len(x)
    heads = []
    for h in range(w.heads):
        out = np.zeros((n, w.head_dim))
        for i in range(n):
            js = [j for j in range(n) if mask[i, j]]
            s = np.array([
                (x[i] @ w.qry[h]) @ ((x[j] + encode_spatial(enc, pos[j] - pos[i])) @ w.key[h]) for j in js
            ])
            p = np.exp(s - s.max())
            p /= p.sum()
            out[i] = sum(pj * (x[j] @ w.val[h]) for pj, j in zip(p, js))
        heads.append(out)
    return np.concatenate(heads, axis=1) @ w.out.weight + w.out.bias


def instance(n=6, c=3, heads=2, head_dim=2, c_out=4, seed=0):
    rng = np.random.default_rng(seed)
    pos = PositionTable.point_set(rng.standard_normal((n, 2)))
    f = FeatureMap(pos, rng.standard_normal((n, c)))
    w = init_attention_weights(rng, c, c_out, heads, head_dim, bias="random")
    return f, w


def zero_encoding(c):
    enc = fourier_encoding(c, seed=0)
    return type(enc)("fourier", c, None, enc.omega, enc.phases, np.zeros_like(enc.projection))


def test_scores_examples():
    f, w = instance()
    zero = FeatureMap(f.positions, np.zeros_like(f.values))
    assert attention_scores(w, 0, zero, 1, 2) == 0.0
    eye = np.eye(3)[None]
    w1 = AttentionWeights(eye, eye, eye, LinearMap(np.eye(3), np.zeros(3)))
    e1 = FeatureMap(PositionTable.point_set([[0, 0], [1, 0]]), [[1, 0, 0], [1, 0, 0]])
    assert attention_scores(w1, 0, e1, 0, 1) == 1.0


def test_scores_match_matrix_form():
    f, w = instance(seed=3)
    x = f.values
    for h in range(w.heads):
        m = (x @ w.qry[h]) @ (x @ w.key[h]).T
        for i in range(6):
            for j in range(6):
                assert abs(attention_scores(w, h, f, i, j) - m[i, j]) <= 1e-12


def test_self_attend_matches_dense_oracle():
    f, w = instance(seed=1)
    out = self_attend(w, f)
    assert np.max(np.abs(out.values - dense_oracle(w, f.values))) <= 1e-12
    assert out.positions is f.positions


def test_single_token_and_identical_tokens():
    f, w = instance(n=1, seed=2)
    out = self_attend(w, f).values
    expect = np.concatenate([f.values @ w.val[h] for h in range(w.heads)], axis=1) @ w.out.weight + w.out.bias
    assert np.allclose(out, expect, atol=1e-15)
    rng = np.random.default_rng(0)
    same = FeatureMap(PositionTable.point_set(rng.standard_normal((5, 2))), np.tile(rng.standard_normal(3), (5, 1)))
    w2 = init_attention_weights(rng, 3, 4, 2, 2, bias="random")
    vals = self_attend(w2, same).values
    assert np.max(np.abs(vals - vals[0])) == 0.0


def test_absolute_matches_oracle_and_degenerates():
    f, w = instance(seed=4)
    enc = fourier_encoding(3, seed=5)
    rho = encode_spatial(enc, f.positions.positions)
    out = self_attend_absolute(w, f, enc).values
    assert np.max(np.abs(out - dense_oracle(w, f.values, f.values + rho, f.values + rho))) <= 1e-12
    assert np.array_equal(self_attend_absolute(w, f, zero_encoding(3)).values, self_attend(w, f).values)


def test_absolute_breaks_permutation_equivariance():
    f, w = instance(seed=6)
    enc = fourier_encoding(3, seed=5)
    perm = np.random.default_rng(1).permutation(6)
    moved = FeatureMap(f.positions, f.values[perm])
    lhs = self_attend_absolute(w, moved, enc).values
    rhs = self_attend_absolute(w, f, enc).values[perm]
    assert np.max(np.abs(lhs - rhs)) > 1e-3


@pytest.mark.parametrize("nbhd", [NeighborhoodSpec(), NeighborhoodSpec("radius", r=1.0)])
def test_relative_matches_loop_oracle(nbhd):
    f, w = instance(seed=7)
    enc = fourier_encoding(3, seed=8)
    out = self_attend_relative(w, f, enc, nbhd).values
    oracle = relative_oracle(w, f.values, f.positions.positions, enc, nbhd.mask(f.positions))
    assert np.max(np.abs(out - oracle)) <= 1e-12


def test_relative_with_zero_encoding_equals_plain():
    f, w = instance(seed=9)
    assert np.max(np.abs(self_attend_relative(w, f, zero_encoding(3)).values - self_attend(w, f).values)) <= 1e-15


def test_relative_translation_equivariance_on_grid():
    rng = np.random.default_rng(3)
    pos = PositionTable.grid(6, 6)
    f = FeatureMap(pos, rng.standard_normal((36, 3)))
    w = init_attention_weights(rng, 3, 3, 2, 2, bias="random")
    enc = fourier_encoding(3, seed=1)
    nb = NeighborhoodSpec("grid_window", 3)
    shifted = FeatureMap(PositionTable(pos.positions + [1.0, -2.0], None, 1.0), f.values)
    a = self_attend_relative(w, f, enc, nb).values
    b = self_attend_relative(w, shifted, enc, nb).values
    assert np.max(np.abs(a - b)) <= 1e-10


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_global_permutation_equivariance(seed):
    f, w = instance(n=8, seed=seed % 1000)
    perm = np.random.default_rng(seed).permutation(8)
    moved = FeatureMap(f.positions, f.values[perm])
    assert np.max(np.abs(self_attend(w, moved).values - self_attend(w, f).values[perm])) <= 1e-10


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**31 - 1), st.sampled_from(["global", "radius"]))
def test_probabilities_are_distributions(seed, kind):
    f, w = instance(n=7, seed=seed % 997)
    nb = NeighborhoodSpec(kind, r=0.8)
    _, probs = self_attend_relative(w, f, fourier_encoding(3, seed=2), nb, return_probs=True)
    mask = nb.mask(f.positions)
    assert np.all(probs >= 0)
    assert np.all(probs[:, ~mask] == 0)
    assert np.max(np.abs(probs.sum(axis=-1) - 1.0)) <= 1e-12


def test_optional_score_scaling():
    f, w = instance(seed=10)
    _, probs = self_attend(w, f, scale_scores=True, return_probs=True)
    x = f.values
    s = (x @ w.qry[0]) @ (x @ w.key[0]).T / math.sqrt(w.head_dim)
    assert np.max(np.abs(probs[0] - rowsoftmax(s))) <= 1e-12
    assert not np.allclose(self_attend(w, f).values, self_attend(w, f, scale_scores=True).values)


def test_local_neighborhood_preserving_permutation():
    rng = np.random.default_rng(4)
    pos = PositionTable.grid(5, 5)
    f = FeatureMap(pos, rng.standard_normal((25, 3)))
    w = init_attention_weights(rng, 3, 3, 2, 2, bias="random")
    nb = NeighborhoodSpec("grid_window", 3)
    # vertical flip of the grid maps windows onto windows
    perm = np.arange(25).reshape(5, 5)[::-1].reshape(-1)
    a = self_attend(w, FeatureMap(pos, f.values[perm]), nb).values
    assert np.max(np.abs(a - self_attend(w, f, nb).values[perm])) <= 1e-10
    swap = np.arange(25)
    swap[[0, 12]] = [12, 0]
    b = self_attend(w, FeatureMap(pos, f.values[swap]), nb).values
    assert np.max(np.abs(b - self_attend(w, f, nb).values[swap])) > 1e-3


def test_neighborhood_membership_and_errors():
    pos = PositionTable.grid(4, 4, spacing=2.0)
    m = NeighborhoodSpec("grid_window", 3).mask(pos)
    assert m[5].sum() == 9 and m[0].sum() == 4
    with pytest.raises(UnsupportedNeighborhoodError):
        NeighborhoodSpec("grid_window", 3).mask(PositionTable.point_set([[0.0, 0.0], [1.0, 1.0]]))
    with pytest.raises(ValueError):
        NeighborhoodSpec("grid_window", 4)
    with pytest.raises(EmptyNeighborhoodError, match="query 1"):
        neighborhood_pairs(np.array([[True, False], [False, False]]))


def test_shape_errors():
    f, w = instance(c=3)
    with pytest.raises(DimensionError):
        self_attend(w, FeatureMap(f.positions, np.zeros((6, 2))))
    with pytest.raises(DimensionError):
        AttentionWeights(np.zeros((2, 3, 2)), np.zeros((2, 3, 2)), np.zeros((2, 3, 2)), LinearMap(np.zeros((3, 1))))
