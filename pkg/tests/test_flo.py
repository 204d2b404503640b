"""Brickwork rotation layers: building, applying, and decomposing SO(2d)."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fermiborn.errors import DecompositionError, InvalidInputError
from fermiborn.flo import (
    FloAnsatz,
    OrthogonalMatrix,
    angles_per_layer,
    apply_pair_rotations,
    brickwork_angles,
    brickwork_layout,
    build_orthogonal,
    evolve_block_covariance,
)
from fermiborn.magic import sigma_gauss
from fermiborn.skewlin import SkewMatrix


def test_angle_count_formula():
    for d, expect in [(1, 1), (2, 6), (4, 28), (8, 120)]:
        assert angles_per_layer(d) == expect == d * (2 * d - 1)


def test_layout_covers_each_sublayer_once():
    d = 4
    pairs, offsets = brickwork_layout(d)
    assert len(pairs) == 2 * d
    assert sum(len(p) for p in pairs) == angles_per_layer(d)
    for s, p in enumerate(pairs):
        assert np.all(p % 2 == s % 2)
        assert np.all(p + 1 <= 2 * d - 1)
    assert offsets[0] == 0
    assert all(offsets[s + 1] - offsets[s] == len(pairs[s])
               for s in range(2 * d - 1))


def test_single_pair_rotation_convention():
    # Rotating the (0, 1) plane by theta sends row 0 to
    # cos * row0 + sin * row1 under the forward map.
    x = np.eye(4)
    apply_pair_rotations(x, np.array([0]), np.array([0.3]))
    c, s = np.cos(0.3), np.sin(0.3)
    assert x[0, 0] == pytest.approx(c)
    assert x[0, 1] == pytest.approx(s)
    assert x[1, 0] == pytest.approx(-s)
    assert x[1, 1] == pytest.approx(c)


def test_transpose_flag_inverts():
    rng = np.random.default_rng(0)
    x = rng.normal(size=(6, 6))
    orig = x.copy()
    pairs = np.array([0, 2, 4])
    theta = rng.normal(size=3)
    apply_pair_rotations(x, pairs, theta)
    apply_pair_rotations(x, pairs, theta, transpose=True)
    assert np.max(np.abs(x - orig)) < 1e-14


def test_built_matrix_is_special_orthogonal():
    rng = np.random.default_rng(1)
    for d, layers in [(2, 1), (4, 2), (6, 3)]:
        o = build_orthogonal(FloAnsatz.random(d, layers, rng))
        eye = np.eye(2 * d)
        assert np.max(np.abs(o.mat.T @ o.mat - eye)) < 1e-12
        assert np.linalg.det(o.mat) == pytest.approx(1.0)


def test_identity_ansatz_builds_identity():
    o = build_orthogonal(FloAnsatz.identity(4, layers=2))
    assert np.array_equal(o.mat, np.eye(8))


def test_layer_stacking_multiplies():
    rng = np.random.default_rng(2)
    a1 = FloAnsatz.random(3, 1, rng)
    a2 = FloAnsatz.random(3, 1, rng)
    stacked = FloAnsatz(3, 2, np.vstack([a1.angles, a2.angles]))
    prod = build_orthogonal(a2).mat @ build_orthogonal(a1).mat
    assert np.max(np.abs(build_orthogonal(stacked).mat - prod)) < 1e-13


def test_ansatz_shape_validation():
    with pytest.raises(InvalidInputError):
        FloAnsatz(4, 1, np.zeros((1, 27)))
    with pytest.raises(InvalidInputError):
        FloAnsatz(4, 2, np.zeros((1, 28)))
    with pytest.raises(InvalidInputError):
        FloAnsatz(4, 1, np.full((1, 28), np.nan))


def test_orthogonal_matrix_validation():
    with pytest.raises(InvalidInputError):
        OrthogonalMatrix(np.eye(8) * 1.001)
    with pytest.raises(InvalidInputError):
        OrthogonalMatrix(np.diag([-1.0] + [1.0] * 7))  # det -1
    with pytest.raises(InvalidInputError):
        OrthogonalMatrix(np.eye(7))


@pytest.mark.parametrize("d", [1, 2, 3, 5, 8])
def test_brickwork_angles_reconstruct(d):
    rng = np.random.default_rng(d)
    target = build_orthogonal(FloAnsatz.random(d, 3, rng))
    flat = brickwork_angles(target.mat)
    assert flat.shape == (angles_per_layer(d),)
    rebuilt = build_orthogonal(FloAnsatz(d, 1, flat[None, :]))
    assert np.max(np.abs(rebuilt.mat - target.mat)) < 1e-10


def test_brickwork_angles_identity():
    flat = brickwork_angles(np.eye(8))
    rebuilt = build_orthogonal(FloAnsatz(4, 1, flat[None, :]))
    assert np.max(np.abs(rebuilt.mat - np.eye(8))) < 1e-12


def test_brickwork_angles_rejects_non_orthogonal():
    with pytest.raises((DecompositionError, InvalidInputError)):
        brickwork_angles(np.eye(8) + 0.01)


@given(st.integers(0, 2**32 - 1))
@settings(max_examples=15, deadline=None)
def test_brickwork_angles_random_property(seed):
    rng = np.random.default_rng(seed)
    d = int(rng.integers(1, 7))
    target = build_orthogonal(FloAnsatz.random(d, int(rng.integers(1, 4)), rng))
    flat = brickwork_angles(target.mat)
    rebuilt = build_orthogonal(FloAnsatz(d, 1, flat[None, :]))
    assert np.max(np.abs(rebuilt.mat - target.mat)) < 1e-10


def test_evolve_block_covariance_matches_dense():
    rng = np.random.default_rng(5)
    d = 8  # two registers
    o = build_orthogonal(FloAnsatz.random(d, 1, rng))
    blocks = [sigma_gauss(0.4), sigma_gauss(1.2)]
    sigma0 = np.zeros((2 * d, 2 * d))
    sigma0[:8, :8] = blocks[0].mat
    sigma0[8:, 8:] = blocks[1].mat
    dense = o.mat @ sigma0 @ o.mat.T
    rows = [0, 1, 4, 9, 10, 15]
    got = evolve_block_covariance(o, blocks, rows)
    assert isinstance(got, SkewMatrix)
    assert np.max(np.abs(got.mat - dense[np.ix_(rows, rows)])) < 1e-12
