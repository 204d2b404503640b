"""Expectation engine: closed forms, the dense-simulation keystone, and the
batched evaluator's exact agreement with the scalar path."""

import numpy as np
import pytest

from fermiborn._backprop import batch_eval
from fermiborn.engine import (
    FbmModel,
    ZString,
    all_zstrings,
    build_context,
    majorana_rows,
    mode_index,
    term_count,
    zstring_batch,
    zstring_expectation,
)
from fermiborn.errors import (
    InvalidInputError,
    LocalityLimitError,
    NumericalConsistencyError,
)
from fermiborn.flo import FloAnsatz, angles_per_layer
from fermiborn.magic import MagicAngles
from fermiborn.oracle import distribution_zstring, exact_distribution


def identity_model(alpha_values):
    alpha = np.asarray(alpha_values, dtype=float)
    return FbmModel(MagicAngles(len(alpha), alpha),
                    FloAnsatz.identity(4 * len(alpha)))


def test_zstring_validation():
    assert len(ZString(())) == 0
    assert ZString((0, 3, 5)).indices == (0, 3, 5)
    with pytest.raises(InvalidInputError):
        ZString((2, 1))
    with pytest.raises(InvalidInputError):
        ZString((1, 1))
    with pytest.raises(InvalidInputError):
        ZString((-1, 0))


def test_mode_index_skips_hidden_modes():
    model = identity_model([0.1, 0.2])
    assert [mode_index(v, model) for v in range(6)] == [0, 1, 2, 4, 5, 6]


def test_majorana_rows():
    model = identity_model([0.1, 0.2])
    rows = majorana_rows(model, ZString((0, 4)))
    assert rows.tolist() == [0, 1, 10, 11]


def test_term_count_examples():
    assert term_count(10, 1) == 1
    assert term_count(10, 2) == 1 + 10 * 5
    assert term_count(3, 4) == 1 + 15 + 3 * 25


def test_empty_string_expectation_is_one():
    model = identity_model([0.7])
    assert zstring_expectation(model, ZString(())) == 1.0


def test_single_z_closed_form():
    # cos a |0000> + sin a |1111>: every mode has <Z> = cos 2a.
    for alpha in (0.0, np.pi / 6, 1.3):
        model = identity_model([alpha])
        for v in range(3):
            got = zstring_expectation(model, ZString((v,)))
            assert got == pytest.approx(np.cos(2 * alpha), abs=1e-12)


def test_pair_parity_is_perfect_within_register():
    model = identity_model([np.pi / 4])
    for pair in [(0, 1), (0, 2), (1, 2)]:
        assert zstring_expectation(model, ZString(pair)) == pytest.approx(1.0, abs=1e-12)


def test_cross_register_independence():
    model = identity_model([0.5, 1.1])
    single = [zstring_expectation(model, ZString((v,))) for v in (0, 3)]
    joint = zstring_expectation(model, ZString((0, 3)))
    assert joint == pytest.approx(single[0] * single[1], abs=1e-12)


def test_locality_cap_enforced():
    model = identity_model([0.3, 0.4])
    with pytest.raises(LocalityLimitError):
        zstring_expectation(model, ZString((0, 1, 2)), ell_max=2)


def test_raising_the_cap_does_not_change_values():
    rng = np.random.default_rng(8)
    model = FbmModel.random(2, 2, rng)
    for z in all_zstrings(model.n, 3):
        lo = zstring_expectation(model, z, ell_max=max(len(z), 1))
        hi = zstring_expectation(model, z, ell_max=5)
        assert lo == hi


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_keystone_engine_matches_dense_simulation(seed):
    rng = np.random.default_rng(seed)
    model = FbmModel.random(2, int(rng.integers(1, 3)), rng)
    dist = exact_distribution(model)
    for z in all_zstrings(model.n, 4):
        engine_val = zstring_expectation(model, z)
        oracle_val = distribution_zstring(dist, z)
        assert engine_val == pytest.approx(oracle_val, abs=1e-8)


def test_hidden_mode_rotations_are_invisible():
    # An extra layer that only rotates the intra-mode Majorana pair of each
    # register's hidden mode must leave every measured expectation unchanged.
    rng = np.random.default_rng(11)
    base = FbmModel.random(2, 1, rng)
    extra = np.zeros(angles_per_layer(base.d))
    for reg in (0, 1):
        hidden_pair = 2 * (4 * reg + 3)  # Majorana pair (p, p+1) inside mode 4r+3
        # sublayer 0 rotates pairs p = 0, 2, 4, ...; slot index is p // 2
        extra[hidden_pair // 2] = rng.uniform(0.2, 1.0)
    rotated = FbmModel(
        base.magic,
        FloAnsatz(base.d, 2, np.vstack([base.ansatz.angles, extra[None, :]])),
    )
    strings = all_zstrings(base.n, 3)
    a = np.asarray(zstring_batch(base, strings))
    b = np.asarray(zstring_batch(rotated, strings))
    assert np.max(np.abs(a - b)) < 1e-10


def test_batch_matches_scalar_and_respects_order():
    rng = np.random.default_rng(4)
    model = FbmModel.random(2, 2, rng)
    strings = all_zstrings(model.n, 4)[::-1]
    batch = zstring_batch(model, strings)
    scalar = [zstring_expectation(model, z) for z in strings]
    assert batch == scalar


def test_worker_count_does_not_change_results():
    rng = np.random.default_rng(6)
    model = FbmModel.random(2, 1, rng)
    strings = all_zstrings(model.n, 3)
    assert zstring_batch(model, strings, workers=2) == zstring_batch(model, strings)


def test_vectorized_evaluator_pins_to_scalar_engine():
    rng = np.random.default_rng(9)
    model = FbmModel.random(3, 2, rng)
    strings = all_zstrings(model.n, 4)
    scalar = np.asarray(zstring_batch(model, strings))
    fast, _, _ = batch_eval(model, strings, ell_max=4)
    assert np.max(np.abs(fast - scalar)) < 1e-12


def test_vectorized_evaluator_enforces_cap():
    model = identity_model([0.2, 0.3])
    with pytest.raises(LocalityLimitError):
        batch_eval(model, [ZString((0, 1, 2))], ell_max=2)


def test_imaginary_residue_raises():
    # Corrupt one register's correction table so the complex cross components
    # no longer cancel; the consistency check must catch it.
    model = identity_model([0.6])
    ctx = build_context(model)
    coeff, delta = ctx.corrections[0][3]
    bump = np.zeros((8, 8), dtype=complex)
    bump[0, 1], bump[1, 0] = 0.3j, -0.3j
    ctx.corrections[0][3] = (coeff, delta + bump)
    from fermiborn.engine import _expectation_in_context

    with pytest.raises(NumericalConsistencyError):
        _expectation_in_context(ctx, model, ZString((0, 1)), ell_max=2)


def test_all_zstrings_enumeration():
    strings = all_zstrings(3, 2)
    assert [z.indices for z in strings] == [
        (0,), (1,), (2,), (0, 1), (0, 2), (1, 2)
    ]
    assert len(all_zstrings(4, 4)) == 2**4 - 1


def test_model_shape_validation():
    with pytest.raises(InvalidInputError):
        FbmModel(MagicAngles(1, np.array([0.1])), FloAnsatz.identity(8))
    with pytest.raises(InvalidInputError):
        FbmModel(MagicAngles(1, np.array([0.1])), FloAnsatz.identity(4), k=2, m=1)
