import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from hcbandit.errors import InvalidDimensionError, NumericInputError
from hcbandit.ridge import RidgeBank, new_ridge_state, quadratic_form, rank1_update


def batch_ridge(xs, rs, d):
    """Direct solve of (D^T D + I) theta = D^T r."""
    D = np.asarray(xs, dtype=float).reshape(-1, d)
    A = D.T @ D + np.eye(d)
    return np.linalg.inv(A), np.linalg.solve(A, D.T @ np.asarray(rs, dtype=float))


def test_new_state_is_identity_zero():
    s = new_ridge_state(2)
    assert np.array_equal(s.a_inv, np.eye(2))
    assert np.array_equal(s.b, [0, 0]) and np.array_equal(s.theta, [0, 0])
    assert s.update_count == 0
    assert new_ridge_state(1).a_inv.tolist() == [[1.0]]


def test_zero_dimension_rejected():
    with pytest.raises(InvalidDimensionError):
        new_ridge_state(0)


@pytest.mark.parametrize("d", [1, 3, 8])
def test_cold_quadratic_form_is_squared_norm(d):
    x = np.arange(1.0, d + 1)
    assert quadratic_form(new_ridge_state(d), x) == pytest.approx(x @ x)


def test_zero_feature_only_bumps_count():
    s = rank1_update(new_ridge_state(2), [0.0, 0.0], 1)
    assert np.array_equal(s.a_inv, np.eye(2)) and np.array_equal(s.b, [0, 0])
    assert s.update_count == 1


def test_single_update_matches_hand_inverse():
    s = rank1_update(new_ridge_state(2), [1.0, 0.0], 1)
    a_inv, theta = batch_ridge([[1, 0]], [1], 2)
    assert np.allclose(a_inv, [[0.5, 0], [0, 1]])
    np.testing.assert_allclose(s.a_inv, a_inv, atol=1e-15)
    np.testing.assert_allclose(s.b, [1, 0])
    np.testing.assert_allclose(s.theta, theta, atol=1e-15)
    assert quadratic_form(s, [1.0, 0.0]) == pytest.approx(0.5)


def test_thousand_updates_match_direct_inverse():
    rng = np.random.default_rng(7)
    d = 8
    xs = rng.standard_normal((1000, d))
    xs /= np.linalg.norm(xs, axis=1, keepdims=True)
    rs = rng.integers(0, 2, 1000)
    s = new_ridge_state(d)
    for x, r in zip(xs, rs):
        rank1_update(s, x, r)
    a_inv, theta = batch_ridge(xs, rs, d)
    assert np.max(np.abs(s.a_inv - a_inv)) < 1e-8
    assert np.max(np.abs(s.theta - theta)) < 1e-8


def test_non_finite_and_bad_shape_rejected():
    s = new_ridge_state(2)
    with pytest.raises(NumericInputError):
        rank1_update(s, [np.nan, 0.0], 1)
    with pytest.raises(InvalidDimensionError):
        rank1_update(s, [1.0, 0.0, 0.0], 1)
    with pytest.raises(InvalidDimensionError):
        quadratic_form(s, [1.0])


unit_seq = st.lists(
    st.tuples(st.lists(st.floats(-1, 1), min_size=3, max_size=3), st.integers(0, 1)),
    min_size=1, max_size=40,
)


@settings(max_examples=60, deadline=None)
@given(unit_seq, st.lists(st.floats(-3, 3), min_size=3, max_size=3))
def test_spd_and_theta_consistency(seq, probe):
    s = new_ridge_state(3)
    for x, r in seq:
        rank1_update(s, x, r)
        assert np.max(np.abs(s.theta - s.a_inv @ s.b)) <= 1e-12
    assert quadratic_form(s, probe) >= 0.0
    assert np.all(np.linalg.eigvalsh(s.a_inv) > 0)
    assert np.array_equal(s.a_inv, s.a_inv.T)


@settings(max_examples=30, deadline=None)
@given(unit_seq)
def test_identical_sequences_give_identical_states(seq):
    a, b = new_ridge_state(3), new_ridge_state(3)
    for x, r in seq:
        rank1_update(a, x, r)
        rank1_update(b, x, r)
    assert a.a_inv.tobytes() == b.a_inv.tobytes() and a.theta.tobytes() == b.theta.tobytes()


def test_bank_matches_individual_states():
    rng = np.random.default_rng(0)
    bank = RidgeBank.fresh(4, 5)
    states = [new_ridge_state(5) for _ in range(4)]
    for _ in range(50):
        x = rng.standard_normal((4, 5))
        r = rng.integers(0, 2, 4).astype(float)
        bank.update(x, r)
        for s, xi, ri in zip(states, x, r):
            rank1_update(s, xi, ri)
    for i, s in enumerate(states):
        np.testing.assert_allclose(bank.a_inv[i], s.a_inv, atol=1e-12)
        np.testing.assert_allclose(bank.theta[i], s.theta, atol=1e-12)
        assert bank.update_count[i] == s.update_count == 50


def test_bank_row_subset_update():
    bank = RidgeBank.fresh(3, 2)
    bank.update(np.array([[1.0, 0.0]]), np.array([1.0]), rows=np.array([1]))
    assert bank.update_count.tolist() == [0, 1, 0]
    np.testing.assert_allclose(bank.theta[1], [0.5, 0.0])
    assert np.array_equal(bank.a_inv[0], np.eye(2))
