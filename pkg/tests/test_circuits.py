"""Core circuit behavior against enumeration oracles."""

import numpy as np
import pytest

import circuitkernels as ck
from circuitkernels import (
    Circuit,
    InputUnit,
    InvalidAssignmentError,
    ProductUnit,
    SumUnit,
    condition,
    enumerate_states,
    evaluate,
    evaluate_batch,
    make_circuit,
    marginalize,
    mixture,
    partition_function,
    point_mass_circuit,
    sample_circuit,
    scale_root,
)
from circuitkernels.errors import DegenerateEvidenceError, FormatError


# ---- oracles -------------------------------------------------------------

def enum_probs(c):
    """Full joint table by brute evaluation; the reference for everything."""
    X = enumerate_states(c.domain)
    return X, evaluate_batch(c, X)


def two_var_mixture():
    """0.6 * Bern(.2)Bern(.7) + 0.4 * Bern(.9)Bern(.4), by hand below."""
    units = [
        InputUnit(0, np.array([0.8, 0.2])),
        InputUnit(0, np.array([0.1, 0.9])),
        InputUnit(1, np.array([0.3, 0.7])),
        InputUnit(1, np.array([0.6, 0.4])),
        ProductUnit((0, 2)),
        ProductUnit((1, 3)),
        SumUnit((4, 5), np.array([0.6, 0.4])),
    ]
    return make_circuit((2, 2), units, 6)


def two_var_table():
    # p(x0, x1) = 0.6 * a(x0) b(x1) + 0.4 * c(x0) d(x1)
    a, b = np.array([0.8, 0.2]), np.array([0.3, 0.7])
    c, d = np.array([0.1, 0.9]), np.array([0.6, 0.4])
    return 0.6 * np.outer(a, b) + 0.4 * np.outer(c, d)


# ---- evaluation ----------------------------------------------------------

def test_evaluate_matches_hand_table():
    pc = two_var_mixture()
    T = two_var_table()
    X, vals = enum_probs(pc)
    for row, v in zip(X, vals):
        assert v == pytest.approx(T[row[0], row[1]], rel=1e-15)
    # spot check one state fully by hand:
    # p(0,0) = 0.6*0.8*0.3 + 0.4*0.1*0.6 = 0.144 + 0.024 = 0.168
    assert evaluate(pc, [0, 0]) == pytest.approx(0.168, rel=1e-15)


def test_enumerate_states_order_and_count():
    X = enumerate_states((2, 3))
    assert X.shape == (6, 2)
    # variable 0 most significant
    assert X.tolist() == [[0, 0], [0, 1], [0, 2], [1, 0], [1, 1], [1, 2]]
    assert ck.n_states((2, 3, 4)) == 24


def test_evaluate_rejects_bad_assignment():
    pc = two_var_mixture()
    with pytest.raises(InvalidAssignmentError):
        evaluate(pc, [0, 2])
    with pytest.raises(InvalidAssignmentError):
        evaluate(pc, [-1, 0])
    with pytest.raises(InvalidAssignmentError):
        evaluate(pc, [0])


def test_partition_function_and_marginalize():
    pc = two_var_mixture()
    T = two_var_table()
    assert partition_function(pc) == pytest.approx(1.0, abs=1e-15)
    # sum over x0 with x1 = 0: 0.6*0.3 + 0.4*0.6 = 0.42
    assert marginalize(pc, {1: 0}) == pytest.approx(0.42, rel=1e-15)
    assert marginalize(pc, {0: 1, 1: 1}) == pytest.approx(T[1, 1], rel=1e-15)
    assert marginalize(pc, {}) == pytest.approx(1.0, abs=1e-15)


def test_condition_matches_renormalized_slice():
    pc = two_var_mixture()
    T = two_var_table()
    cond = condition(pc, {0: 1})
    want = T[1] / T[1].sum()
    for v in (0, 1):
        assert evaluate(cond, [1, v]) == pytest.approx(want[v], rel=1e-12)
    # conditioned circuit integrates the evidence slice to 1
    assert marginalize(cond, {0: 1}) == pytest.approx(1.0, rel=1e-12)
    # off-evidence states carry zero mass
    assert evaluate(cond, [0, 0]) == 0.0


def test_condition_zero_mass_raises():
    units = [
        InputUnit(0, np.array([1.0, 0.0])),
        InputUnit(1, np.array([0.5, 0.5])),
        ProductUnit((0, 1)),
    ]
    pc = make_circuit((2, 2), units, 2)
    with pytest.raises(DegenerateEvidenceError):
        condition(pc, {0: 1})


def test_sampling_frequencies_and_determinism():
    pc = two_var_mixture()
    T = two_var_table()
    rng = np.random.default_rng(11)
    S = sample_circuit(pc, 20000, rng)
    freq = np.zeros((2, 2))
    for a, b in S:
        freq[a, b] += 1
    freq /= len(S)
    assert np.allclose(freq, T, atol=0.02)
    S2 = sample_circuit(pc, 50, np.random.default_rng(3))
    S3 = sample_circuit(pc, 50, np.random.default_rng(3))
    assert np.array_equal(S2, S3)


# ---- constructors and transforms -----------------------------------------

def test_point_mass_and_mixture():
    pm = point_mass_circuit((2, 2), [1, 0])
    X, vals = enum_probs(pm)
    want = (X[:, 0] == 1) & (X[:, 1] == 0)
    assert np.array_equal(vals, want.astype(float))

    pc = two_var_mixture()
    mix = mixture(pc, pm, 0.25)
    _, mv = enum_probs(mix)
    _, pv = enum_probs(pc)
    assert np.allclose(mv, 0.25 * pv + 0.75 * want, rtol=1e-14)


def test_scale_root():
    pc = two_var_mixture()
    sc = scale_root(pc, 0.5)
    assert partition_function(sc) == pytest.approx(0.5, rel=1e-15)
    _, pv = enum_probs(pc)
    _, sv = enum_probs(sc)
    assert np.allclose(sv, 0.5 * pv, rtol=1e-15)


def test_nary_product_rebinarized_same_distribution():
    units = [
        InputUnit(0, np.array([0.2, 0.8])),
        InputUnit(1, np.array([0.5, 0.5])),
        InputUnit(2, np.array([0.9, 0.1])),
        ProductUnit((0, 1, 2)),
    ]
    pc = make_circuit((2, 2, 2), units, 3)
    assert all(len(u.children) == 2 for u in pc.units if isinstance(u, ProductUnit))
    x = [1, 0, 1]
    assert evaluate(pc, x) == pytest.approx(0.8 * 0.5 * 0.1, rel=1e-15)


def test_binary_product_order_is_preserved():
    # a right-linear chain written explicitly must not be reassociated
    units = [
        InputUnit(0, np.array([0.2, 0.8])),
        InputUnit(1, np.array([0.5, 0.5])),
        InputUnit(2, np.array([0.9, 0.1])),
        ProductUnit((1, 2)),
        ProductUnit((0, 3)),
    ]
    pc = make_circuit((2, 2, 2), units, 4)
    scopes = sorted(
        pc.scopes[i] for i, u in enumerate(pc.units) if isinstance(u, ProductUnit)
    )
    # scopes {1,2} and {0,1,2}: the chain nests to the right
    assert scopes == [0b110, 0b111]


def test_nested_sums_are_merged():
    units = [
        InputUnit(0, np.array([1.0, 0.0])),
        InputUnit(0, np.array([0.0, 1.0])),
        SumUnit((0, 1), np.array([0.3, 0.7])),
        SumUnit((2, 0), np.array([0.5, 0.5])),
    ]
    pc = make_circuit((2,), units, 3)
    # 0.5*(0.3, 0.7) + 0.5*(1, 0) = (0.65, 0.35)
    assert evaluate(pc, [0]) == pytest.approx(0.65, rel=1e-15)
    assert evaluate(pc, [1]) == pytest.approx(0.35, rel=1e-15)


def test_make_circuit_rejects_malformed():
    with pytest.raises(FormatError):
        make_circuit((2,), [SumUnit((0,), np.array([1.0]))], 0)  # self reference
    with pytest.raises(FormatError):
        make_circuit((2,), [InputUnit(0, np.array([-0.2, 1.2]))], 0)  # negative leaf
    with pytest.raises(FormatError):
        make_circuit((2, 2), [InputUnit(3, np.array([0.5, 0.5]))], 0)  # var out of range


def test_evaluate_batch_agrees_with_scalar():
    pc = two_var_mixture()
    X = enumerate_states(pc.domain)
    batch = evaluate_batch(pc, X)
    scalar = np.array([evaluate(pc, row) for row in X])
    assert np.array_equal(batch, scalar)
