"""Vtrees, structural property detection, compatibility, random generators."""

import numpy as np
import pytest

from circuitkernels import (
    InputUnit,
    ProductUnit,
    SumUnit,
    Vtree,
    balanced_vtree,
    check_compatible,
    check_structural,
    extract_vtree,
    is_deterministic,
    is_structured,
    make_circuit,
    partition_function,
    random_vtree,
    right_linear_vtree,
)
from circuitkernels.errors import FormatError
from circuitkernels.random_circuits import random_compatible_pair, random_structured_circuit
from circuitkernels.structure import compatibility_reason
from circuitkernels.vtree import right_linear_order


def test_vtree_shapes():
    rl = right_linear_vtree(range(4))
    assert rl.is_right_linear()
    assert sorted(rl.variables()) == [0, 1, 2, 3]
    assert right_linear_order(rl) == [0, 1, 2, 3]

    bal = balanced_vtree(range(4))
    assert sorted(bal.variables()) == [0, 1, 2, 3]
    assert not bal.is_right_linear()
    with pytest.raises(FormatError):
        right_linear_order(bal)


def test_vtree_roundtrip_and_equality():
    v = random_vtree(6, np.random.default_rng(0))
    w = Vtree.from_dict(v.to_dict())
    assert v == w
    assert hash(v) == hash(w)
    assert v != right_linear_vtree(range(6)) or v.is_right_linear()


def test_random_vtree_is_seeded():
    a = random_vtree(8, np.random.default_rng(5))
    b = random_vtree(8, np.random.default_rng(5))
    assert a == b


def _indep_pair():
    """Two circuits over (2,2) with different vtree orientations."""
    ua = [
        InputUnit(0, np.array([0.5, 0.5])),
        InputUnit(1, np.array([0.2, 0.8])),
        ProductUnit((0, 1)),
    ]
    ub = [
        InputUnit(1, np.array([0.4, 0.6])),
        InputUnit(0, np.array([0.7, 0.3])),
        ProductUnit((0, 1)),
    ]
    return make_circuit((2, 2), ua, 2), make_circuit((2, 2), ub, 2)


def test_compatibility_two_vars():
    a, b = _indep_pair()
    # a single split over two variables is the same partition either way
    assert check_compatible(a, b)
    assert compatibility_reason(a, b) is None


def test_incompatible_splits_detected():
    def chain(order):
        units = [InputUnit(v, np.array([0.5, 0.5])) for v in range(3)]
        cur = order[-1]
        for v in reversed(order[:-1]):
            units.append(ProductUnit((v, cur)))
            cur = len(units) - 1
        return make_circuit((2, 2, 2), units, cur)

    a = chain([0, 1, 2])  # splits {0} | {1,2}
    b = chain([2, 1, 0])  # splits {2} | {0,1}
    reason = compatibility_reason(a, b)
    assert reason is not None and "split" in reason
    assert not check_compatible(a, b)


def test_structure_report_on_mixture():
    units = [
        InputUnit(0, np.array([1.0, 0.0])),
        InputUnit(0, np.array([0.0, 1.0])),
        SumUnit((0, 1), np.array([0.4, 0.6])),
    ]
    pc = make_circuit((2,), units, 2)
    rep = check_structural(pc)
    assert rep.smooth and rep.decomposable
    assert rep.deterministic is True
    assert is_deterministic(pc) is True


def test_nondeterministic_detected():
    units = [
        InputUnit(0, np.array([0.5, 0.5])),
        InputUnit(0, np.array([0.9, 0.1])),
        SumUnit((0, 1), np.array([0.5, 0.5])),
    ]
    pc = make_circuit((2,), units, 2)
    assert is_deterministic(pc) is False


def test_extract_vtree_matches_declared():
    vt = random_vtree(5, np.random.default_rng(2))
    pc = random_structured_circuit((2,) * 5, vt, np.random.default_rng(3))
    assert is_structured(pc, vt)
    got = extract_vtree(pc)
    assert is_structured(pc, got)


def test_random_pairs_are_compatible_and_normalized():
    for seed in range(5):
        rng = np.random.default_rng(seed)
        p, q, _ = random_compatible_pair(7, rng)
        assert check_compatible(p, q)
        assert partition_function(p) == pytest.approx(1.0, rel=1e-9)
        assert partition_function(q) == pytest.approx(1.0, rel=1e-9)
        assert 20 <= p.n_units <= 80
        assert 20 <= q.n_units <= 80
