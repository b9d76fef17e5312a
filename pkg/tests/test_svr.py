"""Kernel regression and predictions under missing features."""

import numpy as np
import pytest

from circuitkernels import (
    MissingnessMask,
    build_hamming_kc,
    build_rbf_kc,
    compile_from_factors,
    condition,
    enumerate_states,
    evaluate_batch,
    expected_prediction,
    fit_kernel_regressor,
    impute_map,
    impute_median,
    mcar_mask,
    svr_predict,
)
from circuitkernels.models import build_ising
from circuitkernels.svr import median_stats


# ---- oracle --------------------------------------------------------------

def enum_expected_prediction(m, p, mask):
    """Average the predictor over all completions, weighted by the
    conditional feature distribution. Touches none of the library's
    expectation machinery."""
    D = len(p.domain)
    X = enumerate_states(p.domain)
    pv = evaluate_batch(p, X)
    sel = np.ones(len(X), dtype=bool)
    for v, val in mask.observed.items():
        sel &= X[:, v] == val
    w = pv[sel]
    w = w / w.sum()
    preds = np.array([svr_predict(m, x) for x in X[sel]])
    return float(w @ preds)


def fitted_model(seed=0, n=14, rows=2, cols=2, gamma=0.8):
    pc = compile_from_factors(build_ising(rows, cols, seed=seed), normalize=True)
    rng = np.random.default_rng(seed)
    from circuitkernels import sample_circuit

    X = sample_circuit(pc, n, rng)
    y = X.sum(axis=1) + rng.normal(scale=0.1, size=n)
    k = build_rbf_kc(pc.domain, pc.vtree, gamma=gamma)
    return fit_kernel_regressor(X, y, k, lam=1e-2), pc


def test_single_point_regressor_is_exact():
    # one training point: weights vanish and the bias equals its target
    k = build_hamming_kc((2, 2), lam=0.5)
    m = fit_kernel_regressor(np.array([[0, 1]]), np.array([3.25]), k)
    assert svr_predict(m, [0, 1]) == 3.25
    assert svr_predict(m, [1, 0]) == 3.25


def test_regressor_near_interpolation_small_ridge():
    rng = np.random.default_rng(1)
    X = enumerate_states((2, 2, 2))
    y = rng.normal(size=len(X))
    k = build_rbf_kc((2, 2, 2), gamma=2.0)
    m = fit_kernel_regressor(X, y, k, lam=1e-10)
    got = np.array([svr_predict(m, x) for x in X])
    assert np.allclose(got, y, atol=1e-5)


def test_mask_construction():
    mask = MissingnessMask(observed={0: 1}, hidden=(1, 2))
    assert mask.hidden == (1, 2)
    with pytest.raises(ValueError):
        MissingnessMask(observed={1: 0}, hidden=(1,))


def test_mcar_mask_rates():
    x = np.array([0, 1, 0, 1, 1, 0])
    m0 = mcar_mask(x, 0.0, seed=1)
    assert m0.hidden == () and len(m0.observed) == 6
    m9 = mcar_mask(x, 0.95, seed=2)
    assert len(m9.hidden) >= 4
    assert mcar_mask(x, 0.5, seed=3).hidden == mcar_mask(x, 0.5, seed=3).hidden


def test_expected_prediction_matches_enumeration_all_mask_sizes():
    m, pc = fitted_model(seed=2)
    x = np.array([0, 1, 1, 0])
    D = 4
    for r in range(D + 1):
        for hidden in _subsets(range(D), r):
            mask = MissingnessMask(
                observed={v: int(x[v]) for v in range(D) if v not in hidden},
                hidden=tuple(hidden),
            )
            got = expected_prediction(m, pc, mask)
            want = enum_expected_prediction(m, pc, mask)
            assert got == pytest.approx(want, rel=1e-10, abs=1e-12)


def _subsets(items, r):
    from itertools import combinations

    return combinations(items, r)


def test_expected_prediction_no_missing_is_bit_exact():
    m, pc = fitted_model(seed=3)
    x = np.array([1, 0, 0, 1])
    mask = MissingnessMask(observed={v: int(x[v]) for v in range(4)}, hidden=())
    assert expected_prediction(m, pc, mask) == svr_predict(m, x)


def test_impute_median():
    X = np.array([[0, 1], [0, 1], [1, 0], [0, 0]])
    stats = median_stats(X, (2, 2))
    mask = MissingnessMask(observed={0: 1}, hidden=(1,))
    filled = impute_median(stats, mask)
    assert filled[0] == 1
    assert filled[1] == stats[1]
    assert filled.dtype == np.int64


def test_impute_map_matches_exhaustive():
    m, pc = fitted_model(seed=4)
    X = enumerate_states(pc.domain)
    pv = evaluate_batch(pc, X)
    x = np.array([1, 1, 0, 0])
    mask = MissingnessMask(observed={0: 1, 2: 0}, hidden=(1, 3))
    filled = impute_map(pc, mask)
    assert filled[0] == 1 and filled[2] == 0
    sel = (X[:, 0] == 1) & (X[:, 2] == 0)
    best = X[sel][np.argmax(pv[sel])]
    assert evaluate_batch(pc, filled[None, :])[0] == pytest.approx(
        pv[sel].max(), rel=1e-12
    )
    assert filled.tolist() == best.tolist()


def test_expected_beats_median_on_circuit_data():
    # features drawn from the circuit itself: averaging over the true
    # conditional should not lose to a constant fill, on average
    m, pc = fitted_model(seed=5, n=30, rows=2, cols=3, gamma=0.5)
    rng = np.random.default_rng(7)
    from circuitkernels import sample_circuit

    test = sample_circuit(pc, 40, rng)
    y_true = np.array([svr_predict(m, x) for x in test])
    stats = median_stats(test, pc.domain)
    err_e, err_m = [], []
    for i, x in enumerate(test):
        mask = mcar_mask(x, 0.7, seed=1000 + i)
        err_e.append(expected_prediction(m, pc, mask) - y_true[i])
        err_m.append(svr_predict(m, impute_median(stats, mask)) - y_true[i])
    rmse_e = float(np.sqrt(np.mean(np.square(err_e))))
    rmse_m = float(np.sqrt(np.mean(np.square(err_m))))
    assert rmse_e <= rmse_m
