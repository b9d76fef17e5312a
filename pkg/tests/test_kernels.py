"""Kernel circuits: evaluation, projection, permutation, PD checks."""

import numpy as np
import pytest

from circuitkernels import (
    InputUnit,
    KernelLeaf,
    ProductUnit,
    build_hamming_kc,
    build_kronecker_kc,
    build_rbf_kc,
    check_kernel_compatible,
    enumerate_states,
    evaluate,
    evaluate_kernel,
    kernel_matrix,
    make_circuit,
    make_kernel_circuit,
    permute_kernel,
    project,
    verify_pd,
)
from circuitkernels.errors import FormatError
from circuitkernels.random_circuits import random_compatible_pair


# ---- oracle --------------------------------------------------------------

def kernel_table(k):
    """Dense Gram over all states by pointwise evaluation."""
    X = enumerate_states(k.domain)
    return X, kernel_matrix(k, X)


def test_hamming_leaf_values():
    k = build_hamming_kc((2, 2), lam=0.25)
    # mismatch count 0, 1, 2 -> exp(0), exp(-0.25), exp(-0.5)
    assert evaluate_kernel(k, [0, 1], [0, 1]) == pytest.approx(1.0, abs=0)
    assert evaluate_kernel(k, [0, 1], [0, 0]) == pytest.approx(np.exp(-0.25), rel=1e-15)
    two_off = evaluate_kernel(k, [0, 1], [1, 0])
    assert two_off == pytest.approx(0.6065306597126334, rel=1e-15)  # e^{-1/2}


def test_hamming_default_lam_scales_with_dimension():
    k = build_hamming_kc((2,) * 4)
    # default lam = 1/D, so flipping all coordinates gives e^{-1}
    assert evaluate_kernel(k, [0] * 4, [1] * 4) == pytest.approx(np.exp(-1.0), rel=1e-14)


def test_rbf_on_categories():
    k = build_rbf_kc((3, 3), gamma=0.5)
    # squared distance (0-2)^2 + (1-0)^2 = 5 -> e^{-2.5}
    v = evaluate_kernel(k, [0, 1], [2, 0])
    assert v == pytest.approx(0.0820849986238988, rel=1e-15)


def test_kronecker_is_indicator():
    k = build_kronecker_kc((2, 3))
    X, G = kernel_table(k)
    assert np.array_equal(G, np.eye(len(X)))


def test_builders_reject_bad_parameters():
    with pytest.raises(ValueError):
        build_hamming_kc((2, 2), lam=0.0)
    with pytest.raises(ValueError):
        build_rbf_kc((2, 2), gamma=-1.0)


def test_kernel_matrix_symmetric_psd():
    k = build_hamming_kc((2,) * 5, lam=0.3)
    X, G = kernel_table(k)
    assert np.allclose(G, G.T, atol=0)
    eig = np.linalg.eigvalsh(G)
    assert eig.min() > -1e-9 * eig.max()


def test_project_fixes_one_side():
    k = build_rbf_kc((2, 2), gamma=1.0)
    y = np.array([1, 0])
    g = project(k, "right", y)
    X = enumerate_states((2, 2))
    for x in X:
        assert evaluate(g, x) == pytest.approx(evaluate_kernel(k, x, y), rel=1e-15)
    g2 = project(k, "left", y)
    for x in X:
        assert evaluate(g2, x) == pytest.approx(evaluate_kernel(k, y, x), rel=1e-15)


def test_permute_kernel_shifts_one_argument():
    k = build_rbf_kc((3, 2), gamma=0.4)
    kp = permute_kernel(k, 0, "left")
    X = enumerate_states((3, 2))
    for x in X:
        for y in X:
            shifted = x.copy()
            shifted[0] = (shifted[0] + 1) % 3
            assert evaluate_kernel(kp, x, y) == pytest.approx(
                evaluate_kernel(k, shifted, y), rel=1e-15
            )
    # inverse on the right: k'(x, y) = k(x, y - e_1)
    km = permute_kernel(k, 1, "right", inverse=True)
    for x in X:
        for y in X:
            back = y.copy()
            back[1] = (back[1] - 1) % 2
            assert evaluate_kernel(km, x, y) == pytest.approx(
                evaluate_kernel(k, x, back), rel=1e-15
            )


def test_permute_kernel_cycle_is_identity():
    k = build_hamming_kc((3, 3), lam=0.5)
    kc = k
    for _ in range(3):
        kc = permute_kernel(kc, 0, "both")
    X = enumerate_states(k.domain)
    assert np.allclose(kernel_matrix(kc, X), kernel_matrix(k, X), atol=0)


def test_permute_kernel_unknown_variable():
    k = build_hamming_kc((2, 2))
    with pytest.raises(FormatError):
        permute_kernel(k, 5, "left")


def test_verify_pd_accepts_builders_rejects_indefinite():
    assert verify_pd(build_hamming_kc((2,) * 3, lam=0.7))
    assert verify_pd(build_rbf_kc((3, 2), gamma=1.2))
    assert verify_pd(build_kronecker_kc((2, 2)))
    # leaf [[1,2],[2,1]] has eigenvalues 3 and -1
    bad = make_kernel_circuit((2,), [KernelLeaf(0, np.array([[1.0, 2.0], [2.0, 1.0]]))], 0)
    assert not verify_pd(bad)


def test_kernel_compatibility_gate():
    rng = np.random.default_rng(7)
    p, q, vt = random_compatible_pair(6, rng)
    k = build_hamming_kc(p.domain, vt)
    assert check_kernel_compatible(k, p, q)
    # a kernel on a fresh random vtree usually fails against the pair
    other = build_hamming_kc(p.domain, None)  # right-linear chain
    from circuitkernels.kernels import kernel_compatibility_reason

    reason = kernel_compatibility_reason(other, p, q)
    if reason is not None:
        assert not check_kernel_compatible(other, p, q)


def test_kernel_domain_mismatch_rejected():
    p = make_circuit((2, 2), [
        InputUnit(0, np.array([0.5, 0.5])),
        InputUnit(1, np.array([0.5, 0.5])),
        ProductUnit((0, 1)),
    ], 2)
    k = build_hamming_kc((2, 2, 2))
    assert not check_kernel_compatible(k, p)
