"""Exact expectations of kernel circuits under circuit distributions.

The central routine contracts a distribution pair against a kernel circuit in
one memoized pass over unit triples; cost is bounded by |p| * |q| * |k|
table operations rather than the squared state space.
"""

from __future__ import annotations

import numpy as np

from . import _core
from ._util import enumerate_states
from .circuits import Circuit, evaluate_batch, partition_function
from .errors import IncompatibleError, PositivityError
from .kernels import KernelCircuit, kernel_compatibility_reason, kernel_matrix, project

__all__ = [
    "expected_kernel",
    "expected_kernel_stats",
    "singly_expected_kernel",
    "mmd2",
    "brute_force_expected_kernel",
]


def _gate(k: KernelCircuit, p: Circuit, q: Circuit | None = None):
    why = kernel_compatibility_reason(k, p, q)
    if why is not None:
        raise IncompatibleError(why)


def _positive_partition(c: Circuit) -> float:
    z = partition_function(c)
    if not np.isfinite(z) or z <= 0.0:
        raise PositivityError(f"circuit mass must be positive and finite (got {z!r})")
    return z


def expected_kernel_stats(p: Circuit, q: Circuit, k: KernelCircuit) -> tuple[float, int]:
    """E_{x~p, y~q}[k(x, y)] plus the number of memo entries used.

    Distributions may be unnormalized; the raw contraction is divided by both
    partition functions.
    """
    _gate(k, p, q)
    zp = _positive_partition(p)
    zq = _positive_partition(q)
    raw, entries = _core.expected_kernel_scalar(p.flat, q.flat, k.flat)
    return raw / (zp * zq), entries


def expected_kernel(p: Circuit, q: Circuit, k: KernelCircuit) -> float:
    return expected_kernel_stats(p, q, k)[0]


def singly_expected_kernel(p: Circuit, k: KernelCircuit, x, side: str = "left") -> float:
    """E_{y~p}[k(x, y)] for side='left', or E_{y~p}[k(y, x)] for side='right'.

    Fixing one kernel argument leaves an ordinary circuit; the expectation is
    then a memoized pass over unit pairs.
    """
    _gate(k, p)
    zp = _positive_partition(p)
    g = project(k, side, x)
    raw, _ = _core.product_integral_scalar(p.flat, g.flat)
    return raw / zp


def mmd2(p: Circuit, q: Circuit, k: KernelCircuit) -> float:
    """Squared maximum mean discrepancy between two circuit distributions."""
    return (
        expected_kernel(p, p, k)
        + expected_kernel(q, q, k)
        - 2.0 * expected_kernel(p, q, k)
    )


def brute_force_expected_kernel(
    p: Circuit, q: Circuit, k: KernelCircuit, row_block: int = 256
) -> float:
    """Reference value by full state enumeration; exponential in the domain.

    Subject to the global state cap. Kept deliberately independent of the
    recursion: plain sums over the enumerated joint state space.
    """
    states = enumerate_states(p.domain)
    pv = evaluate_batch(p, states)
    qv = evaluate_batch(q, states)
    zp = float(pv.sum())
    zq = float(qv.sum())
    if zp <= 0 or zq <= 0:
        raise PositivityError("circuit mass must be positive")
    acc = 0.0
    for lo in range(0, states.shape[0], row_block):
        hi = min(states.shape[0], lo + row_block)
        kb = kernel_matrix(k, states[lo:hi], states)
        acc += float(pv[lo:hi] @ kb @ qv)
    return acc / (zp * zq)
