"""Random structured circuit generators for stress tests and benchmarks.

Circuits built on a shared vtree are compatible by construction, which is
what the exact-expectation recursion needs. Sum weights are Dirichlet draws
and leaves are normalized, so generated circuits are already distributions.
"""

from __future__ import annotations

import numpy as np

from .circuits import Circuit, InputUnit, ProductUnit, SumUnit
from .vtree import Vtree, random_vtree

__all__ = ["random_structured_circuit", "random_compatible_pair"]


def random_structured_circuit(
    domain,
    vtree: Vtree,
    rng: np.random.Generator,
    strictly_positive: bool = False,
) -> Circuit:
    """Sample a smooth decomposable circuit structured by the given vtree.

    Each vtree region holds one or two units; internal regions mix products
    of child-region pairs. strictly_positive floors leaf weights at 0.05
    (then renormalizes) so conditionals never die.
    """
    domain = tuple(int(c) for c in domain)
    units: list = []

    def dirichlet(n: int) -> np.ndarray:
        w = rng.dirichlet(np.ones(n))
        if strictly_positive:
            w = np.maximum(w, 0.05)
            w = w / w.sum()
        return w

    def region(node: Vtree) -> list[int]:
        if node.is_leaf:
            ids = []
            for _ in range(int(rng.integers(1, 3))):
                units.append(InputUnit(node.var, dirichlet(domain[node.var])))
                ids.append(len(units) - 1)
            return ids
        left = region(node.left)
        right = region(node.right)
        pairs = [(l, r) for l in left for r in right]
        prod_of: dict[tuple[int, int], int] = {}

        def product(pair: tuple[int, int]) -> int:
            got = prod_of.get(pair)
            if got is None:
                units.append(ProductUnit(pair))
                got = len(units) - 1
                prod_of[pair] = got
            return got

        ids = []
        for _ in range(int(rng.integers(1, 3))):
            take = int(rng.integers(1, len(pairs) + 1))
            chosen = [pairs[j] for j in rng.choice(len(pairs), size=take, replace=False)]
            children = tuple(product(pair) for pair in chosen)
            units.append(SumUnit(children, dirichlet(len(children))))
            ids.append(len(units) - 1)
        return ids

    roots = region(vtree)
    root = roots[0]
    if len(roots) > 1:
        units.append(SumUnit(tuple(roots), dirichlet(len(roots))))
        root = len(units) - 1
    return Circuit(domain, units, root, vtree=vtree)


def random_compatible_pair(
    n_vars: int,
    rng: np.random.Generator,
    min_units: int = 20,
    max_units: int = 80,
    strictly_positive: bool = False,
):
    """Two circuits on one random vtree, each within the unit budget.

    Returns (p, q, vtree). Resamples until both circuits land in range.
    """
    domain = [2] * n_vars
    for _ in range(200):
        vtree = random_vtree(n_vars, rng)
        p = random_structured_circuit(domain, vtree, rng, strictly_positive)
        q = random_structured_circuit(domain, vtree, rng, strictly_positive)
        if min_units <= p.n_units <= max_units and min_units <= q.n_units <= max_units:
            return p, q, vtree
    raise RuntimeError("could not hit the unit budget; widen the bounds")
