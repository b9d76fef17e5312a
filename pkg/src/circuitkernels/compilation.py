"""Compile factor models into smooth, deterministic circuits.

Variables are eliminated along a right-linear vtree. Units are shared through
an interface signature: two partial assignments that agree on every assigned
variable still linked to the future by some factor reach the same sub-circuit.
The result's size therefore scales with the interface widths, not with the
number of complete states.
"""

from __future__ import annotations

import numpy as np

from ._util import state_cap
from .circuits import Circuit, InputUnit, ProductUnit, SumUnit, partition_function, scale_root
from .errors import FormatError, PositivityError, ResourceBoundError, StructuralError
from .models import FactorModel
from .vtree import Vtree, right_linear_order, right_linear_vtree

__all__ = ["compile_from_factors"]


def compile_from_factors(
    model: FactorModel,
    vtree: Vtree | None = None,
    normalize: bool = False,
) -> Circuit:
    """Exact circuit for a factor model along a right-linear vtree.

    The output is smooth, decomposable, deterministic, and structured by the
    given vtree (default: right-linear in variable order). Other vtree shapes
    are refused. With normalize=True the root weights absorb 1/Z so complete
    states evaluate to probabilities.
    """
    D = model.n_vars
    if vtree is None:
        vtree = right_linear_vtree(list(range(D)))
    try:
        order = right_linear_order(vtree)
    except FormatError as exc:
        raise StructuralError("compilation needs a right-linear vtree") from exc
    if sorted(order) != list(range(D)):
        raise StructuralError("vtree variables do not match the model domain")
    pos = {v: t for t, v in enumerate(order)}

    # factor placement: a factor is applied at the level of its last variable
    buckets: list[list[tuple[tuple[int, ...], np.ndarray]]] = [[] for _ in range(D)]
    for fvars, table in model.factors:
        lvl = max((pos[v] for v in fvars), default=0)
        buckets[lvl].append((fvars, table))

    # interface at level t: assigned vars still tied to unassigned ones
    iface: list[list[int]] = [[] for _ in range(D + 1)]
    for t in range(1, D):
        members: set[int] = set()
        for fvars, _ in model.factors:
            if not fvars:
                continue
            if max(pos[v] for v in fvars) >= t:
                members.update(v for v in fvars if pos[v] < t)
        iface[t] = sorted(members)

    units: list = []
    cap = state_cap()
    leaf_id: dict[tuple[int, int], int] = {}

    def leaf(v: int, val: int) -> int:
        got = leaf_id.get((v, val))
        if got is None:
            w = np.zeros(model.domain[v])
            w[val] = 1.0
            units.append(InputUnit(v, w))
            got = len(units) - 1
            leaf_id[(v, val)] = got
        return got

    memo: dict[tuple[int, tuple[int, ...]], int] = {}

    def build(t: int, env: dict[int, int]) -> int:
        sig = tuple(env[v] for v in iface[t])
        got = memo.get((t, sig))
        if got is not None:
            return got
        v = order[t]
        children: list[int] = []
        weights: list[float] = []
        for val in range(model.domain[v]):
            here = dict(env)
            here[v] = val
            w = 1.0
            for fvars, table in buckets[t]:
                w *= float(table[tuple(here[u] for u in fvars)])
            if t == D - 1:
                children.append(leaf(v, val))
            else:
                sub = build(t + 1, {u: here[u] for u in iface[t + 1]})
                units.append(ProductUnit((leaf(v, val), sub)))
                children.append(len(units) - 1)
            weights.append(w)
        units.append(SumUnit(tuple(children), np.asarray(weights)))
        uid = len(units) - 1
        memo[(t, sig)] = uid
        if len(units) > cap:
            raise ResourceBoundError("compiled circuit exceeds the state cap")
        return uid

    root = build(0, {})
    out = Circuit(model.domain, units, root, vtree=vtree)
    if normalize:
        z = partition_function(out)
        if z <= 0.0 or not np.isfinite(z):
            raise PositivityError("model mass is not normalizable")
        out = scale_root(out, 1.0 / z)
    return out
