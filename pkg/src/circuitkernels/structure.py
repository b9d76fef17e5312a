"""Structural property checks: smoothness, decomposability, determinism,
vtree extraction, and pairwise compatibility."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _core
from ._util import enumerate_states, n_states
from .circuits import Circuit, InputUnit, ProductUnit, SumUnit, _input_ids
from .errors import StructuralError
from .vtree import Vtree

DETERMINISM_EXHAUSTIVE_CAP = 1 << 20


@dataclass
class StructureReport:
    smooth: bool
    decomposable: bool
    deterministic: bool | None  # None when undecided within the state cap
    structured: bool
    vtree: Vtree | None
    n_units: int
    n_edges: int
    unit_counts: dict[str, int]

    def summary_lines(self) -> list[str]:
        det = "unknown" if self.deterministic is None else str(self.deterministic).lower()
        return [
            f"units: {self.n_units} "
            f"({self.unit_counts['input']} input, {self.unit_counts['sum']} sum, "
            f"{self.unit_counts['product']} product)",
            f"edges: {self.n_edges}",
            f"smooth: {str(self.smooth).lower()}",
            f"decomposable: {str(self.decomposable).lower()}",
            f"deterministic: {det}",
            f"structured: {str(self.structured).lower()}",
        ]


def _first_splits(c) -> dict[int, tuple[int, int]]:
    """Scope -> split of the first product unit (topological order) with it."""
    first: dict[int, tuple[int, int]] = {}
    for i, u in enumerate(c.units):
        if isinstance(u, ProductUnit):
            s = c.scopes[i]
            if s not in first:
                a, b = u.children
                first[s] = (c.scopes[a], c.scopes[b])
    return first


def extract_vtree(c) -> Vtree:
    """Hierarchical variable decomposition induced by the product units.

    Starting from the root scope, each multi-variable scope follows the split
    of its first product unit in topological order. Fails when some reachable
    scope is never decomposed.
    """
    first = _first_splits(c)

    def build(mask: int) -> Vtree:
        if mask & (mask - 1) == 0:  # single variable
            return Vtree(var=mask.bit_length() - 1)
        if mask not in first:
            raise StructuralError(
                f"no product unit decomposes scope {bin(mask)}; cannot extract a vtree"
            )
        lmask, rmask = first[mask]
        return Vtree(left=build(lmask), right=build(rmask))

    return build(c.scopes[c.root])


def is_structured(c, vtree: Vtree | None = None) -> bool:
    """True when every product split matches one hierarchical decomposition."""
    if not (c.smooth and c.decomposable):
        return False
    try:
        vt = vtree if vtree is not None else extract_vtree(c)
    except StructuralError:
        return False
    allowed = vt.splits()
    for scope, splits in c.scope_splits.items():
        want = allowed.get(scope)
        if want is None:
            return False
        rev = (want[1], want[0])
        for pair in splits:
            if pair != want and pair != rev:
                return False
    return True


def _support_masks(c: Circuit) -> list[dict[int, int]]:
    """Per-unit over-approximate support: var -> bitmask of reachable values."""
    out: list[dict[int, int]] = []
    for i, u in enumerate(c.units):
        if isinstance(u, InputUnit):
            mask = 0
            for v, w in enumerate(u.weights):
                if w != 0.0:
                    mask |= 1 << v
            out.append({u.var: mask})
        elif isinstance(u, SumUnit):
            acc: dict[int, int] = {}
            for e, cc in enumerate(u.children):
                if u.weights[e] == 0.0:
                    continue
                for var, m in out[cc].items():
                    acc[var] = acc.get(var, 0) | m
            out.append(acc)
        else:
            acc = {}
            for cc in u.children:
                acc.update(out[cc])
            out.append(acc)
    return out


def is_deterministic(c: Circuit, cap: int = DETERMINISM_EXHAUSTIVE_CAP) -> bool | None:
    """Whether each sum unit's children have disjoint supports.

    First tries a structural proof (some variable separates every child pair);
    if that is inconclusive, falls back to exhaustive evaluation when the
    state space fits under cap, otherwise returns None.
    """
    if not (c.smooth and c.decomposable):
        supports = None  # structural argument below assumes product-form supports
    else:
        supports = _support_masks(c)
    proved = supports is not None
    if proved:
        for i, u in enumerate(c.units):
            if not isinstance(u, SumUnit):
                continue
            kids = [cc for e, cc in enumerate(u.children) if u.weights[e] != 0.0]
            for a_idx in range(len(kids)):
                for b_idx in range(a_idx + 1, len(kids)):
                    sa = supports[kids[a_idx]]
                    sb = supports[kids[b_idx]]
                    if not any(
                        var in sb and (m & sb[var]) == 0 for var, m in sa.items()
                    ):
                        proved = False
                        break
                if not proved:
                    break
            if not proved:
                break
    if proved:
        return True

    if n_states(c.domain) > cap:
        return None

    # exhaustive: per state, at most one child of each sum may be nonzero
    states = enumerate_states(c.domain, cap=cap)
    flat = c.flat
    block = 4096
    for lo in range(0, states.shape[0], block):
        X = states[lo : lo + block]
        values = np.zeros((c.n_units, X.shape[0]))
        for uid in _input_ids(c):
            unit = c.units[uid]
            values[uid] = unit.weights[X[:, unit.var]]
        _core.feedforward(flat.kind, flat.ch_off, flat.ch, flat.wt, values)
        for i, u in enumerate(c.units):
            if not isinstance(u, SumUnit) or len(u.children) < 2:
                continue
            kids = list(u.children)
            live = (values[kids] != 0.0) & (u.weights[:, None] != 0.0)
            if np.any(live.sum(axis=0) > 1):
                return False
    return True


def check_structural(c: Circuit, determinism_cap: int = DETERMINISM_EXHAUSTIVE_CAP) -> StructureReport:
    smooth = c.smooth
    decomposable = c.decomposable
    structured = is_structured(c)
    vt = None
    if structured:
        vt = c.vtree if c.vtree is not None else extract_vtree(c)
    det = is_deterministic(c, cap=determinism_cap) if (smooth and decomposable) else None
    return StructureReport(
        smooth=smooth,
        decomposable=decomposable,
        deterministic=det,
        structured=structured,
        vtree=vt,
        n_units=c.n_units,
        n_edges=c.n_edges(),
        unit_counts=c.unit_counts(),
    )


def compatibility_reason(a, b) -> str | None:
    """First violation of pairwise compatibility, or None when compatible.

    Compatible means: same domain, both smooth and decomposable, and any
    scope decomposed by products in either circuit is split one single way
    across both.
    """
    if tuple(a.domain) != tuple(b.domain):
        return "domains differ"
    for name, c in (("first", a), ("second", b)):
        if not c.smooth:
            return f"{name} circuit is not smooth"
        if not c.decomposable:
            return f"{name} circuit is not decomposable"
    sa = a.scope_splits
    sb = b.scope_splits
    for scope in set(sa) | set(sb):
        union = set(sa.get(scope, ())) | set(sb.get(scope, ()))
        if len(union) > 1:
            return f"scope {bin(scope)} is split more than one way"
    return None


def check_compatible(a, b) -> bool:
    return compatibility_reason(a, b) is None
