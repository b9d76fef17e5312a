"""Discrete-variable circuits: units, evaluation, marginals, conditioning.

A circuit is a DAG of input, sum, and product units over a domain of finite
categorical variables. It encodes a possibly unnormalized function f(x);
smooth + decomposable circuits support single-pass marginals and conditioning.

Scopes are kept as int bitmasks. Domains are plain tuples of per-variable
cardinalities. Evaluation runs through a flat array representation shared
with the accelerator backend; sums use compensated (Kahan) accumulation.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, NamedTuple, Sequence, Union

import numpy as np

from . import _core
from ._util import check_assignment, check_batch, state_cap
from .errors import (
    DegenerateEvidenceError,
    FormatError,
    StructuralError,
)
from .vtree import Vtree, right_linear_vtree

KIND_INPUT = 0
KIND_SUM = 1
KIND_PRODUCT = 2

MAX_VARS = 63  # scopes travel as uint64 bitmasks through the backends


@dataclass
class InputUnit:
    """Leaf distribution over one variable: nonnegative weight per category."""

    var: int
    weights: np.ndarray


@dataclass
class SumUnit:
    children: tuple[int, ...]
    weights: np.ndarray


@dataclass
class ProductUnit:
    children: tuple[int, ...]


Unit = Union[InputUnit, SumUnit, ProductUnit]


class FlatCircuit(NamedTuple):
    """Array form consumed by the evaluation backends."""

    kind: np.ndarray  # int8[n]
    var: np.ndarray  # int32[n], -1 for inner units
    ch_off: np.ndarray  # int64[n+1]
    ch: np.ndarray  # int32[edges]
    wt: np.ndarray  # float64[edges]; 1.0 on product edges
    lw_off: np.ndarray  # int64[n], offset into lw; -1 for inner units
    lw: np.ndarray  # float64, concatenated leaf weight vectors
    scope: np.ndarray  # uint64[n] bitmasks
    root: int
    cards: np.ndarray  # int32[D]


def _validate_domain(domain) -> tuple[int, ...]:
    domain = tuple(int(c) for c in domain)
    if len(domain) < 1:
        raise FormatError("domain must have at least one variable")
    if len(domain) > MAX_VARS:
        raise FormatError(f"at most {MAX_VARS} variables are supported")
    if any(c < 2 for c in domain):
        raise FormatError("every variable needs at least two categories")
    return domain


class Circuit:
    """Immutable circuit over a finite discrete domain.

    Units must be topologically ordered (children before parents) and products
    must be binary; use make_circuit to normalize arbitrary descriptions.
    """

    def __init__(self, domain, units: Sequence[Unit], root: int, vtree: Vtree | None = None):
        self.domain = _validate_domain(domain)
        self.units = list(units)
        self.root = int(root)
        self.vtree = vtree
        self._validate()
        self.scopes = self._compute_scopes()
        self._flat = None
        self._flags = None
        self._splits = None
        self._z = None

    # -- construction ------------------------------------------------------

    def _validate(self):
        n = len(self.units)
        if not 0 <= self.root < n:
            raise FormatError("root id out of range")
        for i, u in enumerate(self.units):
            if isinstance(u, InputUnit):
                if not 0 <= u.var < len(self.domain):
                    raise FormatError(f"unit {i}: variable {u.var} outside domain")
                w = np.asarray(u.weights, dtype=np.float64)
                if w.shape != (self.domain[u.var],):
                    raise FormatError(f"unit {i}: weight vector has wrong length")
                if not np.all(np.isfinite(w)):
                    raise FormatError(f"unit {i}: leaf weights must be finite")
                u.weights = w
            elif isinstance(u, SumUnit):
                if len(u.children) < 1:
                    raise FormatError(f"unit {i}: sum needs children")
                w = np.asarray(u.weights, dtype=np.float64)
                if w.shape != (len(u.children),):
                    raise FormatError(f"unit {i}: one weight per child required")
                if not np.all(np.isfinite(w)):
                    raise FormatError(f"unit {i}: sum weights must be finite")
                u.weights = w
                u.children = tuple(int(c) for c in u.children)
                if any(not 0 <= c < i for c in u.children):
                    raise FormatError(f"unit {i}: children must precede the unit")
            elif isinstance(u, ProductUnit):
                u.children = tuple(int(c) for c in u.children)
                if len(u.children) != 2:
                    raise FormatError(f"unit {i}: products must be binary (got {len(u.children)})")
                if any(not 0 <= c < i for c in u.children):
                    raise FormatError(f"unit {i}: children must precede the unit")
            else:
                raise FormatError(f"unit {i}: unknown unit type {type(u).__name__}")

    def _compute_scopes(self) -> list[int]:
        scopes = [0] * len(self.units)
        for i, u in enumerate(self.units):
            if isinstance(u, InputUnit):
                scopes[i] = 1 << u.var
            else:
                mask = 0
                for c in u.children:
                    mask |= scopes[c]
                scopes[i] = mask
        return scopes

    # -- cached views ------------------------------------------------------

    @property
    def flat(self) -> FlatCircuit:
        if self._flat is None:
            self._flat = _build_flat(self)
        return self._flat

    @property
    def _structure_flags(self) -> tuple[bool, bool]:
        """(smooth, decomposable), cached."""
        if self._flags is None:
            smooth = True
            decomposable = True
            for i, u in enumerate(self.units):
                if isinstance(u, SumUnit):
                    s0 = self.scopes[u.children[0]]
                    if any(self.scopes[c] != s0 for c in u.children[1:]):
                        smooth = False
                elif isinstance(u, ProductUnit):
                    a, b = u.children
                    if self.scopes[a] & self.scopes[b]:
                        decomposable = False
            self._flags = (smooth, decomposable)
        return self._flags

    @property
    def smooth(self) -> bool:
        return self._structure_flags[0]

    @property
    def decomposable(self) -> bool:
        return self._structure_flags[1]

    @property
    def scope_splits(self) -> dict[int, set[tuple[int, int]]]:
        """Product-unit scope -> set of unordered scope splits, cached.

        Split pairs are stored smallest-mask-first; child order within a
        product does not change the partition it certifies.
        """
        if self._splits is None:
            splits: dict[int, set[tuple[int, int]]] = {}
            for i, u in enumerate(self.units):
                if isinstance(u, ProductUnit):
                    a, b = u.children
                    sa, sb = self.scopes[a], self.scopes[b]
                    pair = (sa, sb) if sa <= sb else (sb, sa)
                    splits.setdefault(self.scopes[i], set()).add(pair)
            self._splits = splits
        return self._splits

    @property
    def n_units(self) -> int:
        return len(self.units)

    def unit_counts(self) -> dict[str, int]:
        counts = {"input": 0, "sum": 0, "product": 0}
        for u in self.units:
            if isinstance(u, InputUnit):
                counts["input"] += 1
            elif isinstance(u, SumUnit):
                counts["sum"] += 1
            else:
                counts["product"] += 1
        return counts

    def n_edges(self) -> int:
        return sum(
            len(u.children) for u in self.units if not isinstance(u, InputUnit)
        )

    def __repr__(self):
        c = self.unit_counts()
        return (
            f"Circuit(D={len(self.domain)}, units={self.n_units} "
            f"[{c['input']}i/{c['sum']}s/{c['product']}p])"
        )


def _build_flat(c: Circuit) -> FlatCircuit:
    n = len(c.units)
    kind = np.zeros(n, dtype=np.int8)
    var = np.full(n, -1, dtype=np.int32)
    ch_off = np.zeros(n + 1, dtype=np.int64)
    ch_list: list[int] = []
    wt_list: list[float] = []
    lw_off = np.full(n, -1, dtype=np.int64)
    lw_list: list[np.ndarray] = []
    lw_pos = 0
    for i, u in enumerate(c.units):
        if isinstance(u, InputUnit):
            kind[i] = KIND_INPUT
            var[i] = u.var
            lw_off[i] = lw_pos
            lw_list.append(u.weights)
            lw_pos += len(u.weights)
        elif isinstance(u, SumUnit):
            kind[i] = KIND_SUM
            ch_list.extend(u.children)
            wt_list.extend(u.weights.tolist())
        else:
            kind[i] = KIND_PRODUCT
            ch_list.extend(u.children)
            wt_list.extend([1.0, 1.0])
        ch_off[i + 1] = len(ch_list)
    scope = np.array([c.scopes[i] for i in range(n)], dtype=np.uint64)
    return FlatCircuit(
        kind=kind,
        var=var,
        ch_off=ch_off,
        ch=np.asarray(ch_list, dtype=np.int32),
        wt=np.asarray(wt_list, dtype=np.float64),
        lw_off=lw_off,
        lw=np.concatenate(lw_list) if lw_list else np.zeros(0),
        scope=scope,
        root=c.root,
        cards=np.asarray(c.domain, dtype=np.int32),
    )


# -- normalization pass (file ingestion) -----------------------------------


def normalize_units(units: Sequence, root: int, copy_leaf):
    """Shared normalization pass over a unit list; returns (units, root).

    Splices out unary products, merges nested sums into their parents
    (weights multiplied through), re-binarizes n-ary products into a
    right-linear chain ordered by smallest scope element (existing binary
    nesting is kept as written), and drops units unreachable from the root.
    Leaves are anything that is not a SumUnit or ProductUnit; they only need
    a .var attribute and pass through copy_leaf.
    """
    n = len(units)
    if not 0 <= root < n:
        raise FormatError("root id out of range")
    for i, u in enumerate(units):
        if isinstance(u, (SumUnit, ProductUnit)):
            if any(not 0 <= c < i for c in u.children):
                raise FormatError(f"unit {i}: ids must be topologically ordered")
            if len(u.children) == 0:
                raise FormatError(f"unit {i}: inner unit without children")

    new_units: list = []
    scopes: list[int] = []
    remap: list[int] = [-1] * n  # old id -> new id (post alias resolution)

    def emit(u) -> int:
        new_units.append(u)
        if isinstance(u, (SumUnit, ProductUnit)):
            mask = 0
            for cc in u.children:
                mask |= scopes[cc]
            scopes.append(mask)
        else:
            scopes.append(1 << u.var)
        return len(new_units) - 1

    for i, u in enumerate(units):
        if not isinstance(u, (SumUnit, ProductUnit)):
            remap[i] = emit(copy_leaf(u))
        elif isinstance(u, SumUnit):
            flat_children: list[int] = []
            flat_weights: list[float] = []
            for cid, w in zip(u.children, np.asarray(u.weights, dtype=np.float64)):
                c_new = remap[cid]
                cu = new_units[c_new]
                if isinstance(cu, SumUnit):
                    for gcid, gw in zip(cu.children, cu.weights):
                        flat_children.append(gcid)
                        flat_weights.append(float(w) * float(gw))
                else:
                    flat_children.append(c_new)
                    flat_weights.append(float(w))
            remap[i] = emit(SumUnit(tuple(flat_children), np.asarray(flat_weights)))
        elif isinstance(u, ProductUnit):
            kids = [remap[cid] for cid in u.children]
            if len(kids) == 1:
                remap[i] = kids[0]  # unary product is an alias
                continue
            if len(kids) == 2:
                remap[i] = emit(ProductUnit((kids[0], kids[1])))
                continue
            overlap = 0
            seen = 0
            for cc in kids:
                overlap |= seen & scopes[cc]
                seen |= scopes[cc]
            if overlap == 0:
                # order by smallest scope element, fold right so the chain
                # matches the default right-linear decomposition
                kids.sort(key=lambda cc: (scopes[cc] & -scopes[cc]).bit_length())
            cur = kids[-1]
            for cc in reversed(kids[:-1]):
                cur = emit(ProductUnit((cc, cur)))
            remap[i] = cur

    new_root = remap[root]

    # prune everything unreachable from the root, preserving order
    reachable = np.zeros(len(new_units), dtype=bool)
    stack = [new_root]
    reachable[new_root] = True
    while stack:
        u = new_units[stack.pop()]
        if isinstance(u, (SumUnit, ProductUnit)):
            for cc in u.children:
                if not reachable[cc]:
                    reachable[cc] = True
                    stack.append(cc)
    final_id = np.cumsum(reachable) - 1
    pruned: list = []
    for i, u in enumerate(new_units):
        if not reachable[i]:
            continue
        if isinstance(u, SumUnit):
            u = SumUnit(tuple(int(final_id[cc]) for cc in u.children), u.weights)
        elif isinstance(u, ProductUnit):
            u = ProductUnit(tuple(int(final_id[cc]) for cc in u.children))
        pruned.append(u)
    return pruned, int(final_id[new_root])


def make_circuit(domain, units: Sequence[Unit], root: int, vtree: Vtree | None = None) -> Circuit:
    """Build a Circuit from an arbitrary well-ordered unit list.

    Runs the normalization pass and enforces the distribution-file contract
    on leaves: finite nonnegative weights. All-zero leaves are allowed; they
    appear naturally in conditioned circuits as dead branches.
    """
    domain = _validate_domain(domain)

    def copy_leaf(u):
        if not isinstance(u, InputUnit):
            raise FormatError(f"unexpected leaf type {type(u).__name__}")
        w = np.array(u.weights, dtype=np.float64)
        if w.ndim != 1 or not np.all(np.isfinite(w)) or np.any(w < 0):
            raise FormatError(
                f"input unit on variable {u.var}: weights must be finite and nonnegative"
            )
        return InputUnit(u.var, w)

    norm, new_root = normalize_units(units, root, copy_leaf)
    return Circuit(domain, norm, new_root, vtree=vtree)


# -- structural gatekeeping --------------------------------------------------


def ensure_distribution(c: Circuit, op: str):
    """Distribution-level ops need smooth + decomposable + full root scope."""
    if not c.smooth:
        raise StructuralError(f"{op} requires a smooth circuit")
    if not c.decomposable:
        raise StructuralError(f"{op} requires a decomposable circuit")
    full = (1 << len(c.domain)) - 1
    if c.scopes[c.root] != full:
        raise StructuralError(f"{op} requires the root scope to cover the domain")


# -- evaluation --------------------------------------------------------------


def _input_ids(c: Circuit) -> np.ndarray:
    return np.nonzero(c.flat.kind == KIND_INPUT)[0]


def evaluate_batch(c: Circuit, X) -> np.ndarray:
    """Circuit values f(x) for every row of X; shape (B,)."""
    X = check_batch(c.domain, X)
    flat = c.flat
    values = np.zeros((c.n_units, X.shape[0]), dtype=np.float64)
    for u in _input_ids(c):
        unit = c.units[u]
        values[u] = unit.weights[X[:, unit.var]]
    _core.feedforward(flat.kind, flat.ch_off, flat.ch, flat.wt, values)
    return values[c.root].copy()


def evaluate(c: Circuit, x) -> float:
    """Single feedforward value f(x)."""
    x = check_assignment(c.domain, x)
    return float(evaluate_batch(c, x[None, :])[0])


def _marginal_leaf_values(c: Circuit, evidence: Mapping[int, int], B: int = 1) -> np.ndarray:
    values = np.zeros((c.n_units, B), dtype=np.float64)
    for u in _input_ids(c):
        unit = c.units[u]
        if unit.var in evidence:
            values[u] = unit.weights[evidence[unit.var]]
        else:
            values[u] = float(np.sum(unit.weights))
    return values


def _check_evidence(c: Circuit, evidence: Mapping[int, int]) -> dict[int, int]:
    out = {}
    for var, val in evidence.items():
        var = int(var)
        val = int(val)
        if not 0 <= var < len(c.domain):
            raise StructuralError(f"evidence variable {var} outside domain")
        if not 0 <= val < c.domain[var]:
            raise StructuralError(f"evidence value {val} out of range for variable {var}")
        out[var] = val
    return out


def marginalize(c: Circuit, evidence: Mapping[int, int]) -> float:
    """Sum of f over all completions of the partial assignment.

    One feedforward pass: unobserved input units contribute their weight sums.
    """
    ensure_distribution(c, "marginalize")
    evidence = _check_evidence(c, evidence)
    flat = c.flat
    values = _marginal_leaf_values(c, evidence)
    _core.feedforward(flat.kind, flat.ch_off, flat.ch, flat.wt, values)
    return float(values[c.root, 0])


def partition_function(c: Circuit) -> float:
    """Total mass marginalize(c, {}); cached on the circuit."""
    if c._z is None:
        c._z = marginalize(c, {})
    return c._z


def condition(c: Circuit, evidence: Mapping[int, int]) -> Circuit:
    """Condition on evidence; returns a normalized circuit over the full domain.

    Input units on evidence variables are clamped to one-hot weight vectors,
    so the result is the point mass on the evidence times p(X_rest | evidence);
    evaluating at any x agreeing with the evidence gives the conditional value,
    and marginals over the remaining variables are conditional marginals.
    Structure and vtree are untouched, so any two conditionings of one circuit
    stay compatible.
    """
    ensure_distribution(c, "condition")
    evidence = _check_evidence(c, evidence)
    mass = marginalize(c, evidence)
    if not np.isfinite(mass) or mass <= 0.0:
        raise DegenerateEvidenceError(f"evidence has zero mass ({mass!r})")
    units: list[Unit] = list(c.units)
    for i, u in enumerate(c.units):
        if isinstance(u, InputUnit) and u.var in evidence:
            w = np.zeros_like(u.weights)
            val = evidence[u.var]
            w[val] = u.weights[val]
            units[i] = InputUnit(u.var, w)
    root = c.root
    scale = 1.0 / mass
    ru = units[root]
    if isinstance(ru, SumUnit):
        units[root] = SumUnit(ru.children, ru.weights * scale)
    else:
        units.append(SumUnit((root,), np.array([scale])))
        root = len(units) - 1
    return Circuit(c.domain, units, root, vtree=c.vtree)


def sample_circuit(c: Circuit, n: int, rng) -> np.ndarray:
    """Ancestral samples from the distribution f/Z; shape (n, D).

    Sum branches are chosen with probability weight*child-mass/unit-mass, which
    is exact for smooth decomposable circuits whether or not f is normalized.
    """
    ensure_distribution(c, "sample")
    if isinstance(rng, (int, np.integer)):
        rng = np.random.default_rng(int(rng))
    flat = c.flat
    mass = _marginal_leaf_values(c, {})
    _core.feedforward(flat.kind, flat.ch_off, flat.ch, flat.wt, mass)
    mass = mass[:, 0]
    if mass[c.root] <= 0:
        raise DegenerateEvidenceError("circuit has zero total mass")
    out = np.zeros((n, len(c.domain)), dtype=np.int64)
    for row in range(n):
        stack = [c.root]
        while stack:
            u = stack.pop()
            unit = c.units[u]
            if isinstance(unit, InputUnit):
                p = unit.weights / unit.weights.sum()
                out[row, unit.var] = rng.choice(len(p), p=p)
            elif isinstance(unit, ProductUnit):
                stack.extend(unit.children)
            else:
                probs = unit.weights * mass[list(unit.children)]
                total = probs.sum()
                if total <= 0:
                    raise DegenerateEvidenceError("sum unit with zero mass")
                pick = rng.choice(len(probs), p=probs / total)
                stack.append(unit.children[pick])
    return out


# -- small builders ----------------------------------------------------------


def mixture(a: Circuit, b: Circuit, alpha: float) -> Circuit:
    """Fresh sum root alpha*a + (1-alpha)*b over a shared domain."""
    if a.domain != b.domain:
        raise StructuralError("mixture components need one domain")
    off = a.n_units
    units: list[Unit] = list(a.units)
    for u in b.units:
        if isinstance(u, InputUnit):
            units.append(InputUnit(u.var, u.weights))
        elif isinstance(u, SumUnit):
            units.append(SumUnit(tuple(cc + off for cc in u.children), u.weights))
        else:
            units.append(ProductUnit(tuple(cc + off for cc in u.children)))
    units.append(
        SumUnit((a.root, b.root + off), np.array([float(alpha), 1.0 - float(alpha)]))
    )
    vt = a.vtree if (a.vtree is not None and a.vtree == b.vtree) else None
    return Circuit(a.domain, units, len(units) - 1, vtree=vt)


def point_mass_circuit(domain, x, vtree: Vtree | None = None) -> Circuit:
    """Product of one-hot leaves along a vtree: evaluates to 1 at x, else 0."""
    domain = _validate_domain(domain)
    x = check_assignment(domain, x)
    if vtree is None:
        vtree = right_linear_vtree(range(len(domain)))
    units: list[Unit] = []

    def build(node: Vtree) -> int:
        if node.is_leaf:
            w = np.zeros(domain[node.var])
            w[x[node.var]] = 1.0
            units.append(InputUnit(node.var, w))
        else:
            l_id = build(node.left)
            r_id = build(node.right)
            units.append(ProductUnit((l_id, r_id)))
        return len(units) - 1

    root = build(vtree)
    return Circuit(domain, units, root, vtree=vtree)


def scale_root(c: Circuit, factor: float) -> Circuit:
    """Multiply the encoded function by a positive constant."""
    units = list(c.units)
    root = c.root
    ru = units[root]
    if isinstance(ru, SumUnit):
        units[root] = SumUnit(ru.children, ru.weights * float(factor))
    else:
        units.append(SumUnit((root,), np.array([float(factor)])))
        root = len(units) - 1
    return Circuit(c.domain, units, root, vtree=c.vtree)
