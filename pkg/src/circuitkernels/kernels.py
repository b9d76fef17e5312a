"""Kernel circuits: product-factorizable kernels over pairs of assignments.

A kernel circuit shares the sum/product inner-unit algebra with ordinary
circuits but its leaves hold square per-variable tables T_i, so the circuit
evaluates a function k(x, y) on pairs. Smooth decomposable kernel circuits
admit the same single-pass algebra used for expectations.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from . import _core
from ._util import check_batch
from .circuits import (
    Circuit,
    InputUnit,
    ProductUnit,
    SumUnit,
    _validate_domain,
    normalize_units,
)
from .errors import FormatError, IncompatibleError
from .structure import compatibility_reason
from .vtree import Vtree, right_linear_vtree

KIND_INPUT = 0
KIND_SUM = 1
KIND_PRODUCT = 2


@dataclass
class KernelLeaf:
    """Leaf over one variable: a card x card table of pairwise values."""

    var: int
    table: np.ndarray


class FlatKernel(NamedTuple):
    kind: np.ndarray
    var: np.ndarray
    ch_off: np.ndarray
    ch: np.ndarray
    wt: np.ndarray
    tb_off: np.ndarray  # offset into tb; -1 for inner units
    tb: np.ndarray  # concatenated row-major leaf tables
    scope: np.ndarray
    root: int
    cards: np.ndarray


class KernelCircuit:
    """Circuit over paired assignments; same DAG discipline as Circuit."""

    def __init__(self, domain, units: Sequence, root: int, vtree: Vtree | None = None):
        self.domain = _validate_domain(domain)
        self.units = list(units)
        self.root = int(root)
        self.vtree = vtree
        self._validate()
        self.scopes = self._compute_scopes()
        self._flat = None
        self._flags = None
        self._splits = None

    def _validate(self):
        n = len(self.units)
        if not 0 <= self.root < n:
            raise FormatError("root id out of range")
        for i, u in enumerate(self.units):
            if isinstance(u, KernelLeaf):
                if not 0 <= u.var < len(self.domain):
                    raise FormatError(f"unit {i}: variable {u.var} outside domain")
                card = self.domain[u.var]
                t = np.asarray(u.table, dtype=np.float64)
                if t.shape != (card, card):
                    raise FormatError(f"unit {i}: table must be {card}x{card}")
                if not np.all(np.isfinite(t)):
                    raise FormatError(f"unit {i}: table entries must be finite")
                u.table = t
            elif isinstance(u, SumUnit):
                if len(u.children) < 1:
                    raise FormatError(f"unit {i}: sum needs children")
                w = np.asarray(u.weights, dtype=np.float64)
                if w.shape != (len(u.children),) or not np.all(np.isfinite(w)):
                    raise FormatError(f"unit {i}: bad sum weights")
                u.weights = w
                u.children = tuple(int(c) for c in u.children)
                if any(not 0 <= c < i for c in u.children):
                    raise FormatError(f"unit {i}: children must precede the unit")
            elif isinstance(u, ProductUnit):
                u.children = tuple(int(c) for c in u.children)
                if len(u.children) != 2:
                    raise FormatError(f"unit {i}: products must be binary")
                if any(not 0 <= c < i for c in u.children):
                    raise FormatError(f"unit {i}: children must precede the unit")
            else:
                raise FormatError(f"unit {i}: unknown unit type {type(u).__name__}")

    def _compute_scopes(self) -> list[int]:
        scopes = [0] * len(self.units)
        for i, u in enumerate(self.units):
            if isinstance(u, KernelLeaf):
                scopes[i] = 1 << u.var
            else:
                mask = 0
                for c in u.children:
                    mask |= scopes[c]
                scopes[i] = mask
        return scopes

    @property
    def flat(self) -> FlatKernel:
        if self._flat is None:
            n = len(self.units)
            kind = np.zeros(n, dtype=np.int8)
            var = np.full(n, -1, dtype=np.int32)
            ch_off = np.zeros(n + 1, dtype=np.int64)
            ch_list: list[int] = []
            wt_list: list[float] = []
            tb_off = np.full(n, -1, dtype=np.int64)
            tb_list: list[np.ndarray] = []
            pos = 0
            for i, u in enumerate(self.units):
                if isinstance(u, KernelLeaf):
                    kind[i] = KIND_INPUT
                    var[i] = u.var
                    tb_off[i] = pos
                    tb_list.append(u.table.ravel())
                    pos += u.table.size
                elif isinstance(u, SumUnit):
                    kind[i] = KIND_SUM
                    ch_list.extend(u.children)
                    wt_list.extend(u.weights.tolist())
                else:
                    kind[i] = KIND_PRODUCT
                    ch_list.extend(u.children)
                    wt_list.extend([1.0, 1.0])
                ch_off[i + 1] = len(ch_list)
            self._flat = FlatKernel(
                kind=kind,
                var=var,
                ch_off=ch_off,
                ch=np.asarray(ch_list, dtype=np.int32),
                wt=np.asarray(wt_list, dtype=np.float64),
                tb_off=tb_off,
                tb=np.concatenate(tb_list) if tb_list else np.zeros(0),
                scope=np.array(self.scopes, dtype=np.uint64),
                root=self.root,
                cards=np.asarray(self.domain, dtype=np.int32),
            )
        return self._flat

    @property
    def _structure_flags(self) -> tuple[bool, bool]:
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
            if isinstance(u, KernelLeaf):
                counts["input"] += 1
            elif isinstance(u, SumUnit):
                counts["sum"] += 1
            else:
                counts["product"] += 1
        return counts

    def n_edges(self) -> int:
        return sum(len(u.children) for u in self.units if not isinstance(u, KernelLeaf))

    def __repr__(self):
        return f"KernelCircuit(D={len(self.domain)}, units={self.n_units})"


def make_kernel_circuit(domain, units, root, vtree: Vtree | None = None) -> KernelCircuit:
    """Normalized kernel-circuit construction from a raw unit list."""
    domain = _validate_domain(domain)

    def copy_leaf(u):
        if not isinstance(u, KernelLeaf):
            raise FormatError(f"unexpected leaf type {type(u).__name__}")
        return KernelLeaf(u.var, np.array(u.table, dtype=np.float64))

    norm, new_root = normalize_units(units, root, copy_leaf)
    return KernelCircuit(domain, norm, new_root, vtree=vtree)


# -- evaluation ---------------------------------------------------------------


def _leaf_ids(k: KernelCircuit) -> np.ndarray:
    return np.nonzero(k.flat.kind == KIND_INPUT)[0]


def evaluate_kernel_batch(k: KernelCircuit, X, Y) -> np.ndarray:
    """k(x_r, y_r) for paired rows; shape (B,)."""
    X = check_batch(k.domain, X)
    Y = check_batch(k.domain, Y)
    if X.shape != Y.shape:
        raise FormatError("paired batches must have matching shapes")
    flat = k.flat
    values = np.zeros((k.n_units, X.shape[0]))
    for u in _leaf_ids(k):
        unit = k.units[u]
        values[u] = unit.table[X[:, unit.var], Y[:, unit.var]]
    _core.feedforward(flat.kind, flat.ch_off, flat.ch, flat.wt, values)
    return values[k.root].copy()


def evaluate_kernel(k: KernelCircuit, x, y) -> float:
    x = np.asarray(x)
    y = np.asarray(y)
    return float(evaluate_kernel_batch(k, x[None, :], y[None, :])[0])


def kernel_matrix(k: KernelCircuit, X, Y=None, pair_block: int = 1 << 16) -> np.ndarray:
    """Dense Gram block K[i, j] = k(X[i], Y[j]); Y defaults to X.

    Evaluates the cross product in row blocks to bound peak memory.
    """
    X = check_batch(k.domain, X)
    Y = X if Y is None else check_batch(k.domain, Y)
    nx, ny = X.shape[0], Y.shape[0]
    out = np.empty((nx, ny))
    rows_per_block = max(1, pair_block // max(ny, 1))
    for lo in range(0, nx, rows_per_block):
        hi = min(nx, lo + rows_per_block)
        xx = np.repeat(X[lo:hi], ny, axis=0)
        yy = np.tile(Y, (hi - lo, 1))
        out[lo:hi] = evaluate_kernel_batch(k, xx, yy).reshape(hi - lo, ny)
    return out


# -- derived circuits ---------------------------------------------------------


def project(k: KernelCircuit, side: str, x_fixed) -> Circuit:
    """Fix one argument of the kernel, leaving a circuit over the other.

    side='left' pins the first argument: the result evaluates y -> k(x, y).
    side='right' pins the second: y -> k(y, x). Structure is preserved, so
    the projection is compatible with whatever the kernel was compatible with.
    """
    if side not in ("left", "right"):
        raise ValueError("side must be 'left' or 'right'")
    x = check_batch(k.domain, np.asarray(x_fixed)[None, :])[0]
    units: list = []
    for u in k.units:
        if isinstance(u, KernelLeaf):
            vec = u.table[x[u.var], :] if side == "left" else u.table[:, x[u.var]]
            units.append(InputUnit(u.var, np.array(vec)))
        elif isinstance(u, SumUnit):
            units.append(SumUnit(u.children, u.weights))
        else:
            units.append(ProductUnit(u.children))
    return Circuit(k.domain, units, k.root, vtree=k.vtree)


def permute_kernel(k: KernelCircuit, i: int, side: str, inverse: bool = False) -> KernelCircuit:
    """Compose one argument's variable i with the cyclic successor map.

    side='left' returns k'(x, y) = k(x with x_i shifted, y); side='right'
    shifts y_i; side='both' shifts both. The shift is a -> (a + 1) mod card,
    or its inverse a -> (a - 1) mod card when inverse=True.
    """
    if side not in ("left", "right", "both"):
        raise ValueError("side must be 'left', 'right', or 'both'")
    if not 0 <= i < len(k.domain):
        raise FormatError(f"variable {i} outside domain")
    # table indexed by the new argument a must read T[sigma(a), b]:
    # for sigma(a) = a+1 mod c that is a roll by -1 along the axis
    shift = 1 if inverse else -1
    units: list = []
    touched = False
    for u in k.units:
        if isinstance(u, KernelLeaf) and u.var == i:
            touched = True
            t = u.table
            if side in ("left", "both"):
                t = np.roll(t, shift, axis=0)
            if side in ("right", "both"):
                t = np.roll(t, shift, axis=1)
            units.append(KernelLeaf(u.var, t))
        elif isinstance(u, KernelLeaf):
            units.append(KernelLeaf(u.var, u.table))
        elif isinstance(u, SumUnit):
            units.append(SumUnit(u.children, u.weights))
        else:
            units.append(ProductUnit(u.children))
    if not touched:
        raise FormatError(f"no kernel leaf carries variable {i}")
    return KernelCircuit(k.domain, units, k.root, vtree=k.vtree)


# -- quality and compatibility checks ----------------------------------------


def verify_pd(k: KernelCircuit, tol: float = 1e-9) -> bool:
    """Sufficient positive-semidefiniteness certificate.

    True when every leaf table is symmetric PSD (eigenvalues >= -tol relative
    to scale) and every sum weight is nonnegative; products and nonnegative
    sums of PSD kernels stay PSD. False reports only that the certificate
    fails, not that the kernel is necessarily indefinite.
    """
    for u in k.units:
        if isinstance(u, KernelLeaf):
            t = u.table
            scale = max(1.0, float(np.max(np.abs(t))))
            if not np.allclose(t, t.T, atol=tol * scale, rtol=0.0):
                return False
            if float(np.linalg.eigvalsh((t + t.T) / 2.0).min()) < -tol * scale:
                return False
        elif isinstance(u, SumUnit):
            if np.any(u.weights <= 0):
                return False
    return True


def kernel_compatibility_reason(k: KernelCircuit, p, q=None) -> str | None:
    """First reason the expectation recursion cannot pair (p, q) with k.

    Requires smooth decomposable circuits over one domain, equal root scopes,
    and pairwise agreement of product splits. Fixing either kernel argument
    leaves the kernel's structure untouched, so checking the kernel's own
    splits covers both of its projections.
    """
    circuits = [("distribution", p)] + ([("second distribution", q)] if q is not None else [])
    if not k.smooth:
        return "kernel circuit is not smooth"
    if not k.decomposable:
        return "kernel circuit is not decomposable"
    for name, c in circuits:
        if tuple(c.domain) != tuple(k.domain):
            return f"{name} domain differs from the kernel's"
        if not c.smooth:
            return f"{name} circuit is not smooth"
        if not c.decomposable:
            return f"{name} circuit is not decomposable"
        if c.scopes[c.root] != k.scopes[k.root]:
            return f"{name} root scope differs from the kernel's"
    pool = [k] + [c for _, c in circuits]
    for a_idx in range(len(pool)):
        for b_idx in range(a_idx + 1, len(pool)):
            why = compatibility_reason(pool[a_idx], pool[b_idx])
            if why is not None:
                return why
    return None


def check_kernel_compatible(k: KernelCircuit, p, q=None) -> bool:
    return kernel_compatibility_reason(k, p, q) is None


# -- standard constructions ---------------------------------------------------


def _product_tree_kernel(domain, tables: list[np.ndarray], vtree: Vtree | None) -> KernelCircuit:
    domain = _validate_domain(domain)
    if vtree is None:
        vtree = right_linear_vtree(range(len(domain)))
    if set(vtree.variables()) != set(range(len(domain))):
        raise IncompatibleError("vtree must cover exactly the domain variables")
    units: list = []

    def build(node: Vtree) -> int:
        if node.is_leaf:
            units.append(KernelLeaf(node.var, tables[node.var]))
        else:
            l_id = build(node.left)
            r_id = build(node.right)
            units.append(ProductUnit((l_id, r_id)))
        return len(units) - 1

    root = build(vtree)
    return KernelCircuit(domain, units, root, vtree=vtree)


def build_hamming_kc(domain, vtree: Vtree | None = None, lam: float | None = None) -> KernelCircuit:
    """Exponentiated mismatch-count kernel exp(-lam * #{i : x_i != y_i}).

    Factorizes per variable into tables with 1 on the diagonal and
    exp(-lam) off it. lam defaults to 1/D.
    """
    domain = _validate_domain(domain)
    if lam is None:
        lam = 1.0 / len(domain)
    if lam <= 0:
        raise ValueError("lam must be positive")
    off = float(np.exp(-lam))
    tables = []
    for card in domain:
        t = np.full((card, card), off)
        np.fill_diagonal(t, 1.0)
        tables.append(t)
    k = _product_tree_kernel(domain, tables, vtree)
    k.descriptor = ("hamming", float(lam))
    return k


def build_rbf_kc(domain, vtree: Vtree | None = None, gamma: float = 1.0) -> KernelCircuit:
    """Squared-exponential kernel on integer-coded categories.

    k(x, y) = exp(-gamma * sum_i (x_i - y_i)^2), factorized per variable.
    """
    domain = _validate_domain(domain)
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    tables = []
    for card in domain:
        idx = np.arange(card, dtype=np.float64)
        t = np.exp(-gamma * (idx[:, None] - idx[None, :]) ** 2)
        tables.append(t)
    k = _product_tree_kernel(domain, tables, vtree)
    k.descriptor = ("rbf", float(gamma))
    return k


def build_kronecker_kc(domain, vtree: Vtree | None = None) -> KernelCircuit:
    """Exact-match kernel: 1 when x = y, else 0 (identity leaf tables)."""
    domain = _validate_domain(domain)
    tables = [np.eye(card) for card in domain]
    k = _product_tree_kernel(domain, tables, vtree)
    k.descriptor = ("kronecker", None)
    return k
