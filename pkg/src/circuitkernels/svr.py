"""Kernel regressors over discrete features, evaluated under missing inputs.

A fitted regressor is a weighted sum of kernel columns anchored at support
points. When some features of a query are missing, the prediction is either
the exact expectation of the regressor under the feature distribution given
the observed part, or an imputation baseline (median fill or most likely
completion).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _core
from ._util import check_batch, enumerate_states
from .circuits import (
    Circuit,
    InputUnit,
    ProductUnit,
    SumUnit,
    condition,
    evaluate_batch,
    partition_function,
)
from .errors import IncompatibleError, ResourceBoundError
from .kernels import (
    KernelCircuit,
    KernelLeaf,
    evaluate_kernel,
    kernel_compatibility_reason,
    kernel_matrix,
)
from .structure import is_deterministic

__all__ = [
    "SvrModel",
    "svr_predict",
    "fit_kernel_regressor",
    "MissingnessMask",
    "mcar_mask",
    "median_stats",
    "impute_median",
    "impute_map",
    "expected_prediction",
]


@dataclass
class SvrModel:
    """Kernel expansion f(x) = sum_i duals[i] k(support[i], x) + bias."""

    support: np.ndarray
    duals: np.ndarray
    bias: float
    kernel: KernelCircuit
    diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        self.support = np.asarray(self.support, dtype=np.int64)
        self.duals = np.asarray(self.duals, dtype=np.float64)
        if self.support.ndim != 2 or self.duals.shape != (self.support.shape[0],):
            raise ValueError("support must be (n, D) with one dual per row")


def svr_predict(m: SvrModel, x) -> float:
    """Point prediction at a fully observed x."""
    x = np.asarray(x, dtype=np.int64).reshape(1, -1)
    cols = kernel_matrix(m.kernel, m.support, x)[:, 0]
    return float(m.duals @ cols + m.bias)


def fit_kernel_regressor(X, y, kernel: KernelCircuit, lam: float = 1e-3) -> SvrModel:
    """Ridge-regularized kernel fit: solve (K + lam I) w = y - mean(y).

    The intercept is the target mean, so a single training point is
    reproduced exactly. The Gram condition number lands in diagnostics.
    """
    X = np.asarray(X, dtype=np.int64)
    y = np.asarray(y, dtype=np.float64).reshape(-1)
    if X.ndim != 2 or y.shape != (X.shape[0],):
        raise ValueError("X must be (n, D) with one target per row")
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    K = kernel_matrix(kernel, X)
    A = K + lam * np.eye(X.shape[0])
    b = float(y.mean())
    w = np.linalg.solve(A, y - b)
    return SvrModel(
        support=X,
        duals=w,
        bias=b,
        kernel=kernel,
        diagnostics={"condition_number": float(np.linalg.cond(A)), "lam": float(lam)},
    )


# -- missingness --------------------------------------------------------------


@dataclass(frozen=True)
class MissingnessMask:
    """Partition of the variables into observed (with values) and hidden."""

    observed: dict
    hidden: tuple

    def __post_init__(self):
        obs = {int(v): int(val) for v, val in self.observed.items()}
        hid = tuple(sorted(int(v) for v in self.hidden))
        if set(obs) & set(hid):
            raise ValueError("a variable cannot be both observed and hidden")
        object.__setattr__(self, "observed", obs)
        object.__setattr__(self, "hidden", hid)


def mcar_mask(x, pi: float, seed: int = 0) -> MissingnessMask:
    """Hide each coordinate of x independently with probability pi."""
    if not 0.0 <= pi < 1.0:
        raise ValueError("pi must lie in [0, 1)")
    x = np.asarray(x, dtype=np.int64).reshape(-1)
    rng = np.random.default_rng(seed)
    drop = rng.random(x.size) < pi
    observed = {int(v): int(x[v]) for v in range(x.size) if not drop[v]}
    hidden = tuple(int(v) for v in range(x.size) if drop[v])
    return MissingnessMask(observed=observed, hidden=hidden)


def median_stats(X, domain) -> np.ndarray:
    """Per-variable fill values: the column median snapped to a category."""
    X = check_batch(domain, np.asarray(X, dtype=np.int64))
    med = np.median(X, axis=0)
    out = np.rint(med).astype(np.int64)
    return np.clip(out, 0, np.asarray(domain, dtype=np.int64) - 1)


def impute_median(stats, mask: MissingnessMask) -> np.ndarray:
    """Fill hidden coordinates from per-variable statistics."""
    stats = np.asarray(stats, dtype=np.int64).reshape(-1)
    out = stats.copy()
    for v, val in mask.observed.items():
        out[v] = val
    return out


def impute_map(p: Circuit, mask: MissingnessMask) -> np.ndarray:
    """Most likely completion of the hidden coordinates under p.

    Deterministic circuits get an exact max-product sweep with backtracking;
    otherwise hidden completions are enumerated (subject to the state cap).
    Ties resolve to the smallest category indices.
    """
    D = len(p.domain)
    if set(mask.observed) | set(mask.hidden) != set(range(D)):
        raise ValueError("mask must cover every variable")
    out = np.zeros(D, dtype=np.int64)
    for v, val in mask.observed.items():
        out[v] = val
    if not mask.hidden:
        return out
    if is_deterministic(p) is True:
        filled = _map_max_product(p, mask)
    else:
        filled = _map_exhaustive(p, mask)
    for v in mask.hidden:
        out[v] = filled[v]
    return out


def _map_max_product(p: Circuit, mask: MissingnessMask) -> dict:
    """Max-product upward sweep plus argmax backtrack (deterministic sums)."""
    n = p.n_units
    best = np.zeros(n)
    arg = [0] * n  # winning child position at sums
    for i, u in enumerate(p.units):
        if isinstance(u, InputUnit):
            if u.var in mask.observed:
                best[i] = u.weights[mask.observed[u.var]]
            else:
                best[i] = float(u.weights.max())
        elif isinstance(u, SumUnit):
            scores = [w * best[c] for c, w in zip(u.children, u.weights)]
            pos = int(np.argmax(scores))
            arg[i] = pos
            best[i] = scores[pos]
        else:
            best[i] = best[u.children[0]] * best[u.children[1]]
    filled: dict = {}
    stack = [p.root]
    while stack:
        i = stack.pop()
        u = p.units[i]
        if isinstance(u, InputUnit):
            if u.var not in mask.observed and u.var not in filled:
                filled[u.var] = int(np.argmax(u.weights))
        elif isinstance(u, SumUnit):
            stack.append(u.children[arg[i]])
        else:
            stack.extend(u.children)
    return filled


def _map_exhaustive(p: Circuit, mask: MissingnessMask) -> dict:
    hidden = list(mask.hidden)
    sub_domain = [p.domain[v] for v in hidden]
    combos = enumerate_states(sub_domain)
    X = np.zeros((combos.shape[0], len(p.domain)), dtype=np.int64)
    for v, val in mask.observed.items():
        X[:, v] = val
    for pos, v in enumerate(hidden):
        X[:, v] = combos[:, pos]
    vals = evaluate_batch(p, X)
    row = int(np.argmax(vals))  # lexicographic enumeration, so first max is smallest
    return {v: int(combos[row, pos]) for pos, v in enumerate(hidden)}


# -- expected predictions ------------------------------------------------------


def expected_prediction(m: SvrModel, p: Circuit, mask: MissingnessMask) -> float:
    """Exact expectation of the regressor with hidden features drawn from p
    conditioned on the observed ones.

    With nothing hidden this is exactly svr_predict on the observed point.
    Otherwise the kernel columns at all support points combine into a single
    circuit, and one exact integral against the conditional does the rest.
    """
    D = len(p.domain)
    if set(mask.observed) | set(mask.hidden) != set(range(D)):
        raise ValueError("mask must cover every variable")
    if not mask.hidden:
        x = np.zeros(D, dtype=np.int64)
        for v, val in mask.observed.items():
            x[v] = val
        return svr_predict(m, x)
    why = kernel_compatibility_reason(m.kernel, p)
    if why is not None:
        raise IncompatibleError(why)
    q = condition(p, mask.observed)
    g = _column_mixture(m)
    raw, _ = _core.product_integral_scalar(q.flat, g.flat)
    return raw / partition_function(q) + m.bias


def _column_mixture(m: SvrModel) -> Circuit:
    """One circuit summing duals[i] * k(support[i], .) over support points.

    Inner kernel structure is copied per support point; the projected leaf
    rows are shared whenever two points agree on a variable's value.
    """
    k = m.kernel
    units: list = []
    leaf_ids: dict[tuple[int, int], int] = {}
    roots: list[int] = []
    for i in range(m.support.shape[0]):
        sx = m.support[i]
        trans: dict[int, int] = {}
        for j, u in enumerate(k.units):
            if isinstance(u, KernelLeaf):
                key = (u.var, int(sx[u.var]))
                got = leaf_ids.get(key)
                if got is None:
                    units.append(InputUnit(u.var, u.table[int(sx[u.var]), :].copy()))
                    got = len(units) - 1
                    leaf_ids[key] = got
                trans[j] = got
            elif isinstance(u, SumUnit):
                units.append(SumUnit(tuple(trans[c] for c in u.children), u.weights.copy()))
                trans[j] = len(units) - 1
            else:
                units.append(ProductUnit(tuple(trans[c] for c in u.children)))
                trans[j] = len(units) - 1
        roots.append(trans[k.root])
    units.append(SumUnit(tuple(roots), m.duals.copy()))
    return Circuit(k.domain, units, len(units) - 1, vtree=k.vtree)
