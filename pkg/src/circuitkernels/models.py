"""Discrete factor models: grid Ising builders, Bayes-net loading, exact
marginals by enumeration, and the averaged Hellinger distance used to score
marginal estimates.
"""

from __future__ import annotations

import json
import warnings

import numpy as np

from ._util import enumerate_states, n_states
from .errors import FormatError, PositivityError, ResourceBoundError

__all__ = [
    "FactorModel",
    "factor_model_from_dict",
    "build_ising",
    "exact_marginals",
    "hellinger_avg",
    "load_bayes_net",
]

ISING_MAX_VARS = 24


class FactorModel:
    """Unnormalized product of local factor tables over discrete variables.

    Factors are (vars, table) pairs; table axes follow the listed variable
    order. Tables must be strictly positive unless require_positive=False,
    which keeps downstream mass ratios well defined.
    """

    def __init__(self, domain, factors, require_positive: bool = True):
        self.domain = tuple(int(c) for c in domain)
        if any(c < 2 for c in self.domain):
            raise FormatError("every variable needs at least two categories")
        self.factors: list[tuple[tuple[int, ...], np.ndarray]] = []
        for f_idx, (fvars, table) in enumerate(factors):
            fvars = tuple(int(v) for v in fvars)
            if len(set(fvars)) != len(fvars):
                raise FormatError(f"factor {f_idx} repeats a variable")
            if any(not 0 <= v < len(self.domain) for v in fvars):
                raise FormatError(f"factor {f_idx} mentions an unknown variable")
            shape = tuple(self.domain[v] for v in fvars)
            table = np.asarray(table, dtype=np.float64)
            if table.ndim == 1:
                table = table.reshape(shape)
            if table.shape != shape:
                raise FormatError(
                    f"factor {f_idx} table has shape {table.shape}, expected {shape}"
                )
            if not np.all(np.isfinite(table)):
                raise FormatError(f"factor {f_idx} table has non-finite entries")
            if require_positive and np.any(table <= 0.0):
                raise PositivityError(f"factor {f_idx} table must be strictly positive")
            if np.any(table < 0.0):
                raise PositivityError(f"factor {f_idx} table has negative entries")
            self.factors.append((fvars, table))
        self._touching: list[list[int]] = [[] for _ in self.domain]
        for f_idx, (fvars, _) in enumerate(self.factors):
            for v in fvars:
                self._touching[v].append(f_idx)

    @property
    def n_vars(self) -> int:
        return len(self.domain)

    def factors_touching(self, v: int) -> list[int]:
        return list(self._touching[v])

    def evaluate(self, x) -> float:
        x = np.asarray(x, dtype=np.int64).reshape(-1)
        if x.shape != (self.n_vars,):
            raise ValueError("assignment length must match the domain")
        val = 1.0
        for fvars, table in self.factors:
            val *= float(table[tuple(x[list(fvars)])])
        return val

    def evaluate_batch(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.int64)
        if X.ndim != 2 or X.shape[1] != self.n_vars:
            raise ValueError("batch must be (n, n_vars)")
        out = np.ones(X.shape[0])
        for fvars, table in self.factors:
            out *= table[tuple(X[:, v] for v in fvars)]
        return out

    def conditional(self, v: int, x) -> np.ndarray:
        """Unnormalized distribution of variable v with the rest fixed at x."""
        x = np.asarray(x, dtype=np.int64).reshape(-1)
        out = np.ones(self.domain[v])
        for f_idx in self._touching[v]:
            fvars, table = self.factors[f_idx]
            index = tuple(slice(None) if u == v else int(x[u]) for u in fvars)
            out *= table[index]
        return out

    def __repr__(self) -> str:
        return f"FactorModel(vars={self.n_vars}, factors={len(self.factors)})"


def factor_model_from_dict(obj: dict, require_positive: bool = True) -> FactorModel:
    """Build a FactorModel from the JSON object layout (flat row-major tables)."""
    if not isinstance(obj, dict):
        raise FormatError("factor model document must be an object")
    try:
        domain = list(obj["domain"])
        raw = list(obj["factors"])
    except (KeyError, TypeError) as exc:
        raise FormatError(f"factor model document missing field: {exc}") from exc
    factors = []
    for f_idx, f in enumerate(raw):
        try:
            fvars = [int(v) for v in f["vars"]]
            table = np.asarray(f["table"], dtype=np.float64)
        except (KeyError, TypeError, ValueError) as exc:
            raise FormatError(f"factor {f_idx} is malformed: {exc}") from exc
        factors.append((fvars, table))
    return FactorModel(domain, factors, require_positive=require_positive)


def build_ising(
    rows: int,
    cols: int,
    seed: int = 0,
    coupling_range: tuple[float, float] = (-0.5, 0.5),
    field_range: tuple[float, float] = (-0.2, 0.2),
) -> FactorModel:
    """Random-parameter Ising grid as a factor model over binary variables.

    Spins live in {-1, +1} and map to categories {0, 1}. Every 4-neighbor
    edge gets exp(J * s_a * s_b) with J uniform over coupling_range; every
    site gets exp(h * s) with h uniform over field_range. Grids above
    24 variables are refused.
    """
    if rows < 1 or cols < 1:
        raise ValueError("grid dimensions must be positive")
    n = rows * cols
    if n > ISING_MAX_VARS:
        raise ResourceBoundError(f"grid has {n} sites; at most {ISING_MAX_VARS} supported")
    rng = np.random.default_rng(seed)
    spin = np.array([-1.0, 1.0])
    factors: list[tuple[list[int], np.ndarray]] = []

    def site(r: int, c: int) -> int:
        return r * cols + c

    for r in range(rows):
        for c in range(cols):
            if c + 1 < cols:
                J = rng.uniform(*coupling_range)
                factors.append(([site(r, c), site(r, c + 1)], np.exp(J * np.outer(spin, spin))))
            if r + 1 < rows:
                J = rng.uniform(*coupling_range)
                factors.append(([site(r, c), site(r + 1, c)], np.exp(J * np.outer(spin, spin))))
    for v in range(n):
        h = rng.uniform(*field_range)
        factors.append(([v], np.exp(h * spin)))
    return FactorModel([2] * n, factors)


def exact_marginals(model: FactorModel) -> list[np.ndarray]:
    """Per-variable marginal vectors by full enumeration (state-capped)."""
    states = enumerate_states(model.domain)
    probs = model.evaluate_batch(states)
    total = probs.sum()
    if total <= 0.0 or not np.isfinite(total):
        raise PositivityError("model has no normalizable mass")
    probs = (probs / total).reshape(model.domain)
    out = []
    for v in range(model.n_vars):
        axes = tuple(u for u in range(model.n_vars) if u != v)
        out.append(probs.sum(axis=axes))
    return out


def hellinger_avg(a, b) -> float:
    """Mean over variables of the Hellinger distance between marginal pairs."""
    if len(a) != len(b):
        raise ValueError("marginal lists have different lengths")
    dists = []
    for pa, pb in zip(a, b):
        pa = np.asarray(pa, dtype=np.float64)
        pb = np.asarray(pb, dtype=np.float64)
        if pa.shape != pb.shape:
            raise ValueError("marginal vectors have different shapes")
        dists.append(float(np.linalg.norm(np.sqrt(pa) - np.sqrt(pb)) / np.sqrt(2.0)))
    return float(np.mean(dists))


def load_bayes_net(path) -> FactorModel:
    """Load a Bayes net stored as factor tables, child variable on the last axis.

    Rows of each conditional table (over the last axis) are renormalized to
    sum to one, with a warning when any row was off.
    """
    with open(path) as fh:
        try:
            obj = json.load(fh)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}: invalid JSON: {exc}") from exc
    model = factor_model_from_dict(obj, require_positive=False)
    fixed = []
    adjusted = False
    for fvars, table in model.factors:
        sums = table.sum(axis=-1, keepdims=True)
        if np.any(sums <= 0.0):
            raise PositivityError("conditional table has a zero-mass row")
        if not np.allclose(sums, 1.0, rtol=0.0, atol=1e-9):
            adjusted = True
        fixed.append((fvars, table / sums))
    if adjusted:
        warnings.warn(f"{path}: conditional rows did not sum to one; renormalized")
    return FactorModel(model.domain, fixed)
