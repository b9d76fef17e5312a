"""Black-box importance sampling with Stein-kernel weights.

Sample weights come from a simplex-constrained quadratic program over the
Stein Gram matrix; in the collapsed variant a kept subset carries samples
while the remaining variables are integrated exactly through the circuit,
and marginal estimates for those variables are read from conditionals.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .circuits import Circuit, evaluate_batch
from .errors import PositivityError
from .kernels import KernelCircuit
from .stein import CollapsedSample, evidence_masses, gram_matrix, gram_matrix_collapsed

__all__ = [
    "project_simplex",
    "solve_simplex_qp",
    "kkt_residual",
    "bbis",
    "cbbis",
    "weight_collapsed",
    "CollapsedSample",
    "ProposalConfig",
    "gibbs_propose",
    "estimate_marginals",
    "self_normalized_is_weights",
]


def project_simplex(v) -> np.ndarray:
    """Euclidean projection onto the probability simplex (sorting form)."""
    v = np.asarray(v, dtype=np.float64).reshape(-1)
    if v.size == 0:
        raise ValueError("cannot project an empty vector")
    u = np.sort(v)[::-1]
    css = np.cumsum(u) - 1.0
    rho_candidates = u - css / np.arange(1, v.size + 1)
    rho = int(np.nonzero(rho_candidates > 0)[0][-1])
    tau = css[rho] / (rho + 1)
    return np.maximum(v - tau, 0.0)


def kkt_residual(K, w) -> float:
    """First-order optimality residual for min w'Kw over the simplex.

    Stationarity: on the support the gradient is constant; off it, no smaller.
    Returns the max of the stationarity gaps and the feasibility errors.
    """
    K = np.asarray(K, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    g = (K + K.T) @ w
    support = w > 1e-12
    if not np.any(support):
        return float("inf")
    lam = float(np.dot(w, g))  # weighted average of support gradients
    stat_on = float(np.max(np.abs(g[support] - lam))) if np.any(support) else 0.0
    off = ~support
    stat_off = float(np.max(np.maximum(lam - g[off], 0.0))) if np.any(off) else 0.0
    feas = max(abs(float(w.sum()) - 1.0), float(np.maximum(-w, 0.0).max()))
    return max(stat_on, stat_off, feas)


def solve_simplex_qp(K, max_iter: int = 100_000, tol: float = 1e-8) -> np.ndarray:
    """Minimize w' K w over the probability simplex by projected gradient.

    Constant step 1 / L with L the largest eigenvalue of the symmetrized
    quadratic; stops when the projected-gradient step shrinks below tol.
    Warns and returns the best iterate if the budget runs out.
    """
    K = np.asarray(K, dtype=np.float64)
    n = K.shape[0]
    if K.shape != (n, n):
        raise ValueError("K must be square")
    sym = (K + K.T) / 2.0
    lam_max = float(np.linalg.eigvalsh(sym).max()) if n > 1 else float(sym[0, 0])
    step = 1.0 / max(2.0 * lam_max, 1e-12)
    w = np.full(n, 1.0 / n)
    best_w = w
    best_obj = float(w @ sym @ w)
    for _ in range(max_iter):
        grad = 2.0 * (sym @ w)
        w_next = project_simplex(w - step * grad)
        obj = float(w_next @ sym @ w_next)
        if obj < best_obj:
            best_obj = obj
            best_w = w_next
        # projected-gradient norm: displacement rescaled by the step
        if float(np.linalg.norm(w_next - w)) <= tol * step:
            return w_next
        w = w_next
    warnings.warn("projected gradient hit the iteration budget; returning best iterate")
    return best_w


# -- proposals ----------------------------------------------------------------


@dataclass
class ProposalConfig:
    burn_in: int = 200
    thin: int = 2
    seed: int = 0
    s: tuple | None = None  # kept-variable set for collapsed mode
    init: np.ndarray | None = None


def _site_conditional(model, v: int, x: np.ndarray) -> np.ndarray:
    """Unnormalized single-site conditional from a factor model or circuit."""
    if hasattr(model, "conditional"):
        return model.conditional(v, x)
    card = model.domain[v]
    rows = np.tile(x, (card, 1))
    rows[:, v] = np.arange(card)
    return evaluate_batch(model, rows)


def gibbs_propose(model, n: int, cfg: ProposalConfig | None = None) -> np.ndarray:
    """Single-site Gibbs chain; returns (n, D) states.

    Works on anything exposing a domain plus either per-site conditionals
    (factor models) or pointwise evaluation (circuits). Sites sweep in
    variable order; a site whose conditional has zero total mass triggers
    a uniform restart of the chain state (and a warning).
    """
    cfg = cfg or ProposalConfig()
    rng = np.random.default_rng(cfg.seed)
    domain = model.domain
    D = len(domain)
    x = (
        np.array(cfg.init, dtype=np.int64)
        if cfg.init is not None
        else np.array([rng.integers(c) for c in domain])
    )
    out = np.empty((n, D), dtype=np.int64)
    kept = 0
    it = 0
    warned = False
    while kept < n:
        for v in range(D):
            probs = _site_conditional(model, v, x)
            total = probs.sum()
            if total <= 0.0 or not np.isfinite(total):
                if not warned:
                    warnings.warn("zero-mass Gibbs conditional; restarting chain state")
                    warned = True
                x = np.array([rng.integers(c) for c in domain])
                continue
            x[v] = rng.choice(domain[v], p=probs / total)
        it += 1
        if it > cfg.burn_in and (it - cfg.burn_in) % cfg.thin == 0:
            out[kept] = x
            kept += 1
    return out


# -- estimators ---------------------------------------------------------------


def bbis(p: Circuit, k: KernelCircuit, samples) -> tuple[np.ndarray, np.ndarray]:
    """Weight given full samples by minimizing the Stein discrepancy.

    Returns (samples, weights) with weights on the simplex.
    """
    samples = np.asarray(samples, dtype=np.int64)
    gram = gram_matrix(p, k, samples)
    w = solve_simplex_qp(gram)
    return samples, w


def weight_collapsed(
    p: Circuit,
    k: KernelCircuit,
    samples_s,
    s: Sequence[int],
) -> list[CollapsedSample]:
    """Weight evidence rows over the kept subset s by the collapsed QP.

    The Gram matrix integrates the dropped variables exactly through p, so
    the quadratic program sees the collapsed Stein kernel.
    """
    s = tuple(sorted(int(v) for v in s))
    A = np.asarray(samples_s, dtype=np.int64)
    gram = gram_matrix_collapsed(p, k, A, list(s))
    w = solve_simplex_qp(gram)
    return [
        CollapsedSample(values=A[i].copy(), kept_vars=s, weight=float(w[i]), source=p)
        for i in range(A.shape[0])
    ]


def cbbis(
    p: Circuit,
    proposal: ProposalConfig,
    k: KernelCircuit,
    n: int,
    model=None,
) -> list[CollapsedSample]:
    """Collapsed importance sampling end to end.

    Draws n states from a Gibbs chain (over `model` when given, else over p
    itself), keeps the coordinates in proposal.s, drops the rest, and weights
    the partial rows by the collapsed Stein QP. proposal.s defaults to the
    first half of the variables in id order. Rows whose evidence mass in p
    is zero are redrawn (counted in a warning).
    """
    D = len(p.domain)
    s = tuple(sorted(int(v) for v in (proposal.s or range((D + 1) // 2))))
    if not s or any(v < 0 or v >= D for v in s):
        raise ValueError("kept set must be a nonempty subset of the variables")
    target = model if model is not None else p
    rows = np.empty((0, len(s)), dtype=np.int64)
    rejected = 0
    cfg = proposal
    while rows.shape[0] < n:
        need = n - rows.shape[0]
        full = gibbs_propose(target, need, cfg)
        part = full[:, list(s)]
        ok = evidence_masses(p, list(s), part) > 0.0
        rejected += int(np.sum(~ok))
        rows = np.concatenate([rows, part[ok]], axis=0)
        # continue the stream deterministically when redraws are needed
        cfg = ProposalConfig(cfg.burn_in, cfg.thin, cfg.seed + 1, cfg.s, cfg.init)
    if rejected:
        warnings.warn(f"redrew {rejected} zero-mass partial samples")
    return weight_collapsed(p, k, rows[:n], s)


def as_collapsed(samples, weights=None, source: Circuit | None = None) -> list[CollapsedSample]:
    """Wrap full samples (and optional weights) as CollapsedSample rows."""
    X = np.asarray(samples, dtype=np.int64)
    n, D = X.shape
    w = np.full(n, 1.0 / n) if weights is None else np.asarray(weights, dtype=np.float64)
    kept = tuple(range(D))
    return [
        CollapsedSample(values=X[i].copy(), kept_vars=kept, weight=float(w[i]), source=source)
        for i in range(n)
    ]


def estimate_marginals(weighted: Sequence[CollapsedSample], domain) -> list[np.ndarray]:
    """Per-variable marginal estimates from weighted (possibly collapsed) rows.

    Kept variables contribute weighted indicators. Collapsed variables are
    Rao-Blackwellized: each row adds weight times the source's conditional
    marginal given that row's evidence.
    """
    domain = tuple(int(c) for c in domain)
    D = len(domain)
    out = [np.zeros(c) for c in domain]
    if not weighted:
        raise ValueError("no samples")
    by_shape: dict[tuple, list[CollapsedSample]] = {}
    for cs in weighted:
        by_shape.setdefault(cs.kept_vars, []).append(cs)
    for kept, group in by_shape.items():
        kept = tuple(kept)
        hidden = [v for v in range(D) if v not in kept]
        W = np.array([g.weight for g in group])
        V = np.stack([g.values for g in group])
        for pos, v in enumerate(kept):
            np.add.at(out[v], V[:, pos], W)
        if not hidden:
            continue
        src = group[0].source
        if src is None:
            raise ValueError("collapsed rows need a source distribution")
        base = evidence_masses(src, list(kept), V)
        if np.any(base <= 0.0):
            raise PositivityError("collapsed row has zero evidence mass")
        for v in hidden:
            ext_vars = list(kept) + [v]
            for val in range(domain[v]):
                ext = np.concatenate(
                    [V, np.full((V.shape[0], 1), val, dtype=np.int64)], axis=1
                )
                num = evidence_masses(src, ext_vars, ext)
                out[v][val] += float(np.sum(W * (num / base)))
    return out


def self_normalized_is_weights(p: Circuit, q_density: Callable, samples) -> np.ndarray:
    """Normalized p/q ratios for samples from a known-density proposal."""
    X = np.asarray(samples, dtype=np.int64)
    pv = evaluate_batch(p, X)
    qv = np.asarray(q_density(X), dtype=np.float64).reshape(-1)
    if np.any(qv <= 0.0):
        raise PositivityError("proposal density must be positive at every sample")
    w = pv / qv
    total = w.sum()
    if total <= 0:
        raise PositivityError("all importance ratios vanished")
    return w / total
