"""Acceptance gate: ten end-to-end criteria, one summary line each.

Instance sets, seeds, and tolerances are fixed so every run measures the
same thing. Oracles here enumerate states and apply defining formulas
directly; they never call the recursion under test.
"""

import time
import warnings

import numpy as np
import pytest

import circuitkernels as ck
from circuitkernels import enumerate_states
from circuitkernels.expectation import expected_kernel_stats
from circuitkernels.random_circuits import (
    random_compatible_pair,
    random_structured_circuit,
)
from circuitkernels.svr import median_stats


def report(num: int, name: str, ok: bool, detail: str):
    line = f"criterion {num:02d} [{'PASS' if ok else 'FAIL'}] {name}: {detail}"
    print(line)
    assert ok, line


# ---- shared instance set for criteria 1-3 ---------------------------------

@pytest.fixture(scope="module")
def instance_set():
    """50 compatible structured pairs, 6-12 binary vars, both kernel families.

    Returns (rows, elapsed) where each row holds the pair, its kernel, the
    recursion output with memo-entry count, and the enumeration oracle value.
    The clock covers generation, recursion, and oracle together.
    """
    sizes = [6, 7, 8, 9, 10] * 9 + [11] * 3 + [12] * 2
    rng = np.random.default_rng(20240817)
    t0 = time.perf_counter()
    rows = []
    for idx, nv in enumerate(sizes):
        p, q, vt = random_compatible_pair(nv, rng)
        if idx % 2 == 0:
            k = ck.build_hamming_kc([2] * nv, vt)
        else:
            k = ck.build_rbf_kc([2] * nv, vt, gamma=0.7)
        got, entries = expected_kernel_stats(p, q, k)
        ref = ck.brute_force_expected_kernel(p, q, k)
        rows.append((p, q, k, got, entries, ref))
    elapsed = time.perf_counter() - t0
    return rows, elapsed


def test_criterion_01_expected_kernel_exactness(instance_set):
    rows, elapsed = instance_set
    worst = max(abs(got - ref) / abs(ref) for _, _, _, got, _, ref in rows)
    ok = worst <= 1e-9 and elapsed < 60.0
    report(1, "expected-kernel exactness", ok,
           f"50 pairs, worst rel err {worst:.2e}, suite {elapsed:.1f}s")


def test_criterion_02_memo_complexity_bound(instance_set):
    rows, _ = instance_set
    worst_fill = 0.0
    ok = True
    for p, q, k, _, entries, _ in rows:
        bound = p.n_units * q.n_units * k.n_units
        ok = ok and entries <= bound
        worst_fill = max(worst_fill, entries / bound)
    report(2, "memo entries within |p||q||k|", ok,
           f"max fill ratio {worst_fill:.3f} over 50 instances")


def test_criterion_03_mmd_properties(instance_set):
    rows, _ = instance_set
    worst_self = worst_neg = worst_asym = 0.0
    for p, q, k, _, _, _ in rows:
        worst_self = max(worst_self, abs(ck.mmd2(p, p, k)))
        m_pq = ck.mmd2(p, q, k)
        worst_neg = min(worst_neg, m_pq)
        worst_asym = max(worst_asym, abs(m_pq - ck.mmd2(q, p, k)))
    ok = worst_self <= 1e-10 and worst_neg >= -1e-9 and worst_asym <= 1e-12
    report(3, "mmd self-zero / nonneg / symmetric", ok,
           f"self {worst_self:.1e}, min {worst_neg:.1e}, asym {worst_asym:.1e}")


# ---- criterion 4: discrepancy separates the target ------------------------

def test_criterion_04_kdsd_soundness():
    rng = np.random.default_rng(42)
    worst_self = 0.0
    worst_off = np.inf
    for t in range(10):
        nv = 6 + t % 5
        p, q, vt = random_compatible_pair(nv, rng, strictly_positive=True)
        k = ck.build_hamming_kc([2] * nv, vt)
        worst_self = max(worst_self, ck.brute_force_kdsd(p, p, k))
        perturbed = ck.mixture(p, q, 0.7)
        worst_off = min(worst_off, ck.brute_force_kdsd(perturbed, p, k))
    ok = worst_self <= 1e-9 and worst_off > 1e-6
    report(4, "kdsd zero at target, positive off it", ok,
           f"self {worst_self:.1e}, min perturbed {worst_off:.2e} over 10 models")


# ---- criterion 5: conditional Stein kernel vs enumeration ------------------

def enum_conditional_stein(p, k, x_s, y_s, s, dims):
    """Double conditional expectation of per-variable Stein terms.

    Enumerates completions of both arguments weighted by exact conditionals
    of p, then applies the four-term formula for each i in dims with raw
    kernel matrices. r_i uses the forward shift, kernel args the inverse.
    """
    d = p.domain
    X = enumerate_states(d)
    pv = ck.evaluate_batch(p, X)
    pv = pv / pv.sum()
    sel_a = np.all(X[:, list(s)] == np.asarray(x_s), axis=1)
    sel_b = np.all(X[:, list(s)] == np.asarray(y_s), axis=1)
    Xa, wa = X[sel_a], pv[sel_a] / pv[sel_a].sum()
    Xb, wb = X[sel_b], pv[sel_b] / pv[sel_b].sum()
    out = []
    for i in dims:
        Fa = Xa.copy()
        Fa[:, i] = (Fa[:, i] + 1) % d[i]
        Fb = Xb.copy()
        Fb[:, i] = (Fb[:, i] + 1) % d[i]
        ra = ck.evaluate_batch(p, Fa) / ck.evaluate_batch(p, Xa)
        rb = ck.evaluate_batch(p, Fb) / ck.evaluate_batch(p, Xb)
        Ia = Xa.copy()
        Ia[:, i] = (Ia[:, i] - 1) % d[i]
        Ib = Xb.copy()
        Ib[:, i] = (Ib[:, i] - 1) % d[i]
        t1 = (wa * ra) @ ck.kernel_matrix(k, Xa, Xb) @ (wb * rb)
        t2 = (wa * ra) @ ck.kernel_matrix(k, Xa, Ib) @ wb
        t3 = wa @ ck.kernel_matrix(k, Ia, Xb) @ (wb * rb)
        t4 = wa @ ck.kernel_matrix(k, Ia, Ib) @ wb
        out.append(float(t1 - t2 - t3 + t4))
    return out


def test_criterion_05_conditional_stein_kernel():
    rng = np.random.default_rng(9)
    cases = 0
    worst = 0.0
    worst_hidden = 0.0
    for t in range(10):
        nv = 6 + t % 5
        vt = ck.random_vtree(nv, rng)
        p = random_structured_circuit([2] * nv, vt, rng, strictly_positive=True)
        if t % 2 == 0:
            k = ck.build_hamming_kc([2] * nv, vt)
        else:
            k = ck.build_rbf_kc([2] * nv, vt, gamma=0.8)
        for _ in range(3):
            size = int(rng.integers(1, nv))
            s = tuple(sorted(rng.choice(nv, size=size, replace=False).tolist()))
            c = [v for v in range(nv) if v not in s]
            x_s = rng.integers(0, 2, size=size)
            y_s = rng.integers(0, 2, size=size)
            got = ck.conditional_stein_kernel(p, k, x_s, y_s, s)
            ref = sum(enum_conditional_stein(p, k, x_s, y_s, s, s))
            worst = max(worst, abs(got - ref) / max(1.0, abs(ref)))
            hidden_terms = enum_conditional_stein(p, k, x_s, y_s, s, c)
            worst_hidden = max(worst_hidden, max(abs(h) for h in hidden_terms))
            cases += 1
    ok = cases >= 30 and worst <= 1e-9 and worst_hidden <= 1e-10
    report(5, "conditional Stein kernel vs enumeration", ok,
           f"{cases} cases, worst rel {worst:.1e}, hidden terms {worst_hidden:.1e}")


# ---- criterion 6: weighted-estimate convergence rate -----------------------

def test_criterion_06_bbis_convergence_rate():
    t0 = time.perf_counter()
    model = ck.build_ising(2, 4, seed=11)
    p = ck.compile_from_factors(model)
    states = enumerate_states([2] * 8)
    probs = ck.evaluate_batch(p, states) / ck.partition_function(p)

    def f(X):
        # parity statistic: roughest function for a Hamming-type kernel,
        # so weighting cannot shortcut plain Monte Carlo averaging
        return 1.0 - 2.0 * (X.sum(axis=1) % 2)

    exact = float(probs @ f(states))
    k = ck.build_hamming_kc([2] * 8, p.vtree)
    grid = np.array([10, 25, 50, 100, 250, 500])
    errs = np.zeros((5, len(grid)))
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", UserWarning)
        for seed in range(5):
            srng = np.random.default_rng(100 + seed)
            X = ck.sample_circuit(p, int(grid.max()), srng)
            for j, n in enumerate(grid):
                S, w = ck.bbis(p, k, X[:n])
                errs[seed, j] = abs(float(w @ f(S)) - exact)
    avg = errs.mean(axis=0)
    slope = float(np.polyfit(np.log(grid.astype(float)), np.log(avg), 1)[0])
    elapsed = time.perf_counter() - t0
    ok = -0.75 <= slope <= -0.25 and elapsed < 300.0
    report(6, "weighted-estimate error slope", ok,
           f"slope {slope:.3f} over N=10..500, 5 seeds, {elapsed:.0f}s")


# ---- criterion 7: collapsing helps on the 4x4 grid -------------------------

def test_criterion_07_collapsed_ordering():
    model = ck.build_ising(4, 4, seed=0)
    p = ck.compile_from_factors(model)
    D = 16
    exact = ck.exact_marginals(model)
    k = ck.build_hamming_kc([2] * D, p.vtree)
    s = tuple(range(8))
    grid = [20, 50, 100]

    def hell(est):
        return float(np.mean([ck.hellinger_avg(e, x) for e, x in zip(est, exact)]))

    rows = {m: [] for m in ("bbis", "cbbis", "gibbs", "cgibbs")}
    for seed in range(5):
        cfg = ck.ProposalConfig(burn_in=200, thin=2, seed=seed)
        X = ck.gibbs_propose(model, max(grid), cfg)
        per = {m: [] for m in rows}
        for n in grid:
            Xn = X[:n]
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", UserWarning)
                _, w_b = ck.bbis(p, k, Xn)
                col = ck.weight_collapsed(p, k, Xn[:, list(s)], s)
            per["bbis"].append(hell(ck.estimate_marginals(ck.as_collapsed(Xn, w_b), [2] * D)))
            per["gibbs"].append(hell(ck.estimate_marginals(ck.as_collapsed(Xn), [2] * D)))
            per["cbbis"].append(hell(ck.estimate_marginals(col, [2] * D)))
            unif = [ck.CollapsedSample(r.values, r.kept_vars, 1.0 / n, r.source) for r in col]
            per["cgibbs"].append(hell(ck.estimate_marginals(unif, [2] * D)))
        for m in rows:
            rows[m].append(float(np.mean(per[m])))
    b, c, g, cg = (np.array(rows[m]) for m in ("bbis", "cbbis", "gibbs", "cgibbs"))
    w_opt = int((c <= b).sum())
    w_unif = int((cg <= g).sum())
    ok = w_opt >= 3 and w_unif >= 3
    report(7, "collapsed beats non-collapsed on 4x4 grid", ok,
           f"cbbis<=bbis {w_opt}/5 seeds, collapsed gibbs<=gibbs {w_unif}/5 seeds")


# ---- criterion 8: expected prediction equals completion enumeration --------

def enum_expected_prediction(m, p, mask):
    """Average the pointwise regressor over exact completions of mask."""
    X = enumerate_states(p.domain)
    sel = np.ones(len(X), bool)
    for v, val in mask.observed.items():
        sel &= X[:, v] == val
    pv = ck.evaluate_batch(p, X[sel])
    pv = pv / pv.sum()
    return float(sum(w * ck.svr_predict(m, row) for row, w in zip(X[sel], pv)))


def _fitted(nv, seed):
    rng = np.random.default_rng(seed)
    vt = ck.random_vtree(nv, rng)
    p = random_structured_circuit([2] * nv, vt, rng, strictly_positive=True)
    X = ck.sample_circuit(p, 60, rng)
    y = X.sum(axis=1) + rng.normal(0, 0.1, size=len(X))
    k = ck.build_rbf_kc([2] * nv, vt, gamma=0.5)
    return p, ck.fit_kernel_regressor(X, y, k, lam=1e-3), X


def test_criterion_08_expected_prediction_exactness():
    worst = 0.0
    n_masks = 0

    # 6 vars: every observed/hidden pattern, so every mask size 0..6
    p, m, X = _fitted(6, 77)
    x = X[0]
    for bits in range(64):
        hidden = tuple(v for v in range(6) if bits >> v & 1)
        observed = {v: int(x[v]) for v in range(6) if not bits >> v & 1}
        mask = ck.MissingnessMask(observed=observed, hidden=hidden)
        got = ck.expected_prediction(m, p, mask)
        ref = enum_expected_prediction(m, p, mask)
        worst = max(worst, abs(got - ref) / max(1.0, abs(ref)))
        n_masks += 1

    # 8 vars: two random patterns per mask size 0..8
    p8, m8, X8 = _fitted(8, 78)
    rng = np.random.default_rng(79)
    x = X8[0]
    for size in range(9):
        for _ in range(2):
            hidden = tuple(sorted(rng.choice(8, size=size, replace=False).tolist()))
            observed = {v: int(x[v]) for v in range(8) if v not in hidden}
            mask = ck.MissingnessMask(observed=observed, hidden=hidden)
            got = ck.expected_prediction(m8, p8, mask)
            ref = enum_expected_prediction(m8, p8, mask)
            worst = max(worst, abs(got - ref) / max(1.0, abs(ref)))
            n_masks += 1

    # no missing coordinates: reduces to the pointwise regressor bit-exactly
    exact_match = all(
        ck.expected_prediction(m8, p8, ck.mcar_mask(row, 0.0, seed=i))
        == ck.svr_predict(m8, row)
        for i, row in enumerate(X8[:25])
    )
    ok = worst <= 1e-9 and exact_match
    report(8, "expected prediction vs enumeration", ok,
           f"{n_masks} masks, worst rel {worst:.1e}, pi=0 bit-exact {exact_match}")


# ---- criterion 9: expected prediction beats median imputation --------------

def test_criterion_09_rmse_ordering():
    wins = {0.5: 0, 0.7: 0, 0.9: 0}
    for trial in range(5):
        rng = np.random.default_rng(300 + trial)
        D = 8
        vt = ck.random_vtree(D, rng)
        p = random_structured_circuit([2] * D, vt, rng, strictly_positive=True)
        X = ck.sample_circuit(p, 120, rng)
        y = X.sum(axis=1) + 0.5 * X[:, 0] * X[:, 1] + rng.normal(0, 0.1, size=len(X))
        k = ck.build_rbf_kc([2] * D, vt, gamma=0.5)
        m = ck.fit_kernel_regressor(X[:80], y[:80], k, lam=1e-3)
        Xte, yte = X[80:], y[80:]
        stats = median_stats(X[:80], [2] * D)
        for pi in wins:
            se_e = se_m = 0.0
            for i, x in enumerate(Xte):
                mask = ck.mcar_mask(x, pi, seed=1000 * trial + i)
                se_e += (ck.expected_prediction(m, p, mask) - yte[i]) ** 2
                se_m += (ck.svr_predict(m, ck.impute_median(stats, mask)) - yte[i]) ** 2
            if se_e <= se_m:
                wins[pi] += 1
    ok = all(w >= 3 for w in wins.values())
    report(9, "expected prediction rmse vs median fill", ok,
           "wins/5 trials: " + ", ".join(f"pi={pi}: {w}" for pi, w in wins.items()))


# ---- criterion 10: simplex QP and projection -------------------------------

def sort_project(v):
    """Closed-form simplex projection by sorting (independent of the library)."""
    u = np.sort(v)[::-1]
    css = np.cumsum(u)
    rho = np.nonzero(u * np.arange(1, len(v) + 1) > css - 1.0)[0][-1]
    theta = (css[rho] - 1.0) / (rho + 1.0)
    return np.maximum(v - theta, 0.0)


def test_criterion_10_solver_correctness():
    rng = np.random.default_rng(7)
    worst_kkt = 0.0
    obj_ok = True
    for _ in range(20):
        n = int(rng.integers(4, 60))
        A = rng.normal(size=(n, n))
        K = A @ A.T
        w = ck.solve_simplex_qp(K)
        worst_kkt = max(worst_kkt, ck.kkt_residual(K, w))
        u = np.full(n, 1.0 / n)
        obj_ok = obj_ok and w @ K @ w <= u @ K @ u + 1e-12

    worst_proj = 0.0
    for t in range(100):
        n = int(rng.integers(2, 40))
        scale = [1.0, 10.0, 0.1][t % 3]
        v = rng.normal(size=n) * scale + (t % 5 - 2)
        worst_proj = max(worst_proj, float(np.max(np.abs(
            ck.project_simplex(v) - sort_project(v)))))
    ok = worst_kkt <= 1e-6 and obj_ok and worst_proj <= 1e-12
    report(10, "simplex QP and projection", ok,
           f"worst kkt {worst_kkt:.1e}, worst proj diff {worst_proj:.1e}, "
           f"objective never above uniform: {obj_ok}")
