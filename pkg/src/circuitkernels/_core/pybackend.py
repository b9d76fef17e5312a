"""Pure-Python evaluation backend.

Holds the numeric kernels behind the public API: batched feedforward,
the memoized pair/triple recursions for expected kernels, and the
evidence-clamped batch recursion used to assemble collapsed Gram matrices.
The compiled backend mirrors these routines; keep accumulation order in
sync between the two so results agree to rounding.
"""

from __future__ import annotations

import sys

import numpy as np

from ..errors import IncompatibleError

KIND_INPUT = 0
KIND_SUM = 1
KIND_PRODUCT = 2

if sys.getrecursionlimit() < 20000:
    sys.setrecursionlimit(20000)


def feedforward(kind, ch_off, ch, wt, values):
    """Fill inner-unit rows of values (n_units, B) bottom-up, in place.

    Input-unit rows must be prefilled by the caller. Sum units accumulate
    with Kahan compensation across children.
    """
    n = kind.shape[0]
    for u in range(n):
        k = kind[u]
        if k == KIND_INPUT:
            continue
        lo = ch_off[u]
        hi = ch_off[u + 1]
        if k == KIND_SUM:
            acc = np.zeros(values.shape[1])
            comp = np.zeros(values.shape[1])
            for e in range(lo, hi):
                term = wt[e] * values[ch[e]] - comp
                total = acc + term
                comp = (total - acc) - term
                acc = total
            values[u] = acc
        else:
            acc = values[ch[lo]].copy()
            for e in range(lo + 1, hi):
                acc *= values[ch[e]]
            values[u] = acc


def _unpack_circuit(flat):
    return (
        flat.kind.tolist(),
        flat.var.tolist(),
        flat.ch_off.tolist(),
        flat.ch.tolist(),
        flat.wt.tolist(),
        flat.lw_off.tolist(),
        flat.lw.tolist(),
        flat.scope.tolist(),
        flat.root,
    )


def _unpack_kernel(flat):
    return (
        flat.kind.tolist(),
        flat.var.tolist(),
        flat.ch_off.tolist(),
        flat.ch.tolist(),
        flat.wt.tolist(),
        flat.tb_off.tolist(),
        flat.tb.tolist(),
        flat.scope.tolist(),
        flat.root,
    )


def _align_children(scopes_n, nl, nr, scopes_m, ml, mr):
    """Order the second product's children to match the first's scopes."""
    if scopes_m[ml] != scopes_n[nl]:
        ml, mr = mr, ml
    if scopes_m[ml] != scopes_n[nl] or scopes_m[mr] != scopes_n[nr]:
        raise IncompatibleError("product units split a shared scope differently")
    return ml, mr


def expected_kernel_scalar(p, q, k):
    """Exact E_{x~p, y~q}[k(x, y)] over unnormalized circuit weights.

    Returns (value, memo_entries). Every memo key is a distinct unit triple,
    so memo_entries <= |p| * |q| * |k|.
    """
    kind_p, var_p, choff_p, ch_p, wt_p, lwoff_p, lw_p, scope_p, root_p = _unpack_circuit(p)
    kind_q, var_q, choff_q, ch_q, wt_q, lwoff_q, lw_q, scope_q, root_q = _unpack_circuit(q)
    kind_k, var_k, choff_k, ch_k, wt_k, tboff_k, tb_k, scope_k, root_k = _unpack_kernel(k)
    cards = p.cards.tolist()
    memo: dict[tuple[int, int, int], float] = {}

    def rec(n, m, l):
        key = (n, m, l)
        hit = memo.get(key)
        if hit is not None:
            return hit
        kn = kind_p[n]
        km = kind_q[m]
        kl = kind_k[l]
        if kn == KIND_SUM:
            acc = 0.0
            for e in range(choff_p[n], choff_p[n + 1]):
                w = wt_p[e]
                if w != 0.0:
                    acc += w * rec(ch_p[e], m, l)
        elif km == KIND_SUM:
            acc = 0.0
            for e in range(choff_q[m], choff_q[m + 1]):
                w = wt_q[e]
                if w != 0.0:
                    acc += w * rec(n, ch_q[e], l)
        elif kl == KIND_SUM:
            acc = 0.0
            for e in range(choff_k[l], choff_k[l + 1]):
                w = wt_k[e]
                if w != 0.0:
                    acc += w * rec(n, m, ch_k[e])
        elif kn == KIND_PRODUCT:
            if km != KIND_PRODUCT or kl != KIND_PRODUCT:
                raise IncompatibleError("product paired with an input unit on a shared scope")
            nl = ch_p[choff_p[n]]
            nr = ch_p[choff_p[n] + 1]
            ml = ch_q[choff_q[m]]
            mr = ch_q[choff_q[m] + 1]
            ml, mr = _align_children(scope_p, nl, nr, scope_q, ml, mr)
            ll = ch_k[choff_k[l]]
            lr = ch_k[choff_k[l] + 1]
            ll, lr = _align_children(scope_p, nl, nr, scope_k, ll, lr)
            acc = rec(nl, ml, ll) * rec(nr, mr, lr)
        else:
            if km != KIND_INPUT or kl != KIND_INPUT:
                raise IncompatibleError("product paired with an input unit on a shared scope")
            j = var_p[n]
            if var_q[m] != j or var_k[l] != j:
                raise IncompatibleError("input units over different variables were paired")
            c = cards[j]
            on = lwoff_p[n]
            om = lwoff_q[m]
            ot = tboff_k[l]
            acc = 0.0
            for a in range(c):
                wa = lw_p[on + a]
                if wa == 0.0:
                    continue
                row = ot + a * c
                for b in range(c):
                    acc += wa * lw_q[om + b] * tb_k[row + b]
        memo[key] = acc
        return acc

    value = rec(root_p, root_q, root_k)
    return value, len(memo)


def product_integral_scalar(p, g):
    """Exact sum over all states of p(x) * g(x) for compatible circuits p, g.

    g is an ordinary circuit (e.g. a kernel with one side projected out).
    Returns (value, memo_entries); keys are unit pairs.
    """
    kind_p, var_p, choff_p, ch_p, wt_p, lwoff_p, lw_p, scope_p, root_p = _unpack_circuit(p)
    kind_g, var_g, choff_g, ch_g, wt_g, lwoff_g, lw_g, scope_g, root_g = _unpack_circuit(g)
    cards = p.cards.tolist()
    memo: dict[tuple[int, int], float] = {}

    def rec(n, m):
        key = (n, m)
        hit = memo.get(key)
        if hit is not None:
            return hit
        kn = kind_p[n]
        km = kind_g[m]
        if kn == KIND_SUM:
            acc = 0.0
            for e in range(choff_p[n], choff_p[n + 1]):
                w = wt_p[e]
                if w != 0.0:
                    acc += w * rec(ch_p[e], m)
        elif km == KIND_SUM:
            acc = 0.0
            for e in range(choff_g[m], choff_g[m + 1]):
                w = wt_g[e]
                if w != 0.0:
                    acc += w * rec(n, ch_g[e])
        elif kn == KIND_PRODUCT:
            if km != KIND_PRODUCT:
                raise IncompatibleError("product paired with an input unit on a shared scope")
            nl = ch_p[choff_p[n]]
            nr = ch_p[choff_p[n] + 1]
            ml = ch_g[choff_g[m]]
            mr = ch_g[choff_g[m] + 1]
            ml, mr = _align_children(scope_p, nl, nr, scope_g, ml, mr)
            acc = rec(nl, ml) * rec(nr, mr)
        else:
            if km != KIND_INPUT:
                raise IncompatibleError("product paired with an input unit on a shared scope")
            j = var_p[n]
            if var_g[m] != j:
                raise IncompatibleError("input units over different variables were paired")
            on = lwoff_p[n]
            om = lwoff_g[m]
            acc = 0.0
            for a in range(cards[j]):
                acc += lw_p[on + a] * lw_g[om + a]
        memo[key] = acc
        return acc

    value = rec(root_p, root_g)
    return value, len(memo)


def clamped_ek_batch(p, k, s_vars, ev, pairs):
    """Unnormalized expected kernel between evidence-clamped copies of p.

    For each pair (i, j) in pairs, computes the triple recursion value of
    p * [X_s = ev[i]] against p * [X_s = ev[j]] under kernel k. One memo is
    shared across all pairs: keys carry only the evidence restricted to the
    unit's scope, so subcircuits not touching s collapse to shared entries.
    Returns (values array of len(pairs), memo_entries).
    """
    kind_p, var_p, choff_p, ch_p, wt_p, lwoff_p, lw_p, scope_p, root_p = _unpack_circuit(p)
    kind_k, var_k, choff_k, ch_k, wt_k, tboff_k, tb_k, scope_k, root_k = _unpack_kernel(k)
    cards = p.cards.tolist()
    s_list = [int(v) for v in s_vars]
    pos_of_var = {v: t for t, v in enumerate(s_list)}
    n_units = len(kind_p)
    spos = [
        tuple(t for t, v in enumerate(s_list) if scope_p[u] & (1 << v))
        for u in range(n_units)
    ]
    memo: dict = {}

    def rec(n, m, l, e_left, e_right):
        key = (
            n,
            m,
            l,
            tuple(e_left[t] for t in spos[n]),
            tuple(e_right[t] for t in spos[m]),
        )
        hit = memo.get(key)
        if hit is not None:
            return hit
        kn = kind_p[n]
        km = kind_p[m]
        kl = kind_k[l]
        if kn == KIND_SUM:
            acc = 0.0
            for e in range(choff_p[n], choff_p[n + 1]):
                w = wt_p[e]
                if w != 0.0:
                    acc += w * rec(ch_p[e], m, l, e_left, e_right)
        elif km == KIND_SUM:
            acc = 0.0
            for e in range(choff_p[m], choff_p[m + 1]):
                w = wt_p[e]
                if w != 0.0:
                    acc += w * rec(n, ch_p[e], l, e_left, e_right)
        elif kl == KIND_SUM:
            acc = 0.0
            for e in range(choff_k[l], choff_k[l + 1]):
                w = wt_k[e]
                if w != 0.0:
                    acc += w * rec(n, m, ch_k[e], e_left, e_right)
        elif kn == KIND_PRODUCT:
            if km != KIND_PRODUCT or kl != KIND_PRODUCT:
                raise IncompatibleError("product paired with an input unit on a shared scope")
            nl = ch_p[choff_p[n]]
            nr = ch_p[choff_p[n] + 1]
            ml = ch_p[choff_p[m]]
            mr = ch_p[choff_p[m] + 1]
            ml, mr = _align_children(scope_p, nl, nr, scope_p, ml, mr)
            ll = ch_k[choff_k[l]]
            lr = ch_k[choff_k[l] + 1]
            ll, lr = _align_children(scope_p, nl, nr, scope_k, ll, lr)
            acc = rec(nl, ml, ll, e_left, e_right) * rec(nr, mr, lr, e_left, e_right)
        else:
            if km != KIND_INPUT or kl != KIND_INPUT:
                raise IncompatibleError("product paired with an input unit on a shared scope")
            j = var_p[n]
            if var_p[m] != j or var_k[l] != j:
                raise IncompatibleError("input units over different variables were paired")
            c = cards[j]
            on = lwoff_p[n]
            om = lwoff_p[m]
            ot = tboff_k[l]
            t = pos_of_var.get(j)
            if t is not None:
                a = e_left[t]
                b = e_right[t]
                acc = lw_p[on + a] * lw_p[om + b] * tb_k[ot + a * c + b]
            else:
                acc = 0.0
                for a in range(c):
                    wa = lw_p[on + a]
                    if wa == 0.0:
                        continue
                    row = ot + a * c
                    for b in range(c):
                        acc += wa * lw_p[om + b] * tb_k[row + b]
        memo[key] = acc
        return acc

    ev_rows = [tuple(int(v) for v in row) for row in np.asarray(ev).tolist()]
    out = np.empty(len(pairs))
    for idx, (il, ir) in enumerate(np.asarray(pairs).tolist()):
        out[idx] = rec(root_p, root_p, root_k, ev_rows[il], ev_rows[ir])
    return out, len(memo)
