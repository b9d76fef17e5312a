# cython: language_level=3, boundscheck=False, wraparound=False, initializedcheck=False, cdivision=True
"""Compiled mirror of the pure-Python backend.

Same recursions, same accumulation order; memo tables are C++ hash maps
keyed by packed 64-bit indices. Problem shapes whose keys do not fit the
packing raise NotImplementedError, and the caller falls back to the
pure-Python routines.
"""

import numpy as np

from cython.operator cimport dereference as deref
from libc.stdint cimport int8_t, int32_t, int64_t, uint64_t
from libcpp.unordered_map cimport unordered_map

from ..errors import IncompatibleError

cdef enum:
    KIND_INPUT = 0
    KIND_SUM = 1
    KIND_PRODUCT = 2

_ERR_MSG = {
    1: "product paired with an input unit on a shared scope",
    2: "product units split a shared scope differently",
    3: "input units over different variables were paired",
}


def feedforward(kind, ch_off, ch, wt, values):
    """In-place bottom-up fill of inner-unit rows; Kahan sums at sum units."""
    cdef const int8_t[::1] kd = kind
    cdef const int64_t[::1] off = ch_off
    cdef const int32_t[::1] cc = ch
    cdef const double[::1] w = wt
    cdef double[:, ::1] V = values
    cdef Py_ssize_t n = kd.shape[0]
    cdef Py_ssize_t B = V.shape[1]
    cdef Py_ssize_t u, e, j, ci
    cdef int64_t lo, hi
    cdef double we, term, total
    acc_arr = np.zeros(B)
    comp_arr = np.zeros(B)
    cdef double[::1] acc = acc_arr
    cdef double[::1] comp = comp_arr
    for u in range(n):
        if kd[u] == KIND_INPUT:
            continue
        lo = off[u]
        hi = off[u + 1]
        if kd[u] == KIND_SUM:
            for j in range(B):
                acc[j] = 0.0
                comp[j] = 0.0
            for e in range(lo, hi):
                ci = cc[e]
                we = w[e]
                for j in range(B):
                    term = we * V[ci, j] - comp[j]
                    total = acc[j] + term
                    comp[j] = (total - acc[j]) - term
                    acc[j] = total
            for j in range(B):
                V[u, j] = acc[j]
        else:
            ci = cc[lo]
            for j in range(B):
                V[u, j] = V[ci, j]
            for e in range(lo + 1, hi):
                ci = cc[e]
                for j in range(B):
                    V[u, j] *= V[ci, j]
    return None


cdef class _TripleCtx:
    cdef const int8_t[::1] kind_p
    cdef const int8_t[::1] kind_q
    cdef const int8_t[::1] kind_k
    cdef const int32_t[::1] var_p
    cdef const int32_t[::1] var_q
    cdef const int32_t[::1] var_k
    cdef const int64_t[::1] choff_p
    cdef const int64_t[::1] choff_q
    cdef const int64_t[::1] choff_k
    cdef const int32_t[::1] ch_p
    cdef const int32_t[::1] ch_q
    cdef const int32_t[::1] ch_k
    cdef const double[::1] wt_p
    cdef const double[::1] wt_q
    cdef const double[::1] wt_k
    cdef const int64_t[::1] lwoff_p
    cdef const int64_t[::1] lwoff_q
    cdef const int64_t[::1] tboff_k
    cdef const double[::1] lw_p
    cdef const double[::1] lw_q
    cdef const double[::1] tb_k
    cdef const uint64_t[::1] scope_p
    cdef const uint64_t[::1] scope_q
    cdef const uint64_t[::1] scope_k
    cdef const int32_t[::1] cards
    cdef uint64_t Nq, Nk
    cdef unordered_map[uint64_t, double] memo
    cdef int err

    cdef double rec(self, int64_t n, int64_t m, int64_t l) noexcept:
        if self.err:
            return 0.0
        cdef uint64_t key = ((<uint64_t> n) * self.Nq + (<uint64_t> m)) * self.Nk + (<uint64_t> l)
        cdef unordered_map[uint64_t, double].iterator it = self.memo.find(key)
        if it != self.memo.end():
            return deref(it).second
        cdef int kn = self.kind_p[n]
        cdef int km = self.kind_q[m]
        cdef int kl = self.kind_k[l]
        cdef double acc = 0.0
        cdef double w, wa
        cdef int64_t e, nl, nr, ml, mr, ll, lr, on, om, ot, row
        cdef int32_t j, c, a, b
        cdef uint64_t sl, sr
        if kn == KIND_SUM:
            for e in range(self.choff_p[n], self.choff_p[n + 1]):
                w = self.wt_p[e]
                if w != 0.0:
                    acc += w * self.rec(self.ch_p[e], m, l)
        elif km == KIND_SUM:
            for e in range(self.choff_q[m], self.choff_q[m + 1]):
                w = self.wt_q[e]
                if w != 0.0:
                    acc += w * self.rec(n, self.ch_q[e], l)
        elif kl == KIND_SUM:
            for e in range(self.choff_k[l], self.choff_k[l + 1]):
                w = self.wt_k[e]
                if w != 0.0:
                    acc += w * self.rec(n, m, self.ch_k[e])
        elif kn == KIND_PRODUCT:
            if km != KIND_PRODUCT or kl != KIND_PRODUCT:
                self.err = 1
                return 0.0
            nl = self.ch_p[self.choff_p[n]]
            nr = self.ch_p[self.choff_p[n] + 1]
            sl = self.scope_p[nl]
            sr = self.scope_p[nr]
            ml = self.ch_q[self.choff_q[m]]
            mr = self.ch_q[self.choff_q[m] + 1]
            if self.scope_q[ml] != sl:
                e = ml
                ml = mr
                mr = e
            if self.scope_q[ml] != sl or self.scope_q[mr] != sr:
                self.err = 2
                return 0.0
            ll = self.ch_k[self.choff_k[l]]
            lr = self.ch_k[self.choff_k[l] + 1]
            if self.scope_k[ll] != sl:
                e = ll
                ll = lr
                lr = e
            if self.scope_k[ll] != sl or self.scope_k[lr] != sr:
                self.err = 2
                return 0.0
            acc = self.rec(nl, ml, ll) * self.rec(nr, mr, lr)
        else:
            if km != KIND_INPUT or kl != KIND_INPUT:
                self.err = 1
                return 0.0
            j = self.var_p[n]
            if self.var_q[m] != j or self.var_k[l] != j:
                self.err = 3
                return 0.0
            c = self.cards[j]
            on = self.lwoff_p[n]
            om = self.lwoff_q[m]
            ot = self.tboff_k[l]
            for a in range(c):
                wa = self.lw_p[on + a]
                if wa == 0.0:
                    continue
                row = ot + a * c
                for b in range(c):
                    acc += wa * self.lw_q[om + b] * self.tb_k[row + b]
        self.memo[key] = acc
        return acc


def expected_kernel_scalar(p, q, k):
    """Triple recursion E[k] over unnormalized weights; (value, entries)."""
    cdef uint64_t np_n = <uint64_t> p.kind.shape[0]
    cdef uint64_t nq_n = <uint64_t> q.kind.shape[0]
    cdef uint64_t nk_n = <uint64_t> k.kind.shape[0]
    if int(np_n) * int(nq_n) * int(nk_n) >= (1 << 63):
        raise NotImplementedError("unit-triple index does not fit 64 bits")
    cdef _TripleCtx ctx = _TripleCtx()
    ctx.kind_p = p.kind
    ctx.kind_q = q.kind
    ctx.kind_k = k.kind
    ctx.var_p = p.var
    ctx.var_q = q.var
    ctx.var_k = k.var
    ctx.choff_p = p.ch_off
    ctx.choff_q = q.ch_off
    ctx.choff_k = k.ch_off
    ctx.ch_p = p.ch
    ctx.ch_q = q.ch
    ctx.ch_k = k.ch
    ctx.wt_p = p.wt
    ctx.wt_q = q.wt
    ctx.wt_k = k.wt
    ctx.lwoff_p = p.lw_off
    ctx.lwoff_q = q.lw_off
    ctx.tboff_k = k.tb_off
    ctx.lw_p = p.lw
    ctx.lw_q = q.lw
    ctx.tb_k = k.tb
    ctx.scope_p = p.scope
    ctx.scope_q = q.scope
    ctx.scope_k = k.scope
    ctx.cards = p.cards
    ctx.Nq = nq_n
    ctx.Nk = nk_n
    ctx.err = 0
    cdef double value = ctx.rec(p.root, q.root, k.root)
    if ctx.err:
        raise IncompatibleError(_ERR_MSG[ctx.err])
    return value, int(ctx.memo.size())


cdef class _PairCtx:
    cdef const int8_t[::1] kind_p
    cdef const int8_t[::1] kind_g
    cdef const int32_t[::1] var_p
    cdef const int32_t[::1] var_g
    cdef const int64_t[::1] choff_p
    cdef const int64_t[::1] choff_g
    cdef const int32_t[::1] ch_p
    cdef const int32_t[::1] ch_g
    cdef const double[::1] wt_p
    cdef const double[::1] wt_g
    cdef const int64_t[::1] lwoff_p
    cdef const int64_t[::1] lwoff_g
    cdef const double[::1] lw_p
    cdef const double[::1] lw_g
    cdef const uint64_t[::1] scope_p
    cdef const uint64_t[::1] scope_g
    cdef const int32_t[::1] cards
    cdef uint64_t Ng
    cdef unordered_map[uint64_t, double] memo
    cdef int err

    cdef double rec(self, int64_t n, int64_t m) noexcept:
        if self.err:
            return 0.0
        cdef uint64_t key = (<uint64_t> n) * self.Ng + (<uint64_t> m)
        cdef unordered_map[uint64_t, double].iterator it = self.memo.find(key)
        if it != self.memo.end():
            return deref(it).second
        cdef int kn = self.kind_p[n]
        cdef int km = self.kind_g[m]
        cdef double acc = 0.0
        cdef double w
        cdef int64_t e, nl, nr, ml, mr, on, om
        cdef int32_t j, a
        cdef uint64_t sl, sr
        if kn == KIND_SUM:
            for e in range(self.choff_p[n], self.choff_p[n + 1]):
                w = self.wt_p[e]
                if w != 0.0:
                    acc += w * self.rec(self.ch_p[e], m)
        elif km == KIND_SUM:
            for e in range(self.choff_g[m], self.choff_g[m + 1]):
                w = self.wt_g[e]
                if w != 0.0:
                    acc += w * self.rec(n, self.ch_g[e])
        elif kn == KIND_PRODUCT:
            if km != KIND_PRODUCT:
                self.err = 1
                return 0.0
            nl = self.ch_p[self.choff_p[n]]
            nr = self.ch_p[self.choff_p[n] + 1]
            sl = self.scope_p[nl]
            sr = self.scope_p[nr]
            ml = self.ch_g[self.choff_g[m]]
            mr = self.ch_g[self.choff_g[m] + 1]
            if self.scope_g[ml] != sl:
                e = ml
                ml = mr
                mr = e
            if self.scope_g[ml] != sl or self.scope_g[mr] != sr:
                self.err = 2
                return 0.0
            acc = self.rec(nl, ml) * self.rec(nr, mr)
        else:
            if km != KIND_INPUT:
                self.err = 1
                return 0.0
            j = self.var_p[n]
            if self.var_g[m] != j:
                self.err = 3
                return 0.0
            on = self.lwoff_p[n]
            om = self.lwoff_g[m]
            for a in range(self.cards[j]):
                acc += self.lw_p[on + a] * self.lw_g[om + a]
        self.memo[key] = acc
        return acc


def product_integral_scalar(p, g):
    """Pair recursion sum_x p(x) g(x); returns (value, entries)."""
    cdef uint64_t np_n = <uint64_t> p.kind.shape[0]
    cdef uint64_t ng_n = <uint64_t> g.kind.shape[0]
    if int(np_n) * int(ng_n) >= (1 << 63):
        raise NotImplementedError("unit-pair index does not fit 64 bits")
    cdef _PairCtx ctx = _PairCtx()
    ctx.kind_p = p.kind
    ctx.kind_g = g.kind
    ctx.var_p = p.var
    ctx.var_g = g.var
    ctx.choff_p = p.ch_off
    ctx.choff_g = g.ch_off
    ctx.ch_p = p.ch
    ctx.ch_g = g.ch
    ctx.wt_p = p.wt
    ctx.wt_g = g.wt
    ctx.lwoff_p = p.lw_off
    ctx.lwoff_g = g.lw_off
    ctx.lw_p = p.lw
    ctx.lw_g = g.lw
    ctx.scope_p = p.scope
    ctx.scope_g = g.scope
    ctx.cards = p.cards
    ctx.Ng = ng_n
    ctx.err = 0
    cdef double value = ctx.rec(p.root, g.root)
    if ctx.err:
        raise IncompatibleError(_ERR_MSG[ctx.err])
    return value, int(ctx.memo.size())


cdef class _ClampCtx:
    cdef const int8_t[::1] kind_p
    cdef const int8_t[::1] kind_k
    cdef const int32_t[::1] var_p
    cdef const int32_t[::1] var_k
    cdef const int64_t[::1] choff_p
    cdef const int64_t[::1] choff_k
    cdef const int32_t[::1] ch_p
    cdef const int32_t[::1] ch_k
    cdef const double[::1] wt_p
    cdef const double[::1] wt_k
    cdef const int64_t[::1] lwoff_p
    cdef const int64_t[::1] tboff_k
    cdef const double[::1] lw_p
    cdef const double[::1] tb_k
    cdef const uint64_t[::1] scope_p
    cdef const uint64_t[::1] scope_k
    cdef const int32_t[::1] cards
    cdef const uint64_t[::1] smask  # per p-unit: s-position bits inside its scope
    cdef const int32_t[::1] var_pos  # variable -> position in s, or -1
    cdef uint64_t Np, Nk
    cdef int trip_bits, s_bits
    cdef unordered_map[uint64_t, double] memo
    cdef int err

    cdef double rec(self, int64_t n, int64_t m, int64_t l, uint64_t eL, uint64_t eR) noexcept:
        if self.err:
            return 0.0
        cdef uint64_t trip = ((<uint64_t> n) * self.Np + (<uint64_t> m)) * self.Nk + (<uint64_t> l)
        cdef uint64_t key = trip \
            | ((eL & self.smask[n]) << self.trip_bits) \
            | ((eR & self.smask[m]) << (self.trip_bits + self.s_bits))
        cdef unordered_map[uint64_t, double].iterator it = self.memo.find(key)
        if it != self.memo.end():
            return deref(it).second
        cdef int kn = self.kind_p[n]
        cdef int km = self.kind_p[m]
        cdef int kl = self.kind_k[l]
        cdef double acc = 0.0
        cdef double w, wa
        cdef int64_t e, nl, nr, ml, mr, ll, lr, on, om, ot, row
        cdef int32_t j, c, a, b, t
        cdef uint64_t sl, sr
        if kn == KIND_SUM:
            for e in range(self.choff_p[n], self.choff_p[n + 1]):
                w = self.wt_p[e]
                if w != 0.0:
                    acc += w * self.rec(self.ch_p[e], m, l, eL, eR)
        elif km == KIND_SUM:
            for e in range(self.choff_p[m], self.choff_p[m + 1]):
                w = self.wt_p[e]
                if w != 0.0:
                    acc += w * self.rec(n, self.ch_p[e], l, eL, eR)
        elif kl == KIND_SUM:
            for e in range(self.choff_k[l], self.choff_k[l + 1]):
                w = self.wt_k[e]
                if w != 0.0:
                    acc += w * self.rec(n, m, self.ch_k[e], eL, eR)
        elif kn == KIND_PRODUCT:
            if km != KIND_PRODUCT or kl != KIND_PRODUCT:
                self.err = 1
                return 0.0
            nl = self.ch_p[self.choff_p[n]]
            nr = self.ch_p[self.choff_p[n] + 1]
            sl = self.scope_p[nl]
            sr = self.scope_p[nr]
            ml = self.ch_p[self.choff_p[m]]
            mr = self.ch_p[self.choff_p[m] + 1]
            if self.scope_p[ml] != sl:
                e = ml
                ml = mr
                mr = e
            if self.scope_p[ml] != sl or self.scope_p[mr] != sr:
                self.err = 2
                return 0.0
            ll = self.ch_k[self.choff_k[l]]
            lr = self.ch_k[self.choff_k[l] + 1]
            if self.scope_k[ll] != sl:
                e = ll
                ll = lr
                lr = e
            if self.scope_k[ll] != sl or self.scope_k[lr] != sr:
                self.err = 2
                return 0.0
            acc = self.rec(nl, ml, ll, eL, eR) * self.rec(nr, mr, lr, eL, eR)
        else:
            if km != KIND_INPUT or kl != KIND_INPUT:
                self.err = 1
                return 0.0
            j = self.var_p[n]
            if self.var_p[m] != j or self.var_k[l] != j:
                self.err = 3
                return 0.0
            c = self.cards[j]
            on = self.lwoff_p[n]
            om = self.lwoff_p[m]
            ot = self.tboff_k[l]
            t = self.var_pos[j]
            if t >= 0:
                a = <int32_t> ((eL >> t) & 1)
                b = <int32_t> ((eR >> t) & 1)
                acc = self.lw_p[on + a] * self.lw_p[om + b] * self.tb_k[ot + a * c + b]
            else:
                for a in range(c):
                    wa = self.lw_p[on + a]
                    if wa == 0.0:
                        continue
                    row = ot + a * c
                    for b in range(c):
                        acc += wa * self.lw_p[om + b] * self.tb_k[row + b]
        self.memo[key] = acc
        return acc


def clamped_ek_batch(p, k, s_vars, ev, pairs):
    """Shared-memo batch of evidence-clamped expectations; (values, entries).

    Keys pack (unit triple, scope-restricted evidence) into 64 bits, which
    needs binary kept variables and a small enough circuit; other shapes are
    not supported here.
    """
    s_list = [int(v) for v in s_vars]
    S = len(s_list)
    n_units = int(p.kind.shape[0])
    nk_units = int(k.kind.shape[0])
    trip = n_units * n_units * nk_units
    trip_bits = max(1, (trip - 1).bit_length())
    if trip_bits + 2 * S > 63:
        raise NotImplementedError("packed key does not fit 64 bits")
    cards = np.asarray(p.cards)
    if any(cards[v] != 2 for v in s_list):
        raise NotImplementedError("evidence packing needs binary kept variables")

    var_pos = np.full(len(cards), -1, dtype=np.int32)
    for t, v in enumerate(s_list):
        var_pos[v] = t
    scope = np.asarray(p.scope)
    smask = np.zeros(n_units, dtype=np.uint64)
    for t, v in enumerate(s_list):
        smask |= ((scope >> np.uint64(v)) & np.uint64(1)) << np.uint64(t)

    ev = np.asarray(ev, dtype=np.int64)
    packed = np.zeros(ev.shape[0], dtype=np.uint64)
    for t in range(S):
        packed |= ev[:, t].astype(np.uint64) << np.uint64(t)

    cdef _ClampCtx ctx = _ClampCtx()
    ctx.kind_p = p.kind
    ctx.kind_k = k.kind
    ctx.var_p = p.var
    ctx.var_k = k.var
    ctx.choff_p = p.ch_off
    ctx.choff_k = k.ch_off
    ctx.ch_p = p.ch
    ctx.ch_k = k.ch
    ctx.wt_p = p.wt
    ctx.wt_k = k.wt
    ctx.lwoff_p = p.lw_off
    ctx.tboff_k = k.tb_off
    ctx.lw_p = p.lw
    ctx.tb_k = k.tb
    ctx.scope_p = p.scope
    ctx.scope_k = k.scope
    ctx.cards = p.cards
    ctx.smask = smask
    ctx.var_pos = var_pos
    ctx.Np = <uint64_t> n_units
    ctx.Nk = <uint64_t> nk_units
    ctx.trip_bits = trip_bits
    ctx.s_bits = S
    ctx.err = 0

    pairs_arr = np.asarray(pairs, dtype=np.int64)
    if pairs_arr.size == 0:
        return np.empty(0), 0
    out = np.empty(pairs_arr.shape[0])
    cdef double[::1] out_v = out
    cdef const int64_t[:, ::1] pr = np.ascontiguousarray(pairs_arr)
    cdef const uint64_t[::1] pk = packed
    cdef Py_ssize_t idx
    cdef int64_t root_p = p.root
    cdef int64_t root_k = k.root
    for idx in range(pr.shape[0]):
        out_v[idx] = ctx.rec(root_p, root_p, root_k, pk[pr[idx, 0]], pk[pr[idx, 1]])
        if ctx.err:
            raise IncompatibleError(_ERR_MSG[ctx.err])
    return out, int(ctx.memo.size())
