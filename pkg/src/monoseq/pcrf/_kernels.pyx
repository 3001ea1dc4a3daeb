# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernel backend: flat-hash weight store and typed DP loops.

Interface mirrors pykernels; see that module for the reference semantics.
"""

from libc.stdlib cimport free, malloc
from libc.string cimport memset
from libc.math cimport exp, log1p, NAN

import numpy as np

ctypedef long long i64
ctypedef unsigned long long u64

cdef double NEG_INF = float("-inf")
cdef i64 EMPTY = -1


cdef inline u64 _mix(u64 h) noexcept nogil:
    h ^= h >> 33
    h *= 0xFF51AFD7ED558CCDULL
    h ^= h >> 33
    h *= 0xC4CEB9FE1A85EC53ULL
    h ^= h >> 33
    return h


cdef class WeightStore:
    """Open-addressing hash from packed non-negative int64 keys to float64."""

    cdef i64* keys
    cdef double* vals
    cdef Py_ssize_t cap
    cdef Py_ssize_t used

    def __cinit__(self):
        self.cap = 1024
        self.used = 0
        self.keys = <i64*> malloc(self.cap * sizeof(i64))
        self.vals = <double*> malloc(self.cap * sizeof(double))
        if self.keys == NULL or self.vals == NULL:
            raise MemoryError()
        memset(self.keys, 0xFF, self.cap * sizeof(i64))

    def __dealloc__(self):
        if self.keys != NULL:
            free(self.keys)
        if self.vals != NULL:
            free(self.vals)

    cdef inline Py_ssize_t _slot(self, i64 key) noexcept nogil:
        cdef Py_ssize_t mask = self.cap - 1
        cdef Py_ssize_t i = <Py_ssize_t>(_mix(<u64>key) & <u64>mask)
        while self.keys[i] != key and self.keys[i] != EMPTY:
            i = (i + 1) & mask
        return i

    cdef int _grow(self) except -1:
        cdef Py_ssize_t old_cap = self.cap
        cdef i64* old_keys = self.keys
        cdef double* old_vals = self.vals
        cdef Py_ssize_t new_cap = old_cap * 2
        cdef i64* nk = <i64*> malloc(new_cap * sizeof(i64))
        cdef double* nv = <double*> malloc(new_cap * sizeof(double))
        if nk == NULL or nv == NULL:
            if nk != NULL:
                free(nk)
            if nv != NULL:
                free(nv)
            raise MemoryError()
        memset(nk, 0xFF, new_cap * sizeof(i64))
        self.keys = nk
        self.vals = nv
        self.cap = new_cap
        cdef Py_ssize_t i, j
        for i in range(old_cap):
            if old_keys[i] != EMPTY:
                j = self._slot(old_keys[i])
                self.keys[j] = old_keys[i]
                self.vals[j] = old_vals[i]
        free(old_keys)
        free(old_vals)
        return 0

    cdef inline double _get(self, i64 key) noexcept nogil:
        cdef Py_ssize_t i = self._slot(key)
        if self.keys[i] == key:
            return self.vals[i]
        return 0.0

    cdef inline int _add(self, i64 key, double delta) except -1:
        if (self.used + 1) * 5 > self.cap * 3:
            self._grow()
        cdef Py_ssize_t i = self._slot(key)
        if self.keys[i] == key:
            self.vals[i] += delta
        else:
            self.keys[i] = key
            self.vals[i] = delta
            self.used += 1
        return 0

    cdef inline int _set(self, i64 key, double value) except -1:
        if (self.used + 1) * 5 > self.cap * 3:
            self._grow()
        cdef Py_ssize_t i = self._slot(key)
        if self.keys[i] != key:
            self.keys[i] = key
            self.used += 1
        self.vals[i] = value
        return 0

    def get(self, key):
        return self._get(<i64>key)

    def set(self, key, value):
        self._set(<i64>key, <double>value)

    def add(self, key, delta):
        self._add(<i64>key, <double>delta)

    def __len__(self):
        return self.used

    def items_arrays(self):
        keys = np.empty(self.used, dtype=np.int64)
        vals = np.empty(self.used, dtype=np.float64)
        cdef i64[::1] kv = keys
        cdef double[::1] vv = vals
        cdef Py_ssize_t i, j = 0
        for i in range(self.cap):
            if self.keys[i] != EMPTY:
                kv[j] = self.keys[i]
                vv[j] = self.vals[i]
                j += 1
        return keys, vals

    def sumsq(self):
        cdef double acc = 0.0
        cdef Py_ssize_t i
        for i in range(self.cap):
            if self.keys[i] != EMPTY:
                acc += self.vals[i] * self.vals[i]
        return acc

    def mul_all(self, c):
        cdef double cc = c
        cdef Py_ssize_t i
        for i in range(self.cap):
            if self.keys[i] != EMPTY:
                self.vals[i] *= cc


cdef inline double _lse(double cur, double v) noexcept nogil:
    if cur == NEG_INF:
        return v
    if v > cur:
        return v + log1p(exp(cur - v))
    return cur + log1p(exp(v - cur))


cdef void _fill_scores(WeightStore store, double scale, int T,
                       i64[::1] pair_off, i64[::1] feat_off,
                       i64[::1] kb, i64[::1] feats, double[::1] scores) noexcept nogil:
    cdef int t
    cdef i64 p, j, f0, f1
    cdef i64 kbv
    cdef double acc
    for t in range(T):
        f0 = feat_off[t]
        f1 = feat_off[t + 1]
        for p in range(pair_off[t], pair_off[t + 1]):
            kbv = kb[p]
            if kbv < 0:
                scores[p] = 0.0
                continue
            acc = 0.0
            for j in range(f0, f1):
                acc += store._get(feats[j] | kbv)
            scores[p] = acc * scale


cdef double _forward(int T, int[::1] n_states, i64[::1] state_off, int[::1] k,
                     i64[::1] pair_off, int[::1] nxt,
                     double[::1] scores, double[::1] alpha) noexcept nogil:
    cdef Py_ssize_t b, si, yi
    cdef i64 base_a, base_n, poff, p
    cdef int kt
    cdef double a, v, cur, acc
    cdef int t
    alpha[0] = 0.0
    for b in range(1, state_off[T + 1]):
        alpha[b] = NEG_INF
    for t in range(T):
        base_a = state_off[t]
        base_n = state_off[t + 1]
        kt = k[t]
        for si in range(n_states[t]):
            a = alpha[base_a + si]
            if a == NEG_INF:
                continue
            poff = pair_off[t] + si * kt
            for yi in range(kt):
                p = poff + yi
                v = a + scores[p]
                cur = alpha[base_n + nxt[p]]
                if cur == NEG_INF:
                    alpha[base_n + nxt[p]] = v
                elif v > cur:
                    alpha[base_n + nxt[p]] = v + log1p(exp(cur - v))
                else:
                    alpha[base_n + nxt[p]] = cur + log1p(exp(v - cur))
    acc = NEG_INF
    for b in range(state_off[T], state_off[T + 1]):
        acc = _lse(acc, alpha[b])
    return acc


cdef double _backward(int T, int[::1] n_states, i64[::1] state_off, int[::1] k,
                      i64[::1] pair_off, int[::1] nxt,
                      double[::1] scores, double[::1] beta) noexcept nogil:
    cdef Py_ssize_t b, si, yi
    cdef i64 base_b, base_n, poff, p
    cdef int kt, t
    cdef double acc, v
    for b in range(state_off[T]):
        beta[b] = NEG_INF
    for b in range(state_off[T], state_off[T + 1]):
        beta[b] = 0.0
    for t in range(T - 1, -1, -1):
        base_b = state_off[t]
        base_n = state_off[t + 1]
        kt = k[t]
        for si in range(n_states[t]):
            acc = NEG_INF
            poff = pair_off[t] + si * kt
            for yi in range(kt):
                p = poff + yi
                v = scores[p] + beta[base_n + nxt[p]]
                if acc == NEG_INF:
                    acc = v
                elif v > acc:
                    acc = v + log1p(exp(acc - v))
                else:
                    acc = acc + log1p(exp(v - acc))
            beta[base_b + si] = acc
    return beta[0]


cdef inline double _gold_score(int T, i64[::1] pair_off, i64[::1] gold,
                               double[::1] scores) noexcept nogil:
    cdef double acc = 0.0
    cdef int t
    if T == 0 or gold[0] < 0:
        return NAN
    for t in range(T):
        acc += scores[pair_off[t] + gold[t]]
    return acc


def fb(WeightStore store, double scale, plan, bint want_posteriors=False):
    cdef int T = plan.T
    cdef int[::1] n_states = plan.n_states
    cdef i64[::1] state_off = plan.state_off
    cdef int[::1] k = plan.k
    cdef i64[::1] pair_off = plan.pair_off
    cdef i64[::1] kb = plan.kb
    cdef int[::1] nxt = plan.nxt
    cdef i64[::1] cand_off = plan.cand_off
    cdef i64[::1] feats = plan.feats
    cdef i64[::1] feat_off = plan.feat_off
    cdef i64[::1] gold = plan.gold_pair

    scores_arr = np.empty(pair_off[T], dtype=np.float64)
    alpha_arr = np.empty(state_off[T + 1], dtype=np.float64)
    beta_arr = np.empty(state_off[T + 1], dtype=np.float64)
    marg_arr = np.zeros(cand_off[T], dtype=np.float64)
    post_arr = np.empty(pair_off[T], dtype=np.float64) if want_posteriors else None
    cdef double[::1] scores = scores_arr
    cdef double[::1] alpha = alpha_arr
    cdef double[::1] beta = beta_arr
    cdef double[::1] marg = marg_arr
    cdef double[::1] post = post_arr if want_posteriors else scores_arr  # unused alias

    cdef double logz_f, logz_b, a, pr
    cdef int t, kt
    cdef Py_ssize_t si, yi
    cdef i64 base_a, base_n, poff, coff, p
    cdef bint wp = want_posteriors
    with nogil:
        _fill_scores(store, scale, T, pair_off, feat_off, kb, feats, scores)
        logz_f = _forward(T, n_states, state_off, k, pair_off, nxt, scores, alpha)
        logz_b = _backward(T, n_states, state_off, k, pair_off, nxt, scores, beta)
        for t in range(T):
            base_a = state_off[t]
            base_n = state_off[t + 1]
            kt = k[t]
            coff = cand_off[t]
            for si in range(n_states[t]):
                a = alpha[base_a + si]
                if a == NEG_INF:
                    continue
                poff = pair_off[t] + si * kt
                for yi in range(kt):
                    p = poff + yi
                    pr = exp(a + scores[p] + beta[base_n + nxt[p]] - logz_f)
                    if wp:
                        post[p] = pr
                    marg[coff + yi] += pr
    gs = _gold_score(T, pair_off, gold, scores)
    return logz_f, logz_b, gs, marg_arr, post_arr


def sgd_step(WeightStore store, double scale, double eta, plan):
    cdef int T = plan.T
    cdef int[::1] n_states = plan.n_states
    cdef i64[::1] state_off = plan.state_off
    cdef int[::1] k = plan.k
    cdef i64[::1] pair_off = plan.pair_off
    cdef i64[::1] kb = plan.kb
    cdef int[::1] nxt = plan.nxt
    cdef i64[::1] feats = plan.feats
    cdef i64[::1] feat_off = plan.feat_off
    cdef i64[::1] gold = plan.gold_pair

    scores_arr = np.empty(pair_off[T], dtype=np.float64)
    alpha_arr = np.empty(state_off[T + 1], dtype=np.float64)
    beta_arr = np.empty(state_off[T + 1], dtype=np.float64)
    cdef double[::1] scores = scores_arr
    cdef double[::1] alpha = alpha_arr
    cdef double[::1] beta = beta_arr

    cdef double logz_f, gs, a, coef, delta
    cdef int t, kt
    cdef Py_ssize_t si, yi
    cdef i64 base_a, base_n, poff, p, f0, f1, j, kbv, local, gp

    with nogil:
        _fill_scores(store, scale, T, pair_off, feat_off, kb, feats, scores)
        logz_f = _forward(T, n_states, state_off, k, pair_off, nxt, scores, alpha)
        _backward(T, n_states, state_off, k, pair_off, nxt, scores, beta)
    gs = _gold_score(T, pair_off, gold, scores)
    for t in range(T):
        base_a = state_off[t]
        base_n = state_off[t + 1]
        kt = k[t]
        gp = gold[t]
        f0 = feat_off[t]
        f1 = feat_off[t + 1]
        for si in range(n_states[t]):
            a = alpha[base_a + si]
            if a == NEG_INF:
                continue
            for yi in range(kt):
                local = si * kt + yi
                p = pair_off[t] + local
                coef = -exp(a + scores[p] + beta[base_n + nxt[p]] - logz_f)
                if local == gp:
                    coef += 1.0
                kbv = kb[p]
                if kbv < 0:
                    continue
                delta = eta * coef / scale
                for j in range(f0, f1):
                    store._add(feats[j] | kbv, delta)
    return gs - logz_f


def accumulate_grad(WeightStore store, double scale, plan, WeightStore grad):
    cdef int T = plan.T
    cdef int[::1] n_states = plan.n_states
    cdef i64[::1] state_off = plan.state_off
    cdef int[::1] k = plan.k
    cdef i64[::1] pair_off = plan.pair_off
    cdef i64[::1] kb = plan.kb
    cdef int[::1] nxt = plan.nxt
    cdef i64[::1] feats = plan.feats
    cdef i64[::1] feat_off = plan.feat_off
    cdef i64[::1] gold = plan.gold_pair

    scores_arr = np.empty(pair_off[T], dtype=np.float64)
    alpha_arr = np.empty(state_off[T + 1], dtype=np.float64)
    beta_arr = np.empty(state_off[T + 1], dtype=np.float64)
    cdef double[::1] scores = scores_arr
    cdef double[::1] alpha = alpha_arr
    cdef double[::1] beta = beta_arr

    cdef double logz_f, gs, a, coef
    cdef int t, kt
    cdef Py_ssize_t si, yi
    cdef i64 base_a, base_n, p, f0, f1, j, kbv, local, gp

    with nogil:
        _fill_scores(store, scale, T, pair_off, feat_off, kb, feats, scores)
        logz_f = _forward(T, n_states, state_off, k, pair_off, nxt, scores, alpha)
        _backward(T, n_states, state_off, k, pair_off, nxt, scores, beta)
    gs = _gold_score(T, pair_off, gold, scores)
    for t in range(T):
        base_a = state_off[t]
        base_n = state_off[t + 1]
        kt = k[t]
        gp = gold[t]
        f0 = feat_off[t]
        f1 = feat_off[t + 1]
        for si in range(n_states[t]):
            a = alpha[base_a + si]
            if a == NEG_INF:
                continue
            for yi in range(kt):
                local = si * kt + yi
                p = pair_off[t] + local
                coef = -exp(a + scores[p] + beta[base_n + nxt[p]] - logz_f)
                if local == gp:
                    coef += 1.0
                kbv = kb[p]
                if kbv < 0:
                    continue
                for j in range(f0, f1):
                    grad._add(feats[j] | kbv, coef)
    return gs - logz_f


def viterbi(WeightStore store, double scale, plan):
    cdef int T = plan.T
    cdef int[::1] n_states = plan.n_states
    cdef i64[::1] state_off = plan.state_off
    cdef int[::1] k = plan.k
    cdef i64[::1] pair_off = plan.pair_off
    cdef i64[::1] kb = plan.kb
    cdef int[::1] nxt = plan.nxt
    cdef i64[::1] feats = plan.feats
    cdef i64[::1] feat_off = plan.feat_off

    scores_arr = np.empty(pair_off[T], dtype=np.float64)
    best_arr = np.empty(state_off[T + 1], dtype=np.float64)
    ptotal_arr = np.empty(pair_off[T], dtype=np.float64)
    out_arr = np.empty(T, dtype=np.int32)
    cdef double[::1] scores = scores_arr
    cdef double[::1] best = best_arr
    cdef double[::1] ptotal = ptotal_arr
    cdef int[::1] out = out_arr

    cdef double acc, tot, target
    cdef int t, kt
    cdef Py_ssize_t b, si, yi
    cdef i64 base_b, base_n, poff, p

    with nogil:
        _fill_scores(store, scale, T, pair_off, feat_off, kb, feats, scores)
        for b in range(state_off[T]):
            best[b] = NEG_INF
        for b in range(state_off[T], state_off[T + 1]):
            best[b] = 0.0
        for t in range(T - 1, -1, -1):
            base_b = state_off[t]
            base_n = state_off[t + 1]
            kt = k[t]
            for si in range(n_states[t]):
                poff = pair_off[t] + si * kt
                acc = NEG_INF
                for yi in range(kt):
                    p = poff + yi
                    tot = scores[p] + best[base_n + nxt[p]]
                    ptotal[p] = tot
                    if tot > acc:
                        acc = tot
                best[base_b + si] = acc
        si = 0
        for t in range(T):
            kt = k[t]
            poff = pair_off[t] + si * kt
            target = best[state_off[t] + si]
            for yi in range(kt):
                if ptotal[poff + yi] == target:
                    out[t] = <int>yi
                    si = nxt[poff + yi]
                    break
    return out_arr
