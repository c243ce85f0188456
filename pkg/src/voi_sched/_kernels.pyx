# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled episode loop and packet heap; see ``_kernels_py`` for the reference."""
from libc.math cimport log, fabs, pow
from libc.stdlib cimport malloc, realloc, free

POLICY_CODES = {"index-voi": 0, "freshest-first": 1, "fifo": 2, "best-sensor": 3, "random": 4}


cdef struct Entry:
    double k1
    double k2
    long long tgen
    long long src
    long long pid


cdef inline bint _lt(Entry* lhs, Entry* rhs) nogil:
    if lhs.k1 != rhs.k1:
        return lhs.k1 < rhs.k1
    if lhs.k2 != rhs.k2:
        return lhs.k2 < rhs.k2
    if lhs.tgen != rhs.tgen:
        return lhs.tgen < rhs.tgen
    if lhs.src != rhs.src:
        return lhs.src < rhs.src
    return lhs.pid < rhs.pid


cdef inline void _swap(Entry* h, Py_ssize_t i, Py_ssize_t j) nogil:
    cdef Entry tmp = h[i]
    h[i] = h[j]
    h[j] = tmp


cdef void _sift_up(Entry* h, Py_ssize_t pos, long long* cmp) nogil:
    cdef Py_ssize_t parent
    while pos > 0:
        parent = (pos - 1) >> 1
        cmp[0] += 1
        if _lt(&h[pos], &h[parent]):
            _swap(h, pos, parent)
            pos = parent
        else:
            break


cdef void _sift_down(Entry* h, Py_ssize_t n, Py_ssize_t pos, long long* cmp) nogil:
    cdef Py_ssize_t child
    while True:
        child = 2 * pos + 1
        if child >= n:
            break
        if child + 1 < n:
            cmp[0] += 1
            if _lt(&h[child + 1], &h[child]):
                child += 1
        cmp[0] += 1
        if _lt(&h[child], &h[pos]):
            _swap(h, pos, child)
            pos = child
        else:
            break


cdef long long _remove_at(Entry* h, Py_ssize_t* n, Py_ssize_t pos, long long* cmp) nogil:
    cdef long long pid = h[pos].pid
    n[0] -= 1
    if pos < n[0]:
        h[pos] = h[n[0]]
        if pos > 0:
            cmp[0] += 1
            if _lt(&h[pos], &h[(pos - 1) >> 1]):
                _sift_up(h, pos, cmp)
                return pid
        _sift_down(h, n[0], pos, cmp)
    return pid


cdef class PacketHeap:
    """Binary min-heap of ``(k1, k2, t_gen, source_id, packet_id)`` entries."""

    cdef Entry* _h
    cdef Py_ssize_t _n
    cdef Py_ssize_t _cap
    cdef long long _cmp

    def __cinit__(self):
        self._cap = 16
        self._n = 0
        self._cmp = 0
        self._h = <Entry*> malloc(self._cap * sizeof(Entry))
        if self._h == NULL:
            raise MemoryError()

    def __dealloc__(self):
        free(self._h)

    def __len__(self):
        return self._n

    @property
    def comparisons(self):
        return self._cmp

    cpdef push(self, double k1, double k2, long long t_gen, long long source_id, long long packet_id):
        cdef Entry* grown
        if self._n == self._cap:
            grown = <Entry*> realloc(self._h, 2 * self._cap * sizeof(Entry))
            if grown == NULL:
                raise MemoryError()
            self._h = grown
            self._cap *= 2
        self._h[self._n].k1 = k1
        self._h[self._n].k2 = k2
        self._h[self._n].tgen = t_gen
        self._h[self._n].src = source_id
        self._h[self._n].pid = packet_id
        self._n += 1
        _sift_up(self._h, self._n - 1, &self._cmp)

    cpdef long long peek(self) except? -1:
        if self._n == 0:
            raise IndexError("peek from an empty heap")
        return self._h[0].pid

    cpdef long long pid_at(self, Py_ssize_t pos) except? -1:
        if pos < 0 or pos >= self._n:
            raise IndexError(pos)
        return self._h[pos].pid

    cpdef long long remove_at(self, Py_ssize_t pos) except? -1:
        if pos < 0 or pos >= self._n:
            raise IndexError(pos)
        return _remove_at(self._h, &self._n, pos, &self._cmp)

    cpdef long long pop(self) except? -1:
        if self._n == 0:
            raise IndexError("pop from an empty heap")
        return _remove_at(self._h, &self._n, 0, &self._cmp)

    def remove(self, long long packet_id):
        cdef Py_ssize_t pos
        for pos in range(self._n):
            if self._h[pos].pid == packet_id:
                return _remove_at(self._h, &self._n, pos, &self._cmp)
        raise KeyError(packet_id)


cdef inline void _keys(int policy, bint degenerate, double coef, double eta, double sigma2,
                       double log_coef, long long t_gen, double v, double* k1, double* k2) nogil:
    cdef double c, s
    if policy == 0:
        if degenerate:
            k1[0] = 0.0
            k2[0] = 0.0
            return
        c = v + eta * sigma2 / (coef * coef - 1.0)
        if c == 0.0:
            k1[0] = 0.0
            k2[0] = 0.0
            return
        s = 1.0 if c > 0.0 else -1.0
        k1[0] = s
        k2[0] = s * (-2.0 * t_gen * log_coef + log(fabs(c)))
    elif policy == 1:
        k1[0] = -<double> t_gen
        k2[0] = 0.0
    elif policy == 2:
        k1[0] = <double> t_gen
        k2[0] = 0.0
    elif policy == 3:
        k1[0] = v
        k2[0] = -<double> t_gen
    else:
        k1[0] = 0.0
        k2[0] = 0.0


cdef inline void _push(Entry* h, Py_ssize_t* n, double k1, double k2, long long tg,
                       long long src, long long pid, long long* cmp) nogil:
    h[n[0]].k1 = k1
    h[n[0]].k2 = k2
    h[n[0]].tgen = tg
    h[n[0]].src = src
    h[n[0]].pid = pid
    n[0] += 1
    _sift_up(h, n[0] - 1, cmp)


def run_episode(double coef, double gain, double sigma2, double eta, int policy, int lag, double reliability,
                double x0, double xhat0,
                const double[::1] noise, const double[:, ::1] arr_u, const double[:, ::1] obs_z,
                const double[::1] rate, const double[::1] sd, const double[::1] var,
                const double[::1] chan_u, const double[::1] pol_u, const unsigned char[::1] access,
                const long long[::1] init_tgen, const long long[::1] init_src,
                const double[::1] init_y, const double[::1] init_var, long long forced_first,
                double[::1] e2_out, long long[::1] dec_out, signed char[::1] deliv_out,
                long long[::1] pk_tgen, long long[::1] pk_src):
    """One episode; returns ``(n_packets, n_delivered, n_removed, final_queue_len)``."""
    cdef Py_ssize_t horizon = noise.shape[0]
    cdef Py_ssize_t n_src = rate.shape[0]
    cdef Py_ssize_t n0 = init_tgen.shape[0]
    cdef Py_ssize_t nmax = n0 + (horizon - 1) * n_src
    cdef bint degenerate = coef == 0.0 or gain == 0.0
    cdef double log_coef = 0.0 if coef == 0.0 else log(fabs(coef))
    cdef Entry* h = <Entry*> malloc((nmax + 1) * sizeof(Entry))
    cdef double* pk_y = <double*> malloc((nmax + 1) * sizeof(double))
    cdef Py_ssize_t n = 0, n_pk = n0, n_deliv = 0, n_removed = 0
    cdef Py_ssize_t slot, r, i, m, q, pos
    cdef long long pid, tg, avail, cmp = 0
    cdef double state, xhat, error, k1, k2
    if h == NULL or pk_y == NULL:
        free(h)
        free(pk_y)
        raise MemoryError()
    try:
        with nogil:
            for i in range(n0):
                pk_tgen[i] = init_tgen[i]
                pk_src[i] = init_src[i]
                pk_y[i] = init_y[i]
            state = x0
            xhat = xhat0
            xhat = coef * xhat
            state = coef * state + noise[0]
            for slot in range(1, horizon):
                error = state - xhat
                e2_out[slot - 1] = error * error
                r = slot - 1
                for i in range(n0):
                    tg = init_tgen[i]
                    avail = 1 if tg <= 1 else tg + lag
                    if avail == slot:
                        _keys(policy, degenerate, coef, eta, sigma2, log_coef, tg, init_var[i], &k1, &k2)
                        _push(h, &n, k1, k2, tg, init_src[i], i, &cmp)
                if lag == 0:
                    for m in range(n_src):
                        if arr_u[r, m] < rate[m]:
                            pk_tgen[n_pk] = slot
                            pk_src[n_pk] = m + 1
                            pk_y[n_pk] = state + sd[m] * obs_z[r, m]
                            _keys(policy, degenerate, coef, eta, sigma2, log_coef, slot, var[m], &k1, &k2)
                            _push(h, &n, k1, k2, slot, m + 1, n_pk, &cmp)
                            n_pk += 1
                if access[r] and n > 0:
                    pos = 0
                    if forced_first >= 0 and slot == 1:
                        for q in range(n):
                            if h[q].pid == forced_first:
                                pos = q
                                break
                    elif policy == 4:
                        pos = <Py_ssize_t> (pol_u[r] * n)
                        if pos >= n:
                            pos = n - 1
                    pid = h[pos].pid
                    dec_out[r] = pid
                    if chan_u[r] < reliability:
                        _remove_at(h, &n, pos, &cmp)
                        n_removed += 1
                        n_deliv += 1
                        deliv_out[r] = 1
                        xhat = coef * xhat + coef * gain * (pow(coef, <double> (slot - pk_tgen[pid])) * pk_y[pid] - xhat)
                    else:
                        deliv_out[r] = 0
                        xhat = coef * xhat
                else:
                    dec_out[r] = -1
                    deliv_out[r] = 0
                    xhat = coef * xhat
                if lag == 1:
                    for m in range(n_src):
                        if arr_u[r, m] < rate[m]:
                            pk_tgen[n_pk] = slot
                            pk_src[n_pk] = m + 1
                            pk_y[n_pk] = state + sd[m] * obs_z[r, m]
                            _keys(policy, degenerate, coef, eta, sigma2, log_coef, slot, var[m], &k1, &k2)
                            _push(h, &n, k1, k2, slot, m + 1, n_pk, &cmp)
                            n_pk += 1
                state = coef * state + noise[slot]
            error = state - xhat
            e2_out[horizon - 1] = error * error
    finally:
        free(h)
        free(pk_y)
    return n_pk, n_deliv, n_removed, n
