# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled event loop. Keep in lockstep with ``_simcore_py.py``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport INFINITY, fabs
from libc.stdlib cimport malloc, free

cnp.import_array()

cdef enum:
    EV_TX_END = 0
    EV_FREE = 1
    EV_FAIL = 2
    EV_RETRY = 3
    C_GENERATED = 0
    C_INI_ATT = 1
    C_INI_FAIL = 2
    C_RE_ATT = 3
    C_RE_FAIL = 4
    C_DELIVERED = 5
    C_LOST_RL = 6
    C_LOST_PRE = 7
    C_IN_FLIGHT = 8
    N_COUNTERS = 9


cdef struct Event:
    double t
    long long seq
    int kind
    int sid


cdef inline bint ev_less(Event a, Event b) nogil:
    if a.t < b.t:
        return True
    if a.t > b.t:
        return False
    return a.seq < b.seq


cdef struct Heap:
    Event* data
    Py_ssize_t size


cdef inline void heap_push(Heap* h, Event ev) nogil:
    cdef Py_ssize_t i = h.size
    cdef Py_ssize_t parent
    h.size += 1
    while i > 0:
        parent = (i - 1) >> 1
        if ev_less(ev, h.data[parent]):
            h.data[i] = h.data[parent]
            i = parent
        else:
            break
    h.data[i] = ev


cdef inline Event heap_pop(Heap* h) nogil:
    cdef Event top = h.data[0]
    cdef Event last
    cdef Py_ssize_t i = 0, child
    h.size -= 1
    if h.size > 0:
        last = h.data[h.size]
        while True:
            child = 2 * i + 1
            if child >= h.size:
                break
            if child + 1 < h.size and ev_less(h.data[child + 1], h.data[child]):
                child += 1
            if ev_less(h.data[child], last):
                h.data[i] = h.data[child]
                i = child
            else:
                break
        h.data[i] = last
    return top


cpdef double overlap_power(double p_j, double d_i, double d_j, double f_delta) nogil:
    cdef double w = 0.5 * (d_i + d_j) - f_delta
    if w <= 0.0:
        return 0.0
    if w > d_i:
        w = d_i
    if w > d_j:
        w = d_j
    return p_j / d_j * w


cdef double peak_interference(double* starts, double* ends, double* gains, Py_ssize_t k) nogil:
    cdef double peak = 0.0, level, t
    cdef Py_ssize_t a, b
    for a in range(k):
        t = starts[a]
        level = 0.0
        for b in range(k):
            if starts[b] <= t and t < ends[b]:
                level += gains[b]
        if level > peak:
            peak = level
    return peak


cdef double c_min_sinr(Py_ssize_t v, double* tx_s, double* tx_e, double* tx_f,
                       double* tx_p, double* tx_d, Py_ssize_t n_log,
                       double noise_w, double t_max,
                       double* buf_s, double* buf_e, double* buf_g, Py_ssize_t buf_cap) nogil:
    cdef double s = tx_s[v], e = tx_e[v], f = tx_f[v], d = tx_d[v], g
    cdef Py_ssize_t m = n_log - 1, k = 0
    while m >= 0 and tx_s[m] > s - t_max:
        if m != v and tx_s[m] < e and tx_e[m] > s:
            g = overlap_power(tx_p[m], d, tx_d[m], fabs(f - tx_f[m]))
            if g > 0.0 and k < buf_cap:
                buf_s[k] = tx_s[m] if tx_s[m] > s else s
                buf_e[k] = tx_e[m] if tx_e[m] < e else e
                buf_g[k] = g
                k += 1
        m -= 1
    return tx_p[v] / (noise_w + peak_interference(buf_s, buf_e, buf_g, k))


def min_sinr(Py_ssize_t v, double[::1] tx_s, double[::1] tx_e, double[::1] tx_f,
             double[::1] tx_p, double[::1] tx_d, Py_ssize_t n_log, double noise_w, double t_max):
    cdef Py_ssize_t cap = n_log + 1
    cdef double* bs = <double*> malloc(cap * sizeof(double))
    cdef double* be = <double*> malloc(cap * sizeof(double))
    cdef double* bg = <double*> malloc(cap * sizeof(double))
    try:
        return c_min_sinr(v, &tx_s[0], &tx_e[0], &tx_f[0], &tx_p[0], &tx_d[0], n_log,
                          noise_w, t_max, bs, be, bg, cap)
    finally:
        free(bs)
        free(be)
        free(bg)


def run_kernel(double[::1] arr_t, long long[::1] arr_s, double[:, ::1] freq, double[:, ::1] ubk,
               long long[::1] sensor_bn, double[::1] sensor_pw,
               double[::1] t_data, double[::1] t_ack, double[::1] w_min, double[::1] t_rnd,
               double[::1] delta, double[::1] noise,
               double nu, int rl, double duration, trace=None):
    cdef Py_ssize_t n_arr = arr_t.shape[0]
    cdef Py_ssize_t n_sens = sensor_bn.shape[0]
    cdef double t_max = 0.0
    cdef Py_ssize_t q
    # look-back window: longest frame among BNs actually present
    for q in range(n_sens):
        if t_data[sensor_bn[q]] > t_max:
            t_max = t_data[sensor_bn[q]]

    cdef cnp.int64_t[:, ::1] counts = np.zeros((4, N_COUNTERS), dtype=np.int64)
    cdef double[::1] delay_sum = np.zeros(4)
    cdef double[::1] airtime = np.zeros(4)
    cdef cnp.int64_t[::1] hist = np.zeros(rl + 1, dtype=np.int64)

    cdef Py_ssize_t cap = n_arr * rl + 1
    cdef double[::1] tx_s = np.zeros(cap)
    cdef double[::1] tx_e = np.zeros(cap)
    cdef double[::1] tx_f = np.zeros(cap)
    cdef double[::1] tx_p = np.zeros(cap)
    cdef double[::1] tx_d = np.zeros(cap)
    cdef double[::1] buf_s = np.zeros(cap)
    cdef double[::1] buf_e = np.zeros(cap)
    cdef double[::1] buf_g = np.zeros(cap)
    cdef Py_ssize_t n_log = 0

    cdef cnp.int64_t[::1] cur = np.full(n_sens, -1, dtype=np.int64)
    cdef cnp.int64_t[::1] pend = np.full(n_sens, -1, dtype=np.int64)
    cdef cnp.int64_t[::1] busy = np.zeros(n_sens, dtype=np.int64)
    cdef cnp.int64_t[::1] att = np.zeros(n_sens, dtype=np.int64)
    cdef double[::1] start = np.zeros(n_sens)
    cdef cnp.int64_t[::1] txi = np.zeros(n_sens, dtype=np.int64)

    cdef Heap heap
    heap.data = <Event*> malloc((n_sens + 16) * sizeof(Event))
    heap.size = 0
    cdef long long seq = 0
    cdef Py_ssize_t ai = 0
    cdef double ta, th, t, sinr
    cdef Event ev
    cdef Py_ssize_t sid, k, pkt, v, attempt
    cdef bint ok
    cdef bint tracing = trace is not None

    try:
        while True:
            ta = arr_t[ai] if ai < n_arr else INFINITY
            th = heap.data[0].t if heap.size > 0 else INFINITY
            if ta == INFINITY and th == INFINITY:
                break
            if ta <= th:
                t = ta
                if t > duration:
                    break
                sid = arr_s[ai]
                k = sensor_bn[sid]
                counts[k, C_GENERATED] += 1
                if tracing:
                    trace.append((t, "arrival", sid, ai, 0, 0.0))
                if busy[sid] == 0:
                    pkt = ai
                    attempt = 1
                    # start_tx
                    cur[sid] = pkt
                    att[sid] = attempt
                    busy[sid] = 1
                    start[sid] = t
                    txi[sid] = n_log
                    tx_s[n_log] = t
                    tx_e[n_log] = t + t_data[k]
                    tx_f[n_log] = freq[pkt, attempt - 1]
                    tx_p[n_log] = sensor_pw[sid]
                    tx_d[n_log] = delta[k]
                    n_log += 1
                    ev.t = t + t_data[k]; ev.seq = seq; ev.kind = EV_TX_END; ev.sid = sid
                    heap_push(&heap, ev)
                    seq += 1
                    if tracing:
                        trace.append((t, "tx_start", sid, pkt, attempt, freq[pkt, attempt - 1]))
                else:
                    if pend[sid] != -1:
                        counts[k, C_LOST_PRE] += 1
                    pend[sid] = ai
                ai += 1
                continue

            ev = heap_pop(&heap)
            t = ev.t
            if t > duration:
                break
            sid = ev.sid
            k = sensor_bn[sid]
            pkt = -1
            if ev.kind == EV_TX_END:
                v = txi[sid]
                sinr = c_min_sinr(v, &tx_s[0], &tx_e[0], &tx_f[0], &tx_p[0], &tx_d[0], n_log,
                                  noise[k], t_max, &buf_s[0], &buf_e[0], &buf_g[0], cap)
                ok = sinr >= nu
                airtime[k] += t_data[k]
                if att[sid] == 1:
                    counts[k, C_INI_ATT] += 1
                    if not ok:
                        counts[k, C_INI_FAIL] += 1
                else:
                    counts[k, C_RE_ATT] += 1
                    if not ok:
                        counts[k, C_RE_FAIL] += 1
                if tracing:
                    trace.append((t, "tx_end", sid, cur[sid], att[sid], sinr))
                if ok:
                    counts[k, C_DELIVERED] += 1
                    delay_sum[k] += t + t_ack[k] - arr_t[cur[sid]]
                    hist[att[sid]] += 1
                    cur[sid] = -1
                    ev.t = t + t_ack[k]; ev.seq = seq; ev.kind = EV_FREE; ev.sid = sid
                else:
                    ev.t = start[sid] + w_min[k]; ev.seq = seq; ev.kind = EV_FAIL; ev.sid = sid
                heap_push(&heap, ev)
                seq += 1
            elif ev.kind == EV_FREE:
                busy[sid] = 0
                if pend[sid] != -1:
                    pkt = pend[sid]
                    pend[sid] = -1
                    attempt = 1
            elif ev.kind == EV_FAIL:
                if pend[sid] != -1:
                    counts[k, C_LOST_PRE] += 1
                    pkt = pend[sid]
                    pend[sid] = -1
                    attempt = 1
                elif att[sid] >= rl:
                    counts[k, C_LOST_RL] += 1
                    cur[sid] = -1
                    busy[sid] = 0
                else:
                    ev.t = t + ubk[cur[sid], att[sid]] * t_rnd[k]; ev.seq = seq; ev.kind = EV_RETRY; ev.sid = sid
                    heap_push(&heap, ev)
                    seq += 1
            else:
                if pend[sid] != -1:
                    counts[k, C_LOST_PRE] += 1
                    pkt = pend[sid]
                    pend[sid] = -1
                    attempt = 1
                else:
                    pkt = cur[sid]
                    attempt = att[sid] + 1

            if pkt != -1:
                cur[sid] = pkt
                att[sid] = attempt
                busy[sid] = 1
                start[sid] = t
                txi[sid] = n_log
                tx_s[n_log] = t
                tx_e[n_log] = t + t_data[k]
                tx_f[n_log] = freq[pkt, attempt - 1]
                tx_p[n_log] = sensor_pw[sid]
                tx_d[n_log] = delta[k]
                n_log += 1
                ev.t = t + t_data[k]; ev.seq = seq; ev.kind = EV_TX_END; ev.sid = sid
                heap_push(&heap, ev)
                seq += 1
                if tracing:
                    trace.append((t, "tx_start", sid, pkt, attempt, freq[pkt, attempt - 1]))
    finally:
        free(heap.data)

    for sid in range(n_sens):
        k = sensor_bn[sid]
        if cur[sid] != -1:
            counts[k, C_IN_FLIGHT] += 1
        if pend[sid] != -1:
            counts[k, C_IN_FLIGHT] += 1

    return {
        "counts": np.asarray(counts),
        "delay_sum": np.asarray(delay_sum),
        "airtime": np.asarray(airtime),
        "hist": np.asarray(hist),
    }
