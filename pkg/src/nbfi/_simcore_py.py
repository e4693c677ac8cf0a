"""Pure-Python event loop; mirrors ``_simcore.pyx`` operation for operation.

All randomness is drawn up front by the caller, so both backends consume
identical inputs and must return identical counters.
"""

import heapq
import math

import numpy as np

EV_TX_END = 0
EV_FREE = 1
EV_FAIL = 2
EV_RETRY = 3

# columns of the per-BN counter matrix
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


def overlap_power(p_j, d_i, d_j, f_delta):
    half_sum = 0.5 * (d_i + d_j)
    w = half_sum - f_delta
    if w <= 0.0:
        return 0.0
    if w > d_i:
        w = d_i
    if w > d_j:
        w = d_j
    return p_j / d_j * w


def peak_interference(starts, ends, gains):
    """Largest total interference over any instant of the victim's frame."""
    peak = 0.0
    k = len(gains)
    for a in range(k):
        t = starts[a]
        level = 0.0
        for b in range(k):
            if starts[b] <= t < ends[b]:
                level += gains[b]
        if level > peak:
            peak = level
    return peak


def min_sinr(v, tx_s, tx_e, tx_f, tx_p, tx_d, n_log, noise_w, t_max):
    s = tx_s[v]
    e = tx_e[v]
    f = tx_f[v]
    d = tx_d[v]
    starts = []
    ends = []
    gains = []
    m = n_log - 1
    while m >= 0 and tx_s[m] > s - t_max:
        if m != v and tx_s[m] < e and tx_e[m] > s:
            g = overlap_power(tx_p[m], d, tx_d[m], abs(f - tx_f[m]))
            if g > 0.0:
                starts.append(tx_s[m] if tx_s[m] > s else s)
                ends.append(tx_e[m] if tx_e[m] < e else e)
                gains.append(g)
        m -= 1
    return tx_p[v] / (noise_w + peak_interference(starts, ends, gains))


def run_kernel(arr_t, arr_s, freq, ubk, sensor_bn, sensor_pw,
               t_data, t_ack, w_min, t_rnd, delta, noise,
               nu, rl, duration, trace=None):
    n_arr = len(arr_t)
    n_sens = len(sensor_bn)
    arr_t = [float(x) for x in arr_t]
    arr_s = [int(x) for x in arr_s]
    sensor_bn = [int(x) for x in sensor_bn]
    sensor_pw = [float(x) for x in sensor_pw]
    t_data = [float(x) for x in t_data]
    t_ack = [float(x) for x in t_ack]
    w_min = [float(x) for x in w_min]
    t_rnd = [float(x) for x in t_rnd]
    delta = [float(x) for x in delta]
    noise = [float(x) for x in noise]
    # look-back window: longest frame among BNs actually present
    t_max = max(t_data[k] for k in set(sensor_bn))

    counts = [[0] * N_COUNTERS for _ in range(4)]
    delay_sum = [0.0] * 4
    airtime = [0.0] * 4
    hist = [0] * (rl + 1)

    cap = n_arr * rl + 1
    tx_s = [0.0] * cap
    tx_e = [0.0] * cap
    tx_f = [0.0] * cap
    tx_p = [0.0] * cap
    tx_d = [0.0] * cap
    n_log = 0

    cur = [-1] * n_sens
    pend = [-1] * n_sens
    busy = [0] * n_sens
    att = [0] * n_sens
    start = [0.0] * n_sens
    txi = [0] * n_sens

    heap = []
    seq = 0
    ai = 0

    def start_tx(sid, pkt, attempt, t):
        nonlocal n_log, seq
        k = sensor_bn[sid]
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
        heapq.heappush(heap, (t + t_data[k], seq, EV_TX_END, sid))
        seq += 1
        if trace is not None:
            trace.append((t, "tx_start", sid, pkt, attempt, float(freq[pkt, attempt - 1])))

    while True:
        ta = arr_t[ai] if ai < n_arr else math.inf
        th = heap[0][0] if heap else math.inf
        if ta == math.inf and th == math.inf:
            break
        if ta <= th:
            t = ta
            if t > duration:
                break
            sid = arr_s[ai]
            k = sensor_bn[sid]
            counts[k][C_GENERATED] += 1
            if trace is not None:
                trace.append((t, "arrival", sid, ai, 0, 0.0))
            if busy[sid] == 0:
                start_tx(sid, ai, 1, t)
            else:
                if pend[sid] != -1:
                    counts[k][C_LOST_PRE] += 1
                pend[sid] = ai
            ai += 1
            continue

        t, _, kind, sid = heapq.heappop(heap)
        if t > duration:
            break
        k = sensor_bn[sid]
        if kind == EV_TX_END:
            v = txi[sid]
            sinr = min_sinr(v, tx_s, tx_e, tx_f, tx_p, tx_d, n_log, noise[k], t_max)
            ok = sinr >= nu
            airtime[k] += t_data[k]
            if att[sid] == 1:
                counts[k][C_INI_ATT] += 1
                if not ok:
                    counts[k][C_INI_FAIL] += 1
            else:
                counts[k][C_RE_ATT] += 1
                if not ok:
                    counts[k][C_RE_FAIL] += 1
            if trace is not None:
                trace.append((t, "tx_end", sid, cur[sid], att[sid], sinr))
            if ok:
                counts[k][C_DELIVERED] += 1
                delay_sum[k] += t + t_ack[k] - arr_t[cur[sid]]
                hist[att[sid]] += 1
                cur[sid] = -1
                heapq.heappush(heap, (t + t_ack[k], seq, EV_FREE, sid))
            else:
                heapq.heappush(heap, (start[sid] + w_min[k], seq, EV_FAIL, sid))
            seq += 1
        elif kind == EV_FREE:
            busy[sid] = 0
            if pend[sid] != -1:
                pkt = pend[sid]
                pend[sid] = -1
                start_tx(sid, pkt, 1, t)
        elif kind == EV_FAIL:
            if pend[sid] != -1:
                counts[k][C_LOST_PRE] += 1
                pkt = pend[sid]
                pend[sid] = -1
                start_tx(sid, pkt, 1, t)
            elif att[sid] >= rl:
                counts[k][C_LOST_RL] += 1
                cur[sid] = -1
                busy[sid] = 0
            else:
                heapq.heappush(heap, (t + ubk[cur[sid], att[sid]] * t_rnd[k], seq, EV_RETRY, sid))
                seq += 1
        else:
            if pend[sid] != -1:
                counts[k][C_LOST_PRE] += 1
                pkt = pend[sid]
                pend[sid] = -1
                start_tx(sid, pkt, 1, t)
            else:
                start_tx(sid, cur[sid], att[sid] + 1, t)

    for sid in range(n_sens):
        k = sensor_bn[sid]
        if cur[sid] != -1:
            counts[k][C_IN_FLIGHT] += 1
        if pend[sid] != -1:
            counts[k][C_IN_FLIGHT] += 1

    return {
        "counts": np.array(counts, dtype=np.int64),
        "delay_sum": np.array(delay_sum),
        "airtime": np.array(airtime),
        "hist": np.array(hist, dtype=np.int64),
    }
