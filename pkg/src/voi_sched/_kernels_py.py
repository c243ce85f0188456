"""Pure-Python kernels, mirroring ``_kernels.pyx`` operation for operation.

Both backends must produce bit-identical results: same heap layout, same
floating-point expressions in the same order.
"""
import math

POLICY_CODES = {"index-voi": 0, "freshest-first": 1, "fifo": 2, "best-sensor": 3, "random": 4}


class PacketHeap:
    """Binary min-heap of ``(k1, k2, t_gen, source_id, packet_id)`` entries."""

    def __init__(self):
        self._h = []
        self.comparisons = 0

    def __len__(self):
        return len(self._h)

    def _less(self, i, j):
        self.comparisons += 1
        return self._h[i] < self._h[j]

    def _sift_up(self, pos):
        h = self._h
        while pos > 0:
            parent = (pos - 1) >> 1
            if self._less(pos, parent):
                h[pos], h[parent] = h[parent], h[pos]
                pos = parent
            else:
                break

    def _sift_down(self, pos):
        h = self._h
        n = len(h)
        while True:
            child = 2 * pos + 1
            if child >= n:
                break
            if child + 1 < n and self._less(child + 1, child):
                child += 1
            if self._less(child, pos):
                h[pos], h[child] = h[child], h[pos]
                pos = child
            else:
                break

    def push(self, k1, k2, t_gen, source_id, packet_id):
        self._h.append((float(k1), float(k2), int(t_gen), int(source_id), int(packet_id)))
        self._sift_up(len(self._h) - 1)

    def peek(self):
        if not self._h:
            raise IndexError("peek from an empty heap")
        return self._h[0][4]

    def pid_at(self, pos):
        return self._h[pos][4]

    def remove_at(self, pos):
        h = self._h
        pid = h[pos][4]
        last = h.pop()
        if pos < len(h):
            h[pos] = last
            if pos > 0 and self._less(pos, (pos - 1) >> 1):
                self._sift_up(pos)
            else:
                self._sift_down(pos)
        return pid

    def pop(self):
        if not self._h:
            raise IndexError("pop from an empty heap")
        return self.remove_at(0)

    def remove(self, packet_id):
        for pos, entry in enumerate(self._h):
            if entry[4] == packet_id:
                return self.remove_at(pos)
        raise KeyError(packet_id)


def _keys(policy, degenerate, coef, eta, sigma2, log_coef, t_gen, v):
    if policy == 0:
        if degenerate:
            return 0.0, 0.0
        c = v + eta * sigma2 / (coef * coef - 1.0)
        if c == 0.0:
            return 0.0, 0.0
        s = 1.0 if c > 0.0 else -1.0
        return s, s * (-2.0 * t_gen * log_coef + math.log(abs(c)))
    if policy == 1:
        return -float(t_gen), 0.0
    if policy == 2:
        return float(t_gen), 0.0
    if policy == 3:
        return v, -float(t_gen)
    return 0.0, 0.0


def run_episode(coef, gain, sigma2, eta, policy, lag, reliability, x0, xhat0,
                noise, arr_u, obs_z, rate, sd, var, chan_u, pol_u, access,
                init_tgen, init_src, init_y, init_var, forced_first,
                e2_out, dec_out, deliv_out, pk_tgen, pk_src):
    """One episode; returns ``(n_packets, n_delivered, n_removed, final_queue_len)``."""
    noise, arr_u, obs_z = noise.tolist(), arr_u.tolist(), obs_z.tolist()
    rate, sd, var = rate.tolist(), sd.tolist(), var.tolist()
    chan_u, pol_u, access = chan_u.tolist(), pol_u.tolist(), access.tolist()
    init_tgen, init_src = init_tgen.tolist(), init_src.tolist()
    init_y, init_var = init_y.tolist(), init_var.tolist()
    horizon = len(noise)
    n_src = len(rate)
    n0 = len(init_tgen)
    degenerate = coef == 0.0 or gain == 0.0
    log_coef = 0.0 if coef == 0.0 else math.log(abs(coef))
    heap = PacketHeap()
    pk_y = [0.0] * (n0 + (horizon - 1) * n_src)

    for i in range(n0):
        pk_tgen[i] = init_tgen[i]
        pk_src[i] = init_src[i]
        pk_y[i] = init_y[i]
    n_pk = n0
    n_deliv = 0
    n_removed = 0

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
                k1, k2 = _keys(policy, degenerate, coef, eta, sigma2, log_coef, tg, init_var[i])
                heap.push(k1, k2, tg, init_src[i], i)
        if lag == 0:
            for m in range(n_src):
                if arr_u[r][m] < rate[m]:
                    pk_tgen[n_pk] = slot
                    pk_src[n_pk] = m + 1
                    pk_y[n_pk] = state + sd[m] * obs_z[r][m]
                    k1, k2 = _keys(policy, degenerate, coef, eta, sigma2, log_coef, slot, var[m])
                    heap.push(k1, k2, slot, m + 1, n_pk)
                    n_pk += 1
        n = len(heap)
        if access[r] and n > 0:
            pos = 0
            if forced_first >= 0 and slot == 1:
                for q in range(n):
                    if heap.pid_at(q) == forced_first:
                        pos = q
                        break
            elif policy == 4:
                pos = int(pol_u[r] * n)
                if pos >= n:
                    pos = n - 1
            pid = heap.pid_at(pos)
            dec_out[r] = pid
            if chan_u[r] < reliability:
                heap.remove_at(pos)
                n_removed += 1
                n_deliv += 1
                deliv_out[r] = 1
                tau = slot - pk_tgen[pid]
                xhat = coef * xhat + coef * gain * (coef ** float(tau) * pk_y[pid] - xhat)
            else:
                deliv_out[r] = 0
                xhat = coef * xhat
        else:
            dec_out[r] = -1
            deliv_out[r] = 0
            xhat = coef * xhat
        if lag == 1:
            for m in range(n_src):
                if arr_u[r][m] < rate[m]:
                    pk_tgen[n_pk] = slot
                    pk_src[n_pk] = m + 1
                    pk_y[n_pk] = state + sd[m] * obs_z[r][m]
                    k1, k2 = _keys(policy, degenerate, coef, eta, sigma2, log_coef, slot, var[m])
                    heap.push(k1, k2, slot, m + 1, n_pk)
                    n_pk += 1
        state = coef * state + noise[slot]

    error = state - xhat
    e2_out[horizon - 1] = error * error
    return n_pk, n_deliv, n_removed, len(heap)
