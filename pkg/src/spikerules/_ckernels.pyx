# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled versions of the hot loops; same contracts as ``_pykernels``."""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log, fabs

cnp.import_array()

cdef enum:
    LOSS_CE = 0


cdef inline void _drive(const double[:, :, ::1] x, Py_ssize_t b, Py_ssize_t t,
                        const double[:, ::1] w_in, const double[:, ::1] w_rec,
                        const double[::1] zp, double[::1] cur) nogil:
    """cur = x[b, t] @ w_in + zp @ w_rec, skipping zero inputs."""
    cdef Py_ssize_t i, j, n_in = w_in.shape[0], n_rec = w_in.shape[1]
    cdef double xi
    for j in range(n_rec):
        cur[j] = 0.0
    for i in range(n_in):
        xi = x[b, t, i]
        if xi != 0.0:
            for j in range(n_rec):
                cur[j] += xi * w_in[i, j]
    for i in range(n_rec):
        if zp[i] != 0.0:
            for j in range(n_rec):
                cur[j] += zp[i] * w_rec[i, j]


def snn_forward(const double[:, :, ::1] x, const double[:, ::1] w_in, const double[:, ::1] w_rec,
                const double[:, ::1] w_out, const double[::1] b_out,
                double alpha, double rho, double beta, double kappa, double v_th):
    cdef Py_ssize_t batch = x.shape[0], steps = x.shape[1], n_in = x.shape[2]
    cdef Py_ssize_t n_rec = w_out.shape[0], n_out = w_out.shape[1]
    zs_arr = np.zeros((batch, steps, n_rec))
    ys_arr = np.zeros((batch, steps, n_out))
    cdef double[:, :, ::1] zs = zs_arr
    cdef double[:, :, ::1] ys = ys_arr
    cdef double[::1] v = np.zeros(n_rec), a = np.zeros(n_rec), z = np.zeros(n_rec)
    cdef double[::1] zp = np.zeros(n_rec), y = np.zeros(n_out), cur = np.zeros(n_rec)
    cdef Py_ssize_t b, t, i, j, k
    cdef double s
    with nogil:
        for b in range(batch):
            for j in range(n_rec):
                v[j] = 0.0
                a[j] = 0.0
                z[j] = 0.0
            for k in range(n_out):
                y[k] = 0.0
            for t in range(steps):
                for j in range(n_rec):
                    zp[j] = z[j]
                _drive(x, b, t, w_in, w_rec, zp, cur)
                for j in range(n_rec):
                    v[j] = alpha * v[j] + cur[j] - zp[j] * (v_th + beta * a[j])
                    a[j] = rho * a[j] + zp[j]
                    z[j] = 1.0 if v[j] - (v_th + beta * a[j]) >= 0 else 0.0
                    zs[b, t, j] = z[j]
                for k in range(n_out):
                    s = 0.0
                    for j in range(n_rec):
                        if z[j] != 0.0:
                            s += z[j] * w_out[j, k]
                    y[k] = kappa * y[k] + s + b_out[k]
                    ys[b, t, k] = y[k]
    return zs_arr, ys_arr


cdef inline void _trace_row(double ev, double ev_old, double[::1] ea, double[::1] f,
                            double[::1] esum, double[::1] g, const double[::1] psi,
                            const double[::1] psi_prev, const double[::1] decay,
                            const double[::1] learn, double beta, double kappa,
                            bint adaptive) nogil:
    """Advance the traces of one presynaptic row and accumulate its gradient."""
    cdef Py_ssize_t j, n = f.shape[0]
    cdef double e, eaj
    for j in range(n):
        if adaptive:
            eaj = psi_prev[j] * ev_old + decay[j] * ea[j]
            ea[j] = eaj
            e = psi[j] * (ev - beta * eaj)
        else:
            e = psi[j] * ev
        f[j] = kappa * f[j] + e
        esum[j] += e
        g[j] += f[j] * learn[j]


def eprop_online(const double[:, :, ::1] x, const double[:, :, ::1] targets,
                 const double[::1] step_weight, int loss_kind,
                 const double[:, ::1] w_in, const double[:, ::1] w_rec,
                 const double[:, ::1] w_out, const double[::1] b_out,
                 const double[:, ::1] feedback,
                 double alpha, double rho, double beta, double kappa, double v_th, double gamma):
    cdef Py_ssize_t batch = x.shape[0], steps = x.shape[1], n_in = x.shape[2]
    cdef Py_ssize_t n_rec = w_out.shape[0], n_out = w_out.shape[1]
    cdef bint adaptive = beta != 0.0

    g_in_a = np.zeros((n_in, n_rec))
    g_rec_a = np.zeros((n_rec, n_rec))
    g_out_a = np.zeros((n_rec, n_out))
    g_b_a = np.zeros(n_out)
    esum_in_a = np.zeros((n_in, n_rec))
    esum_rec_a = np.zeros((n_rec, n_rec))
    zs_arr = np.zeros((batch, steps, n_rec))
    ys_arr = np.zeros((batch, steps, n_out))
    cdef double[:, ::1] g_in = g_in_a, g_rec = g_rec_a, g_out = g_out_a
    cdef double[::1] g_b = g_b_a
    cdef double[:, ::1] esum_in = esum_in_a, esum_rec = esum_rec_a
    cdef double[:, :, ::1] zs = zs_arr, ys = ys_arr

    cdef double[::1] v = np.zeros(n_rec), a = np.zeros(n_rec), z = np.zeros(n_rec)
    cdef double[::1] zp = np.zeros(n_rec), psi = np.zeros(n_rec), psi_prev = np.zeros(n_rec)
    cdef double[::1] y = np.zeros(n_out), dy = np.zeros(n_out), learn = np.zeros(n_rec)
    cdef double[::1] zbar = np.zeros(n_rec), cur = np.zeros(n_rec), decay = np.zeros(n_rec)
    cdef double[::1] ev_in = np.zeros(n_in), ev_rec = np.zeros(n_rec)
    cdef double[::1] ev_in_old = np.zeros(n_in), ev_rec_old = np.zeros(n_rec)
    cdef double[:, ::1] ea_in = np.zeros((n_in, n_rec)), ea_rec = np.zeros((n_rec, n_rec))
    cdef double[:, ::1] f_in = np.zeros((n_in, n_rec)), f_rec = np.zeros((n_rec, n_rec))

    cdef Py_ssize_t b, t, i, j, k
    cdef double s, dist, wt, mx, tot, loss = 0.0, bbar
    with nogil:
        for b in range(batch):
            for j in range(n_rec):
                v[j] = 0.0; a[j] = 0.0; z[j] = 0.0; psi_prev[j] = 0.0; zbar[j] = 0.0
                ev_rec[j] = 0.0
                for i in range(n_rec):
                    ea_rec[i, j] = 0.0
                    f_rec[i, j] = 0.0
                for i in range(n_in):
                    ea_in[i, j] = 0.0
                    f_in[i, j] = 0.0
            for i in range(n_in):
                ev_in[i] = 0.0
            for k in range(n_out):
                y[k] = 0.0
            bbar = 0.0
            for t in range(steps):
                # neuron dynamics
                for j in range(n_rec):
                    zp[j] = z[j]
                _drive(x, b, t, w_in, w_rec, zp, cur)
                for j in range(n_rec):
                    v[j] = alpha * v[j] + cur[j] - zp[j] * (v_th + beta * a[j])
                    a[j] = rho * a[j] + zp[j]
                    dist = v[j] - (v_th + beta * a[j])
                    z[j] = 1.0 if dist >= 0 else 0.0
                    psi[j] = gamma * (1.0 - fabs(dist) / v_th)
                    if psi[j] < 0.0:
                        psi[j] = 0.0
                    zs[b, t, j] = z[j]
                # readout and learning signal
                wt = step_weight[t] / batch
                mx = -1e300
                for k in range(n_out):
                    s = 0.0
                    for j in range(n_rec):
                        if z[j] != 0.0:
                            s += z[j] * w_out[j, k]
                    y[k] = kappa * y[k] + s + b_out[k]
                    ys[b, t, k] = y[k]
                    if y[k] > mx:
                        mx = y[k]
                if loss_kind == LOSS_CE:
                    tot = 0.0
                    for k in range(n_out):
                        tot += exp(y[k] - mx)
                    for k in range(n_out):
                        loss -= wt * targets[b, t, k] * (y[k] - mx - log(tot))
                        dy[k] = wt * (exp(y[k] - mx) / tot - targets[b, t, k])
                else:
                    for k in range(n_out):
                        s = y[k] - targets[b, t, k]
                        loss += wt * s * s / n_out
                        dy[k] = wt * 2.0 * s / n_out
                for j in range(n_rec):
                    s = 0.0
                    for k in range(n_out):
                        s += dy[k] * feedback[k, j]
                    learn[j] = s
                # eligibility traces
                for i in range(n_in):
                    ev_in_old[i] = ev_in[i]
                    ev_in[i] = alpha * ev_in[i] + x[b, t, i]
                for i in range(n_rec):
                    ev_rec_old[i] = ev_rec[i]
                    ev_rec[i] = alpha * ev_rec[i] + zp[i]
                for j in range(n_rec):
                    decay[j] = rho - psi_prev[j] * beta
                for i in range(n_in):
                    _trace_row(ev_in[i], ev_in_old[i], ea_in[i], f_in[i], esum_in[i], g_in[i],
                               psi, psi_prev, decay, learn, beta, kappa, adaptive)
                for i in range(n_rec):
                    _trace_row(ev_rec[i], ev_rec_old[i], ea_rec[i], f_rec[i], esum_rec[i], g_rec[i],
                               psi, psi_prev, decay, learn, beta, kappa, adaptive)
                for j in range(n_rec):
                    psi_prev[j] = psi[j]
                # exact readout gradients
                bbar = kappa * bbar + 1.0
                for j in range(n_rec):
                    zbar[j] = kappa * zbar[j] + z[j]
                    for k in range(n_out):
                        g_out[j, k] += zbar[j] * dy[k]
                for k in range(n_out):
                    g_b[k] += bbar * dy[k]
    return {
        "loss": loss, "w_in": g_in_a, "w_rec": g_rec_a, "w_out": g_out_a, "b_out": g_b_a,
        "esum_in": esum_in_a, "esum_rec": esum_rec_a, "spikes": zs_arr, "outputs": ys_arr,
    }


def step_forward(const double[::1] signal, double threshold):
    cdef Py_ssize_t n = signal.shape[0], t
    out_arr = np.zeros(n, dtype=np.int8)
    cdef signed char[::1] out = out_arr
    cdef double base = signal[0]
    with nogil:
        for t in range(1, n):
            if signal[t] > base + threshold:
                out[t] = 1
                base += threshold
            elif signal[t] < base - threshold:
                out[t] = -1
                base -= threshold
    return out_arr


def moving_window(const double[::1] signal, double threshold, Py_ssize_t window):
    cdef Py_ssize_t n = signal.shape[0], t, lo, i
    out_arr = np.zeros(n, dtype=np.int8)
    cdef signed char[::1] out = out_arr
    cdef double base
    with nogil:
        for t in range(1, n):
            lo = t - window if t > window else 0
            base = 0.0
            for i in range(lo, t):
                base += signal[i]
            base = base / (t - lo)
            if signal[t] > base + threshold:
                out[t] = 1
            elif signal[t] < base - threshold:
                out[t] = -1
    return out_arr
