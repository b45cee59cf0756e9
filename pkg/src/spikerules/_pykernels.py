"""Pure numpy versions of the hot loops. Reference for ``_ckernels``."""

import numpy as np

LOSS_CE = 0
LOSS_MSE = 1


def snn_forward(x, w_in, w_rec, w_out, b_out, alpha, rho, beta, kappa, v_th):
    batch, steps, _ = x.shape
    n_rec, n_out = w_out.shape
    v = np.zeros((batch, n_rec))
    a = np.zeros((batch, n_rec))
    z = np.zeros((batch, n_rec))
    y = np.zeros((batch, n_out))
    zs = np.empty((batch, steps, n_rec))
    ys = np.empty((batch, steps, n_out))
    for t in range(steps):
        v = alpha * v + x[:, t] @ w_in + z @ w_rec - z * (v_th + beta * a)
        a = rho * a + z
        z = (v - (v_th + beta * a) >= 0).astype(np.float64)
        y = kappa * y + z @ w_out + b_out
        zs[:, t] = z
        ys[:, t] = y
    return zs, ys


def _softmax(y):
    e = np.exp(y - y.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def eprop_online(x, targets, step_weight, loss_kind, w_in, w_rec, w_out, b_out, feedback,
                 alpha, rho, beta, kappa, v_th, gamma):
    """Forward pass with eligibility traces and learning signals, strictly in time order.

    Returns a dict with the mean loss, gradients for all four weights,
    per-synapse eligibility sums (for rate regularization), spikes and outputs.
    """
    batch, steps, n_in = x.shape
    n_rec, n_out = w_out.shape
    adaptive = beta != 0.0
    v = np.zeros((batch, n_rec))
    a = np.zeros((batch, n_rec))
    z = np.zeros((batch, n_rec))
    y = np.zeros((batch, n_out))
    psi_prev = np.zeros((batch, n_rec))
    ev_in = np.zeros((batch, n_in))
    ev_rec = np.zeros((batch, n_rec))
    ea_in = np.zeros((batch, n_in, n_rec))
    ea_rec = np.zeros((batch, n_rec, n_rec))
    f_in = np.zeros((batch, n_in, n_rec))
    f_rec = np.zeros((batch, n_rec, n_rec))
    zbar = np.zeros((batch, n_rec))
    bbar = 0.0
    g_in = np.zeros((n_in, n_rec))
    g_rec = np.zeros((n_rec, n_rec))
    g_out = np.zeros((n_rec, n_out))
    g_b = np.zeros(n_out)
    esum_in = np.zeros((n_in, n_rec))
    esum_rec = np.zeros((n_rec, n_rec))
    zs = np.empty((batch, steps, n_rec))
    ys = np.empty((batch, steps, n_out))
    loss = 0.0
    for t in range(steps):
        z_prev = z
        x_t = x[:, t]
        v = alpha * v + x_t @ w_in + z_prev @ w_rec - z_prev * (v_th + beta * a)
        a = rho * a + z_prev
        dist = v - (v_th + beta * a)
        z = (dist >= 0).astype(np.float64)
        psi = gamma * np.maximum(0.0, 1.0 - np.abs(dist) / v_th)

        if adaptive:
            decay = rho - psi_prev * beta
            ea_in = psi_prev[:, None, :] * ev_in[:, :, None] + decay[:, None, :] * ea_in
            ea_rec = psi_prev[:, None, :] * ev_rec[:, :, None] + decay[:, None, :] * ea_rec
        ev_in = alpha * ev_in + x_t
        ev_rec = alpha * ev_rec + z_prev
        if adaptive:
            e_in = psi[:, None, :] * (ev_in[:, :, None] - beta * ea_in)
            e_rec = psi[:, None, :] * (ev_rec[:, :, None] - beta * ea_rec)
        else:
            e_in = psi[:, None, :] * ev_in[:, :, None]
            e_rec = psi[:, None, :] * ev_rec[:, :, None]
        f_in = kappa * f_in + e_in
        f_rec = kappa * f_rec + e_rec
        esum_in += e_in.sum(axis=0)
        esum_rec += e_rec.sum(axis=0)
        psi_prev = psi

        y = kappa * y + z @ w_out + b_out
        tgt = targets[:, t]
        wt = step_weight[t] / batch
        if loss_kind == LOSS_CE:
            p = _softmax(y)
            logp = y - y.max(axis=1, keepdims=True)
            logp = logp - np.log(np.exp(logp).sum(axis=1, keepdims=True))
            loss -= wt * (tgt * logp).sum()
            dy = wt * (p - tgt)
        else:
            diff = y - tgt
            loss += wt * (diff * diff).sum() / n_out
            dy = wt * 2.0 * diff / n_out
        learn = dy @ feedback
        g_in += np.einsum("bij,bj->ij", f_in, learn)
        g_rec += np.einsum("bij,bj->ij", f_rec, learn)
        zbar = kappa * zbar + z
        bbar = kappa * bbar + 1.0
        g_out += zbar.T @ dy
        g_b += bbar * dy.sum(axis=0)
        zs[:, t] = z
        ys[:, t] = y
    return {
        "loss": loss, "w_in": g_in, "w_rec": g_rec, "w_out": g_out, "b_out": g_b,
        "esum_in": esum_in, "esum_rec": esum_rec, "spikes": zs, "outputs": ys,
    }


def step_forward(signal, threshold):
    out = np.zeros(signal.shape[0], dtype=np.int8)
    base = signal[0]
    for t in range(1, signal.shape[0]):
        if signal[t] > base + threshold:
            out[t] = 1
            base += threshold
        elif signal[t] < base - threshold:
            out[t] = -1
            base -= threshold
    return out


def moving_window(signal, threshold, window):
    n = signal.shape[0]
    out = np.zeros(n, dtype=np.int8)
    for t in range(1, n):
        lo = max(0, t - window)
        base = signal[lo:t].sum() / (t - lo)
        if signal[t] > base + threshold:
            out[t] = 1
        elif signal[t] < base - threshold:
            out[t] = -1
    return out
