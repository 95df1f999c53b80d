"""Independent reference implementations used only by the test suite.

Everything here is deliberately written from first principles (loops, plane
rotations, explicit formulas) so it shares no code path with the library it
checks.
"""

import math

import numpy as np


def jacobi_svd(a, sweeps=100, tol=1e-14):
    """One-sided Jacobi SVD: rotate column pairs until mutually orthogonal.

    Returns (U, s, V) with a = U @ diag(s) @ V.T, s sorted nonincreasing.
    Exact to machine precision for small matrices; used as the truth source
    for randomized SVD checks.
    """
    a = np.array(a, dtype=np.float64)
    transposed = a.shape[0] < a.shape[1]
    if transposed:
        a = a.T
    u = a.copy()
    n = u.shape[1]
    v = np.eye(n)
    for _ in range(sweeps):
        rotated = False
        for p in range(n - 1):
            for q in range(p + 1, n):
                app = u[:, p] @ u[:, p]
                aqq = u[:, q] @ u[:, q]
                apq = u[:, p] @ u[:, q]
                if abs(apq) <= tol * math.sqrt(app * aqq) or apq == 0.0:
                    continue
                rotated = True
                zeta = (aqq - app) / (2.0 * apq)
                t = math.copysign(1.0, zeta) / (abs(zeta) +
                                                math.sqrt(1.0 + zeta * zeta))
                c = 1.0 / math.sqrt(1.0 + t * t)
                s = c * t
                up, uq = u[:, p].copy(), u[:, q].copy()
                u[:, p] = c * up - s * uq
                u[:, q] = s * up + c * uq
                vp, vq = v[:, p].copy(), v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
        if not rotated:
            break
    sing = np.sqrt(np.sum(u * u, axis=0))
    safe = np.where(sing > 0.0, sing, 1.0)
    u = u / safe
    order = np.argsort(-sing)
    sing = sing[order]
    u = u[:, order]
    v = v[:, order]
    if transposed:
        return v, sing, u
    return u, sing, v


def mlp_forward_reference(weights, biases, activation, x):
    """Per-sample, per-neuron feed-forward evaluation with Python loops."""
    h = [float(val) for val in x]
    n_layers = len(weights)
    for li in range(n_layers):
        w, b = weights[li], biases[li]
        out = []
        for row in range(w.shape[0]):
            acc = float(b[row])
            for col in range(w.shape[1]):
                acc += float(w[row, col]) * h[col]
            out.append(acc)
        if li < n_layers - 1:
            if activation == "relu":
                h = [max(0.0, val) for val in out]
            elif activation == "tanh":
                h = [math.tanh(val) for val in out]
            else:
                raise ValueError(activation)
        else:
            h = out
    return np.array(h)


def scalar_lstm_step(x, h_prev, c_prev, w_ii, w_if, w_io, w_ig,
                     w_hi, w_hf, w_ho, w_hg, b_i, b_f, b_o, b_g):
    """Single scalar LSTM cell evaluated with math.* only."""
    def sig(v):
        return 1.0 / (1.0 + math.exp(-v))

    gate_i = sig(w_ii * x + w_hi * h_prev + b_i)
    gate_f = sig(w_if * x + w_hf * h_prev + b_f)
    gate_o = sig(w_io * x + w_ho * h_prev + b_o)
    cand = math.tanh(w_ig * x + w_hg * h_prev + b_g)
    c = gate_f * c_prev + gate_i * cand
    h = gate_o * math.tanh(c)
    return h, c


def finite_difference_gradients(loss_fn, params, step=1e-5):
    """Central finite differences of loss_fn() w.r.t. every entry of params.

    params are mutated in place during probing and restored afterwards.
    """
    grads = []
    for p in params:
        g = np.zeros_like(p)
        flat = p.reshape(-1)
        gflat = g.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            f_plus = loss_fn()
            flat[i] = orig - step
            f_minus = loss_fn()
            flat[i] = orig
            gflat[i] = (f_plus - f_minus) / (2.0 * step)
        grads.append(g)
    return grads


def max_relative_error(analytic, numeric, floor=1e-6):
    """Worst-case elementwise relative gradient disagreement."""
    worst = 0.0
    for a, n in zip(analytic, numeric):
        denom = np.maximum(np.maximum(np.abs(a), np.abs(n)), floor)
        worst = max(worst, float(np.max(np.abs(a - n) / denom)))
    return worst


def rk4_trajectory(rhs, z0, dt, steps):
    """Classical RK4 rollout; row k is the state after k+1 steps."""
    z = np.array(z0, dtype=np.float64)
    out = np.empty((steps, len(z)))
    for k in range(steps):
        k1 = rhs(z)
        k2 = rhs(z + 0.5 * dt * k1)
        k3 = rhs(z + 0.5 * dt * k2)
        k4 = rhs(z + dt * k3)
        z = z + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        out[k] = z
    return out
