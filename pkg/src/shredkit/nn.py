"""Recurrent cells, dense layers, and the Adam optimizer, all in numpy.

Sequence arrays are time-major, (steps, batch, features): each per-step
slice is then contiguous, so the recurrences run as matmuls with ``out=``
targets plus in-place elementwise passes, which is where most of the
training time goes. Forward passes keep whatever the exact backward pass
needs; backward passes return parameter gradients in params() order.
"""

from __future__ import annotations

import numpy as np

Array = np.ndarray


def sigmoid(x: Array) -> Array:
    # exp may overflow to inf for very negative inputs; 1/(1+inf) -> 0 is
    # exactly the saturated value, so the warning is suppressed, not the math
    with np.errstate(over="ignore"):
        return 1.0 / (1.0 + np.exp(-x))


def _sigmoid_inplace(x: Array) -> None:
    np.negative(x, out=x)
    with np.errstate(over="ignore"):
        np.exp(x, out=x)
    x += 1.0
    np.reciprocal(x, out=x)


def activation_forward(x: Array, kind: str) -> Array:
    if kind == "relu":
        return np.maximum(x, 0.0)
    if kind == "tanh":
        return np.tanh(x)
    raise ValueError(f"unknown activation {kind!r}")


def activation_backward(grad: Array, out: Array, kind: str) -> Array:
    if kind == "relu":
        return grad * (out > 0.0)
    if kind == "tanh":
        return grad * (1.0 - out * out)
    raise ValueError(f"unknown activation {kind!r}")


def _uniform(rng: np.random.Generator, shape, fan_in: int) -> Array:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


class RecurrentLayer:
    """One GRU or LSTM layer over time-major sequences, zero initial state.

    Weight layout packs the gates row-wise: LSTM [input, forget, output,
    candidate] and GRU [reset, update, candidate]. Input and hidden paths
    carry separate biases; for the GRU the hidden-side candidate bias sits
    inside the reset product, n = tanh(Wx x + bx + r * (Wh h + bh)).
    """

    def __init__(self, kind: str, input_size: int, hidden_size: int,
                 rng: np.random.Generator):
        if kind not in ("gru", "lstm"):
            raise ValueError(f"unknown recurrent kind {kind!r}")
        self.kind = kind
        self.input_size = input_size
        self.hidden_size = hidden_size
        gates = 4 if kind == "lstm" else 3
        h = hidden_size
        self.W_ih = _uniform(rng, (gates * h, input_size), h)
        self.W_hh = _uniform(rng, (gates * h, h), h)
        self.b_ih = _uniform(rng, gates * h, h)
        self.b_hh = _uniform(rng, gates * h, h)

    def params(self) -> list[Array]:
        return [self.W_ih, self.W_hh, self.b_ih, self.b_hh]

    def param_names(self) -> list[str]:
        return ["W_ih", "W_hh", "b_ih", "b_hh"]

    def forward(self, x: Array) -> tuple[Array, dict]:
        """Run the cell over x (steps, batch, input) -> (steps, batch, hidden)."""
        if self.kind == "lstm":
            return self._lstm_forward(x)
        return self._gru_forward(x)

    def backward(self, d_out: Array, cache: dict) -> tuple[list[Array], Array]:
        """Gradients for d_out (steps, batch, hidden); returns (param grads, dx)."""
        if self.kind == "lstm":
            return self._lstm_backward(d_out, cache)
        return self._gru_backward(d_out, cache)

    # LSTM

    def _lstm_forward(self, x):
        steps, b, _ = x.shape
        h = self.hidden_size
        gates = x.reshape(steps * b, -1) @ self.W_ih.T
        gates += self.b_ih + self.b_hh
        gates = gates.reshape(steps, b, 4 * h)

        c_all = np.empty((steps, b, h))
        tc_all = np.empty((steps, b, h))
        out = np.empty((steps, b, h))
        w_hh_t = np.ascontiguousarray(self.W_hh.T)
        scratch = np.empty((b, 4 * h))
        tmp = np.empty((b, h))
        h_t = np.zeros((b, h))
        c_t = np.zeros((b, h))
        with np.errstate(over="ignore"):
            for t in range(steps):
                g_t = gates[t]
                np.dot(h_t, w_hh_t, out=scratch)
                g_t += scratch
                _sigmoid_inplace(g_t[:, :3 * h])
                cand = g_t[:, 3 * h:]
                np.tanh(cand, out=cand)
                c_row = c_all[t]
                np.multiply(g_t[:, h:2 * h], c_t, out=c_row)
                np.multiply(g_t[:, :h], cand, out=tmp)
                c_row += tmp
                np.tanh(c_row, out=tc_all[t])
                np.multiply(g_t[:, 2 * h:3 * h], tc_all[t], out=out[t])
                h_t = out[t]
                c_t = c_row
        cache = dict(x=x, gates=gates, c=c_all, tc=tc_all, out=out)
        return out, cache

    def _lstm_backward(self, d_out, cache):
        x, gates = cache["x"], cache["gates"]
        c_all, tc_all, out = cache["c"], cache["tc"], cache["out"]
        steps, b, _ = x.shape
        h = self.hidden_size

        d_pre = np.empty((steps, b, 4 * h))
        dh = np.zeros((b, h))
        dc = np.zeros((b, h))
        tmp = np.empty((b, h))
        zeros = np.zeros((b, h))
        for t in range(steps - 1, -1, -1):
            dh += d_out[t]
            g_t = gates[t]
            i, f = g_t[:, :h], g_t[:, h:2 * h]
            o, g = g_t[:, 2 * h:3 * h], g_t[:, 3 * h:]
            tc = tc_all[t]
            dp = d_pre[t]
            dpi, dpf = dp[:, :h], dp[:, h:2 * h]
            dpo, dpg = dp[:, 2 * h:3 * h], dp[:, 3 * h:]
            # output gate: do = dh*tc, dpo = do*o*(1-o)
            np.multiply(dh, tc, out=dpo)
            dpo *= o
            np.subtract(1.0, o, out=tmp)
            dpo *= tmp
            # cell state: dc += dh*o*(1-tc^2)
            np.multiply(tc, tc, out=tmp)
            np.subtract(1.0, tmp, out=tmp)
            tmp *= o
            tmp *= dh
            dc += tmp
            # input gate: dpi = (dc*g)*i*(1-i)
            np.multiply(dc, g, out=dpi)
            dpi *= i
            np.subtract(1.0, i, out=tmp)
            dpi *= tmp
            # forget gate: dpf = (dc*c_prev)*f*(1-f)
            c_prev = c_all[t - 1] if t > 0 else zeros
            np.multiply(dc, c_prev, out=dpf)
            dpf *= f
            np.subtract(1.0, f, out=tmp)
            dpf *= tmp
            # candidate: dpg = (dc*i)*(1-g^2)
            np.multiply(dc, i, out=dpg)
            np.multiply(g, g, out=tmp)
            np.subtract(1.0, tmp, out=tmp)
            dpg *= tmp
            dc *= f
            np.dot(dp, self.W_hh, out=dh)

        dp_flat = d_pre.reshape(steps * b, 4 * h)
        dW_ih = dp_flat.T @ x.reshape(steps * b, -1)
        if steps > 1:
            dW_hh = d_pre[1:].reshape((steps - 1) * b, 4 * h).T \
                @ out[:-1].reshape((steps - 1) * b, h)
        else:
            dW_hh = np.zeros_like(self.W_hh)
        db = dp_flat.sum(axis=0)
        dx = (dp_flat @ self.W_ih).reshape(x.shape)
        return [dW_ih, dW_hh, db, db.copy()], dx

    # GRU

    def _gru_forward(self, x):
        steps, b, _ = x.shape
        h = self.hidden_size
        gates = x.reshape(steps * b, -1) @ self.W_ih.T
        gates += self.b_ih
        gates = gates.reshape(steps, b, 3 * h)

        n_all = np.empty((steps, b, h))
        hpn_all = np.empty((steps, b, h))
        out = np.empty((steps, b, h))
        w_hh_t = np.ascontiguousarray(self.W_hh.T)
        hp = np.empty((b, 3 * h))
        tmp = np.empty((b, h))
        h_t = np.zeros((b, h))
        with np.errstate(over="ignore"):
            for t in range(steps):
                np.dot(h_t, w_hh_t, out=hp)
                hp += self.b_hh
                g_t = gates[t]
                ru = g_t[:, :2 * h]
                ru += hp[:, :2 * h]
                _sigmoid_inplace(ru)
                hpn = hpn_all[t]
                hpn[:] = hp[:, 2 * h:]
                n = n_all[t]
                np.multiply(ru[:, :h], hpn, out=n)
                n += g_t[:, 2 * h:]
                np.tanh(n, out=n)
                u = ru[:, h:2 * h]
                h_row = out[t]
                np.subtract(1.0, u, out=tmp)
                np.multiply(tmp, n, out=h_row)
                np.multiply(u, h_t, out=tmp)
                h_row += tmp
                h_t = h_row
        # gates[:, :, :2h] now holds the post-sigmoid reset/update values
        cache = dict(x=x, gates=gates, n=n_all, hpn=hpn_all, out=out)
        return out, cache

    def _gru_backward(self, d_out, cache):
        x, gates = cache["x"], cache["gates"]
        n_all, hpn_all, out = cache["n"], cache["hpn"], cache["out"]
        steps, b, _ = x.shape
        h = self.hidden_size

        d_xp = np.empty((steps, b, 3 * h))
        d_hp = np.empty((steps, b, 3 * h))
        dh = np.zeros((b, h))
        tmp = np.empty((b, h))
        tmp2 = np.empty((b, h))
        zeros = np.zeros((b, h))
        for t in range(steps - 1, -1, -1):
            dh += d_out[t]
            g_t = gates[t]
            r, u = g_t[:, :h], g_t[:, h:2 * h]
            n, hpn = n_all[t], hpn_all[t]
            h_prev = out[t - 1] if t > 0 else zeros
            dxp = d_xp[t]
            dhp = d_hp[t]
            dnp = dxp[:, 2 * h:]
            # candidate: dnp = dh*(1-u)*(1-n^2)
            np.subtract(1.0, u, out=tmp)
            tmp *= dh
            np.multiply(n, n, out=tmp2)
            np.subtract(1.0, tmp2, out=tmp2)
            np.multiply(tmp, tmp2, out=dnp)
            # reset gate: drp = (dnp*hpn)*r*(1-r)
            drp = dxp[:, :h]
            np.multiply(dnp, hpn, out=drp)
            drp *= r
            np.subtract(1.0, r, out=tmp)
            drp *= tmp
            # update gate: dup = dh*(h_prev-n)*u*(1-u)
            dup = dxp[:, h:2 * h]
            np.subtract(h_prev, n, out=tmp)
            np.multiply(dh, tmp, out=dup)
            dup *= u
            np.subtract(1.0, u, out=tmp)
            dup *= tmp
            # hidden-path preactivations share r/u, candidate picks up r
            dhp[:, :2 * h] = dxp[:, :2 * h]
            np.multiply(dnp, r, out=dhp[:, 2 * h:])
            dh *= u
            np.dot(dhp, self.W_hh, out=tmp2)
            dh += tmp2

        dxp_flat = d_xp.reshape(steps * b, 3 * h)
        dhp_flat = d_hp.reshape(steps * b, 3 * h)
        dW_ih = dxp_flat.T @ x.reshape(steps * b, -1)
        if steps > 1:
            dW_hh = d_hp[1:].reshape((steps - 1) * b, 3 * h).T \
                @ out[:-1].reshape((steps - 1) * b, h)
        else:
            dW_hh = np.zeros_like(self.W_hh)
        db_ih = dxp_flat.sum(axis=0)
        db_hh = dhp_flat.sum(axis=0)
        dx = (dxp_flat @ self.W_ih).reshape(x.shape)
        return [dW_ih, dW_hh, db_ih, db_hh], dx


class DenseLayer:
    def __init__(self, input_size: int, output_size: int,
                 rng: np.random.Generator):
        self.W = _uniform(rng, (output_size, input_size), input_size)
        self.b = _uniform(rng, output_size, input_size)


class Mlp:
    """Fully connected stack: hidden layers with one activation, linear head."""

    def __init__(self, input_size: int, hidden_sizes: tuple[int, ...],
                 output_size: int, activation: str, rng: np.random.Generator):
        self.activation = activation
        sizes = [input_size, *hidden_sizes, output_size]
        self.layers = [DenseLayer(sizes[i], sizes[i + 1], rng)
                       for i in range(len(sizes) - 1)]

    def params(self) -> list[Array]:
        out = []
        for layer in self.layers:
            out.extend([layer.W, layer.b])
        return out

    def param_names(self) -> list[str]:
        names = []
        for i in range(len(self.layers)):
            names.extend([f"dense{i}.W", f"dense{i}.b"])
        return names

    def forward(self, x: Array) -> tuple[Array, list[Array]]:
        acts = [x]
        for layer in self.layers[:-1]:
            x = activation_forward(x @ layer.W.T + layer.b, self.activation)
            acts.append(x)
        x = x @ self.layers[-1].W.T + self.layers[-1].b
        return x, acts

    def backward(self, d_out: Array, acts: list[Array]
                 ) -> tuple[list[Array], Array]:
        grads: list[Array] = []
        grad = d_out
        for idx in range(len(self.layers) - 1, -1, -1):
            layer = self.layers[idx]
            grads.insert(0, grad.sum(axis=0))
            grads.insert(0, grad.T @ acts[idx])
            grad = grad @ layer.W
            if idx > 0:
                grad = activation_backward(grad, acts[idx], self.activation)
        return grads, grad


class Adam:
    """Adaptive moment estimation with bias correction, in-place updates."""

    def __init__(self, params: list[Array], lr: float = 1e-3,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        self.params = params
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]
        self._buf = [np.empty_like(p) for p in params]

    def step(self, grads: list[Array]) -> None:
        if len(grads) != len(self.params):
            raise ValueError("gradient list does not match parameter list")
        self.t += 1
        b1, b2 = self.beta1, self.beta2
        scale1 = 1.0 - b1 ** self.t
        scale2 = 1.0 - b2 ** self.t
        for p, g, m, v, buf in zip(self.params, grads, self.m, self.v,
                                   self._buf):
            m *= b1
            np.multiply(g, 1.0 - b1, out=buf)
            m += buf
            v *= b2
            np.multiply(g, g, out=buf)
            buf *= 1.0 - b2
            v += buf
            np.divide(v, scale2, out=buf)
            np.sqrt(buf, out=buf)
            buf += self.eps
            np.divide(m, buf, out=buf)
            buf *= self.lr / scale1
            p -= buf
