"""Pure NumPy DOPRI5 kernels; reference implementation and import-time fallback.

Mirrors the compiled ``_ccore`` module function for function. Both expose
field kernels (``MLPKernel``, ``LVKernel``, ``PyFieldKernel``), ``solve`` and a
``Tape`` with ``backward``.
"""

import numpy as np

from . import _tableau as tb

OK, DIVERGED, STIFF, BLOWUP = 0, 1, 2, 3

WRAPPER_CODES = {"none": 0, "tanh_bound": 1, "squared": 2, "clamp": 3}


class MLPKernel:
    def __init__(self, weights, biases, wrapper, bound):
        self.W = [np.ascontiguousarray(w, dtype=float) for w in weights]
        self.b = [np.ascontiguousarray(v, dtype=float) for v in biases]
        self.wrapper = int(wrapper)
        self.bound = float(bound)
        self.dim = self.W[0].shape[1]
        self.act_size = sum(w.shape[0] for w in self.W[:-1])
        self.n_saturated = 0

    def eval(self, z):
        acts = []
        a = z
        for W, b in zip(self.W[:-1], self.b[:-1]):
            a = np.tanh(W @ a + b)
            acts.append(a)
        raw = self.W[-1] @ a + self.b[-1]
        self.n_saturated += int(np.count_nonzero(np.abs(raw) > self.bound))
        return _wrap(raw, self.wrapper, self.bound), (acts, raw)

    def vjp(self, z, cache, v):
        """Returns (zbar, per-layer output deltas)."""
        acts, raw = cache
        delta = v * _wrap_grad(raw, self.wrapper, self.bound)
        deltas = [delta]
        for layer in range(len(self.W) - 1, 0, -1):
            a = acts[layer - 1]
            delta = (self.W[layer].T @ delta) * (1.0 - a * a)
            deltas.append(delta)
        zbar = self.W[0].T @ delta
        deltas.reverse()
        return zbar, deltas

    def layer_inputs(self, z, cache):
        return [z] + list(cache[0])


class LVKernel:
    def __init__(self, coeffs):
        self.alpha, self.beta, self.gamma, self.delta = (float(c) for c in coeffs)
        self.dim = 2
        self.n_saturated = 0

    def eval(self, z):
        x, y = z[0], z[1]
        return np.array([self.alpha * x - self.beta * x * y, self.delta * x * y - self.gamma * y]), None


class PyFieldKernel:
    def __init__(self, func, dim):
        self.func = func
        self.dim = int(dim)
        self.n_saturated = 0

    def eval(self, z):
        return np.asarray(self.func(z.copy()), dtype=float).reshape(self.dim), None


def _wrap(raw, code, bound):
    if code == 0:
        return raw
    if code == 1:
        return bound * np.tanh(raw / bound)
    if code == 2:
        return raw * np.abs(raw)
    return np.minimum(np.maximum(raw, -bound), bound)


def _wrap_grad(raw, code, bound):
    if code == 0:
        return np.ones_like(raw)
    if code == 1:
        t = np.tanh(raw / bound)
        return 1.0 - t * t
    if code == 2:
        return 2.0 * np.abs(raw)
    return (np.abs(raw) <= bound).astype(float)


class Tape:
    """Accepted-step record of one recorded integration."""

    def __init__(self, kernel, dim):
        self.kernel = kernel
        self.dim = dim
        self.evals = []  # (z, cache)
        self.step_evals = []
        self.step_h = []
        self.grid_step = None
        self.grid_s = None
        self.consumed = False

    def backward(self, dY):
        """Gradient of sum(dY * Y) w.r.t. the flat MLP parameters and the initial state."""
        if self.consumed:
            raise RuntimeError("tape exhausted")
        self.consumed = True
        kern = self.kernel
        dY = np.asarray(dY, dtype=float)
        d = self.dim
        n_layers = len(kern.W)
        gW = [np.zeros_like(w) for w in kern.W]
        gb = [np.zeros_like(v) for v in kern.b]

        def vjp(e, v):
            z, cache = self.evals[e]
            if not np.any(v):
                return np.zeros(d)
            zbar, deltas = kern.vjp(z, cache, v)
            ins = kern.layer_inputs(z, cache)
            for layer in range(n_layers):
                gW[layer] += np.outer(deltas[layer], ins[layer])
                gb[layer] += deltas[layer]
            return zbar

        by_step = {}
        for g in range(1, len(self.grid_step)):
            by_step.setdefault(int(self.grid_step[g]), []).append(g)

        ybar = np.zeros(d)
        kf1bar = np.zeros(d)
        for n in range(len(self.step_h) - 1, -1, -1):
            h = self.step_h[n]
            ev = self.step_evals[n]
            kbar = [np.zeros(d) for _ in range(7)]
            y0bar = np.zeros(d)
            y1bar = ybar.copy()
            for g in reversed(by_step.get(n, [])):
                gbar = dY[g]
                s = self.grid_s[g]
                if s == 1.0:
                    y1bar += gbar
                    continue
                w0, w1, c = tb.dense_weights(s)
                y0bar += w0 * gbar
                y1bar += w1 * gbar
                for i in range(7):
                    if c[i] != 0.0:
                        kbar[i] += (h * c[i]) * gbar
            kbar[6] += kf1bar
            y1bar += vjp(ev[6], kbar[6])
            y0bar += y1bar
            for i in range(6):
                if tb.B[i] != 0.0:
                    kbar[i] += (h * tb.B[i]) * y1bar
            for i in range(5, 0, -1):
                zbar = vjp(ev[i], kbar[i])
                y0bar += zbar
                for j, a in enumerate(tb.A[i]):
                    kbar[j] += (h * a) * zbar
            kf1bar = kbar[0]
            ybar = y0bar
        if self.step_h:
            ybar = ybar + vjp(self.step_evals[0][0], kf1bar)
        grad = np.concatenate([np.concatenate([w.ravel(), v]) for w, v in zip(gW, gb)])
        return grad, ybar


def _error_ratio(y, y_new, err, rtol, atol):
    """Largest per-component ratio ``|err_i| / (atol + rtol |y_i|)``."""
    scale = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
    return float(np.max(np.abs(err) / scale))


def solve(kernel, y0, grid, rtol, atol, h0, max_steps, min_step, record=False,
          replay_t=None, replay_h=None):
    """Integrate ``kernel`` from ``y0`` and report states at ``grid``.

    Returns ``(Y, n_accepted, n_rejected, status, t_fail, tape, steps_t, steps_h)``.
    """
    # overflow in a trial stage is reported through the blow-up status
    with np.errstate(over="ignore", invalid="ignore"):
        return _solve(kernel, y0, grid, rtol, atol, h0, max_steps, min_step, record,
                      replay_t, replay_h)


def _solve(kernel, y0, grid, rtol, atol, h0, max_steps, min_step, record, replay_t, replay_h):
    d = kernel.dim
    y = np.array(y0, dtype=float)
    grid = np.asarray(grid, dtype=float)
    n_grid = grid.shape[0]
    T = grid[-1]
    Y = np.empty((n_grid, d))
    Y[0] = y
    grid_step = np.zeros(n_grid, dtype=np.int64)
    grid_s = np.zeros(n_grid)
    tape = Tape(kernel, d) if record else None
    steps_t = [float(grid[0])]
    steps_h = []
    t = float(grid[0])
    replay = replay_h is not None
    n_acc = n_rej = 0
    gi = 1

    k1, c1 = kernel.eval(y)
    c1 = (y.copy(), c1)
    e1 = 0
    if record:
        tape.evals.append(c1)
    h = min(h0, T - t)
    status, t_fail = OK, float("nan")
    while gi < n_grid:
        last = False
        if replay:
            if n_acc >= len(replay_h):
                status, t_fail = DIVERGED, t
                break
            h = float(replay_h[n_acc])
            last = n_acc == len(replay_h) - 1
        else:
            if n_acc + n_rej >= max_steps:
                status, t_fail = DIVERGED, t
                break
            if h < min_step:
                status, t_fail = STIFF, t
                break
            if t + h >= T:
                h = T - t
                last = True
        k = [k1]
        caches = [c1]
        for i in range(1, 6):
            zi = y.copy()
            for j, a in enumerate(tb.A[i]):
                zi += (h * a) * k[j]
            ki, ci = kernel.eval(zi)
            k.append(ki)
            caches.append((zi, ci))
        y_new = y.copy()
        for i in range(6):
            if tb.B[i] != 0.0:
                y_new += (h * tb.B[i]) * k[i]
        if not np.all(np.isfinite(y_new)):
            status, t_fail = BLOWUP, t
            break
        k7, c7 = kernel.eval(y_new)
        c7 = (y_new, c7)
        if not np.all(np.isfinite(k7)):
            status, t_fail = BLOWUP, t
            break
        k.append(k7)
        if replay:
            ratio = 0.0
        else:
            err = np.zeros(d)
            for i in range(7):
                if tb.E[i] != 0.0:
                    err += (h * tb.E[i]) * k[i]
            ratio = _error_ratio(y, y_new, err, rtol, atol)
        if replay or ratio <= 1.0:
            if replay:
                t_new = float(replay_t[n_acc + 1])
            else:
                t_new = T if last else t + h
            while gi < n_grid and (grid[gi] <= t_new or last):
                if grid[gi] == t_new:
                    Y[gi] = y_new
                    s = 1.0
                else:
                    s = (grid[gi] - t) / h
                    w0, w1, c = tb.dense_weights(s)
                    yi = w0 * y + w1 * y_new
                    for i in range(7):
                        if c[i] != 0.0:
                            yi = yi + (h * c[i]) * k[i]
                    Y[gi] = yi
                grid_step[gi] = n_acc
                grid_s[gi] = s
                gi += 1
            if record:
                base = len(tape.evals)
                tape.evals.extend(caches[1:])
                tape.evals.append(c7)
                tape.step_evals.append([e1] + list(range(base, base + 6)))
                tape.step_h.append(h)
                e1 = base + 5
            steps_h.append(h)
            steps_t.append(t_new)
            n_acc += 1
            t, y, k1, c1 = t_new, y_new, k7, c7
        else:
            n_rej += 1
        if not replay:
            if ratio == 0.0:
                factor = tb.MAX_FACTOR
            else:
                factor = min(tb.MAX_FACTOR, max(tb.MIN_FACTOR, tb.SAFETY * ratio ** -0.2))
            h = h * factor
    if record:
        tape.grid_step = grid_step
        tape.grid_s = grid_s
    return (Y, n_acc, n_rej, status, t_fail, tape,
            np.asarray(steps_t), np.asarray(steps_h))
