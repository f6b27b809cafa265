# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled DOPRI5 kernels: MLP and Lotka-Volterra fields, recording tape, reverse sweep.

Same contract as ``_pycore``; matrix-vector products go through BLAS ``dgemv``
and the per-layer parameter gradients are accumulated with one GEMM per layer
after the sweep.
"""
import numpy as np

from libc.math cimport tanh, sqrt, fabs, pow, isfinite
from libc.stdlib cimport malloc, realloc, free
from libc.string cimport memcpy, memset
from scipy.linalg.cython_blas cimport dgemv

cdef extern from "_vmath.h":
    void mpinode_vtanh(double* x, int n) noexcept nogil

from . import _tableau as tb

DEF MAX_LAYERS = 32

OK, DIVERGED, STIFF, BLOWUP = 0, 1, 2, 3

cdef double TA[7][7]
cdef double TB[7]
cdef double TE[7]
cdef double TD[7]
cdef double SAFETY = tb.SAFETY
cdef double MIN_FACTOR = tb.MIN_FACTOR
cdef double MAX_FACTOR = tb.MAX_FACTOR

for _i in range(7):
    TB[_i] = tb.B[_i]
    TE[_i] = tb.E[_i]
    TD[_i] = tb.D[_i]
    for _j in range(7):
        TA[_i][_j] = 0.0
for _i in range(1, 6):
    for _j, _a in enumerate(tb.A[_i]):
        TA[_i][_j] = _a


cdef inline void dense_weights(double s, double* w0, double* w1, double* c) noexcept nogil:
    cdef double b1 = s * (1.0 - s)
    cdef double b2 = s * s * (1.0 - s)
    cdef double b3 = b2 * (1.0 - s)
    cdef double cdiff = s - b1 + 2.0 * b2
    cdef int i
    for i in range(7):
        c[i] = b3 * TD[i]
    c[0] += b1 - b2
    c[6] -= b2
    w0[0] = 1.0 - cdiff
    w1[0] = cdiff


cdef class FieldKernel:
    cdef public int dim
    cdef public int act_size
    cdef public long n_saturated

    cdef int eval(self, const double* z, double* k, double* acts, double* raw) except -1:
        return 0


cdef class LVKernel(FieldKernel):
    cdef double alpha, beta, gamma, delta

    def __init__(self, coeffs):
        self.alpha, self.beta, self.gamma, self.delta = [float(c) for c in coeffs]
        self.dim = 2
        self.act_size = 0
        self.n_saturated = 0

    cdef int eval(self, const double* z, double* k, double* acts, double* raw) except -1:
        cdef double x = z[0], y = z[1]
        k[0] = self.alpha * x - self.beta * x * y
        k[1] = self.delta * x * y - self.gamma * y
        return 0


cdef class PyFieldKernel(FieldKernel):
    cdef object func

    def __init__(self, func, dim):
        self.func = func
        self.dim = int(dim)
        self.act_size = 0
        self.n_saturated = 0

    cdef int eval(self, const double* z, double* k, double* acts, double* raw) except -1:
        cdef int i
        zin = np.empty(self.dim)
        cdef double[::1] zv = zin
        for i in range(self.dim):
            zv[i] = z[i]
        out = np.ascontiguousarray(self.func(zin), dtype=float).reshape(self.dim)
        cdef double[::1] ov = out
        for i in range(self.dim):
            k[i] = ov[i]
        return 0


cdef class MLPKernel(FieldKernel):
    cdef list _W
    cdef list _b
    cdef public int n_layers
    cdef int fan_in[MAX_LAYERS]
    cdef int fan_out[MAX_LAYERS]
    cdef int act_off[MAX_LAYERS]
    cdef double* Wp[MAX_LAYERS]
    cdef double* bp[MAX_LAYERS]
    cdef public int wrapper
    cdef public double bound
    cdef double* scratch
    cdef double* scratch_raw

    def __init__(self, weights, biases, wrapper, bound):
        cdef int l
        cdef double[:, ::1] wv
        cdef double[::1] bv
        if len(weights) > MAX_LAYERS:
            raise ValueError("too many layers for the compiled kernel")
        self._W = [np.ascontiguousarray(w, dtype=float) for w in weights]
        self._b = [np.ascontiguousarray(v, dtype=float) for v in biases]
        self.n_layers = len(self._W)
        self.wrapper = int(wrapper)
        self.bound = float(bound)
        self.n_saturated = 0
        off = 0
        for l in range(self.n_layers):
            wv = self._W[l]
            bv = self._b[l]
            self.fan_out[l] = wv.shape[0]
            self.fan_in[l] = wv.shape[1]
            self.Wp[l] = &wv[0, 0]
            self.bp[l] = &bv[0]
            self.act_off[l] = off
            if l < self.n_layers - 1:
                off += wv.shape[0]
        self.act_size = off
        self.dim = self.fan_in[0]
        self.scratch = <double*> malloc((self.act_size + 1) * sizeof(double))
        self.scratch_raw = <double*> malloc((self.fan_out[self.n_layers - 1] + 1) * sizeof(double))

    def __dealloc__(self):
        free(self.scratch)
        free(self.scratch_raw)

    cdef int eval(self, const double* z, double* k, double* acts, double* raw) except -1:
        cdef double* a = acts if acts != NULL else self.scratch
        cdef double* r = raw if raw != NULL else self.scratch_raw
        cdef const double* x = z
        cdef double* out
        cdef int l, i, m, n, inc = 1
        cdef double one = 1.0
        cdef char trans = b'T'
        cdef int last = self.n_layers - 1
        cdef double v, bd = self.bound
        for l in range(self.n_layers):
            n = self.fan_in[l]
            m = self.fan_out[l]
            out = r if l == last else a + self.act_off[l]
            memcpy(out, self.bp[l], m * sizeof(double))
            dgemv(&trans, &n, &m, &one, self.Wp[l], &n, <double*> x, &inc, &one, out, &inc)
            if l < last:
                mpinode_vtanh(out, m)
            x = out
        m = self.fan_out[last]
        for i in range(m):
            v = r[i]
            if fabs(v) > bd:
                self.n_saturated += 1
            if self.wrapper == 0:
                k[i] = v
            elif self.wrapper == 1:
                k[i] = bd * tanh(v / bd)
            elif self.wrapper == 2:
                k[i] = v * fabs(v)
            else:
                k[i] = bd if v > bd else (-bd if v < -bd else v)
        return 0

    cdef void vjp(self, const double* v, const double* acts, const double* raw,
                  double* deltas, double* zbar) noexcept:
        """deltas gets each layer's pre-activation adjoint; zbar the input adjoint."""
        cdef int last = self.n_layers - 1
        cdef int l, i, m, n, inc = 1
        cdef double one = 1.0, zero = 0.0, t, r, bd = self.bound
        cdef char trans = b'N'
        cdef double* dl = deltas + self.act_size
        cdef double* dprev
        cdef const double* a
        m = self.fan_out[last]
        for i in range(m):
            r = raw[i]
            if self.wrapper == 0:
                dl[i] = v[i]
            elif self.wrapper == 1:
                t = tanh(r / bd)
                dl[i] = v[i] * (1.0 - t * t)
            elif self.wrapper == 2:
                dl[i] = v[i] * 2.0 * fabs(r)
            else:
                dl[i] = v[i] if fabs(r) <= bd else 0.0
        for l in range(last, 0, -1):
            n = self.fan_in[l]
            m = self.fan_out[l]
            dprev = deltas + self.act_off[l - 1]
            dgemv(&trans, &n, &m, &one, self.Wp[l], &n, dl, &inc, &zero, dprev, &inc)
            a = acts + self.act_off[l - 1]
            for i in range(n):
                dprev[i] *= 1.0 - a[i] * a[i]
            dl = dprev
        n = self.fan_in[0]
        m = self.fan_out[0]
        dgemv(&trans, &n, &m, &one, self.Wp[0], &n, dl, &inc, &zero, zbar, &inc)

    def layer_dims(self):
        return [(self.fan_in[l], self.fan_out[l], self.act_off[l]) for l in range(self.n_layers)]


cdef class Tape:
    """Accepted-step record of one recorded integration."""
    cdef MLPKernel kernel
    cdef public int dim
    cdef int act_size
    cdef int row
    cdef double* buf
    cdef public long n_evals
    cdef long cap
    cdef long* step_evals
    cdef double* step_h
    cdef public long n_steps
    cdef long step_cap
    cdef public object grid_step
    cdef public object grid_s
    cdef public bint consumed

    def __cinit__(self):
        self.buf = NULL
        self.step_evals = NULL
        self.step_h = NULL

    def __dealloc__(self):
        free(self.buf)
        free(self.step_evals)
        free(self.step_h)

    cdef int setup(self, MLPKernel kernel) except -1:
        self.kernel = kernel
        self.dim = kernel.dim
        self.act_size = kernel.act_size
        self.row = 2 * self.dim + self.act_size
        self.cap = 1024
        self.buf = <double*> malloc(self.cap * self.row * sizeof(double))
        self.step_cap = 256
        self.step_evals = <long*> malloc(self.step_cap * 7 * sizeof(long))
        self.step_h = <double*> malloc(self.step_cap * sizeof(double))
        if self.buf == NULL or self.step_evals == NULL or self.step_h == NULL:
            raise MemoryError()
        self.n_evals = 0
        self.n_steps = 0
        self.consumed = False
        return 0

    cdef long new_eval(self) except -1:
        cdef double* nb
        if self.n_evals == self.cap:
            nb = <double*> realloc(self.buf, 2 * self.cap * self.row * sizeof(double))
            if nb == NULL:
                raise MemoryError()
            self.buf = nb
            self.cap *= 2
        self.n_evals += 1
        return self.n_evals - 1

    cdef int add_step(self, long* evals, double h) except -1:
        cdef long* ne
        cdef double* nh
        cdef int i
        if self.n_steps == self.step_cap:
            ne = <long*> realloc(self.step_evals, 2 * self.step_cap * 7 * sizeof(long))
            if ne == NULL:
                raise MemoryError()
            self.step_evals = ne
            nh = <double*> realloc(self.step_h, 2 * self.step_cap * sizeof(double))
            if nh == NULL:
                raise MemoryError()
            self.step_h = nh
            self.step_cap *= 2
        for i in range(7):
            self.step_evals[self.n_steps * 7 + i] = evals[i]
        self.step_h[self.n_steps] = h
        self.n_steps += 1
        return 0

    cdef void _vjp(self, long e, double* v, double* deltas, int dsz, double* zbar) noexcept:
        cdef int i
        cdef bint nonzero = False
        cdef double* p = self.buf + e * self.row
        for i in range(self.dim):
            if v[i] != 0.0:
                nonzero = True
        if not nonzero:
            for i in range(self.dim):
                zbar[i] = 0.0
            return
        self.kernel.vjp(v, p + self.dim, p + self.dim + self.act_size, deltas + e * dsz, zbar)

    def backward(self, dY):
        """Gradient of sum(dY * Y) w.r.t. the flat MLP parameters and the initial state."""
        if self.consumed:
            raise RuntimeError("tape exhausted")
        self.consumed = True
        cdef double[:, ::1] dYv = np.ascontiguousarray(dY, dtype=float)
        cdef long[::1] gstep = np.ascontiguousarray(self.grid_step, dtype=np.int_)
        cdef double[::1] gs = np.ascontiguousarray(self.grid_s, dtype=float)
        cdef int d = self.dim
        cdef int dsz = self.act_size + d
        deltas_arr = np.zeros((max(self.n_evals, 1), dsz))
        cdef double[:, ::1] deltas_v = deltas_arr
        cdef double* deltas = &deltas_v[0, 0]
        cdef double* work = <double*> malloc((7 * d + 5 * d) * sizeof(double))
        cdef double* kbar = work
        cdef double* ybar = work + 7 * d
        cdef double* kf1bar = ybar + d
        cdef double* y0bar = kf1bar + d
        cdef double* y1bar = y0bar + d
        cdef double* zbar = y1bar + d
        cdef long n, g, e
        cdef int i, j, q
        cdef double h, s, w0, w1, coef
        cdef double c[7]
        cdef long* ev
        cdef long n_grid = gs.shape[0]
        for i in range(d):
            ybar[i] = 0.0
            kf1bar[i] = 0.0
        g = n_grid - 1
        try:
            for n in range(self.n_steps - 1, -1, -1):
                h = self.step_h[n]
                ev = self.step_evals + n * 7
                for i in range(7 * d):
                    kbar[i] = 0.0
                for i in range(d):
                    y0bar[i] = 0.0
                    y1bar[i] = ybar[i]
                while g >= 1 and gstep[g] == n:
                    s = gs[g]
                    if s == 1.0:
                        for i in range(d):
                            y1bar[i] += dYv[g, i]
                    else:
                        dense_weights(s, &w0, &w1, c)
                        for i in range(d):
                            y0bar[i] += w0 * dYv[g, i]
                            y1bar[i] += w1 * dYv[g, i]
                        for q in range(7):
                            if c[q] != 0.0:
                                coef = h * c[q]
                                for i in range(d):
                                    kbar[q * d + i] += coef * dYv[g, i]
                    g -= 1
                for i in range(d):
                    kbar[6 * d + i] += kf1bar[i]
                self._vjp(ev[6], kbar + 6 * d, deltas, dsz, zbar)
                for i in range(d):
                    y1bar[i] += zbar[i]
                    y0bar[i] += y1bar[i]
                for q in range(6):
                    if TB[q] != 0.0:
                        coef = h * TB[q]
                        for i in range(d):
                            kbar[q * d + i] += coef * y1bar[i]
                for q in range(5, 0, -1):
                    self._vjp(ev[q], kbar + q * d, deltas, dsz, zbar)
                    for i in range(d):
                        y0bar[i] += zbar[i]
                    for j in range(q):
                        coef = h * TA[q][j]
                        for i in range(d):
                            kbar[j * d + i] += coef * zbar[i]
                for i in range(d):
                    kf1bar[i] = kbar[i]
                    ybar[i] = y0bar[i]
            if self.n_steps > 0:
                self._vjp(self.step_evals[0], kf1bar, deltas, dsz, zbar)
                for i in range(d):
                    ybar[i] += zbar[i]
            grad_y0 = np.array([ybar[i] for i in range(d)])
        finally:
            free(work)

        ne = self.n_evals
        if ne > 0:
            store = np.asarray(<double[:ne, :self.row]> self.buf)
            grads = []
            dims = self.kernel.layer_dims()
            last = len(dims) - 1
            for l, (fi, fo, off) in enumerate(dims):
                D = deltas_arr[:ne, self.act_size:self.act_size + fo] if l == last else deltas_arr[:ne, off:off + fo]
                if l == 0:
                    IN = store[:, :d]
                else:
                    poff = dims[l - 1][2]
                    IN = store[:, d + poff:d + poff + fi]
                grads.append((D.T @ IN).ravel())
                grads.append(D.sum(axis=0))
            grad = np.concatenate(grads)
        else:
            grad = np.concatenate([np.zeros(fi * fo + fo) for fi, fo, _ in self.kernel.layer_dims()])
        return grad, grad_y0


cdef inline double error_ratio(const double* y, const double* yn, const double* err, int d,
                               double rtol, double atol) noexcept nogil:
    cdef double worst = 0.0, sc, a, b, q
    cdef int i
    for i in range(d):
        a = fabs(y[i])
        b = fabs(yn[i])
        sc = atol + rtol * (a if a > b else b)
        q = fabs(err[i]) / sc
        # NaN compares false, so test the negation to propagate it
        if not q <= worst:
            worst = q
    return worst


def solve(FieldKernel kern, y0, grid, double rtol, double atol, double h0, long max_steps,
          double min_step, bint record=False, replay_t=None, replay_h=None):
    """Integrate ``kern`` from ``y0`` and report states at ``grid``.

    Returns ``(Y, n_accepted, n_rejected, status, t_fail, tape, steps_t, steps_h)``.
    """
    cdef int d = kern.dim
    cdef double[::1] gv = np.ascontiguousarray(grid, dtype=float)
    cdef double[::1] y0v = np.ascontiguousarray(y0, dtype=float)
    cdef long n_grid = gv.shape[0]
    cdef double T = gv[n_grid - 1]
    Y_arr = np.empty((n_grid, d))
    cdef double[:, ::1] Y = Y_arr
    gstep_arr = np.zeros(n_grid, dtype=np.int_)
    gs_arr = np.zeros(n_grid)
    cdef long[::1] gstep = gstep_arr
    cdef double[::1] gs = gs_arr
    cdef bint replay = replay_h is not None
    cdef double[::1] rt
    cdef double[::1] rh
    cdef long n_replay = 0
    if replay:
        rt = np.ascontiguousarray(replay_t, dtype=float)
        rh = np.ascontiguousarray(replay_h, dtype=float)
        n_replay = rh.shape[0]
    cdef Tape tape = None
    if record:
        if not isinstance(kern, MLPKernel):
            raise TypeError("recording needs an MLPKernel")
        tape = Tape()
        tape.setup(<MLPKernel> kern)
    cdef int asz = kern.act_size
    cdef int row = 2 * d + asz

    cdef double* work = <double*> malloc(12 * d * sizeof(double))
    cdef double* k = work
    cdef double* y = work + 7 * d
    cdef double* yn = y + d
    cdef double* zi = yn + d
    cdef double* err = zi + d
    cdef double* tmp = err + d
    cdef double* p
    cdef long e, mark, e1 = 0
    cdef long evals[7]
    cdef long n_acc = 0, n_rej = 0, gi = 1
    cdef int status = 0
    cdef double t_fail = float("nan")
    cdef double t = gv[0], h, t_new, ratio, factor, s, w0, w1, coef
    cdef double c[7]
    cdef int i, j, q
    cdef bint last, finite
    steps_t = [t]
    steps_h = []
    try:
        for i in range(d):
            y[i] = y0v[i]
            Y[0, i] = y[i]
        if record:
            e = tape.new_eval()
            p = tape.buf + e * row
            memcpy(p, y, d * sizeof(double))
            kern.eval(p, k, p + d, p + d + asz)
            e1 = e
        else:
            kern.eval(y, k, NULL, NULL)
        h = h0 if h0 < T - t else T - t
        while gi < n_grid:
            last = False
            if replay:
                if n_acc >= n_replay:
                    status, t_fail = DIVERGED, t
                    break
                h = rh[n_acc]
                last = n_acc == n_replay - 1
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
            if record:
                mark = tape.n_evals
            for q in range(1, 6):
                for i in range(d):
                    zi[i] = y[i]
                for j in range(q):
                    coef = h * TA[q][j]
                    for i in range(d):
                        zi[i] += coef * k[j * d + i]
                if record:
                    e = tape.new_eval()
                    evals[q] = e
                    p = tape.buf + e * row
                    memcpy(p, zi, d * sizeof(double))
                    kern.eval(p, k + q * d, p + d, p + d + asz)
                else:
                    kern.eval(zi, k + q * d, NULL, NULL)
            for i in range(d):
                yn[i] = y[i]
            for q in range(6):
                if TB[q] != 0.0:
                    coef = h * TB[q]
                    for i in range(d):
                        yn[i] += coef * k[q * d + i]
            finite = True
            for i in range(d):
                if not isfinite(yn[i]):
                    finite = False
            if not finite:
                status, t_fail = BLOWUP, t
                break
            if record:
                e = tape.new_eval()
                evals[6] = e
                p = tape.buf + e * row
                memcpy(p, yn, d * sizeof(double))
                kern.eval(p, k + 6 * d, p + d, p + d + asz)
            else:
                kern.eval(yn, k + 6 * d, NULL, NULL)
            for i in range(d):
                if not isfinite(k[6 * d + i]):
                    finite = False
            if not finite:
                status, t_fail = BLOWUP, t
                break
            if replay:
                ratio = 0.0
            else:
                for i in range(d):
                    err[i] = 0.0
                for q in range(7):
                    if TE[q] != 0.0:
                        coef = h * TE[q]
                        for i in range(d):
                            err[i] += coef * k[q * d + i]
                ratio = error_ratio(y, yn, err, d, rtol, atol)
            if replay or ratio <= 1.0:
                if replay:
                    t_new = rt[n_acc + 1]
                else:
                    t_new = T if last else t + h
                while gi < n_grid and (gv[gi] <= t_new or last):
                    if gv[gi] == t_new:
                        for i in range(d):
                            Y[gi, i] = yn[i]
                        s = 1.0
                    else:
                        s = (gv[gi] - t) / h
                        dense_weights(s, &w0, &w1, c)
                        for i in range(d):
                            tmp[i] = w0 * y[i] + w1 * yn[i]
                        for q in range(7):
                            if c[q] != 0.0:
                                coef = h * c[q]
                                for i in range(d):
                                    tmp[i] = tmp[i] + coef * k[q * d + i]
                        for i in range(d):
                            Y[gi, i] = tmp[i]
                    gstep[gi] = n_acc
                    gs[gi] = s
                    gi += 1
                if record:
                    evals[0] = e1
                    tape.add_step(evals, h)
                    e1 = evals[6]
                steps_h.append(h)
                steps_t.append(t_new)
                n_acc += 1
                t = t_new
                for i in range(d):
                    y[i] = yn[i]
                    k[i] = k[6 * d + i]
            else:
                n_rej += 1
                if record:
                    tape.n_evals = mark
            if not replay:
                if ratio == 0.0:
                    factor = MAX_FACTOR
                else:
                    factor = SAFETY * pow(ratio, -0.2)
                    if factor < MIN_FACTOR:
                        factor = MIN_FACTOR
                    elif factor > MAX_FACTOR:
                        factor = MAX_FACTOR
                h = h * factor
    finally:
        free(work)
    if record:
        tape.grid_step = gstep_arr
        tape.grid_s = gs_arr
    return (Y_arr, n_acc, n_rej, status, t_fail, tape,
            np.asarray(steps_t), np.asarray(steps_h))
