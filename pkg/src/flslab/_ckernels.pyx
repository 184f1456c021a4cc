# cython: language_level=3
"""Compiled kernels for the gradient-flow inner loop.

Same contracts as :mod:`flslab._pykernels`. The two matrix products per
gradient use numpy's BLAS; the activation, loss and update passes are
fixed-order C loops.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport exp, log1p, isfinite

cnp.import_array()


cdef inline double _softplus_neg(double m) nogil:
    if m >= 0.0:
        return log1p(exp(-m))
    return -m + log1p(exp(m))


cdef inline double _sigmoid_neg(double m) nogil:
    cdef double e
    if m >= 0.0:
        e = exp(-m)
        return e / (1.0 + e)
    return 1.0 / (1.0 + exp(m))


cdef double _risk_grad(X, XT, double[::1] y, W, double[::1] v, double gamma, double sp0,
                       P, double[:, ::1] Pv, G, double[:, ::1] Gv, double[::1] m, dW, double[::1] dv):
    # the two products go through numpy's BLAS; the elementwise pass is a C loop.
    # Pv and Gv are views of P and G acquired once by the caller.
    np.matmul(X, W, out=P)
    cdef Py_ssize_t n = Pv.shape[0], h = Pv.shape[1]
    cdef Py_ssize_t i, j
    cdef double f, p, g, risk = 0.0
    with nogil:
        for j in range(h):
            dv[j] = 0.0
        for i in range(n):
            f = 0.0
            for j in range(h):
                p = Pv[i, j]
                f += v[j] * (p if p > 0.0 else 0.0)
            m[i] = y[i] * gamma * f
            risk += _softplus_neg(m[i])
            g = -y[i] * _sigmoid_neg(m[i]) * gamma / n
            for j in range(h):
                p = Pv[i, j]
                if p > 0.0:
                    dv[j] += p * g
                    Gv[i, j] = g * v[j]
                else:
                    Gv[i, j] = 0.0
            if sp0 != 0.0:
                for j in range(h):
                    if Pv[i, j] == 0.0:
                        Gv[i, j] = g * v[j] * sp0
    np.matmul(XT, G, out=dW)
    return risk / n


def risk_grad(X, y, W, v, double gamma=1.0, double sp0=0.0):
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    W = np.ascontiguousarray(W, dtype=np.float64)
    v = np.ascontiguousarray(v, dtype=np.float64)
    cdef Py_ssize_t n = X.shape[0], d = X.shape[1], h = W.shape[1]
    P = np.empty((n, h))
    G = np.empty((n, h))
    m = np.empty(n)
    dW = np.empty((d, h))
    dv = np.empty(h)
    risk = _risk_grad(X, X.T, y, W, v, gamma, sp0, P, P, G, G, m, dW, dv)
    return risk, m, dW, dv


def advance(X, y, pos, W, v, double tau, double scale,
            Py_ssize_t nsteps, bint heun=False, double stop_level=-1.0, double sp0=0.0):
    X = np.ascontiguousarray(X, dtype=np.float64)
    XT = X.T
    y = np.ascontiguousarray(y, dtype=np.float64)
    cdef double[:, ::1] Wm = W
    cdef double[::1] vm = v
    cdef double[::1] yv = y
    cdef unsigned char[::1] posv = np.ascontiguousarray(pos, dtype=np.uint8)
    cdef Py_ssize_t n = X.shape[0], d = X.shape[1], h = Wm.shape[1]
    P = np.empty((n, h))
    G = np.empty((n, h))
    cdef double[:, ::1] Pv = P
    cdef double[:, ::1] Gv = G
    dW_a = np.empty((d, h))
    W1_a = np.empty((d, h))
    dW1_a = np.empty((d, h))
    cdef double[::1] m = np.empty(n)
    cdef double[::1] dv = np.empty(h)
    cdef double[::1] v1 = np.empty(h)
    cdef double[::1] dv1 = np.empty(h)
    cdef double[:, ::1] dW = dW_a
    cdef double[:, ::1] W1 = W1_a
    cdef double[:, ::1] dW1 = dW1_a
    cdef double hs = tau * scale
    cdef double rp
    cdef Py_ssize_t k, i, j, npos = 0
    cdef bint finite = True
    for i in range(n):
        if posv[i]:
            npos += 1
    for k in range(nsteps):
        _risk_grad(X, XT, yv, W, vm, 1.0, sp0, P, Pv, G, Gv, m, dW_a, dv)
        for i in range(n):
            if not isfinite(m[i]):
                return k, False
        if stop_level >= 0.0:
            rp = 0.0
            for i in range(n):
                if posv[i]:
                    rp += _softplus_neg(m[i])
            if rp / npos <= stop_level:
                return k, True
        if heun:
            with nogil:
                for i in range(d):
                    for j in range(h):
                        W1[i, j] = Wm[i, j] - hs * dW[i, j]
                for j in range(h):
                    v1[j] = vm[j] - hs * dv[j]
            _risk_grad(X, XT, yv, W1_a, v1, 1.0, sp0, P, Pv, G, Gv, m, dW1_a, dv1)
            with nogil:
                for i in range(d):
                    for j in range(h):
                        Wm[i, j] -= 0.5 * hs * (dW[i, j] + dW1[i, j])
                for j in range(h):
                    vm[j] -= 0.5 * hs * (dv[j] + dv1[j])
        else:
            with nogil:
                for i in range(d):
                    for j in range(h):
                        Wm[i, j] -= hs * dW[i, j]
                for j in range(h):
                    vm[j] -= hs * dv[j]
        with nogil:
            for j in range(h):
                if not isfinite(vm[j]):
                    finite = False
            for i in range(d):
                for j in range(h):
                    if not isfinite(Wm[i, j]):
                        finite = False
        if not finite:
            return k + 1, False
    return nsteps, True
