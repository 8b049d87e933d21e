# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled kernels for the hot inner loops.

Fused single-pass versions of the numpy kernels in kernels_py.py: the
scaled-softplus intensity activation, the causal attention softmax and
layer normalisation.  Semantics are identical to the numpy fallback;
tests/test_backend.py checks parity to float64 round-off.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport exp, fabs, log1p, sqrt

cnp.import_array()

NAME = "compiled"

LAYERNORM_EPS = 1e-8
cdef double _EPS = 1e-8


cdef inline double _softplus1(double u) nogil:
    if u > 0.0:
        return u + log1p(exp(-u))
    return log1p(exp(u))


cdef inline double _sigmoid1(double u) nogil:
    cdef double e
    if u >= 0.0:
        return 1.0 / (1.0 + exp(-u))
    e = exp(u)
    return e / (1.0 + e)


def scaled_softplus_fwd(object x, object gamma):
    """gamma * log(1 + exp(x / gamma)), elementwise; gamma pre-broadcast to x."""
    shape = np.shape(x)
    cdef cnp.ndarray[double, ndim=1] xf = np.ascontiguousarray(x).ravel()
    cdef cnp.ndarray[double, ndim=1] gf = np.ascontiguousarray(gamma).ravel()
    cdef cnp.ndarray[double, ndim=1] out = np.empty_like(xf)
    cdef Py_ssize_t i, n = xf.shape[0]
    with nogil:
        for i in range(n):
            out[i] = gf[i] * _softplus1(xf[i] / gf[i])
    return out.reshape(shape)


def scaled_softplus_bwd(object x, object gamma, object gout):
    """Gradients of scaled_softplus_fwd w.r.t. x and gamma."""
    shape = np.shape(x)
    cdef cnp.ndarray[double, ndim=1] xf = np.ascontiguousarray(x).ravel()
    cdef cnp.ndarray[double, ndim=1] gf = np.ascontiguousarray(gamma).ravel()
    cdef cnp.ndarray[double, ndim=1] of = np.ascontiguousarray(gout).ravel()
    cdef cnp.ndarray[double, ndim=1] gx = np.empty_like(xf)
    cdef cnp.ndarray[double, ndim=1] gg = np.empty_like(xf)
    cdef Py_ssize_t i, n = xf.shape[0]
    cdef double u, s
    with nogil:
        for i in range(n):
            u = xf[i] / gf[i]
            s = _sigmoid1(u)
            gx[i] = of[i] * s
            gg[i] = of[i] * (_softplus1(u) - u * s)
    return gx.reshape(shape), gg.reshape(shape)


def causal_softmax_fwd(cnp.ndarray scores):
    """Row-wise softmax of a square score matrix under a strict causal mask."""
    cdef cnp.ndarray[double, ndim=2] sc = np.ascontiguousarray(scores)
    cdef Py_ssize_t n = sc.shape[0]
    cdef cnp.ndarray[double, ndim=2] out = np.zeros((n, n), dtype=np.float64)
    cdef Py_ssize_t i, j
    cdef double m, tot
    with nogil:
        for i in range(n):
            m = sc[i, 0]
            for j in range(1, i + 1):
                if sc[i, j] > m:
                    m = sc[i, j]
            tot = 0.0
            for j in range(i + 1):
                out[i, j] = exp(sc[i, j] - m)
                tot += out[i, j]
            for j in range(i + 1):
                out[i, j] /= tot
    return out


def causal_softmax_bwd(cnp.ndarray probs, cnp.ndarray gout):
    """Backward of causal_softmax_fwd; masked positions receive zero gradient."""
    cdef cnp.ndarray[double, ndim=2] p = np.ascontiguousarray(probs)
    cdef cnp.ndarray[double, ndim=2] g = np.ascontiguousarray(gout)
    cdef Py_ssize_t n = p.shape[0]
    cdef cnp.ndarray[double, ndim=2] out = np.zeros((n, n), dtype=np.float64)
    cdef Py_ssize_t i, j
    cdef double dot
    with nogil:
        for i in range(n):
            dot = 0.0
            for j in range(i + 1):
                dot += p[i, j] * g[i, j]
            for j in range(i + 1):
                out[i, j] = p[i, j] * (g[i, j] - dot)
    return out


def layernorm_fwd(cnp.ndarray x):
    """Row-wise normalisation (zero mean, unit variance); returns (y, rstd)."""
    cdef cnp.ndarray[double, ndim=2] xc = np.ascontiguousarray(x)
    cdef Py_ssize_t n = xc.shape[0], d = xc.shape[1]
    cdef cnp.ndarray[double, ndim=2] y = np.empty((n, d), dtype=np.float64)
    cdef cnp.ndarray[double, ndim=2] rstd = np.empty((n, 1), dtype=np.float64)
    cdef Py_ssize_t i, j
    cdef double mean, var, dev, r
    with nogil:
        for i in range(n):
            mean = 0.0
            for j in range(d):
                mean += xc[i, j]
            mean /= d
            var = 0.0
            for j in range(d):
                dev = xc[i, j] - mean
                var += dev * dev
            var /= d
            r = 1.0 / sqrt(var + _EPS)
            rstd[i, 0] = r
            for j in range(d):
                y[i, j] = (xc[i, j] - mean) * r
    return y, rstd


def layernorm_bwd(cnp.ndarray y, cnp.ndarray rstd, cnp.ndarray gout):
    """Backward of layernorm_fwd through mean, variance and scaling."""
    cdef cnp.ndarray[double, ndim=2] yc = np.ascontiguousarray(y)
    cdef cnp.ndarray[double, ndim=2] rc = np.ascontiguousarray(rstd)
    cdef cnp.ndarray[double, ndim=2] gc = np.ascontiguousarray(gout)
    cdef Py_ssize_t n = yc.shape[0], d = yc.shape[1]
    cdef cnp.ndarray[double, ndim=2] gx = np.empty((n, d), dtype=np.float64)
    cdef Py_ssize_t i, j
    cdef double gm, gym
    with nogil:
        for i in range(n):
            gm = 0.0
            gym = 0.0
            for j in range(d):
                gm += gc[i, j]
                gym += gc[i, j] * yc[i, j]
            gm /= d
            gym /= d
            for j in range(d):
                gx[i, j] = rc[i, 0] * (gc[i, j] - gm - yc[i, j] * gym)
    return gx
