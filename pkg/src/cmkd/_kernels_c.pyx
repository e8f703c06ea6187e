# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled twin of ``_kernels_py``.

Implements the identical operations in the identical order; together with
-ffp-contract=off this yields results bit-identical to the pure-Python
backend on the same platform. Keep in lockstep with _kernels_py.py.
"""

from libc.math cimport exp, log, sqrt, tanh

BACKEND_NAME = "compiled"


def matmul(double[::1] a, Py_ssize_t m, Py_ssize_t k,
           double[::1] b, Py_ssize_t n, double[::1] out):
    cdef Py_ssize_t i, j, kk, arow, orow, brow
    cdef double aik
    for i in range(m * n):
        out[i] = 0.0
    for i in range(m):
        arow = i * k
        orow = i * n
        for kk in range(k):
            aik = a[arow + kk]
            if aik == 0.0:
                continue
            brow = kk * n
            for j in range(n):
                out[orow + j] += aik * b[brow + j]


def transpose(double[::1] a, Py_ssize_t r, Py_ssize_t c, double[::1] out):
    cdef Py_ssize_t i, j, base
    for i in range(r):
        base = i * c
        for j in range(c):
            out[j * r + i] = a[base + j]


def add_inplace(double[::1] a, double[::1] b, Py_ssize_t n):
    cdef Py_ssize_t i
    for i in range(n):
        a[i] += b[i]


def sub(double[::1] a, double[::1] b, double[::1] out, Py_ssize_t n):
    cdef Py_ssize_t i
    for i in range(n):
        out[i] = a[i] - b[i]


def scale_inplace(double[::1] a, double s, Py_ssize_t n):
    cdef Py_ssize_t i
    for i in range(n):
        a[i] *= s


def axpy_inplace(double[::1] y, double s, double[::1] x, Py_ssize_t n):
    cdef Py_ssize_t i
    for i in range(n):
        y[i] += s * x[i]


def hadamard(double[::1] a, double[::1] b, double[::1] out, Py_ssize_t n):
    cdef Py_ssize_t i
    for i in range(n):
        out[i] = a[i] * b[i]


def add_row_inplace(double[::1] m, Py_ssize_t rows, Py_ssize_t cols, double[::1] row):
    cdef Py_ssize_t i, j, base
    for i in range(rows):
        base = i * cols
        for j in range(cols):
            m[base + j] += row[j]


def scale_rows_inplace(double[::1] m, Py_ssize_t rows, Py_ssize_t cols, double[::1] s):
    cdef Py_ssize_t i, j, base
    cdef double si
    for i in range(rows):
        si = s[i]
        base = i * cols
        for j in range(cols):
            m[base + j] *= si


def scale_cols_inplace(double[::1] m, Py_ssize_t rows, Py_ssize_t cols, double[::1] s):
    cdef Py_ssize_t i, j, base
    for i in range(rows):
        base = i * cols
        for j in range(cols):
            m[base + j] *= s[j]


def relu_inplace(double[::1] a, Py_ssize_t n):
    cdef Py_ssize_t i
    for i in range(n):
        if a[i] < 0.0:
            a[i] = 0.0


def relu_backward(double[::1] pre, double[::1] dpost, double[::1] out, Py_ssize_t n):
    cdef Py_ssize_t i
    for i in range(n):
        out[i] = dpost[i] if pre[i] > 0.0 else 0.0


def tanh_inplace(double[::1] a, Py_ssize_t n):
    cdef Py_ssize_t i
    for i in range(n):
        a[i] = tanh(a[i])


def col_sums(double[::1] a, Py_ssize_t r, Py_ssize_t c, double[::1] out):
    cdef Py_ssize_t i, j, base
    for j in range(c):
        out[j] = 0.0
    for i in range(r):
        base = i * c
        for j in range(c):
            out[j] += a[base + j]


def col_sqnorms(double[::1] a, Py_ssize_t r, Py_ssize_t c, double[::1] out):
    cdef Py_ssize_t i, j, base
    cdef double v
    for j in range(c):
        out[j] = 0.0
    for i in range(r):
        base = i * c
        for j in range(c):
            v = a[base + j]
            out[j] += v * v


def row_sums(double[::1] a, Py_ssize_t r, Py_ssize_t c, double[::1] out):
    cdef Py_ssize_t i, j, base
    cdef double s
    for i in range(r):
        s = 0.0
        base = i * c
        for j in range(c):
            s += a[base + j]
        out[i] = s


def row_sqnorms(double[::1] a, Py_ssize_t r, Py_ssize_t c, double[::1] out):
    cdef Py_ssize_t i, j, base
    cdef double s, v
    for i in range(r):
        s = 0.0
        base = i * c
        for j in range(c):
            v = a[base + j]
            s += v * v
        out[i] = s


def total_sum(double[::1] a, Py_ssize_t n):
    cdef Py_ssize_t i
    cdef double s = 0.0
    for i in range(n):
        s += a[i]
    return s


def sumsq_diff(double[::1] a, double[::1] b, Py_ssize_t n):
    cdef Py_ssize_t i
    cdef double s = 0.0, d
    for i in range(n):
        d = a[i] - b[i]
        s += d * d
    return s


def softmax_tau_rows(double[::1] x, Py_ssize_t rows, Py_ssize_t cols,
                     double tau, double[::1] out):
    cdef Py_ssize_t i, j, base
    cdef double mx, v, e, s
    for i in range(rows):
        base = i * cols
        mx = x[base] / tau
        for j in range(1, cols):
            v = x[base + j] / tau
            if v > mx:
                mx = v
        s = 0.0
        for j in range(cols):
            e = exp(x[base + j] / tau - mx)
            out[base + j] = e
            s += e
        for j in range(cols):
            out[base + j] /= s


def softmax_tau_backward(double[::1] probs, double[::1] up, Py_ssize_t rows,
                         Py_ssize_t cols, double tau, double[::1] out):
    cdef Py_ssize_t i, j, base
    cdef double dot
    for i in range(rows):
        base = i * cols
        dot = 0.0
        for j in range(cols):
            dot += up[base + j] * probs[base + j]
        for j in range(cols):
            out[base + j] = probs[base + j] * (up[base + j] - dot) / tau


def ce_forward_grad(double[::1] probs, long long[::1] labels, Py_ssize_t rows,
                    Py_ssize_t cols, double clamp, double[::1] gout):
    cdef Py_ssize_t i
    cdef double s = 0.0, p
    for i in range(rows * cols):
        gout[i] = 0.0
    for i in range(rows):
        p = probs[i * cols + labels[i]]
        if p < clamp:
            p = clamp
        s += log(p)
        gout[i * cols + labels[i]] = -1.0 / (rows * p)
    return -s / rows


def kl_forward_grad(double[::1] pt, double[::1] ps, Py_ssize_t rows,
                    Py_ssize_t cols, double clamp, double[::1] gout):
    cdef Py_ssize_t i, j, base
    cdef double s = 0.0, t, p, tc
    for i in range(rows):
        base = i * cols
        for j in range(cols):
            t = pt[base + j]
            p = ps[base + j]
            if p < clamp:
                p = clamp
            if t > 0.0:
                tc = t if t > clamp else clamp
                s += t * (log(tc) - log(p))
            gout[base + j] = -t / (rows * p)
    return s / rows


def sgd_update(double[::1] param, double[::1] grad, double[::1] vel,
               Py_ssize_t n, double lr, double momentum, double wd):
    cdef Py_ssize_t i
    cdef double v
    for i in range(n):
        v = momentum * vel[i] + grad[i] + wd * param[i]
        vel[i] = v
        param[i] -= lr * v


def sqdist_combine(double[::1] dots, double[::1] qn, double[::1] vn,
                   Py_ssize_t nq, Py_ssize_t nv):
    cdef Py_ssize_t i, j, base
    cdef double qi, d
    for i in range(nq):
        base = i * nv
        qi = qn[i]
        for j in range(nv):
            d = qi + vn[j] - 2.0 * dots[base + j]
            dots[base + j] = d if d > 0.0 else 0.0


def exp_neg_scale_inplace(double[::1] a, Py_ssize_t n, double inv_s2):
    cdef Py_ssize_t i
    for i in range(n):
        a[i] = exp(-a[i] * inv_s2)


def row_normalize(double[::1] x, Py_ssize_t rows, Py_ssize_t cols, double eps,
                  double[::1] out, double[::1] inv_norms):
    cdef Py_ssize_t i, j, base
    cdef double s, v, nrm, inv
    for i in range(rows):
        base = i * cols
        s = 0.0
        for j in range(cols):
            v = x[base + j]
            s += v * v
        nrm = sqrt(s)
        if nrm < eps:
            nrm = eps
        inv = 1.0 / nrm
        inv_norms[i] = inv
        for j in range(cols):
            out[base + j] = x[base + j] * inv


def row_normalize_backward(double[::1] y, double[::1] inv_norms, double[::1] dy,
                           Py_ssize_t rows, Py_ssize_t cols, double[::1] out):
    cdef Py_ssize_t i, j, base
    cdef double dot, inv
    for i in range(rows):
        base = i * cols
        dot = 0.0
        for j in range(cols):
            dot += y[base + j] * dy[base + j]
        inv = inv_norms[i]
        for j in range(cols):
            out[base + j] = (dy[base + j] - y[base + j] * dot) * inv


def sem_parts(double[::1] cmat, Py_ssize_t d, double lam, double wd, double wo,
              double[::1] gout):
    cdef Py_ssize_t i, j, base
    cdef double vd = 0.0, vo = 0.0, cij, r
    for i in range(d):
        base = i * d
        for j in range(d):
            cij = cmat[base + j]
            if i == j:
                r = 1.0 - cij
                vd += r * r
                gout[base + j] = wd * (-2.0) * r
            else:
                vo += cij * cij
                gout[base + j] = wo * lam * 2.0 * cij
    return vd, vo
