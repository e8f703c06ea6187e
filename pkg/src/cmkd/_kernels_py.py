"""Pure-Python numeric kernels.

This module is the reference implementation of the hot-loop kernels; the
compiled twin (``_kernels_c``, built from ``_kernels_c.pyx``) implements the
same operations with the same operation order and must produce bit-identical
results. Keep the two files in lockstep: any semantic change here must be
mirrored there.

All buffers are flat row-major ``array('d')`` (or any mutable sequence of
floats); matrices are passed as (buffer, rows, cols). Every reduction runs in
ascending index order so results are reproducible across runs, platforms and
backends.
"""

import math

BACKEND_NAME = "python"


# -- dense algebra ----------------------------------------------------------

def matmul(a, m, k, b, n, out):
    """out[m*n] = a[m*k] @ b[k*n], contraction index ascending."""
    for idx in range(m * n):
        out[idx] = 0.0
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


def transpose(a, r, c, out):
    for i in range(r):
        base = i * c
        for j in range(c):
            out[j * r + i] = a[base + j]


def add_inplace(a, b, n):
    for i in range(n):
        a[i] += b[i]


def sub(a, b, out, n):
    for i in range(n):
        out[i] = a[i] - b[i]


def scale_inplace(a, s, n):
    for i in range(n):
        a[i] *= s


def axpy_inplace(y, s, x, n):
    for i in range(n):
        y[i] += s * x[i]


def hadamard(a, b, out, n):
    for i in range(n):
        out[i] = a[i] * b[i]


def add_row_inplace(m, rows, cols, row):
    for i in range(rows):
        base = i * cols
        for j in range(cols):
            m[base + j] += row[j]


def scale_rows_inplace(m, rows, cols, s):
    for i in range(rows):
        si = s[i]
        base = i * cols
        for j in range(cols):
            m[base + j] *= si


def scale_cols_inplace(m, rows, cols, s):
    for i in range(rows):
        base = i * cols
        for j in range(cols):
            m[base + j] *= s[j]


# -- activations ------------------------------------------------------------

def relu_inplace(a, n):
    for i in range(n):
        if a[i] < 0.0:
            a[i] = 0.0


def relu_backward(pre, dpost, out, n):
    for i in range(n):
        out[i] = dpost[i] if pre[i] > 0.0 else 0.0


def tanh_inplace(a, n):
    for i in range(n):
        a[i] = math.tanh(a[i])


# -- reductions --------------------------------------------------------------

def col_sums(a, r, c, out):
    for j in range(c):
        out[j] = 0.0
    for i in range(r):
        base = i * c
        for j in range(c):
            out[j] += a[base + j]


def col_sqnorms(a, r, c, out):
    for j in range(c):
        out[j] = 0.0
    for i in range(r):
        base = i * c
        for j in range(c):
            v = a[base + j]
            out[j] += v * v


def row_sums(a, r, c, out):
    for i in range(r):
        s = 0.0
        base = i * c
        for j in range(c):
            s += a[base + j]
        out[i] = s


def row_sqnorms(a, r, c, out):
    for i in range(r):
        s = 0.0
        base = i * c
        for j in range(c):
            v = a[base + j]
            s += v * v
        out[i] = s


def total_sum(a, n):
    s = 0.0
    for i in range(n):
        s += a[i]
    return s


def sumsq_diff(a, b, n):
    s = 0.0
    for i in range(n):
        d = a[i] - b[i]
        s += d * d
    return s


# -- softmax / classification -------------------------------------------------

def softmax_tau_rows(x, rows, cols, tau, out):
    """Row-wise softmax of x/tau, stabilised by row-max subtraction."""
    for i in range(rows):
        base = i * cols
        mx = x[base] / tau
        for j in range(1, cols):
            v = x[base + j] / tau
            if v > mx:
                mx = v
        s = 0.0
        for j in range(cols):
            e = math.exp(x[base + j] / tau - mx)
            out[base + j] = e
            s += e
        for j in range(cols):
            out[base + j] /= s


def softmax_tau_backward(probs, up, rows, cols, tau, out):
    """out = d(loss)/d(logits) given probs = softmax(logits/tau) and up = d(loss)/d(probs)."""
    for i in range(rows):
        base = i * cols
        dot = 0.0
        for j in range(cols):
            dot += up[base + j] * probs[base + j]
        for j in range(cols):
            out[base + j] = probs[base + j] * (up[base + j] - dot) / tau


def ce_forward_grad(probs, labels, rows, cols, clamp, gout):
    """Mean negative log-likelihood; gout gets d/d(probs)."""
    for i in range(rows * cols):
        gout[i] = 0.0
    s = 0.0
    for i in range(rows):
        p = probs[i * cols + labels[i]]
        if p < clamp:
            p = clamp
        s += math.log(p)
        gout[i * cols + labels[i]] = -1.0 / (rows * p)
    return -s / rows


def kl_forward_grad(pt, ps, rows, cols, clamp, gout):
    """Mean over rows of KL(teacher || student); gout gets d/d(student probs)."""
    s = 0.0
    for i in range(rows):
        base = i * cols
        for j in range(cols):
            t = pt[base + j]
            p = ps[base + j]
            if p < clamp:
                p = clamp
            if t > 0.0:
                tc = t if t > clamp else clamp
                s += t * (math.log(tc) - math.log(p))
            gout[base + j] = -t / (rows * p)
    return s / rows


# -- optimizer ----------------------------------------------------------------

def sgd_update(param, grad, vel, n, lr, momentum, wd):
    """v <- momentum*v + grad + wd*param; param <- param - lr*v."""
    for i in range(n):
        v = momentum * vel[i] + grad[i] + wd * param[i]
        vel[i] = v
        param[i] -= lr * v


# -- pairwise / kernel-statistic pieces ----------------------------------------

def sqdist_combine(dots, qn, vn, nq, nv):
    """dots[i,j] <- max(qn[i] + vn[j] - 2*dots[i,j], 0)."""
    for i in range(nq):
        base = i * nv
        qi = qn[i]
        for j in range(nv):
            d = qi + vn[j] - 2.0 * dots[base + j]
            dots[base + j] = d if d > 0.0 else 0.0


def exp_neg_scale_inplace(a, n, inv_s2):
    for i in range(n):
        a[i] = math.exp(-a[i] * inv_s2)


# -- row normalization ----------------------------------------------------------

def row_normalize(x, rows, cols, eps, out, inv_norms):
    for i in range(rows):
        base = i * cols
        s = 0.0
        for j in range(cols):
            v = x[base + j]
            s += v * v
        nrm = math.sqrt(s)
        if nrm < eps:
            nrm = eps
        inv = 1.0 / nrm
        inv_norms[i] = inv
        for j in range(cols):
            out[base + j] = x[base + j] * inv


def row_normalize_backward(y, inv_norms, dy, rows, cols, out):
    """Given y = x/|x| (rows) and dy, write d(loss)/dx."""
    for i in range(rows):
        base = i * cols
        dot = 0.0
        for j in range(cols):
            dot += y[base + j] * dy[base + j]
        inv = inv_norms[i]
        for j in range(cols):
            out[base + j] = (dy[base + j] - y[base + j] * dot) * inv


# -- redundancy-reduction objective core ----------------------------------------

def sem_parts(cmat, d, lam, wd, wo, gout):
    """Split d x d correlation objective into its two sums.

    Returns (diag_sum, offdiag_sum) with diag_sum = sum_i (1-C_ii)^2 and
    offdiag_sum = sum_{i != j} C_ij^2; gout gets the gradient of
    wd*diag_sum + wo*lam*offdiag_sum with respect to C.
    """
    vd = 0.0
    vo = 0.0
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
