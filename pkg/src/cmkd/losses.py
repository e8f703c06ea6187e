"""Objective terms for cross-modal distillation, each with analytic gradients.

Every loss is a pure function returning a ValueWithGrad; gradients are exact
(they are checked against central finite differences in the test suite).
Teacher-side inputs are treated as constants: sem_loss and dcm_loss only
differentiate through their first argument.
"""

from __future__ import annotations

from array import array
from dataclasses import dataclass, field
from math import log, sqrt, exp

from ._backend import kernels
from .numerics import Matrix, ShapeError, matmul, sub, transpose, zeros

LOG_CLAMP = 1e-300  # saturate rather than overflow on hard-zero probabilities


@dataclass(frozen=True)
class LossConfig:
    """Free hyperparameters of the distillation objectives.

    lam      off-diagonal weight inside the redundancy-reduction loss
    gamma    weight of the structural terms in the overall objective
    tau      softmax temperature for softened class scores
    sigma    RBF bandwidth for the distribution-calibration loss
    eps      guard on column norms before division
    """

    lam: float = 5e-3
    gamma: float = 0.02
    tau: float = 4.0
    sigma: float = 1.0
    eps: float = 1e-12

    def validate(self) -> "LossConfig":
        if not self.tau > 0:
            raise ValueError(f"tau must be positive, got {self.tau}")
        if not self.sigma > 0:
            raise ValueError(f"sigma must be positive, got {self.sigma}")
        if self.lam < 0 or self.gamma < 0:
            raise ValueError("lam and gamma must be non-negative")
        if not 0 < self.eps <= 1e-6:
            raise ValueError(f"eps must be in (0, 1e-6], got {self.eps}")
        return self


@dataclass
class CrossCorrMatrix:
    """Batch-normalized d x d correlation between two projected embeddings."""

    c: Matrix
    d: int


@dataclass
class ValueWithGrad:
    value: float
    grads: dict = field(default_factory=dict)


# -- supervision ---------------------------------------------------------------

def cross_entropy(probs: Matrix, labels) -> ValueWithGrad:
    """Mean negative log-likelihood of the given class probabilities."""
    n, k = probs.rows, probs.cols
    lab = array("q", (int(y) for y in labels))
    if len(lab) != n:
        raise ShapeError(f"cross_entropy: {len(lab)} labels for {n} rows")
    for y in lab:
        if y < 0 or y >= k:
            raise ValueError(f"cross_entropy: label {y} outside [0, {k})")
    _check_row_stochastic(probs)
    g = zeros(n, k)
    value = kernels.ce_forward_grad(probs.data, lab, n, k, LOG_CLAMP, g.data)
    return ValueWithGrad(value, {"probs": g})


def _check_row_stochastic(probs: Matrix):
    sums = array("d", bytes(8 * probs.rows))
    kernels.row_sums(probs.data, probs.rows, probs.cols, sums)
    for i, s in enumerate(sums):
        if abs(s - 1.0) > 1e-9:
            raise ValueError(f"probability row {i} sums to {s!r}, not 1")
    for v in probs.data:
        if v < 0.0:
            raise ValueError("probabilities must be non-negative")


def soften(logits: Matrix, tau: float) -> Matrix:
    """Row-wise softmax of logits/tau, stabilized by row-max subtraction."""
    if not tau > 0:
        raise ValueError(f"soften: tau must be positive, got {tau}")
    out = zeros(logits.rows, logits.cols)
    kernels.softmax_tau_rows(logits.data, logits.rows, logits.cols, tau, out.data)
    return out


def soften_backward(probs: Matrix, upstream: Matrix, tau: float) -> Matrix:
    """Chain an upstream d(loss)/d(probs) back to the raw logits."""
    out = zeros(probs.rows, probs.cols)
    kernels.softmax_tau_backward(probs.data, upstream.data, probs.rows,
                                 probs.cols, tau, out.data)
    return out


def kd_divergence(p_student: Matrix, p_teacher: Matrix) -> ValueWithGrad:
    """Mean KL(teacher || student) over rows; gradient w.r.t. student only."""
    if p_student.shape != p_teacher.shape:
        raise ShapeError(
            f"kd_divergence: shapes differ, {p_student.shape} vs {p_teacher.shape}")
    g = zeros(p_student.rows, p_student.cols)
    value = kernels.kl_forward_grad(p_teacher.data, p_student.data,
                                    p_student.rows, p_student.cols,
                                    LOG_CLAMP, g.data)
    return ValueWithGrad(value, {"student": g})


# -- gram-matrix baseline ---------------------------------------------------------

def gram_divergence(z1: Matrix, z2: Matrix) -> ValueWithGrad:
    """Mean squared difference between the two d x d self-similarity matrices."""
    if z1.shape != z2.shape:
        raise ShapeError(f"gram_divergence: shapes differ, {z1.shape} vs {z2.shape}")
    d = z1.cols
    g1 = matmul(transpose(z1), z1)
    g2 = matmul(transpose(z2), z2)
    diff = sub(g1, g2)
    dd = float(d * d)
    value = kernels.sumsq_diff(g1.data, g2.data, d * d) / dd
    grad = matmul(z1, diff)
    kernels.scale_inplace(grad.data, 4.0 / dd, grad.size)
    return ValueWithGrad(value, {"z1": grad})


# -- cross-correlation / redundancy reduction --------------------------------------

def cross_correlation(z1: Matrix, z2: Matrix, eps: float) -> CrossCorrMatrix:
    """C[i,j] = <z1 col i, z2 col j> / (norm_i * norm_j), norms clamped at eps."""
    c, _, _ = _cross_correlation_parts(z1, z2, eps)
    return CrossCorrMatrix(c, z1.cols)


def _cross_correlation_parts(z1, z2, eps):
    if z1.shape != z2.shape:
        raise ShapeError(
            f"cross_correlation: shapes differ, {z1.shape} vs {z2.shape}")
    d = z1.cols
    sq1 = array("d", bytes(8 * d))
    sq2 = array("d", bytes(8 * d))
    kernels.col_sqnorms(z1.data, z1.rows, d, sq1)
    kernels.col_sqnorms(z2.data, z2.rows, d, sq2)
    n1 = array("d", (max(sqrt(v), eps) for v in sq1))
    n2 = array("d", (max(sqrt(v), eps) for v in sq2))
    inv1 = array("d", (1.0 / v for v in n1))
    inv2 = array("d", (1.0 / v for v in n2))
    c = matmul(transpose(z1), z2)
    kernels.scale_rows_inplace(c.data, d, d, inv1)
    kernels.scale_cols_inplace(c.data, d, d, inv2)
    return c, (n1, inv1), (n2, inv2)


def sem_loss(z1: Matrix, z2: Matrix, lam: float, eps: float) -> ValueWithGrad:
    """Redundancy-reduction loss on the cross-correlation matrix.

    value = sum_i (1 - C_ii)^2 + lam * sum_{i != j} C_ij^2, with gradient
    flowing into z1 only (z2 is the frozen teacher side).
    """
    value, grad, _ = sem_loss_parts(z1, z2, lam, eps)
    return ValueWithGrad(value, {"z1": grad})


def sem_loss_parts(z1, z2, lam, eps, diag_weight=1.0, offdiag_weight=1.0):
    """sem_loss with separately weighted diagonal/off-diagonal terms.

    Returns (value, grad_z1, (diag_sum, offdiag_sum)); the weights let the
    ablation harness zero one term while keeping the other intact.
    """
    c, (n1, inv1), (_, inv2) = _cross_correlation_parts(z1, z2, eps)
    d = z1.cols
    g = zeros(d, d)
    vd, vo = kernels.sem_parts(c.data, d, lam, diag_weight, offdiag_weight, g.data)
    value = diag_weight * vd + offdiag_weight * lam * vo

    # d(value)/dz1[b,i] = sum_j G_ij * z2n[b,j] / n1_i  -  z1[b,i] * rowdot_i / n1_i^2
    z2n = z2.copy()
    kernels.scale_cols_inplace(z2n.data, z2n.rows, d, inv2)
    grad = matmul(z2n, transpose(g))
    kernels.scale_cols_inplace(grad.data, grad.rows, d, inv1)

    gc = zeros(d, d)
    kernels.hadamard(g.data, c.data, gc.data, d * d)
    rowdot = array("d", bytes(8 * d))
    kernels.row_sums(gc.data, d, d, rowdot)
    # norm clamped at eps: the norm derivative vanishes there
    w = array("d", (rowdot[i] * inv1[i] * inv1[i] if n1[i] > eps else 0.0
                    for i in range(d)))
    t2 = z1.copy()
    kernels.scale_cols_inplace(t2.data, t2.rows, d, w)
    kernels.axpy_inplace(grad.data, -1.0, t2.data, grad.size)
    return value, grad, (vd, vo)


# -- distribution calibration -------------------------------------------------------

def rbf_kernel(u, v, sigma: float) -> float:
    """exp(-|u - v|^2 / sigma^2) for two plain vectors."""
    if len(u) != len(v):
        raise ShapeError(f"rbf_kernel: dimensions differ, {len(u)} vs {len(v)}")
    if not sigma > 0:
        raise ValueError(f"rbf_kernel: sigma must be positive, got {sigma}")
    sq = 0.0
    for a, b in zip(u, v):
        d = a - b
        sq += d * d
    return exp(-sq / (sigma * sigma))


def ldm(tq: Matrix, tv: Matrix, sigma: float) -> ValueWithGrad:
    """log of the mean RBF kernel over all (row of tq, row of tv) pairs.

    Gradients are returned for both inputs under keys "q" and "v"; a caller
    holding one side frozen simply ignores that side's gradient, and a caller
    passing the same matrix twice adds the two.
    """
    if tq.shape != tv.shape:
        raise ShapeError(f"ldm: shapes differ, {tq.shape} vs {tv.shape}")
    n, dim = tq.rows, tq.cols
    kmat, s_mean = _rbf_matrix(tq, tv, sigma)
    value = log(s_mean)

    coef = 2.0 / (sigma * sigma * n * n * s_mean)
    rsum = array("d", bytes(8 * n))
    csum = array("d", bytes(8 * n))
    kernels.row_sums(kmat.data, n, n, rsum)
    kernels.col_sums(kmat.data, n, n, csum)

    gq = matmul(kmat, tv)               # gq_i = sum_j K_ij tv_j
    kernels.scale_inplace(gq.data, coef, gq.size)
    tq_w = tq.copy()
    kernels.scale_rows_inplace(tq_w.data, n, dim, rsum)
    kernels.axpy_inplace(gq.data, -coef, tq_w.data, gq.size)

    gv = matmul(transpose(kmat), tq)    # gv_j = sum_i K_ij tq_i
    kernels.scale_inplace(gv.data, coef, gv.size)
    tv_w = tv.copy()
    kernels.scale_rows_inplace(tv_w.data, n, dim, csum)
    kernels.axpy_inplace(gv.data, -coef, tv_w.data, gv.size)
    return ValueWithGrad(value, {"q": gq, "v": gv})


def _rbf_matrix(tq, tv, sigma):
    n = tq.rows
    qn = array("d", bytes(8 * n))
    vn = array("d", bytes(8 * n))
    kernels.row_sqnorms(tq.data, n, tq.cols, qn)
    kernels.row_sqnorms(tv.data, n, tv.cols, vn)
    dots = matmul(tq, transpose(tv))
    kernels.sqdist_combine(dots.data, qn, vn, n, n)
    kernels.exp_neg_scale_inplace(dots.data, n * n, 1.0 / (sigma * sigma))
    s_mean = kernels.total_sum(dots.data, n * n) / (n * n)
    return dots, s_mean


def dcm_loss(t1: Matrix, t2: Matrix, sigma: float) -> ValueWithGrad:
    """ldm(t1, t1) + ldm(t1, t2); gradient w.r.t. t1 only (t2 frozen)."""
    if t1.shape != t2.shape:
        raise ShapeError(f"dcm_loss: shapes differ, {t1.shape} vs {t2.shape}")
    self_term = ldm(t1, t1, sigma)
    cross_term = ldm(t1, t2, sigma)
    grad = self_term.grads["q"]
    kernels.add_inplace(grad.data, self_term.grads["v"].data, grad.size)
    kernels.add_inplace(grad.data, cross_term.grads["q"].data, grad.size)
    return ValueWithGrad(self_term.value + cross_term.value, {"t1": grad})


# -- combinations -----------------------------------------------------------------

def overall_loss(ce: float, sem: float, dcm: float, gamma: float) -> float:
    """ce + gamma * (sem + dcm)."""
    if gamma < 0:
        raise ValueError(f"overall_loss: gamma must be non-negative, got {gamma}")
    return ce + gamma * (sem + dcm)


def feature_mse(t1: Matrix, t2: Matrix) -> ValueWithGrad:
    """Mean squared elementwise difference; gradient w.r.t. t1."""
    if t1.shape != t2.shape:
        raise ShapeError(f"feature_mse: shapes differ, {t1.shape} vs {t2.shape}")
    size = t1.size
    value = kernels.sumsq_diff(t1.data, t2.data, size) / size
    grad = sub(t1, t2)
    kernels.scale_inplace(grad.data, 2.0 / size, size)
    return ValueWithGrad(value, {"t1": grad})
