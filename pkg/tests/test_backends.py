"""Cross-backend equivalence: the compiled kernels must reproduce the
pure-Python reference bit for bit on every operation."""

from array import array

import pytest

from cmkd._backend import backend_name, load_backend
from cmkd.numerics import SeededRng

try:
    compiled = load_backend("compiled")
    HAVE_COMPILED = True
except ImportError:
    HAVE_COMPILED = False

pure = load_backend("python")

needs_compiled = pytest.mark.skipif(
    not HAVE_COMPILED, reason="compiled kernel extension not built")


def buf(rng, n):
    return rng.normals(n)


def out(n):
    return array("d", bytes(8 * n))


def run_both(name, *args_builder):
    """Call kernel `name` on both backends with independently built args."""
    results = []
    for backend in (pure, compiled):
        rng = SeededRng(4242)
        args = [b(rng) if callable(b) else b for b in args_builder]
        ret = getattr(backend, name)(*args)
        results.append((ret, [a.tobytes() if isinstance(a, array) else a
                              for a in args]))
    return results


M, K, N = 5, 7, 6


@needs_compiled
@pytest.mark.parametrize("name,args", [
    ("matmul", [lambda r: buf(r, M * K), M, K, lambda r: buf(r, K * N), N,
                lambda r: out(M * N)]),
    ("transpose", [lambda r: buf(r, M * N), M, N, lambda r: out(M * N)]),
    ("add_inplace", [lambda r: buf(r, 40), lambda r: buf(r, 40), 40]),
    ("sub", [lambda r: buf(r, 40), lambda r: buf(r, 40), lambda r: out(40), 40]),
    ("scale_inplace", [lambda r: buf(r, 40), 1.7, 40]),
    ("axpy_inplace", [lambda r: buf(r, 40), -0.3, lambda r: buf(r, 40), 40]),
    ("hadamard", [lambda r: buf(r, 40), lambda r: buf(r, 40), lambda r: out(40), 40]),
    ("add_row_inplace", [lambda r: buf(r, M * N), M, N, lambda r: buf(r, N)]),
    ("scale_rows_inplace", [lambda r: buf(r, M * N), M, N, lambda r: buf(r, M)]),
    ("scale_cols_inplace", [lambda r: buf(r, M * N), M, N, lambda r: buf(r, N)]),
    ("relu_inplace", [lambda r: buf(r, 40), 40]),
    ("relu_backward", [lambda r: buf(r, 40), lambda r: buf(r, 40),
                       lambda r: out(40), 40]),
    ("tanh_inplace", [lambda r: buf(r, 40), 40]),
    ("col_sums", [lambda r: buf(r, M * N), M, N, lambda r: out(N)]),
    ("col_sqnorms", [lambda r: buf(r, M * N), M, N, lambda r: out(N)]),
    ("row_sums", [lambda r: buf(r, M * N), M, N, lambda r: out(M)]),
    ("row_sqnorms", [lambda r: buf(r, M * N), M, N, lambda r: out(M)]),
    ("total_sum", [lambda r: buf(r, 40), 40]),
    ("sumsq_diff", [lambda r: buf(r, 40), lambda r: buf(r, 40), 40]),
    ("softmax_tau_rows", [lambda r: buf(r, M * N), M, N, 3.0,
                          lambda r: out(M * N)]),
    ("softmax_tau_backward", [lambda r: buf(r, M * N), lambda r: buf(r, M * N),
                              M, N, 2.0, lambda r: out(M * N)]),
    ("sgd_update", [lambda r: buf(r, 40), lambda r: buf(r, 40),
                    lambda r: buf(r, 40), 40, 0.1, 0.9, 5e-4]),
    ("sqdist_combine", [lambda r: buf(r, M * M), lambda r: buf(r, M),
                        lambda r: buf(r, M), M, M]),
    ("exp_neg_scale_inplace", [lambda r: buf(r, 40), 40, 0.7]),
    ("row_normalize", [lambda r: buf(r, M * N), M, N, 1e-12,
                       lambda r: out(M * N), lambda r: out(M)]),
    ("row_normalize_backward", [lambda r: buf(r, M * N), lambda r: buf(r, M),
                                lambda r: buf(r, M * N), M, N,
                                lambda r: out(M * N)]),
    ("sem_parts", [lambda r: buf(r, N * N), N, 0.3, 1.0, 1.0,
                   lambda r: out(N * N)]),
])
def test_kernel_bit_parity(name, args):
    (ret_py, bufs_py), (ret_c, bufs_c) = run_both(name, *args)
    assert ret_py == ret_c
    assert bufs_py == bufs_c


@needs_compiled
def test_ce_kernel_bit_parity():
    rng = SeededRng(7)
    rows, cols = 6, 4
    raw = rng.normals(rows * cols)
    probs = array("d", bytes(8 * rows * cols))
    pure.softmax_tau_rows(raw, rows, cols, 1.0, probs)
    labels = array("q", [0, 1, 2, 3, 0, 1])
    g1, g2 = out(rows * cols), out(rows * cols)
    v1 = pure.ce_forward_grad(probs, labels, rows, cols, 1e-300, g1)
    v2 = compiled.ce_forward_grad(probs, labels, rows, cols, 1e-300, g2)
    assert v1 == v2
    assert g1.tobytes() == g2.tobytes()


@needs_compiled
def test_kl_kernel_bit_parity():
    rng = SeededRng(8)
    rows, cols = 6, 4
    pt = array("d", bytes(8 * rows * cols))
    ps = array("d", bytes(8 * rows * cols))
    pure.softmax_tau_rows(rng.normals(rows * cols), rows, cols, 2.0, pt)
    pure.softmax_tau_rows(rng.normals(rows * cols), rows, cols, 2.0, ps)
    g1, g2 = out(rows * cols), out(rows * cols)
    v1 = pure.kl_forward_grad(pt, ps, rows, cols, 1e-300, g1)
    v2 = compiled.kl_forward_grad(pt, ps, rows, cols, 1e-300, g2)
    assert v1 == v2
    assert g1.tobytes() == g2.tobytes()


def test_active_backend_reports_name():
    assert backend_name() in ("compiled", "python")
