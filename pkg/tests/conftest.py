import json
import os

import pytest

from cmkd.data import GenSpec, generate
from cmkd.numerics import Matrix, SeededRng, from_flat, zeros

ORACLES_PATH = os.path.join(os.path.dirname(__file__), "data", "oracles.json")


@pytest.fixture(scope="session")
def oracles():
    with open(ORACLES_PATH) as fh:
        return json.load(fh)


@pytest.fixture(scope="session")
def tiny_dataset():
    """Small paired dataset shared by fast training tests."""
    return generate(GenSpec(classes=4, dim=16, per_class=40), SeededRng(77))


def random_matrix(rng: SeededRng, rows: int, cols: int) -> Matrix:
    return from_flat(rows, cols, rng.normals(rows * cols))


def numeric_grad(f, m: Matrix, h: float = 1e-5) -> Matrix:
    """Central finite differences of a scalar function of one matrix."""
    g = zeros(m.rows, m.cols)
    for i in range(m.size):
        orig = m.data[i]
        m.data[i] = orig + h
        fp = f()
        m.data[i] = orig - h
        fm = f()
        m.data[i] = orig
        g.data[i] = (fp - fm) / (2.0 * h)
    return g


def max_rel_err(analytic: Matrix, numeric: Matrix) -> float:
    worst = 0.0
    for a, n in zip(analytic.data, numeric.data):
        err = abs(a - n) / max(1.0, abs(a), abs(n))
        if err > worst:
            worst = err
    return worst


def assert_grad_matches(analytic: Matrix, numeric: Matrix, tol: float = 1e-5):
    err = max_rel_err(analytic, numeric)
    assert err <= tol, f"gradient mismatch: worst relative error {err:.3e} > {tol}"
