import math
import time

import numpy as np
import pytest
import scipy.linalg as sla
import scipy.sparse as sp

from bridgeplate.embedding import (
    d_scaling_probe,
    eigen_residual,
    embedding_for_grid,
    estimate_ce,
    smallest_eigenpair,
    write_table_csv,
)
from bridgeplate.energy import threshold_check
from bridgeplate.grid import GridConfig

from conftest import DESK_GRID, TABLE_GRID

# p -> published Ce
TABLE_CE = {2.5: 3.351865562758652, 3.0: 5.632082885891357, 4.0: 16.337171741287030}
# smallest eigenvalue of the table pencil, cross-checked with an 80-bit solve
LAMBDA1_TABLE = 0.4947834290973764


@pytest.fixture(scope="module")
def table_estimate():
    return embedding_for_grid(TABLE_GRID, 0.5)


def test_scalar_pencil():
    lam, x, _ = smallest_eigenpair(sp.csr_matrix([[2.0]]), np.array([1.0]))
    assert lam == pytest.approx(2.0, rel=1e-15)
    np.testing.assert_allclose(x, [1.0], rtol=1e-15)


def test_matches_dense_solver_on_small_pencil():
    rng = np.random.default_rng(0)
    B = rng.standard_normal((12, 12))
    Kmat = B @ B.T + 0.5 * np.eye(12)
    w = rng.uniform(0.5, 2.0, 12)
    lam, x, _ = smallest_eigenpair(sp.csr_matrix(Kmat), w)
    ref = sla.eigh(Kmat, np.diag(w), eigvals_only=True)[0]
    assert lam == pytest.approx(ref, rel=1e-12)
    res, _ = eigen_residual(Kmat, w, lam, x)
    assert res <= 1e-10
    assert w @ (x * x) == pytest.approx(1.0, abs=1e-12)
    assert w @ x > 0


def test_table_grid_eigenvalue(table_estimate):
    assert table_estimate.lambda1 == pytest.approx(LAMBDA1_TABLE, rel=1e-10)
    assert table_estimate.lambda1 > 0


def test_normalization_and_p2_identity(table_estimate):
    est = table_estimate
    assert est.weights @ (est.phi1 * est.phi1) == pytest.approx(1.0, abs=1e-12)
    assert est.ce(2.0) == pytest.approx(1.0 / est.lambda1, rel=1e-12)


def test_residual_at_rounding_floor(table_system, table_estimate):
    """The assembled product cannot be formed better than its rounding floor."""
    _, _, _, sys = table_system
    res, floor = eigen_residual(0.5 * sys.G, sys.weights, table_estimate.lambda1, table_estimate.phi1)
    assert res <= floor


@pytest.mark.parametrize("p", sorted(TABLE_CE))
def test_table_ce_rows(table_estimate, p):
    assert table_estimate.ce(p) == pytest.approx(TABLE_CE[p], rel=1e-6)


def test_estimate_ce_formula():
    w = np.array([0.5, 1.0, 0.5])
    phi = np.array([1.0, 0.5, -1.0])
    assert estimate_ce(4.0, phi, w, 3.0) == pytest.approx((0.5 + 0.125 + 0.5) / 8.0)
    with pytest.raises(ValueError):
        estimate_ce(1.0, phi, w, 1.5)


def test_deterministic(table_estimate):
    again = embedding_for_grid(TABLE_GRID, 0.5)
    assert again.lambda1 == table_estimate.lambda1
    assert np.array_equal(again.phi1, table_estimate.phi1)


def test_d_scaling_bounded():
    ds = (math.pi / 25, math.pi / 50, math.pi / 100)
    rows, ratio = d_scaling_probe(DESK_GRID, ds, 2.0)
    assert [r.d for r in rows] == list(ds)
    for r in rows:
        assert r.compensated == pytest.approx(r.Ce, rel=1e-15)
    assert 1.0 <= ratio < 4.0


def test_d_scaling_single_value():
    rows, ratio = d_scaling_probe(DESK_GRID, (math.pi / 50,), 3.0)
    assert len(rows) == 1 and ratio == 1.0


def test_table_csv(tmp_path):
    reps = [threshold_check(1e-4, 5.0, 3.0, 0.5, 1.0), threshold_check(1e-1, 5.0, 2.5, 0.5, 1.0)]
    path = tmp_path / "table.csv"
    write_table_csv(reps, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "p,Ce,lhs,rhs,satisfied"
    assert lines[1].endswith(",true") and lines[2].endswith(",false")
