import math

import numpy as np
import pytest
import scipy.sparse as sp

from bridgeplate.errors import ConfigError, DimensionMismatch
from bridgeplate.grid import GridConfig, build_grid
from bridgeplate.sbp import (
    build_operators,
    build_sbp_1d,
    build_sbp_2d,
    dump_triplets,
    load_triplets,
    second_derivative_sbp,
)

GRIDS = [
    GridConfig(60, 20, math.pi / 50, 0.1),
    GridConfig(60, 20, math.pi / 50, 0.1, "cell-centered"),
    GridConfig(30, 10, math.pi / 50, 0.1, "cell-centered"),
    GridConfig(7, 5, 0.8, 0.3),
]


@pytest.fixture(params=GRIDS, ids=lambda c: f"J{c.J}K{c.K}{c.y_layout[0]}")
def built(request):
    g = build_grid(request.param)
    ops1, ops = build_operators(g)
    return g, ops1, ops


def test_sbp_identity(built):
    _, ops1, _ = built
    assert ops1.sbp_defect() <= 1e-14


def test_first_derivative_exact_on_affine(built):
    g, ops1, _ = built
    assert np.max(np.abs(ops1.D1y @ g.y_nodes - 1.0)) <= 1e-12


def test_second_derivative_exact_on_quadratics(built):
    g, ops1, _ = built
    y = g.y_nodes
    assert np.max(np.abs(ops1.D2y @ np.ones_like(y))) <= 1e-9
    assert np.max(np.abs(ops1.D2y @ y)) <= 1e-9
    assert np.max(np.abs(ops1.D2y @ y**2 - 2.0)) <= 1e-10


def test_stencil_rows():
    D = second_derivative_sbp(6, 0.5).toarray() * 0.25
    assert np.allclose(D[0, :4], [2, -5, 4, -1])
    assert np.allclose(D[-1, -4:], [-1, 4, -5, 2])
    assert np.allclose(D[2, 1:4], [1, -2, 1])


def test_d2x_symmetric_negative_definite(built):
    _, ops1, _ = built
    A = ops1.D2x.toarray()
    assert np.array_equal(A, A.T)
    assert np.linalg.eigvalsh(A).max() < 0


def test_norm_weights(built):
    g, ops1, ops = built
    hy = ops1.Hy.diagonal()
    assert hy[0] == pytest.approx(g.dy / 2) and hy[-1] == pytest.approx(g.dy / 2)
    w = ops.weights.reshape(g.shape)
    assert np.allclose(w[1:-1], g.dx * g.dy)
    assert np.allclose(w[0], g.dx * g.dy / 2)


def test_kronecker_commute(built):
    _, _, ops = built
    rng = np.random.default_rng(0)
    v = rng.standard_normal(ops.n)
    a = ops.Dxx @ (ops.Dyy @ v)
    b = ops.Dyy @ (ops.Dxx @ v)
    assert np.max(np.abs(a - b)) <= 1e-12 * np.max(np.abs(a))


def test_dxx_on_sine(built):
    g, _, ops = built
    x, _ = g.mesh()
    err = np.max(np.abs(ops.Dxx @ np.sin(x) + np.sin(x)))
    assert err <= 0.5 * g.dx**2


def test_dxy_on_xy_interior(built):
    g, _, ops = built
    x, y = g.mesh()
    r = (ops.Dxy @ (x * y)).reshape(g.shape)
    assert np.allclose(r[1:-1, 1:-1], 1.0, atol=1e-9)


def test_gram_forms_nonnegative(built):
    _, _, ops = built
    rng = np.random.default_rng(1)
    for _ in range(100):
        v = rng.standard_normal(ops.n)
        for D in (ops.Dxx, ops.Dyy, ops.Dxy):
            assert v @ (D.T @ (ops.H @ (D @ v))) >= 0


def test_kronecker_sparsity(built):
    g, ops1, ops = built
    assert ops.Dxx.nnz == g.ny * ops1.D2x.nnz
    assert ops.Dyy.nnz == g.nx * ops1.D2y.nnz
    assert ops.Dxy.nnz == ops1.D1y.nnz * ops1.D1x.nnz


def test_fourth_order_blocks(built):
    _, _, ops = built
    ref = (ops.Dyy.T @ ops.H @ ops.Dyy).toarray()
    assert np.array_equal(ops.Dyyyy.toarray(), ref)


def test_too_few_y_nodes_for_closure():
    g = build_grid(GridConfig(5, 2, 0.5, 0.2))
    with pytest.raises(ConfigError, match="closure"):
        build_sbp_1d(g)


def test_dimension_mismatch():
    g1 = build_grid(GridConfig(5, 6, 0.5, 0.2))
    g2 = build_grid(GridConfig(6, 6, 0.5, 0.2))
    with pytest.raises(DimensionMismatch):
        build_sbp_2d(build_sbp_1d(g1), g2)


def test_triplet_roundtrip(tmp_path, built):
    _, _, ops = built
    path = tmp_path / "dxy.csv"
    dump_triplets(ops.Dxy, path)
    back = load_triplets(path, ops.Dxy.shape)
    assert (back != ops.Dxy).nnz == 0
    assert path.read_text().splitlines()[0] == "row,col,value"
