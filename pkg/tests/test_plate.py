import numpy as np
import pytest
import scipy.sparse as sp

from bridgeplate.errors import ConfigError
from bridgeplate.grid import GridConfig, build_grid
from bridgeplate.plate import SpdSolver, assemble_plate, solve_static, write_field_csv
from bridgeplate.sbp import build_operators


def test_gram_symmetric(table_system):
    *_, sys = table_system
    HK = (sys.H @ sys.K).tocsr()
    defect = abs(HK - HK.T).max()
    assert defect <= 1e-12 * abs(HK).max()


def test_zero_maps_to_zero(desk_system):
    *_, sys = desk_system
    assert not np.any(sys.apply(np.zeros(sys.n)))


def test_pencil_positive(desk_system):
    import scipy.linalg as sl

    *_, sys = desk_system
    ev = sl.eigh(sys.G.toarray(), np.diag(sys.weights), eigvals_only=True, subset_by_index=[0, 9])
    assert np.all(ev > 0)


def test_factored_norm_matches_gram(desk_system):
    *_, sys = desk_system
    rng = np.random.default_rng(3)
    u = rng.standard_normal(sys.n)
    assert sys.energy_norm2_factored(u) == pytest.approx(sys.energy_norm2(u), rel=1e-10)


def test_sigma_outside_range():
    g = build_grid(GridConfig(6, 6, 0.5, 0.2))
    _, ops = build_operators(g)
    with pytest.raises(ConfigError, match="sigma"):
        assemble_plate(ops, g, 0.6)


def test_static_zero_load(desk_system):
    *_, sys = desk_system
    assert not np.any(solve_static(sys, np.zeros(sys.n)))


def test_static_profile_and_symmetry(table_system):
    grid, _, _, sys = table_system
    x, y = grid.mesh()
    u = solve_static(sys, np.sin(x) / 10)
    assert u.max() > 0
    assert abs(x[np.argmax(u)] - np.pi / 2) <= grid.dx
    assert np.max(np.abs(u - grid.reflect_y(u))) <= 1e-9 * np.max(np.abs(u))
    # one lobe: every y-layer increases then decreases along x
    for row in u.reshape(grid.shape):
        k = int(np.argmax(row))
        assert np.all(np.diff(row[: k + 1]) > 0) and np.all(np.diff(row[k:]) < 0)


def test_static_linearity(table_system):
    grid, _, _, sys = table_system
    x, y = grid.mesh()
    f, g = np.sin(x) / 10, np.cos(y) * np.sin(2 * x)
    u1 = solve_static(sys, np.sin(x) / 10)
    assert np.allclose(solve_static(sys, 5 * np.sin(x)), 50 * u1, rtol=1e-9, atol=0)
    combo = solve_static(sys, 2 * f - 3 * g)
    ref = 2 * solve_static(sys, f) - 3 * solve_static(sys, g)
    assert np.max(np.abs(combo - ref)) <= 1e-9 * np.max(np.abs(ref))


def test_static_residual_small_relative_to_rounding(table_system):
    grid, _, _, sys = table_system
    x, _ = grid.mesh()
    f = np.sin(x) / 10
    u = solve_static(sys, f)
    w = sys.weights
    res = sys.K @ u - f
    eta = np.sqrt(w @ res**2) / (np.sqrt(w @ (abs(sys.K) @ np.abs(u)) ** 2) + np.sqrt(w @ f**2))
    assert eta <= 1e-10


def test_y_reflection_equivariance(desk_system):
    grid, _, _, sys = desk_system
    x, y = grid.mesh()
    f = np.sin(x) * (1 + y)
    u = solve_static(sys, f)
    ur = solve_static(sys, grid.reflect_y(f))
    assert np.allclose(ur, grid.reflect_y(u), rtol=0, atol=1e-9 * np.max(np.abs(u)))


def test_iterative_branch_agrees_with_direct(monkeypatch):
    import bridgeplate.plate as plate

    A = sp.diags([-1.0, 2.5, -1.0], [-1, 0, 1], shape=(40, 40), format="csc")
    b = np.arange(40, dtype=float)
    x_direct = SpdSolver(A).solve(b)
    monkeypatch.setattr(plate, "DIRECT_SOLVE_LIMIT", 10)
    x_cg = plate.SpdSolver(A).solve(b)
    assert np.allclose(x_cg, x_direct, rtol=1e-8)


def test_field_csv(tmp_path, desk_system):
    grid, _, _, sys = desk_system
    path = tmp_path / "u.csv"
    write_field_csv(grid, np.zeros(sys.n), path)
    lines = path.read_text().splitlines()
    assert lines[0] == "x,y,u"
    assert len(lines) == grid.dof_count + 1
    assert all(float(line.split(",")[2]) == 0.0 for line in lines[1:])
