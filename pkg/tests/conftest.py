import sys
import math

import pytest

from bridgeplate.grid import GridConfig, build_grid
from bridgeplate.plate import assemble_plate
from bridgeplate.sbp import build_operators

TABLE_GRID = GridConfig(J=60, K=20, d=math.pi / 50, sigma=0.1, y_layout="cell-centered")
DESK_GRID = GridConfig(J=30, K=10, d=math.pi / 50, sigma=0.1, y_layout="cell-centered")


def make_system(cfg, lambda_coef=1.0):
    grid = build_grid(cfg)
    ops1, ops = build_operators(grid)
    return grid, ops1, ops, assemble_plate(ops, grid, cfg.sigma, lambda_coef)


@pytest.fixture(scope="session")
def desk_system():
    return make_system(DESK_GRID)


@pytest.fixture(scope="session")
def table_system():
    return make_system(TABLE_GRID, 0.5)


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "REPORT", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(lines, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
            terminalreporter.write_line(line)
