"""Tensor-product mesh of the strip (0, pi) x (-d, d).

Dirichlet ends x = 0 and x = pi are eliminated, so only the interior x-nodes
carry unknowns.  Unknowns are stored layer by layer in y: all x-nodes of the
first y-layer, then the second layer, and so on.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

Y_LAYOUTS = ("vertex", "cell-centered")


@dataclass(frozen=True)
class GridConfig:
    """Discretization parameters.

    ``y_layout`` selects where the y-nodes sit.  ``"vertex"`` places ``K + 1``
    nodes on ``[-d, d]`` including both edges.  ``"cell-centered"`` places one
    node in the middle of each of the ``K`` cells; this is the layout that
    reproduces the published embedding-constant table.
    """

    J: int
    K: int
    d: float
    sigma: float
    y_layout: str = "vertex"

    def validate(self) -> None:
        if int(self.J) != self.J or self.J < 3:
            raise ConfigError(f"J must be an integer >= 3, got {self.J!r}")
        if int(self.K) != self.K or self.K < 2:
            raise ConfigError(f"K must be an integer >= 2, got {self.K!r}")
        if not (0.0 < self.sigma < 0.5):
            raise ConfigError(f"sigma ∉ (0, 1/2): sigma={self.sigma!r}")
        if not (self.d > 0.0) or not math.isfinite(self.d):
            raise ConfigError(f"d must be positive and finite, got {self.d!r}")
        if self.y_layout not in Y_LAYOUTS:
            raise ConfigError(f"y_layout must be one of {Y_LAYOUTS}, got {self.y_layout!r}")


@dataclass(frozen=True)
class Grid:
    config: GridConfig
    dx: float
    dy: float
    x_nodes: np.ndarray = field(repr=False)
    y_nodes: np.ndarray = field(repr=False)

    @property
    def J(self) -> int:
        return self.config.J

    @property
    def d(self) -> float:
        return self.config.d

    @property
    def sigma(self) -> float:
        return self.config.sigma

    @property
    def nx(self) -> int:
        return self.x_nodes.size

    @property
    def ny(self) -> int:
        return self.y_nodes.size

    @property
    def dof_count(self) -> int:
        return self.nx * self.ny

    @property
    def shape(self) -> tuple[int, int]:
        """Shape ``(ny, nx)`` of a field reshaped layer by layer."""
        return self.ny, self.nx

    def flatten(self, j: int, k: int) -> int:
        """Global index of interior x-node ``j`` (1..J-1) on y-layer ``k``."""
        if not (1 <= j <= self.nx) or not (0 <= k < self.ny):
            raise IndexError(f"node (j={j}, k={k}) outside the grid")
        return k * self.nx + (j - 1)

    def unflatten(self, index: int) -> tuple[int, int]:
        if not (0 <= index < self.dof_count):
            raise IndexError(f"index {index} outside 0..{self.dof_count - 1}")
        k, r = divmod(index, self.nx)
        return r + 1, k

    def mesh(self) -> tuple[np.ndarray, np.ndarray]:
        """Flattened nodal coordinates ``(x, y)`` in storage order."""
        X, Y = np.meshgrid(self.x_nodes, self.y_nodes)
        return X.ravel(), Y.ravel()

    def sample(self, fn) -> np.ndarray:
        """Evaluate ``fn(x, y)`` at every node, in storage order."""
        x, y = self.mesh()
        return np.asarray(np.broadcast_to(fn(x, y), x.shape), dtype=float).copy()

    def reflect_y(self, u: np.ndarray) -> np.ndarray:
        """Reverse the order of the y-layers of a nodal field."""
        return np.asarray(u).reshape(self.shape)[::-1].ravel()


def build_grid(cfg: GridConfig) -> Grid:
    cfg.validate()
    dx = math.pi / cfg.J
    dy = 2.0 * cfg.d / cfg.K
    x_nodes = dx * np.arange(1, cfg.J)
    if cfg.y_layout == "vertex":
        y_nodes = -cfg.d + dy * np.arange(cfg.K + 1)
        y_nodes[-1] = cfg.d
    else:
        y_nodes = -cfg.d + dy * (np.arange(cfg.K) + 0.5)
    return Grid(config=cfg, dx=dx, dy=dy, x_nodes=x_nodes, y_nodes=y_nodes)
