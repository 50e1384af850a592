"""Uniform cell-centred grid and the discrete gradient/divergence pair.

Scalar fields are ``(m, n)`` float arrays, ``u[i, j]`` being the average over
cell ``C_ij`` with ``i`` along x and ``j`` along y.  Vector fields are
``(2, m, n)`` arrays holding the x and y components.

The gradient uses forward differences with a zero last row/column, and the
divergence is defined as minus its adjoint for the weighted inner product
``<u, v> = h^2 sum u v``, which encodes homogeneous Neumann conditions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Grid:
    """Rectangular lattice of ``m x n`` square cells of side ``h``."""

    m: int
    n: int
    h: float

    def __post_init__(self):
        if int(self.m) != self.m or int(self.n) != self.n:
            raise ValueError("m and n must be integers")
        if self.m < 2 or self.n < 2:
            raise ValueError(f"grid needs m, n >= 2, got {self.m}x{self.n}")
        if not (self.h > 0 and np.isfinite(self.h)):
            raise ValueError(f"cell size h must be positive, got {self.h}")

    @property
    def shape(self) -> tuple[int, int]:
        return (self.m, self.n)

    @property
    def cell_area(self) -> float:
        return self.h * self.h

    @property
    def area(self) -> float:
        return self.m * self.n * self.h * self.h

    def centers(self) -> tuple[np.ndarray, np.ndarray]:
        """Cell-centre coordinates as two ``(m, n)`` arrays ``(X, Y)``."""
        x = (np.arange(self.m) + 0.5) * self.h
        y = (np.arange(self.n) + 0.5) * self.h
        return np.meshgrid(x, y, indexing="ij")

    def zeros(self) -> np.ndarray:
        return np.zeros(self.shape)

    def zeros_vector(self) -> np.ndarray:
        return np.zeros((2,) + self.shape)

    def check_scalar(self, u, name="field") -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if u.shape != self.shape:
            raise ValueError(f"{name} has shape {u.shape}, grid is {self.shape}")
        return u

    def check_vector(self, phi, name="vector field") -> np.ndarray:
        phi = np.asarray(phi, dtype=float)
        if phi.shape != (2,) + self.shape:
            raise ValueError(f"{name} has shape {phi.shape}, expected {(2,) + self.shape}")
        return phi

    def mass(self, u) -> float:
        return float(np.sum(u)) * self.cell_area


def inner_product(grid: Grid, u, v) -> float:
    """Weighted inner product ``h^2 sum u v`` of two scalar or two vector fields."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape:
        raise ValueError(f"shape mismatch: {u.shape} vs {v.shape}")
    if u.shape[-2:] != grid.shape:
        raise ValueError(f"fields of shape {u.shape} do not live on grid {grid.shape}")
    return grid.cell_area * float(np.vdot(u, v))


def grad(grid: Grid, u, out=None) -> np.ndarray:
    u = grid.check_scalar(u)
    if out is None:
        out = np.empty((2,) + grid.shape)
    inv_h = 1.0 / grid.h
    np.subtract(u[1:, :], u[:-1, :], out=out[0, :-1, :])
    out[0, :-1, :] *= inv_h
    out[0, -1, :] = 0.0
    np.subtract(u[:, 1:], u[:, :-1], out=out[1, :, :-1])
    out[1, :, :-1] *= inv_h
    out[1, :, -1] = 0.0
    return out


def div(grid: Grid, phi, out=None) -> np.ndarray:
    """Discrete divergence, the negative adjoint of :func:`grad`.

    Only ``phi[0, :m-1]`` and ``phi[1, :, :n-1]`` enter; the last x-row and
    last y-column are ignored, as they are annihilated by the gradient.
    """
    phi = grid.check_vector(phi)
    if out is None:
        out = np.empty(grid.shape)
    px, py = phi[0], phi[1]
    out[0, :] = px[0, :]
    out[1:-1, :] = px[1:-1, :] - px[:-2, :]
    out[-1, :] = -px[-2, :]
    out[:, 0] += py[:, 0]
    out[:, 1:-1] += py[:, 1:-1] - py[:, :-2]
    out[:, -1] -= py[:, -2]
    out *= 1.0 / grid.h
    return out


def lambda_op(grid: Grid, rho, sigma) -> np.ndarray:
    """Constraint operator ``(rho, sigma) -> rho - div(sigma)`` of the minimal-flow problem."""
    return grid.check_scalar(rho) - div(grid, sigma)


def lambda_adjoint(grid: Grid, p) -> tuple[np.ndarray, np.ndarray]:
    """Adjoint of :func:`lambda_op`: ``p -> (p, grad p)``."""
    p = grid.check_scalar(p)
    return p.copy(), grad(grid, p)


def operator_norm(grid: Grid, iters: int = 200) -> float:
    """Power-iteration estimate of the norm of :func:`lambda_op`.

    Iterates on ``Lambda Lambda^* = I - div grad`` from a fixed seed, so the
    result is deterministic and non-decreasing in ``iters``.  It never exceeds
    ``sqrt(1 + 8 / h^2)``.
    """
    if iters < 1:
        raise ValueError("iters must be >= 1")
    i = np.arange(grid.m)[:, None]
    j = np.arange(grid.n)[None, :]
    # All ones plus an oscillating mode that overlaps the top eigenvector
    # (a Kronecker product of the highest 1-D Neumann cosine modes).
    top = (np.cos(np.pi * (grid.m - 1) * (i + 0.5) / grid.m)
           * np.cos(np.pi * (grid.n - 1) * (j + 0.5) / grid.n))
    x = 1.0 + top + 0.01 * np.sin(1.0 + i * 0.7 + j * 1.3)
    x /= np.linalg.norm(x)
    g = grid.zeros_vector()
    d = grid.zeros()
    est = 0.0
    for _ in range(iters):
        y = x - div(grid, grad(grid, x, out=g), out=d)
        ny = np.linalg.norm(y)
        est = ny
        x = y / ny
    return float(np.sqrt(est))
