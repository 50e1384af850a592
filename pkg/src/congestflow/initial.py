"""Initial densities built from Gaussian bumps, rectangles and complements."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import Grid
from .potentials import Normalization, _norm_const


@dataclass(frozen=True)
class Bump:
    amplitude: float
    lam: float
    center: tuple[float, float]

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError(f"bump width lambda must be > 0, got {self.lam}")
        object.__setattr__(self, "center", tuple(float(c) for c in self.center))


@dataclass(frozen=True)
class Rect:
    x0: float
    x1: float
    y0: float
    y1: float
    value: float


@dataclass(frozen=True)
class Complement:
    """``scale * (1 - rho1)``; only meaningful for population 2."""

    scale: float = 1.0


def sample(grid: Grid, items, normalization=Normalization.UNNORMALIZED) -> np.ndarray:
    """Sum the bumps and rectangles in ``items`` at the cell centres."""
    X, Y = grid.centers()
    out = grid.zeros()
    for it in items:
        if isinstance(it, Bump):
            r2 = (X - it.center[0]) ** 2 + (Y - it.center[1]) ** 2
            out += it.amplitude * _norm_const(it.lam, normalization) * np.exp(-r2 / (2 * it.lam**2))
        elif isinstance(it, Rect):
            inside = (X >= it.x0) & (X < it.x1) & (Y >= it.y0) & (Y < it.y1)
            out[inside] += it.value
        elif isinstance(it, Complement):
            raise ValueError("a complement is only allowed as the whole rho2 specification")
        else:
            raise TypeError(f"unknown density item {it!r}")
    return out


def build_initial_density(grid: Grid, rho1_items=(), rho2_items=(),
                          normalization=Normalization.UNNORMALIZED):
    """Sample both initial densities and clamp them into the admissible set.

    ``rho2_items`` is either a sequence of bumps/rectangles or a single
    :class:`Complement`.  After sampling, ``rho1`` is clipped to ``[0, 1]``
    and ``rho2`` to ``[0, 1 - rho1]``.
    """
    rho1 = np.clip(sample(grid, rho1_items, normalization), 0.0, 1.0)
    if isinstance(rho2_items, Complement):
        rho2 = rho2_items.scale * (1.0 - rho1)
    else:
        rho2 = sample(grid, rho2_items, normalization)
    rho2 = np.clip(rho2, 0.0, 1.0 - rho1)
    return rho1, rho2
