"""Explicit upwind finite-volume step for the transported population."""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum

import numpy as np

from .grid import Grid


class BoundaryMode(str, Enum):
    NOFLUX = "noflux"
    OUTFLOW = "outflow"
    REFLECT = "reflect"


class CFLError(ValueError):
    """Time step too large for the explicit upwind scheme."""


@dataclass
class FaceVelocity:
    """Normal velocities on cell faces.

    ``vx[i, j]`` lives on the face between cells ``(i-1, j)`` and ``(i, j)``,
    so ``vx[0]`` and ``vx[m]`` are the left and right boundary faces.  ``vy``
    is laid out the same way along y.
    """

    grid: Grid
    vx: np.ndarray
    vy: np.ndarray

    def __post_init__(self):
        m, n = self.grid.shape
        self.vx = np.asarray(self.vx, dtype=float)
        self.vy = np.asarray(self.vy, dtype=float)
        if self.vx.shape != (m + 1, n) or self.vy.shape != (m, n + 1):
            raise ValueError(
                f"face velocity shapes {self.vx.shape}, {self.vy.shape} "
                f"do not match grid {m}x{n}"
            )
        if not (np.all(np.isfinite(self.vx)) and np.all(np.isfinite(self.vy))):
            raise ValueError("face velocities must be finite")

    @classmethod
    def zeros(cls, grid: Grid) -> "FaceVelocity":
        return cls(grid, np.zeros((grid.m + 1, grid.n)), np.zeros((grid.m, grid.n + 1)))

    @classmethod
    def constant(cls, grid: Grid, vx: float, vy: float) -> "FaceVelocity":
        return cls(grid, np.full((grid.m + 1, grid.n), float(vx)),
                   np.full((grid.m, grid.n + 1), float(vy)))

    def max_abs(self) -> float:
        return float(max(np.max(np.abs(self.vx)), np.max(np.abs(self.vy))))

    def face_divergence(self) -> np.ndarray:
        """Cell-wise discrete divergence of the face field."""
        return (np.diff(self.vx, axis=0) + np.diff(self.vy, axis=1)) / self.grid.h


def upwind_flux(v, rho_upwind, rho_downwind):
    """Two-state upwind flux: ``v * rho_upwind`` if ``v >= 0`` else ``v * rho_downwind``.

    ``rho_upwind`` is the state on the side the positive direction comes from.
    Works element-wise on arrays.
    """
    return np.where(v >= 0, v * rho_upwind, v * rho_downwind)


def cfl_max_dt(V: FaceVelocity, h: float | None = None) -> float:
    """Largest time step allowed by ``|V|_inf tau / h <= 1/2``; ``inf`` for ``V = 0``."""
    if h is None:
        h = V.grid.h
    vmax = V.max_abs()
    if vmax == 0.0:
        return math.inf
    return h / (2.0 * vmax)


def _ghosts(rho: np.ndarray, mode: BoundaryMode):
    """Ghost densities outside the four sides: (left, right, bottom, top)."""
    if mode is BoundaryMode.REFLECT:
        return rho[0, :], rho[-1, :], rho[:, 0], rho[:, -1]
    m, n = rho.shape
    return np.zeros(n), np.zeros(n), np.zeros(m), np.zeros(m)


def face_fluxes(rho: np.ndarray, V: FaceVelocity, mode: BoundaryMode):
    """Upwind fluxes ``(Fx, Fy)`` on every face, boundary faces included."""
    mode = BoundaryMode(mode)
    m, n = rho.shape
    vx, vy = V.vx, V.vy
    Fx = np.empty((m + 1, n))
    Fy = np.empty((m, n + 1))
    Fx[1:-1] = upwind_flux(vx[1:-1], rho[:-1], rho[1:])
    Fy[:, 1:-1] = upwind_flux(vy[:, 1:-1], rho[:, :-1], rho[:, 1:])
    if mode is BoundaryMode.NOFLUX:
        Fx[0] = Fx[-1] = 0.0
        Fy[:, 0] = Fy[:, -1] = 0.0
    else:
        left, right, bottom, top = _ghosts(rho, mode)
        Fx[0] = upwind_flux(vx[0], left, rho[0])
        Fx[-1] = upwind_flux(vx[-1], rho[-1], right)
        Fy[:, 0] = upwind_flux(vy[:, 0], bottom, rho[:, 0])
        Fy[:, -1] = upwind_flux(vy[:, -1], rho[:, -1], top)
    return Fx, Fy


def boundary_outflux(Fx: np.ndarray, Fy: np.ndarray, h: float) -> float:
    """Net outward flux rate through the boundary (mass per unit time)."""
    return h * float(np.sum(Fx[-1]) - np.sum(Fx[0]) + np.sum(Fy[:, -1]) - np.sum(Fy[:, 0]))


def _single_step(rho, V, tau, mode):
    h = V.grid.h
    Fx, Fy = face_fluxes(rho, V, mode)
    new = rho - (tau / h) * (np.diff(Fx, axis=0) + np.diff(Fy, axis=1))
    return new, tau * boundary_outflux(Fx, Fy, h)


def step_transport(rho, V: FaceVelocity, tau: float, mode=BoundaryMode.NOFLUX,
                   auto_substep: bool = False, return_outflux: bool = False):
    """Advance ``rho`` by one explicit Euler upwind step of length ``tau``.

    Raises :class:`CFLError` if ``tau`` exceeds :func:`cfl_max_dt`, unless
    ``auto_substep`` is set, in which case ``tau`` is split into the fewest
    equal sub-steps that satisfy the bound.  With ``return_outflux`` the mass
    that left through the boundary is returned as well.
    """
    grid = V.grid
    rho = grid.check_scalar(rho, "density")
    if np.any(rho < 0):
        raise ValueError("transport input density must be non-negative")
    if not tau > 0:
        raise ValueError(f"time step must be positive, got {tau}")
    dt_max = cfl_max_dt(V)
    nsub = 1
    if tau > dt_max:
        if not auto_substep:
            raise CFLError(
                f"tau={tau:g} violates the CFL bound tau <= {dt_max:g} "
                f"(|V|_inf={V.max_abs():g}, h={grid.h:g})"
            )
        nsub = math.ceil(tau / dt_max)
        while tau / nsub > dt_max:
            nsub += 1
    dt = tau / nsub
    out = 0.0
    for _ in range(nsub):
        rho, lost = _single_step(rho, V, dt, BoundaryMode(mode))
        out += lost
    if return_outflux:
        return rho, out
    return rho
