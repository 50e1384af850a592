"""Potentials and face velocities driving the transported population.

Three potentials are supported: distance to an exit (eikonal), a Gaussian
convolution of the density, and the Dirichlet Poisson potential of the
density.  A prescribed rigid rotation is also available for scenarios whose
velocity is not a gradient.

Every potential can be evaluated on a one-cell ghost ring so that boundary
face velocities come out of the same difference formula as interior ones.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numba
import numpy as np

from .grid import Grid
from .transport import FaceVelocity


class PotentialKind(str, Enum):
    EIKONAL = "eikonal"
    GAUSSIAN = "gaussian"
    POISSON = "poisson"
    ROTATION = "rotation"


class Padding(str, Enum):
    ZERO = "zero"
    REFLECT = "reflect"


class Normalization(str, Enum):
    UNNORMALIZED = "unnormalized"
    PAPER1D = "paper1d"
    TWOD = "twod"


class PoissonConvergenceError(RuntimeError):
    pass


@dataclass
class PotentialSpec:
    """What drives population 1.

    The exit set for the eikonal potential is given by edge names and/or
    explicit cells; ``exit_mask`` overrides both when set.  ``sigma`` is in
    cells when ``sigma_units == "cells"`` and in domain units otherwise.
    ``mu`` doubles as the rotation centre for the rotation kind.
    """

    kind: PotentialKind = PotentialKind.EIKONAL
    exit_edges: tuple[str, ...] = ("right",)
    exit_cells: tuple[tuple[int, int], ...] = ()
    sigma: float = 5.0
    sigma_units: str = "cells"
    mu: tuple[float, float] = (0.0, 0.0)
    padding: Padding = Padding.ZERO
    normalization: Normalization = Normalization.UNNORMALIZED
    omega: float = 1.0
    refresh_every: int = 1
    exit_mask: np.ndarray | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        self.kind = PotentialKind(self.kind)
        self.padding = Padding(self.padding)
        self.normalization = Normalization(self.normalization)
        self.exit_edges = tuple(self.exit_edges)
        self.exit_cells = tuple((int(i), int(j)) for i, j in self.exit_cells)
        self.mu = (float(self.mu[0]), float(self.mu[1]))
        if self.sigma_units not in ("cells", "domain"):
            raise ValueError(f"sigma_units must be 'cells' or 'domain', got {self.sigma_units!r}")
        for e in self.exit_edges:
            if e not in _EDGES:
                raise ValueError(f"unknown exit edge {e!r}")
        if self.kind in (PotentialKind.EIKONAL,):
            if self.exit_mask is None and not (self.exit_edges or self.exit_cells):
                raise ValueError("eikonal potential needs a non-empty exit set")
            if self.exit_mask is not None and not np.any(self.exit_mask):
                raise ValueError("eikonal potential needs a non-empty exit mask")
        if not self.sigma > 0:
            raise ValueError(f"kernel width sigma must be > 0, got {self.sigma}")
        if self.refresh_every < 1:
            raise ValueError("refresh_every must be >= 1")

    def mask(self, grid: Grid) -> np.ndarray:
        if self.exit_mask is not None:
            return np.asarray(self.exit_mask, dtype=bool)
        return exit_mask_from_edges(grid, self.exit_edges, self.exit_cells)

    def sigma_length(self, grid: Grid) -> float:
        return self.sigma * grid.h if self.sigma_units == "cells" else self.sigma

    @property
    def is_static(self) -> bool:
        """Whether the velocity is independent of the density."""
        return self.kind in (PotentialKind.EIKONAL, PotentialKind.ROTATION)


_EDGES = ("left", "right", "bottom", "top")


# --------------------------------------------------------------------------
# eikonal


@numba.njit(cache=True)
def _sweep(phi, fixed, h, tol, max_passes):
    m, n = phi.shape
    big = 1e300
    for _ in range(max_passes):
        change = 0.0
        for s in range(4):
            for ii in range(m):
                i = ii if s == 0 or s == 3 else m - 1 - ii
                for jj in range(n):
                    j = jj if s == 0 or s == 1 else n - 1 - jj
                    if fixed[i, j]:
                        continue
                    a = big
                    if i > 0:
                        a = phi[i - 1, j]
                    if i < m - 1 and phi[i + 1, j] < a:
                        a = phi[i + 1, j]
                    b = big
                    if j > 0:
                        b = phi[i, j - 1]
                    if j < n - 1 and phi[i, j + 1] < b:
                        b = phi[i, j + 1]
                    if a >= big and b >= big:
                        continue
                    if abs(a - b) >= h:
                        new = min(a, b) + h
                    else:
                        new = 0.5 * (a + b + math.sqrt(2.0 * h * h - (a - b) ** 2))
                    if new < phi[i, j]:
                        change = max(change, phi[i, j] - new)
                        phi[i, j] = new
        if change <= tol:
            break
    return phi


def solve_eikonal(grid: Grid, exit_mask, tol: float = 1e-13, max_passes: int = 200) -> np.ndarray:
    """Distance to the exit cells via Godunov upwind fast sweeping.

    Unit speed; ``phi = 0`` on the exit cells.  Sweeps in the four diagonal
    orderings until a full pass changes no value by more than ``tol``.
    """
    mask = np.asarray(exit_mask, dtype=bool)
    if mask.shape != grid.shape:
        raise ValueError(f"exit mask shape {mask.shape} does not match grid {grid.shape}")
    if not mask.any():
        raise ValueError("exit mask is empty")
    phi = np.full(grid.shape, 1e300)
    phi[mask] = 0.0
    return _sweep(phi, mask, float(grid.h), float(tol), int(max_passes))


def eikonal_ghosts(grid: Grid, phi: np.ndarray, exit_mask) -> np.ndarray:
    """Pad an eikonal potential with a ghost ring.

    Ghosts next to exit cells keep decreasing at unit rate so the exit faces
    carry unit outward speed; elsewhere the wall mirrors the potential and
    the boundary face velocity vanishes.
    """
    mask = np.asarray(exit_mask, dtype=bool)
    padded = np.pad(phi, 1, mode="edge")
    h = grid.h
    padded[0, 1:-1] = np.where(mask[0], phi[0] - h, phi[0])
    padded[-1, 1:-1] = np.where(mask[-1], phi[-1] - h, phi[-1])
    padded[1:-1, 0] = np.where(mask[:, 0], phi[:, 0] - h, phi[:, 0])
    padded[1:-1, -1] = np.where(mask[:, -1], phi[:, -1] - h, phi[:, -1])
    return padded


def exit_mask_from_edges(grid: Grid, edges=(), cells=()) -> np.ndarray:
    """Boolean exit mask from edge names (``left``/``right``/``bottom``/``top``)
    and explicit ``(i, j)`` cells."""
    mask = np.zeros(grid.shape, dtype=bool)
    for e in edges:
        if e == "left":
            mask[0, :] = True
        elif e == "right":
            mask[-1, :] = True
        elif e == "bottom":
            mask[:, 0] = True
        elif e == "top":
            mask[:, -1] = True
        else:
            raise ValueError(f"unknown edge {e!r}")
    for i, j in cells:
        if not (0 <= i < grid.m and 0 <= j < grid.n):
            raise ValueError(f"exit cell ({i}, {j}) lies outside the {grid.m}x{grid.n} grid")
        mask[i, j] = True
    return mask


# --------------------------------------------------------------------------
# gaussian interaction


def gaussian_kernel_value(x, sigma: float, mu=(0.0, 0.0),
                          normalization=Normalization.UNNORMALIZED) -> float:
    """``exp(-|x - mu|^2 / (2 sigma^2))`` times the chosen normalisation constant."""
    if not sigma > 0:
        raise ValueError(f"sigma must be > 0, got {sigma}")
    d = np.asarray(x, dtype=float) - np.asarray(mu, dtype=float)
    r2 = float(np.dot(d, d))
    return _norm_const(sigma, normalization) * math.exp(-r2 / (2.0 * sigma * sigma))


def _norm_const(sigma, normalization) -> float:
    normalization = Normalization(normalization)
    if normalization is Normalization.UNNORMALIZED:
        return 1.0
    if normalization is Normalization.PAPER1D:
        return 1.0 / (sigma * math.sqrt(2.0 * math.pi))
    return 1.0 / (2.0 * math.pi * sigma * sigma)


def _taps(h, sigma, mu):
    lo = math.floor((mu - 4.0 * sigma) / h)
    hi = math.ceil((mu + 4.0 * sigma) / h)
    offs = np.arange(lo, hi + 1)
    d = offs * h - mu
    keep = np.abs(d) <= 4.0 * sigma
    offs = offs[keep]
    return offs, np.exp(-(d[keep] ** 2) / (2.0 * sigma * sigma))


def convolve(grid: Grid, rho, sigma: float, padding=Padding.ZERO, mu=(0.0, 0.0),
             normalization=Normalization.UNNORMALIZED, ghosts: bool = False) -> np.ndarray:
    """Convolve a density with the sampled Gaussian kernel.

    ``out[c] = h^2 sum_c' K(x_c - x_c') rho[c']`` over all cells ``c'`` of the
    padded density, with ``K`` truncated at ``|d - mu| <= 4 sigma`` per axis
    and ``sigma`` in domain units.  ``padding`` extends ``rho`` by zeros or by
    mirroring about the domain edge.  With ``ghosts`` the result is returned on
    the ``(m+2, n+2)`` array that includes the ghost ring.
    """
    if not sigma > 0:
        raise ValueError(f"sigma must be > 0, got {sigma}")
    rho = grid.check_scalar(rho, "density")
    padding = Padding(padding)
    h = grid.h
    ox, wx = _taps(h, sigma, float(mu[0]))
    oy, wy = _taps(h, sigma, float(mu[1]))
    px = int(np.max(np.abs(ox))) + 1
    py = int(np.max(np.abs(oy))) + 1
    mode = "constant" if padding is Padding.ZERO else "symmetric"
    ext = np.pad(rho, ((px, px), (py, py)), mode=mode)
    m, n = grid.shape
    # rows -1..m of the output, all columns of ext
    tmp = np.zeros((m + 2, ext.shape[1]))
    for a, w in zip(ox, wx):
        tmp += w * ext[px - 1 - a: px + m + 1 - a, :]
    out = np.zeros((m + 2, n + 2))
    for b, w in zip(oy, wy):
        out += w * tmp[:, py - 1 - b: py + n + 1 - b]
    out *= h * h * _norm_const(sigma, normalization)
    return out if ghosts else out[1:-1, 1:-1]


# --------------------------------------------------------------------------
# poisson


def dirichlet_laplacian(grid: Grid, phi) -> np.ndarray:
    """``-Delta_h phi`` with ghost values ``-phi`` outside (zero on the boundary faces)."""
    p = np.pad(phi, 1, mode="constant")
    p[0, 1:-1] = -phi[0]
    p[-1, 1:-1] = -phi[-1]
    p[1:-1, 0] = -phi[:, 0]
    p[1:-1, -1] = -phi[:, -1]
    lap = 4.0 * phi - p[:-2, 1:-1] - p[2:, 1:-1] - p[1:-1, :-2] - p[1:-1, 2:]
    return lap / (grid.h * grid.h)


def solve_poisson_dirichlet(grid: Grid, rho, tol: float | None = None,
                            max_iters: int | None = None) -> np.ndarray:
    """Solve ``-Delta_h phi = rho`` with homogeneous Dirichlet data by Jacobi-preconditioned CG.

    Stops once ``|-Delta_h phi - rho|_inf <= tol`` (default ``1e-8 |rho|_inf``).
    """
    rho = grid.check_scalar(rho, "density")
    scale = float(np.max(np.abs(rho)))
    if tol is None:
        tol = 1e-8 * scale
    if not tol > 0:
        if scale == 0.0:
            return grid.zeros()
        raise ValueError("tol must be > 0")
    if max_iters is None:
        max_iters = 10 * (grid.m + grid.n)
    diag = np.full(grid.shape, 4.0)
    diag[0, :] += 1
    diag[-1, :] += 1
    diag[:, 0] += 1
    diag[:, -1] += 1
    diag /= grid.h * grid.h

    x = grid.zeros()
    r = rho.copy()
    if np.max(np.abs(r)) <= tol:
        return x
    z = r / diag
    d = z.copy()
    rz = float(np.vdot(r, z))
    for _ in range(max_iters):
        Ad = dirichlet_laplacian(grid, d)
        a = rz / float(np.vdot(d, Ad))
        x += a * d
        r -= a * Ad
        if np.max(np.abs(r)) <= tol:
            # guard against drift of the recursive residual
            if np.max(np.abs(rho - dirichlet_laplacian(grid, x))) <= tol:
                return x
            r = rho - dirichlet_laplacian(grid, x)
        z = r / diag
        rz_new = float(np.vdot(r, z))
        d = z + (rz_new / rz) * d
        rz = rz_new
    raise PoissonConvergenceError(
        f"CG did not reach residual {tol:g} in {max_iters} iterations"
    )


def poisson_ghosts(phi: np.ndarray) -> np.ndarray:
    padded = np.pad(phi, 1, mode="constant")
    padded[0, 1:-1] = -phi[0]
    padded[-1, 1:-1] = -phi[-1]
    padded[1:-1, 0] = -phi[:, 0]
    padded[1:-1, -1] = -phi[:, -1]
    return padded


# --------------------------------------------------------------------------
# velocities


def face_velocity(grid: Grid, phi, padded=None) -> FaceVelocity:
    """``V = -grad(phi)`` as face-normal velocities.

    Interior faces use the difference of the two adjacent cells.  Boundary
    faces are zero unless ``padded`` (the potential with a ghost ring, shape
    ``(m+2, n+2)``) is supplied, in which case they use the ghost values.
    """
    phi = grid.check_scalar(phi, "potential")
    m, n = grid.shape
    if padded is None:
        vx = np.zeros((m + 1, n))
        vy = np.zeros((m, n + 1))
        vx[1:-1] = -(phi[1:] - phi[:-1]) / grid.h
        vy[:, 1:-1] = -(phi[:, 1:] - phi[:, :-1]) / grid.h
    else:
        padded = np.asarray(padded, dtype=float)
        if padded.shape != (m + 2, n + 2):
            raise ValueError(f"padded potential must have shape {(m + 2, n + 2)}")
        vx = -(padded[1:, 1:-1] - padded[:-1, 1:-1]) / grid.h
        vy = -(padded[1:-1, 1:] - padded[1:-1, :-1]) / grid.h
    return FaceVelocity(grid, vx, vy)


def rotation_velocity(grid: Grid, center=(0.5, 0.5), omega: float = 1.0) -> FaceVelocity:
    """Rigid rotation ``omega * (-(y - cy), x - cx)`` sampled at face centres."""
    m, n = grid.shape
    h = grid.h
    yc = (np.arange(n) + 0.5) * h
    xc = (np.arange(m) + 0.5) * h
    vx = -omega * (yc[None, :] - center[1]) * np.ones((m + 1, 1))
    vy = omega * (xc[:, None] - center[0]) * np.ones((1, n + 1))
    return FaceVelocity(grid, vx, vy)


def compute_potential(spec: PotentialSpec, grid: Grid, rho1) -> tuple[np.ndarray, np.ndarray]:
    """Potential and its ghost-padded version for the current density."""
    kind = spec.kind
    if kind is PotentialKind.EIKONAL:
        mask = spec.mask(grid)
        phi = solve_eikonal(grid, mask)
        return phi, eikonal_ghosts(grid, phi, mask)
    if kind is PotentialKind.GAUSSIAN:
        padded = convolve(grid, rho1, spec.sigma_length(grid), spec.padding, spec.mu,
                          spec.normalization, ghosts=True)
        if spec.padding is Padding.REFLECT and spec.mu == (0.0, 0.0):
            # the mirrored ring equals its neighbour up to round-off; make the walls exact
            padded[0, 1:-1] = padded[1, 1:-1]
            padded[-1, 1:-1] = padded[-2, 1:-1]
            padded[1:-1, 0] = padded[1:-1, 1]
            padded[1:-1, -1] = padded[1:-1, -2]
        return padded[1:-1, 1:-1].copy(), padded
    if kind is PotentialKind.POISSON:
        phi = solve_poisson_dirichlet(grid, rho1)
        return phi, poisson_ghosts(phi)
    raise ValueError(f"{kind.value} has no scalar potential")


def velocity(spec: PotentialSpec, grid: Grid, rho1) -> tuple[FaceVelocity, np.ndarray | None]:
    """Face velocity for ``rho1`` and the potential it came from (``None`` for rotation)."""
    if spec.kind is PotentialKind.ROTATION:
        return rotation_velocity(grid, spec.mu, spec.omega), None
    phi, padded = compute_potential(spec, grid, rho1)
    return face_velocity(grid, phi, padded), phi
