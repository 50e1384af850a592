"""Correction step: W1 projection of population 2 under a capacity field.

Solves the discrete minimal-flow problem

    min_{rho, sigma}  h^2 sum_ij |sigma_ij|
    s.t.  rho - div(sigma) = rho_prev,   0 <= rho <= kappa

with the Chambolle-Pock primal-dual iteration.  ``sigma`` is the flux already
multiplied by the time step, so the step sizes depend on the grid only; the
physical flux is ``sigma / tau``.
"""

from __future__ import annotations

import functools
import logging
import math
from dataclasses import dataclass

import numba
import numpy as np

from .grid import Grid, grad, operator_norm

log = logging.getLogger(__name__)


class InfeasibleProjection(ValueError):
    """Population 2 carries more mass than the capacity field can hold."""


@dataclass
class PdParams:
    alpha: float | None = None
    beta: float | None = None
    theta: float = 1.0
    max_iters: int = 5000
    tol_primal: float = 1e-6
    tol_feas: float = 1e-6
    warm_start: bool = True

    def __post_init__(self):
        for name in ("alpha", "beta"):
            v = getattr(self, name)
            if v is not None and not v > 0:
                raise ValueError(f"{name} must be > 0, got {v}")
        if not 0.0 <= self.theta <= 1.0:
            raise ValueError(f"theta must lie in [0, 1], got {self.theta}")
        if self.max_iters < 1:
            raise ValueError("max_iters must be >= 1")
        if not (self.tol_primal > 0 and self.tol_feas > 0):
            raise ValueError("tolerances must be > 0")

    def steps(self, grid: Grid) -> tuple[float, float]:
        """Step sizes for ``grid``, checked against ``alpha beta |Lambda|^2 < 1``."""
        a0, b0 = default_steps(grid)
        L = _norm(grid)
        if self.alpha is None and self.beta is None:
            return a0, b0
        if self.alpha is None:
            alpha, beta = 0.9025 / (self.beta * L * L), self.beta
        elif self.beta is None:
            alpha, beta = self.alpha, 0.9025 / (self.alpha * L * L)
        else:
            alpha, beta = self.alpha, self.beta
        if alpha * beta * L * L >= 1.0:
            raise ValueError(
                f"step sizes alpha={alpha:g}, beta={beta:g} violate alpha*beta*|L|^2 < 1 "
                f"(|L| = {L:g})"
            )
        return alpha, beta


@dataclass
class PdState:
    """Primal-dual iterate, reusable as a warm start."""

    rho2: np.ndarray
    sigma: np.ndarray
    p: np.ndarray
    p_bar: np.ndarray
    iters_done: int = 0
    primal_residual: float = np.inf


@dataclass
class ProjectionResult:
    rho2: np.ndarray
    pressure: np.ndarray
    sigma: np.ndarray
    transport_cost: float
    converged: bool
    iters: int
    primal_residual: float = 0.0
    feas_residual: float = 0.0
    state: PdState | None = None
    # max cell |grad p| of the raw iterate, before the pressure is rescaled
    raw_lipschitz: float = 0.0

    def flux(self, tau: float) -> np.ndarray:
        """Decongestion flux in velocity-times-density units."""
        return self.sigma / tau


@functools.lru_cache(maxsize=32)
def _norm(grid: Grid) -> float:
    return operator_norm(grid, 200)


def default_steps(grid: Grid) -> tuple[float, float]:
    L = _norm(grid)
    return 0.95 / L, 0.95 / L


def prox_primal(rho, sigma, beta: float, kappa):
    """Prox of ``I_[0,kappa](rho) + sum |sigma_ij|`` with step ``beta``.

    Clips the density into ``[0, kappa]`` and shrinks each flux vector
    towards zero by ``beta`` in Euclidean norm.
    """
    rho = np.clip(rho, 0.0, kappa)
    norm = np.hypot(sigma[0], sigma[1])
    with np.errstate(divide="ignore", invalid="ignore"):
        factor = np.where(norm > beta, 1.0 - beta / norm, 0.0)
    return rho, sigma * factor


def prox_dual(p, alpha: float, rho_target):
    """Prox of the conjugate of the indicator of ``{rho_target}`` (Moreau's identity)."""
    return p - alpha * rho_target


def transport_cost(grid: Grid, sigma) -> float:
    return grid.cell_area * float(np.sum(np.hypot(sigma[0], sigma[1])))


def _mass_fix(rho, kappa, target_sum):
    """Shift the density inside ``[0, kappa]`` so that it sums to ``target_sum``.

    Mass is first moved with weights ``rho (kappa - rho)``, which vanish on
    empty and on saturated cells, so neither the support nor the contact set
    changes.  Only if that cannot absorb the defect do the fallbacks
    ``kappa - rho`` (adding) or ``rho`` (removing) take over.
    """
    delta = target_sum - float(np.sum(rho))
    if delta == 0:
        return rho
    fallback = kappa - rho if delta > 0 else rho
    for w in (rho * (kappa - rho), fallback):
        room = float(np.sum(w))
        if room <= 0:
            continue
        t = delta / room
        with np.errstate(divide="ignore", invalid="ignore"):
            if delta > 0:
                lim = float(np.min(np.where(w > 0, (kappa - rho) / w, np.inf)))
                t = min(t, lim)
            else:
                lim = float(np.min(np.where(w > 0, rho / w, np.inf)))
                t = max(t, -lim)
        rho = np.clip(rho + t * w, 0.0, kappa)
        delta = target_sum - float(np.sum(rho))
        if delta == 0 or (delta > 0) != (t > 0):
            break
    return rho


# no nnan/ninf: the residuals start at +inf
_FASTMATH = {"contract", "arcp", "nsz", "reassoc"}


@numba.njit(cache=True, fastmath=_FASTMATH, error_model="numpy")
def _pd_iterations(rho, sx, sy, p, pbar, rho_prev, kappa, alpha, beta, theta, h,
                   n_iter, tol_primal, tol_feas):
    """Run up to ``n_iter`` PD iterations in place.

    Returns ``(iters, primal, feas)`` where ``primal`` is the sup-norm change of
    the density in the last iteration and ``feas`` the area-averaged absolute
    constraint residual ``mean |rho - div(sigma) - rho_prev|``.  The loops are
    split so that the interior runs without branches.
    """
    m, n = rho.shape
    inv_h = 1.0 / h
    res_p = np.inf
    res_f = np.inf
    for it in range(1, n_iter + 1):
        # primal step: clip density, shrink flux (zero on the last row/column)
        res_p = 0.0
        for i in range(m):
            for j in range(n):
                r = min(max(rho[i, j] - beta * pbar[i, j], 0.0), kappa[i, j])
                res_p = max(res_p, abs(r - rho[i, j]))
                rho[i, j] = r
            if i < m - 1:
                for j in range(n - 1):
                    ux = sx[i, j] - beta * (pbar[i + 1, j] - pbar[i, j]) * inv_h
                    uy = sy[i, j] - beta * (pbar[i, j + 1] - pbar[i, j]) * inv_h
                    f = max(1.0 - beta / max(math.sqrt(ux * ux + uy * uy), 1e-300), 0.0)
                    sx[i, j] = f * ux
                    sy[i, j] = f * uy
                ux = sx[i, n - 1] - beta * (pbar[i + 1, n - 1] - pbar[i, n - 1]) * inv_h
                sx[i, n - 1] = max(1.0 - beta / max(abs(ux), 1e-300), 0.0) * ux
                sy[i, n - 1] = 0.0
            else:
                for j in range(n - 1):
                    uy = sy[i, j] - beta * (pbar[i, j + 1] - pbar[i, j]) * inv_h
                    sx[i, j] = 0.0
                    sy[i, j] = max(1.0 - beta / max(abs(uy), 1e-300), 0.0) * uy
                sx[i, n - 1] = 0.0
                sy[i, n - 1] = 0.0
        # dual step and extrapolation; div follows the first/interior/last case split
        res_f = 0.0
        for i in range(m):
            for j in range(n):
                dv = sx[i, j] if i < m - 1 else 0.0
                if i > 0:
                    dv -= sx[i - 1, j]
                dv2 = sy[i, j] if j < n - 1 else 0.0
                if j > 0:
                    dv2 -= sy[i, j - 1]
                c = rho[i, j] - (dv + dv2) * inv_h - rho_prev[i, j]
                res_f += abs(c)
                pn = p[i, j] + alpha * c
                pbar[i, j] = pn + theta * (pn - p[i, j])
                p[i, j] = pn
        res_f /= m * n
        if res_p <= tol_primal and res_f <= tol_feas:
            return it, res_p, res_f
    return n_iter, res_p, res_f


def project_w1(grid: Grid, rho2_prev, kappa, params: PdParams | None = None,
               warm: PdState | None = None) -> ProjectionResult:
    """Project ``rho2_prev`` onto ``{0 <= rho <= kappa}`` in the W1 geometry.

    Returns the corrected density, the pressure (non-negative, 1-Lipschitz
    Kantorovich potential), the rescaled flux and the W1 transport cost.  A
    run that hits ``max_iters`` is returned with ``converged=False``.
    """
    params = params or PdParams()
    rho_prev = grid.check_scalar(rho2_prev, "rho2")
    kappa = grid.check_scalar(kappa, "kappa")
    if np.any(rho_prev < 0):
        raise ValueError("rho2 must be non-negative")
    if np.any(kappa < 0) or np.any(kappa > 1):
        raise ValueError("kappa must lie in [0, 1]")
    mass_prev = float(np.sum(rho_prev))
    mass_cap = float(np.sum(kappa))
    if mass_prev > mass_cap * (1.0 + 1e-12):
        raise InfeasibleProjection(
            f"mass of rho2 ({mass_prev * grid.cell_area:.6g}) exceeds "
            f"capacity mass ({mass_cap * grid.cell_area:.6g})"
        )

    if np.all(rho_prev <= kappa):
        zero = grid.zeros()
        return ProjectionResult(rho_prev.copy(), zero, grid.zeros_vector(), 0.0, True, 0,
                                state=warm)

    alpha, beta = params.steps(grid)
    theta = params.theta
    if warm is not None and params.warm_start:
        sigma = warm.sigma.copy()
        p = warm.p.copy()
    else:
        sigma = grid.zeros_vector()
        p = grid.zeros()
    rho = np.clip(rho_prev, 0.0, kappa)
    p_bar = p.copy()  # restart extrapolation from the carried dual

    sx = np.ascontiguousarray(sigma[0])
    sy = np.ascontiguousarray(sigma[1])
    it, res_primal, res_feas = _pd_iterations(
        rho, sx, sy, p, p_bar, np.ascontiguousarray(rho_prev), np.ascontiguousarray(kappa),
        float(alpha), float(beta), float(theta), float(grid.h), int(params.max_iters),
        float(params.tol_primal), float(params.tol_feas))
    sigma = np.stack([sx, sy])
    converged = res_primal <= params.tol_primal and res_feas <= params.tol_feas

    if not converged:
        log.warning("projection stopped after %d iterations (primal %.3g, feas %.3g)",
                    it, res_primal, res_feas)
    rho_out = _mass_fix(rho, kappa, mass_prev)
    # the multiplier enters with the opposite sign; its positive part is the pressure
    pressure = np.maximum(-p, 0.0)
    # the iterate meets |grad p| <= 1 only in the limit (excess ~ 2 tol_primal);
    # scaling by the observed constant gives a dual-feasible pressure
    gp = grad(grid, pressure)
    lip = float(np.sqrt(gp[0] ** 2 + gp[1] ** 2).max())
    if lip > 1.0:
        pressure /= lip
    state = PdState(rho, sigma, p, p_bar, it, res_primal)
    return ProjectionResult(
        rho2=rho_out,
        pressure=pressure,
        sigma=sigma,
        transport_cost=transport_cost(grid, sigma),
        converged=converged,
        iters=it,
        primal_residual=res_primal,
        feas_residual=res_feas,
        state=state,
        raw_lipschitz=lip,
    )
