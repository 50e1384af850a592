"""Prediction-correction time loop for the two populations."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import initial
from .grid import Grid
from .potentials import Normalization, PotentialSpec, velocity
from .projection import InfeasibleProjection, PdParams, PdState, project_w1
from .transport import BoundaryMode, step_transport

log = logging.getLogger(__name__)

FORMATS = ("raw", "pgm", "csv", "png")


@dataclass
class Scenario:
    grid: Grid
    T: float
    tau: float
    potential: PotentialSpec = field(default_factory=PotentialSpec)
    boundary: BoundaryMode = BoundaryMode.NOFLUX
    rho1_spec: tuple = ()
    rho2_spec: tuple | initial.Complement = ()
    init_normalization: Normalization = Normalization.UNNORMALIZED
    pd: PdParams = field(default_factory=PdParams)
    auto_substep: bool = False
    snapshot_every: int = 10
    output_dir: str = "out"
    formats: tuple[str, ...] = ("raw", "csv")

    def __post_init__(self):
        self.boundary = BoundaryMode(self.boundary)
        self.init_normalization = Normalization(self.init_normalization)
        if not isinstance(self.rho2_spec, initial.Complement):
            self.rho2_spec = tuple(self.rho2_spec)
        self.rho1_spec = tuple(self.rho1_spec)
        self.formats = tuple(self.formats)
        if not self.tau > 0:
            raise ValueError(f"tau must be > 0, got {self.tau}")
        if not self.T >= self.tau:
            raise ValueError(f"T must be >= tau, got T={self.T}, tau={self.tau}")
        if self.snapshot_every < 1:
            raise ValueError("snapshot_every must be >= 1")
        for f in self.formats:
            if f not in FORMATS:
                raise ValueError(f"unknown output format {f!r}; choose from {FORMATS}")

    @property
    def n_steps(self) -> int:
        return max(1, math.ceil(self.T / self.tau - 1e-9))

    def initial_densities(self):
        return initial.build_initial_density(self.grid, self.rho1_spec, self.rho2_spec,
                                             self.init_normalization)


@dataclass
class StepDiagnostics:
    step: int
    t: float
    mass1: float
    mass2: float
    max_total_density: float
    constraint_violation_pre: float
    constraint_violation_post: float
    pd_iters: int
    pd_cost: float
    outflux_cum: float
    pd_converged: bool = True


class SimulationError(RuntimeError):
    """A run aborted because the correction step had no admissible solution."""


def run(scenario: Scenario, sink=None, callback=None) -> list[StepDiagnostics]:
    """Run the scenario and return one diagnostics record per time level.

    The first record describes the initial data (step 0).  ``sink`` receives
    snapshots at the configured cadence; ``callback(step, state_dict)`` is
    called after every step.
    """
    grid = scenario.grid
    spec = scenario.potential
    pd = scenario.pd
    rho1, rho2 = scenario.initial_densities()

    def record(step, t, v_pre, iters, cost, outflux, converged=True):
        total = rho1 + rho2
        return StepDiagnostics(
            step=step, t=t,
            mass1=grid.mass(rho1), mass2=grid.mass(rho2),
            max_total_density=float(np.max(total)),
            constraint_violation_pre=v_pre,
            constraint_violation_post=max(0.0, float(np.max(total)) - 1.0),
            pd_iters=iters, pd_cost=cost, outflux_cum=outflux,
            pd_converged=converged,
        )

    v0 = max(0.0, float(np.max(rho1 + rho2)) - 1.0)
    diags = [record(0, 0.0, v0, 0, 0.0, 0.0)]
    pressure = grid.zeros()
    sigma = grid.zeros_vector()
    V, phi = velocity(spec, grid, rho1)
    if sink is not None:
        sink.emit(0, 0.0, rho1, rho2, pressure, sigma / scenario.tau, V)

    warm: PdState | None = None
    outflux = 0.0
    nsteps = scenario.n_steps
    for k in range(nsteps):
        if not spec.is_static and k > 0 and k % spec.refresh_every == 0:
            V, phi = velocity(spec, grid, rho1)
        rho1, lost = step_transport(rho1, V, scenario.tau, scenario.boundary,
                                    auto_substep=scenario.auto_substep, return_outflux=True)
        # round-off can leave -1e-18 behind in emptied cells
        np.maximum(rho1, 0.0, out=rho1)
        outflux += lost
        kappa = np.clip(1.0 - rho1, 0.0, 1.0)
        v_pre = max(0.0, float(np.max(rho1 + rho2)) - 1.0)
        iters, cost, converged = 0, 0.0, True
        # any violation is corrected; tiny ones end after the first clip
        if v_pre > 0.0:
            try:
                res = project_w1(grid, rho2, kappa, pd, warm if pd.warm_start else None)
            except InfeasibleProjection as exc:
                if sink is not None and hasattr(sink, "dump_failure"):
                    sink.dump_failure(k + 1, (k + 1) * scenario.tau, rho1=rho1, rho2=rho2,
                                      kappa=kappa)
                raise SimulationError(f"step {k + 1}: {exc}") from exc
            rho2 = res.rho2
            pressure = res.pressure
            sigma = res.sigma
            warm = res.state
            iters, cost, converged = res.iters, res.transport_cost, res.converged
        else:
            pressure = grid.zeros()
            sigma = grid.zeros_vector()
        t = (k + 1) * scenario.tau
        diags.append(record(k + 1, t, v_pre, iters, cost, outflux, converged))
        last = k == nsteps - 1
        if sink is not None and ((k + 1) % scenario.snapshot_every == 0 or last):
            sink.emit(k + 1, t, rho1, rho2, pressure, sigma / scenario.tau, V)
        if callback is not None:
            callback(k + 1, {"rho1": rho1, "rho2": rho2, "pressure": pressure,
                             "sigma": sigma, "velocity": V, "kappa": kappa})
    return diags


@dataclass
class CheckReport:
    results: dict[str, bool]
    details: dict[str, float]

    @property
    def passed(self) -> bool:
        return all(self.results.values())

    def lines(self) -> list[str]:
        return [f"{'PASS' if ok else 'FAIL'} {name} ({self.details[name]:.3e})"
                for name, ok in self.results.items()]


def replay_check(diags, mass_tol: float = 1e-6, balance_tol: float = 1e-9,
                 feas_tol: float = 1e-6, area: float = 1.0) -> CheckReport:
    """Check the conservation and capacity properties of a diagnostics series.

    * ``mass2_constant``: population 2 mass never drifts by more than
      ``mass_tol * area``;
    * ``mass1_balance``: ``mass1 + outflux_cum`` is constant within
      ``balance_tol * area``;
    * ``capacity``: the post-correction violation stays below ``feas_tol``.
    """
    m1 = np.array([d.mass1 for d in diags])
    m2 = np.array([d.mass2 for d in diags])
    out = np.array([d.outflux_cum for d in diags])
    post = np.array([d.constraint_violation_post for d in diags])
    details = {
        "mass2_constant": float(np.max(np.abs(m2 - m2[0]))) / area,
        "mass1_balance": float(np.max(np.abs(m1 + out - m1[0] - out[0]))) / area,
        "capacity": float(np.max(post)),
    }
    results = {
        "mass2_constant": details["mass2_constant"] <= mass_tol,
        "mass1_balance": details["mass1_balance"] <= balance_tol,
        "capacity": details["capacity"] <= feas_tol,
    }
    return CheckReport(results, details)


def first_contact_step(diags, tol: float = 0.0) -> int | None:
    """Index of the first step whose prediction violated the capacity."""
    for d in diags[1:]:
        if d.constraint_violation_pre > tol:
            return d.step
    return None

