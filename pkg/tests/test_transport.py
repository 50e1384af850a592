import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from congestflow.grid import Grid
from congestflow.initial import Bump, Complement, Rect, build_initial_density
from congestflow.transport import (BoundaryMode, CFLError, FaceVelocity, cfl_max_dt,
                                   face_fluxes, step_transport, upwind_flux)


def _random_velocity(grid, rng, scale=1.0, closed=False):
    V = FaceVelocity(grid, scale * rng.normal(size=(grid.m + 1, grid.n)),
                     scale * rng.normal(size=(grid.m, grid.n + 1)))
    if closed:
        V.vx[0] = V.vx[-1] = 0.0
        V.vy[:, 0] = V.vy[:, -1] = 0.0
    return V


def test_upwind_flux_examples():
    assert upwind_flux(2.0, 3.0, 5.0) == 6.0
    assert upwind_flux(-2.0, 3.0, 5.0) == -10.0
    assert upwind_flux(0.0, 3.0, 5.0) == 0.0
    np.testing.assert_array_equal(upwind_flux(np.array([1.0, -1.0]), np.array([2.0, 2.0]),
                                              np.array([7.0, 7.0])), [2.0, -7.0])


def test_cfl_max_dt_examples():
    g = Grid(4, 4, 0.01)
    assert cfl_max_dt(FaceVelocity.constant(g, 1.0, 0.0)) == pytest.approx(0.005)
    assert cfl_max_dt(FaceVelocity.zeros(g)) == math.inf
    g1 = Grid(4, 4, 1.0)
    assert cfl_max_dt(FaceVelocity.constant(g1, 0.5, -2.0)) == pytest.approx(0.25)


def test_face_velocity_validation():
    g = Grid(3, 4, 0.1)
    with pytest.raises(ValueError):
        FaceVelocity(g, np.zeros((3, 4)), np.zeros((3, 5)))
    bad = np.zeros((4, 4))
    bad[1, 1] = np.nan
    with pytest.raises(ValueError):
        FaceVelocity(g, bad, np.zeros((3, 5)))


def test_zero_velocity_leaves_density():
    g = Grid(6, 5, 0.2)
    rho = np.random.default_rng(0).random(g.shape)
    for mode in BoundaryMode:
        np.testing.assert_array_equal(step_transport(rho, FaceVelocity.zeros(g), 0.1, mode), rho)


def test_one_dimensional_translation():
    g = Grid(10, 6, 0.1)
    rho = g.zeros()
    rho[4, 3] = 1.0
    v, tau = 0.8, 0.05
    nu = v * tau / g.h
    out = step_transport(rho, FaceVelocity.constant(g, v, 0.0), tau, BoundaryMode.NOFLUX)
    expected = g.zeros()
    expected[4, 3] = 1 - nu
    expected[5, 3] = nu
    np.testing.assert_allclose(out, expected, atol=1e-15)


def test_constant_positive_velocity_matches_notice_formula():
    # for Vx, Vy > 0 the update is rho - nu_x (rho_ij - rho_{i-1,j}) - nu_y (rho_ij - rho_{i,j-1})
    rng = np.random.default_rng(1)
    g = Grid(8, 7, 0.125)
    rho = rng.random(g.shape)
    vx, vy, tau = 0.7, 0.4, 0.05
    out = step_transport(rho, FaceVelocity.constant(g, vx, vy), tau, BoundaryMode.OUTFLOW)
    pad = np.pad(rho, 1)
    nx, ny = vx * tau / g.h, vy * tau / g.h
    expected = rho - nx * (rho - pad[:-2, 1:-1]) - ny * (rho - pad[1:-1, :-2])
    np.testing.assert_allclose(out, expected, atol=1e-15)


def test_cfl_guard_and_auto_substep():
    g = Grid(10, 10, 0.1)
    V = FaceVelocity.constant(g, 1.0, 0.0)
    dt = cfl_max_dt(V)
    rho = np.random.default_rng(2).random(g.shape)
    with pytest.raises(CFLError):
        step_transport(rho, V, 1.01 * dt)
    step_transport(rho, V, 0.99 * dt)

    # 2.5 dt needs three equal sub-steps
    sub = step_transport(rho, V, 2.5 * dt, BoundaryMode.OUTFLOW, auto_substep=True)
    ref = rho
    for _ in range(3):
        ref = step_transport(ref, V, 2.5 * dt / 3, BoundaryMode.OUTFLOW)
    np.testing.assert_array_equal(sub, ref)


def test_transport_input_validation():
    g = Grid(4, 4, 0.25)
    V = FaceVelocity.zeros(g)
    rho = g.zeros()
    rho[0, 0] = -1e-3
    with pytest.raises(ValueError):
        step_transport(rho, V, 0.1)
    with pytest.raises(ValueError):
        step_transport(g.zeros(), V, 0.0)
    with pytest.raises(ValueError):
        step_transport(np.zeros((3, 4)), V, 0.1)


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 12), st.integers(2, 12), st.integers(0, 2**31 - 1), st.floats(0.05, 1.0))
def test_noflux_conserves_mass(m, n, seed, frac):
    rng = np.random.default_rng(seed)
    g = Grid(m, n, 1.0 / max(m, n))
    V = _random_velocity(g, rng)
    rho = rng.random(g.shape)
    out = step_transport(rho, V, frac * cfl_max_dt(V), BoundaryMode.NOFLUX)
    assert abs(g.mass(out) - g.mass(rho)) <= 1e-12 * g.mass(rho)


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 12), st.integers(2, 12), st.integers(0, 2**31 - 1), st.floats(0.05, 1.0),
       st.sampled_from(list(BoundaryMode)))
def test_positivity(m, n, seed, frac, mode):
    # a cell can lose mass through all four faces, so general fields need tau |V| / h <= 1/4
    rng = np.random.default_rng(seed)
    g = Grid(m, n, 0.1)
    V = _random_velocity(g, rng)
    rho = rng.random(g.shape) * (rng.random(g.shape) < 0.6)
    out = step_transport(rho, V, 0.5 * frac * cfl_max_dt(V), mode)
    assert out.min() >= 0.0


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(-1, 1), st.floats(-1, 1), st.floats(0.05, 1.0))
def test_positivity_constant_velocity_at_full_cfl(seed, vx, vy, frac):
    # with a constant field each cell has at most two outgoing faces
    rng = np.random.default_rng(seed)
    g = Grid(9, 7, 0.1)
    V = FaceVelocity.constant(g, vx, vy)
    if V.max_abs() == 0:
        return
    rho = rng.random(g.shape)
    out = step_transport(rho, V, frac * cfl_max_dt(V), BoundaryMode.OUTFLOW)
    assert out.min() >= 0.0


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0.05, 1.0))
def test_max_principle_for_expanding_field(seed, frac):
    rng = np.random.default_rng(seed)
    g = Grid(10, 10, 0.1)
    # linear expansion about a random point has positive face divergence
    x0, y0 = rng.random(2)
    xf = np.arange(g.m + 1) * g.h
    yf = np.arange(g.n + 1) * g.h
    V = FaceVelocity(g, np.broadcast_to((xf - x0)[:, None], (g.m + 1, g.n)),
                     np.broadcast_to((yf - y0)[None, :], (g.m, g.n + 1)))
    assert np.all(V.face_divergence() >= 0)
    rho = rng.random(g.shape)
    out = step_transport(rho, V, 0.5 * frac * cfl_max_dt(V), BoundaryMode.OUTFLOW)
    assert out.max() <= rho.max() + 1e-15


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31 - 1), st.floats(0.05, 1.0))
def test_outflow_mass_balance(seed, frac):
    rng = np.random.default_rng(seed)
    g = Grid(8, 11, 0.1)
    V = _random_velocity(g, rng)
    rho = rng.random(g.shape)
    tau = 0.5 * frac * cfl_max_dt(V)
    out, lost = step_transport(rho, V, tau, BoundaryMode.OUTFLOW, return_outflux=True)
    assert lost >= 0.0
    assert g.mass(out) <= g.mass(rho) + 1e-15
    # the loss equals tau h times the outward boundary fluxes
    Fx, Fy = face_fluxes(rho, V, BoundaryMode.OUTFLOW)
    ref = tau * g.h * (Fx[-1].sum() - Fx[0].sum() + Fy[:, -1].sum() - Fy[:, 0].sum())
    assert lost == pytest.approx(ref, rel=1e-12, abs=1e-16)
    assert g.mass(rho) - g.mass(out) == pytest.approx(lost, rel=1e-10, abs=1e-14)


def test_outflow_takes_nothing_in():
    g = Grid(6, 6, 0.1)
    V = FaceVelocity.constant(g, 1.0, 1.0)
    out = step_transport(g.zeros(), V, 0.04, BoundaryMode.OUTFLOW)
    assert not np.any(out)


def test_reflect_with_closed_walls_conserves():
    rng = np.random.default_rng(5)
    g = Grid(12, 9, 0.1)
    V = _random_velocity(g, rng, closed=True)
    rho = rng.random(g.shape)
    out = step_transport(rho, V, cfl_max_dt(V), BoundaryMode.REFLECT)
    assert g.mass(out) == pytest.approx(g.mass(rho), rel=1e-13)


def test_reflect_ghost_mirrors_interior():
    g = Grid(5, 4, 0.2)
    rho = np.random.default_rng(6).random(g.shape)
    V = FaceVelocity.constant(g, -0.5, 0.0)
    Fx, _ = face_fluxes(rho, V, BoundaryMode.REFLECT)
    # inward velocity on the right wall carries the mirrored value in
    np.testing.assert_allclose(Fx[-1], -0.5 * rho[-1])
    Fx0, _ = face_fluxes(rho, V, BoundaryMode.OUTFLOW)
    assert not np.any(Fx0[-1])


# --------------------------------------------------------------------------
# initial data

def test_example4_bumps():
    g = Grid(64, 64, 1 / 64)
    centres = [(0.3, 0.7), (0.7, 0.3), (0.3, 0.3), (0.7, 0.7)]
    bumps = [Bump(0.9, 0.1, c) for c in centres]
    rho1, rho2 = build_initial_density(g, bumps, Complement(0.9))
    X, Y = g.centers()
    raw = sum(0.9 * np.exp(-((X - a) ** 2 + (Y - b) ** 2) / (2 * 0.01)) for a, b in centres)
    np.testing.assert_allclose(rho1, np.clip(raw, 0, 1), rtol=1e-13)
    np.testing.assert_allclose(rho2, np.clip(0.9 * (1 - rho1), 0, 1 - rho1), rtol=1e-13)
    assert np.all(rho1 + rho2 <= 1.0)


def test_example6_bumps_and_empty_spec():
    g = Grid(32, 32, 1 / 32)
    bumps = [Bump(0.5, 0.1, c) for c in [(0.2, 0.5), (0.5, 0.2), (0.5, 0.8)]]
    rho1, rho2 = build_initial_density(g, bumps)
    assert rho1.max() <= 0.5 + 0.5 * 2 * math.exp(-0.09 / 0.02) + 1e-12
    assert not np.any(rho2)
    z1, z2 = build_initial_density(g)
    assert not np.any(z1) and not np.any(z2)


def test_initial_density_clamps_overlap():
    g = Grid(10, 10, 0.1)
    rho1, rho2 = build_initial_density(g, [Rect(0, 1, 0, 1, 0.7)], [Rect(0, 0.5, 0, 1, 0.6)])
    assert np.all(rho1 + rho2 <= 1.0 + 1e-15)
    np.testing.assert_allclose(rho2[:5], 0.3)
    assert not np.any(rho2[5:])


def test_initial_density_rejects_misplaced_complement():
    g = Grid(4, 4, 0.25)
    with pytest.raises(ValueError):
        build_initial_density(g, [Complement(0.5)])
    with pytest.raises(ValueError):
        Bump(1.0, 0.0, (0.5, 0.5))
