"""Stepper, pressure, energy ledger, and maximal-function tests."""

import dataclasses

import numpy as np
import pytest

from fracreg.errors import (
    CflViolation,
    InvariantViolation,
    NanDetected,
    NegativeInput,
)
from fracreg.fields import (
    VelocityState,
    random_bandlimited,
    single_mode,
    taylor_green,
)
from fracreg.solver import (
    PressureField,
    Trajectory,
    ball_average,
    fourier_splitting_margin,
    global_energy_report,
    grad_pressure,
    gradp_integrability_report,
    maximal_function,
    pressure_from,
    simulate,
    step,
)

AL = 1.2
TWO_PI = 2.0 * np.pi


def pressure_convective(u):
    """Independent pressure route through the convective form div(u.grad u)."""
    tab = u.tables
    n = u.n_grid
    xi = (tab.kx, tab.ky, tab.kz)
    ur = u.real_field()
    conv_hat = []
    for i in range(3):
        conv = np.zeros((n, n, n))
        for j in range(3):
            dji = np.fft.irfftn(1j * xi[j] * u.u_hat[i] * n**3,
                                s=(n, n, n), axes=(0, 1, 2))
            conv += ur[j] * dji
        ch = np.fft.rfftn(conv) / n**3
        conv_hat.append(np.where(tab.dealias, ch, 0.0))
    div = 1j * (xi[0] * conv_hat[0] + xi[1] * conv_hat[1] + xi[2] * conv_hat[2])
    # |xi|^2 p_hat = (div(u.grad u))^ once div u = 0 folds u_i div u away
    k2 = np.where(tab.k2 > 0, tab.k2, 1.0)
    p_hat = div / k2
    p_hat[0, 0, 0] = 0.0
    return p_hat


# ------------------------------------------------------------------ stepping


def test_zero_field_fixed_point():
    z = taylor_green(16, AL, amplitude=0.0)
    out = step(z, 0.01)
    assert np.max(np.abs(out.u_hat)) == 0.0
    assert out.time == pytest.approx(0.01)


def test_shear_mode_exact_decay():
    # nonlinearity self-cancels for a single shear mode, so the step is
    # exactly the heat-type factor
    for k_idx, dt in (((2, 1, 0), 0.01), ((1, 0, 0), 0.05), ((0, 3, 1), 0.002)):
        u = single_mode(16, AL, k_idx, amplitude=0.4)
        k2 = float(sum(c * c for c in k_idx))
        v = step(u, dt)
        expect = u.u_hat * np.exp(-(k2**AL) * dt)
        assert np.max(np.abs(v.u_hat - expect)) < 1e-12


def test_divergence_free_every_step():
    u = random_bandlimited(16, alpha=AL, seed=0, k_min=1, k_max=4)
    for _ in range(20):
        u = step(u, 0.01)
        assert u.divergence_max() <= 1e-12


def test_cfl_violation():
    u = taylor_green(16, AL, amplitude=2.0)
    dx = TWO_PI / 16
    with pytest.raises(CflViolation):
        step(u, 0.5 * dx / u.max_speed() * 1.5)
    # just below the gate is accepted
    step(u, 0.5 * dx / u.max_speed() * 0.9)
    with pytest.raises(CflViolation):
        step(u, -0.01)


def test_nan_guard():
    u = taylor_green(16, AL)
    bad = np.array(u.u_hat)
    bad[0, 1, 1, 1] = np.nan
    with pytest.raises(NanDetected):
        step(dataclasses.replace(u, u_hat=bad), 1e-3)


def test_rk4_order_by_dt_halving():
    res = []
    for dt in (0.02, 0.01):
        t = simulate(taylor_green(24, AL), dt=dt, t_end=0.1, n_snapshots=2)
        res.append(global_energy_report(t).worst)
    assert res[0] / res[1] > 8.0  # fourth order gives ~16


def test_energy_monotone_decay():
    t = simulate(taylor_green(24, AL), dt=0.01, t_end=0.3, n_snapshots=7)
    e = global_energy_report(t).energies
    assert np.all(np.diff(e) < 0.0)


def test_dissipated_ledger_monotone():
    t = simulate(taylor_green(24, AL), dt=0.01, t_end=0.2, n_snapshots=5)
    led = np.array([s.dissipated for s in t.states()])
    assert led[0] == 0.0
    assert np.all(np.diff(led) > 0.0)


# ------------------------------------------------------------------ energy report


def test_energy_report_zero_trajectory():
    t = simulate(taylor_green(16, AL, amplitude=0.0), dt=0.01, t_end=0.05,
                 n_snapshots=3)
    rep = global_energy_report(t)
    assert np.all(rep.residuals == 0.0)
    assert rep.suitable_grade


def test_energy_report_resolved_run():
    t = simulate(taylor_green(32, AL), dt=0.01, t_end=0.5, n_snapshots=6)
    rep = global_energy_report(t)
    assert rep.worst < 1e-6
    assert rep.suitable_grade
    assert rep.dissipation_route == "stage"
    assert "torus" in rep.caveat


def test_energy_report_trapezoid_fallback():
    t = simulate(taylor_green(24, AL), dt=0.01, t_end=0.2, n_snapshots=5)
    stripped = tuple(
        (dataclasses.replace(s, dissipated=0.0), p) for s, p in t.snapshots
    )
    t2 = Trajectory(alpha=t.alpha, dt_output=t.dt_output, snapshots=stripped)
    rep = global_energy_report(t2)
    assert rep.dissipation_route == "trapezoid"
    # quadrature of the rate at snapshot spacing is far cruder but finite
    assert np.isfinite(rep.worst)


def test_energy_report_flags_coarse_time_step():
    # large dt within CFL still ruins fourth-order accounting at 1e-6 grade
    t = simulate(taylor_green(16, AL, amplitude=2.0), dt=0.08, t_end=0.16,
                 n_snapshots=3)
    rep = global_energy_report(t)
    assert rep.worst > 1e-6
    assert not rep.suitable_grade


def test_trajectory_uniform_spacing_enforced():
    t = simulate(taylor_green(16, AL), dt=0.01, t_end=0.04, n_snapshots=5)
    snaps = t.snapshots
    bad = (snaps[0], snaps[1], snaps[3])
    with pytest.raises(InvariantViolation):
        Trajectory(alpha=t.alpha, dt_output=t.dt_output, snapshots=bad)


def test_simulate_snapshot_layout():
    t = simulate(taylor_green(16, AL), dt=0.013, t_end=0.5, n_snapshots=6)
    assert len(t.snapshots) == 6
    assert t.dt_output == pytest.approx(0.1)
    assert np.allclose(np.diff(t.times), 0.1)
    for s, p in t.snapshots:
        assert isinstance(p, PressureField)
        assert abs(s.time - p.time) < 1e-12


# ------------------------------------------------------------------ pressure


def test_pressure_zero_field():
    z = taylor_green(16, AL, amplitude=0.0)
    assert np.max(np.abs(pressure_from(z).p_hat)) == 0.0


def test_pressure_zero_mean():
    u = random_bandlimited(24, alpha=AL, seed=4, k_min=1, k_max=6)
    p = pressure_from(u)
    assert p.mean() == 0.0
    assert abs(np.mean(p.real_field())) < 1e-14


def test_pressure_shear_mode_vanishes():
    # polarization orthogonal to k kills xi_i xi_j T_ij for a lone mode
    u = single_mode(16, AL, (2, 1, 0))
    assert np.max(np.abs(pressure_from(u).p_hat)) < 1e-15


def test_pressure_matches_convective_route():
    u = random_bandlimited(24, alpha=AL, seed=8, k_min=1, k_max=6)
    p1 = pressure_from(u).p_hat
    p2 = pressure_convective(u)
    scale = np.max(np.abs(p1))
    assert np.max(np.abs(p1 - p2)) < 1e-12 * scale


def test_pressure_poisson_residual():
    u = random_bandlimited(24, alpha=AL, seed=2, k_min=1, k_max=6)
    tab = u.tables
    p = pressure_from(u)
    # reassemble div div (u x u) spectrally; -lap p in Fourier is +|xi|^2 p_hat
    n = u.n_grid
    ur = u.real_field()
    xi = (tab.kx, tab.ky, tab.kz)
    acc = np.zeros_like(p.p_hat)
    for i in range(3):
        for j in range(3):
            th = np.fft.rfftn(ur[i] * ur[j]) / n**3
            th = np.where(tab.dealias, th, 0.0)
            acc = acc + (1j * xi[i]) * (1j * xi[j]) * th
    resid = tab.k2 * p.p_hat - acc
    resid[0, 0, 0] = 0.0
    assert np.max(np.abs(resid)) < 1e-12 * max(np.max(np.abs(acc)), 1e-300)


def test_grad_pressure_routes_and_curl():
    u = random_bandlimited(24, alpha=AL, seed=6, k_min=1, k_max=6)
    g = grad_pressure(u)          # raises internally above 1e-10 disagreement
    n = u.n_grid
    tab = u.tables
    xi = (tab.kx, tab.ky, tab.kz)
    p_hat = pressure_from(u).p_hat
    direct = np.stack(
        [np.fft.irfftn(1j * xi[k] * p_hat * n**3, s=(n, n, n), axes=(0, 1, 2))
         for k in range(3)]
    )
    scale = np.max(np.abs(direct))
    assert np.max(np.abs(g - direct)) < 1e-10 * scale
    g_hat = np.fft.rfftn(g, axes=(1, 2, 3)) / n**3
    curl = np.stack(
        [
            xi[1] * g_hat[2] - xi[2] * g_hat[1],
            xi[2] * g_hat[0] - xi[0] * g_hat[2],
            xi[0] * g_hat[1] - xi[1] * g_hat[0],
        ]
    )
    assert np.max(np.abs(curl)) < 1e-12 * max(np.max(np.abs(g_hat)), 1e-300)


def test_grad_pressure_zero_field():
    z = taylor_green(16, AL, amplitude=0.0)
    assert np.max(np.abs(grad_pressure(z))) == 0.0


def test_fourier_splitting_margin():
    for seed in range(3):
        u = random_bandlimited(16, alpha=AL, seed=seed, k_min=1, k_max=5)
        assert fourier_splitting_margin(u) >= 0.0
    t = simulate(taylor_green(24, AL), dt=0.01, t_end=0.1, n_snapshots=3)
    for s in t.states():
        assert fourier_splitting_margin(s) >= 0.0


# ------------------------------------------------------------------ maximal fn


def test_maximal_constant_field():
    f = np.full((32, 32, 32), 3.0)
    mf = maximal_function(f, TWO_PI)
    target = 3.0 * 4.0 * np.pi / 3.0
    assert np.max(np.abs(mf - target)) / target < 0.10


def test_maximal_spike_decay():
    n = 32
    f = np.zeros((n, n, n))
    f[0, 0, 0] = 1.0
    mf = maximal_function(f, TWO_PI)
    # at axis distance d*dx the best dyadic ball has radius d*dx exactly
    for d in (2, 4, 8):
        assert mf[d, 0, 0] == pytest.approx(1.0 / d**3, abs=1e-14)
    assert mf[2, 0, 0] / mf[4, 0, 0] == pytest.approx(8.0, rel=1e-12)


def test_maximal_sup_property():
    rng = np.random.default_rng(3)
    f = np.abs(rng.standard_normal((24, 24, 24)))
    mf = maximal_function(f, TWO_PI)
    dx = TWO_PI / 24
    r = 2.0 * dx
    while r <= np.pi:
        assert np.all(mf >= ball_average(f, TWO_PI, r) - 1e-12)
        r *= 2.0


def test_maximal_negative_input():
    f = np.zeros((16, 16, 16))
    f[3, 3, 3] = -1.0
    with pytest.raises(NegativeInput):
        maximal_function(f, TWO_PI)


# ------------------------------------------------------------------ gradp report


def test_gradp_report_zero_trajectory():
    t = simulate(taylor_green(16, AL, amplitude=0.0), dt=0.01, t_end=0.05,
                 n_snapshots=3)
    rep = gradp_integrability_report(t)
    assert rep.degenerate
    assert rep.lhs == 0.0
    assert rep.ratio == 0.0


def test_gradp_report_exponent_and_stability():
    ratios = []
    for n in (16, 24, 32):
        t = simulate(taylor_green(n, AL), dt=0.01, t_end=0.2, n_snapshots=5)
        rep = gradp_integrability_report(t)
        assert rep.exponent == pytest.approx((3.0 + 2.0 * AL) / 4.0)
        assert 1.25 < rep.exponent < 1.375
        assert np.isfinite(rep.ratio) and rep.ratio > 0.0
        ratios.append(rep.ratio)
    assert max(ratios) / min(ratios) < 10.0
