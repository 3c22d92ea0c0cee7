"""Pseudo-spectral time stepping for the hyperdissipative system.

The momentum equation  d_t u + (-lap)^alpha u + div(u x u) + grad p = 0
is integrated on the periodic box in spectral space.  The dissipation is
applied through its exact integrating factor exp(-|k|^(2alpha) dt), so the
linear part of the scheme is error-free and the global energy ledger
isolates pure time-discretization error of the nonlinearity.  Products are
formed in real space under the 2/3 rule, which keeps the retained modes
alias-free; in that truncation the nonlinearity conserves energy exactly,
a fact the energy report leans on.

The running dissipation integral rides along as an extra scalar unknown
integrated by the same Runge-Kutta stages, so energy accounting is
consistent with the integrator to its own order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (
    CflViolation,
    InvariantViolation,
    NegativeInput,
    ZeroField,
)
from .fields import (
    TORUS_CAVEAT,
    VelocityState,
    _GridTables,
    grid_tables,
    leray_project_hat,
)

_TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class PressureField:
    """Zero-mean potential-theoretic pressure in spectral form."""

    n_grid: int
    box_length: float
    time: float
    p_hat: np.ndarray = field(repr=False)      # (n, n, n//2 + 1), normalized

    def real_field(self) -> np.ndarray:
        n = self.n_grid
        return np.fft.irfftn(self.p_hat * n**3, s=(n, n, n), axes=(0, 1, 2))

    def mean(self) -> float:
        return float(self.p_hat[0, 0, 0].real)


@dataclass(frozen=True)
class Trajectory:
    """Uniformly spaced snapshots of (velocity, pressure) along one run."""

    alpha: float
    dt_output: float
    snapshots: tuple       # of (VelocityState, PressureField)

    def __post_init__(self):
        times = [s.time for s, _ in self.snapshots]
        if len(times) >= 2:
            gaps = np.diff(times)
            if np.max(np.abs(gaps - self.dt_output)) > 1e-9 * max(
                self.dt_output, 1.0
            ):
                raise InvariantViolation("snapshot spacing is not uniform")

    @property
    def times(self) -> np.ndarray:
        return np.array([s.time for s, _ in self.snapshots])

    @property
    def n_grid(self) -> int:
        return self.snapshots[0][0].n_grid

    @property
    def box_length(self) -> float:
        return self.snapshots[0][0].box_length

    def states(self):
        return [s for s, _ in self.snapshots]

    def pressures(self):
        return [p for _, p in self.snapshots]


def _products_hat(u_hat: np.ndarray, tab: _GridTables):
    """Dealiased spectra of the six unique products u_i u_j.

    Returns (t_hat dict, max_speed); the real velocity needed for the
    products also yields the CFL speed for free.
    """
    n = tab.n
    u = np.fft.irfftn(u_hat * n**3, s=(n, n, n), axes=(1, 2, 3))
    speed = float(np.sqrt(np.max(u[0] ** 2 + u[1] ** 2 + u[2] ** 2)))
    t_hat = {}
    for i in range(3):
        for j in range(i, 3):
            prod = np.fft.rfftn(u[i] * u[j]) / n**3
            t_hat[(i, j)] = np.where(tab.dealias, prod, 0.0)
    return t_hat, speed


def _nonlinear_hat(u_hat: np.ndarray, tab: _GridTables):
    """Projected conservative-form nonlinearity N = -P div(u x u)."""
    t_hat, speed = _products_hat(u_hat, tab)
    xi = (tab.kx, tab.ky, tab.kz)
    n_hat = np.empty_like(u_hat)
    for i in range(3):
        acc = 0.0
        for j in range(3):
            key = (i, j) if i <= j else (j, i)
            acc = acc + xi[j] * t_hat[key]
        n_hat[i] = -1j * acc
    return leray_project_hat(n_hat, tab), speed


_exp_cache: dict[tuple, np.ndarray] = {}


def _half_factor(tab: _GridTables, alpha: float, dt: float) -> np.ndarray:
    key = (tab.n, tab.box_length, alpha, dt)
    e = _exp_cache.get(key)
    if e is None:
        ka = np.zeros_like(tab.k2)
        np.power(tab.k2, alpha, out=ka, where=tab.k2 > 0)
        e = np.exp(-0.5 * dt * ka)
        if len(_exp_cache) > 32:
            _exp_cache.clear()
        _exp_cache[key] = e
    return e


def step(state: VelocityState, dt: float) -> VelocityState:
    """One integrating-factor RK4 step; divergence-free and dealiased output.

    The CFL gate max|u| dt <= 0.5 dx uses the speed of the entering state;
    the dissipated ledger advances by the same RK4 quadrature applied to
    the instantaneous dissipation rate.
    """
    if dt <= 0.0:
        raise CflViolation("dt must be positive")
    tab = state.tables
    al = state.alpha
    e1 = _half_factor(tab, al, dt)
    e2 = e1 * e1
    uh = state.u_hat

    def rate(v_hat):
        ka = np.zeros_like(tab.k2)
        np.power(tab.k2, al, out=ka, where=tab.k2 > 0)
        return state.volume * float(
            np.sum(tab.mult * ka * np.sum(np.abs(v_hat) ** 2, axis=0))
        )

    n1, speed = _nonlinear_hat(uh, tab)
    if speed * dt > 0.5 * state.dx + 1e-15:
        raise CflViolation(
            f"max|u| dt = {speed * dt:.3e} exceeds 0.5 dx = {0.5 * state.dx:.3e}"
        )
    d1 = rate(uh)
    ua = e1 * (uh + 0.5 * dt * n1)
    n2, _ = _nonlinear_hat(ua, tab)
    d2 = rate(ua)
    ub = e1 * uh + 0.5 * dt * n2
    n3, _ = _nonlinear_hat(ub, tab)
    d3 = rate(ub)
    uc = e2 * uh + dt * e1 * n3
    n4, _ = _nonlinear_hat(uc, tab)
    d4 = rate(uc)

    u_new = e2 * uh + (dt / 6.0) * (e2 * n1 + 2.0 * e1 * (n2 + n3) + n4)
    diss = state.dissipated + (dt / 6.0) * (d1 + 2.0 * d2 + 2.0 * d3 + d4)
    out = replace(state, u_hat=u_new, time=state.time + dt, dissipated=diss)
    out.check_finite()
    return out


def pressure_from(u: VelocityState) -> PressureField:
    """Potential-theoretic pressure: -lap p = div div (u x u), zero mean."""
    tab = u.tables
    t_hat, _ = _products_hat(u.u_hat, tab)
    xi = (tab.kx, tab.ky, tab.kz)
    acc = np.zeros_like(t_hat[(0, 0)])
    for i in range(3):
        for j in range(3):
            key = (i, j) if i <= j else (j, i)
            acc = acc + xi[i] * xi[j] * t_hat[key]
    k2 = np.where(tab.k2 > 0, tab.k2, 1.0)
    p_hat = -acc / k2
    p_hat[0, 0, 0] = 0.0
    return PressureField(u.n_grid, u.box_length, u.time, p_hat)


def grad_pressure(u: VelocityState) -> np.ndarray:
    """Pressure gradient via the Riesz-composition route, shape (3, n, n, n).

    grad_k p = sum_ij R_i R_j d_k(u_i u_j) with the product derivatives
    formed in real space and dealiased.  The direct route i xi p_hat from
    pressure_from must agree to 1e-10 relative; disagreement means a
    transform bug, so it raises instead of returning.
    """
    tab = u.tables
    n = u.n_grid
    xi = (tab.kx, tab.ky, tab.kz)
    u_real = np.fft.irfftn(u.u_hat * n**3, s=(n, n, n), axes=(1, 2, 3))
    du = np.empty((3, 3, n, n, n))     # du[k, i] = d_k u_i
    for k in range(3):
        for i in range(3):
            du[k, i] = np.fft.irfftn(1j * xi[k] * u.u_hat[i] * n**3,
                                     s=(n, n, n), axes=(0, 1, 2))

    out_hat = np.empty((3, n, n, tab.n // 2 + 1), dtype=complex)
    k2 = np.where(tab.k2 > 0, tab.k2, 1.0)
    for k in range(3):
        acc = 0.0
        for i in range(3):
            for j in range(3):
                pk = np.fft.rfftn(du[k, i] * u_real[j] + u_real[i] * du[k, j]) / n**3
                pk = np.where(tab.dealias, pk, 0.0)
                acc = acc + xi[i] * xi[j] * pk
        out_hat[k] = -acc / k2
        out_hat[k][0, 0, 0] = 0.0

    p_hat = pressure_from(u).p_hat
    direct = np.stack([1j * xi[k] * p_hat for k in range(3)])
    scale = float(np.max(np.abs(direct)))
    if scale > 0.0:
        gap = float(np.max(np.abs(out_hat - direct))) / scale
        if gap > 1e-10:
            raise InvariantViolation(
                f"Riesz-composition and direct pressure gradients differ by {gap:.3e}"
            )
    return np.fft.irfftn(out_hat * n**3, s=(n, n, n), axes=(1, 2, 3))


def fourier_splitting_margin(u: VelocityState) -> float:
    """Slack in ||grad u||^2 <= ||u||^2 + ||(-lap)^(alpha/2) u||^2, >= 0."""
    return (
        2.0 * u.energy() + u.dissipation_rate() - u.gradient_sq_integral()
    )


def simulate(
    init: VelocityState,
    dt: float,
    t_end: float,
    n_snapshots: int = 11,
) -> Trajectory:
    """March the state to t_end, storing uniformly spaced snapshot pairs.

    The step is shrunk so snapshot times land exactly on step boundaries;
    the effective dt never exceeds the requested one.
    """
    if n_snapshots < 2:
        raise ValueError("need at least two snapshots")
    if t_end <= 0.0 or dt <= 0.0:
        raise ValueError("dt and t_end must be positive")
    spans = n_snapshots - 1
    per_span = max(1, math.ceil(round(t_end / dt, 9) / spans))
    dt_eff = t_end / (spans * per_span)
    state = init
    snaps = [(state, pressure_from(state))]
    for _ in range(spans):
        for _ in range(per_span):
            state = step(state, dt_eff)
        snaps.append((state, pressure_from(state)))
    return Trajectory(
        alpha=init.alpha, dt_output=t_end / spans, snapshots=tuple(snaps)
    )


@dataclass(frozen=True)
class EnergyReport:
    """Interval-by-interval ledger of the global energy identity."""

    times: np.ndarray
    energies: np.ndarray
    dissipation_integrals: np.ndarray      # per interval
    residuals: np.ndarray                  # E(t) - E(s) + integral, per interval
    worst: float
    suitable_grade: bool
    dissipation_route: str                 # "stage" or "trapezoid"
    tolerance: float
    caveat: str = TORUS_CAVEAT


def global_energy_report(t: Trajectory, tolerance: float = 1e-6) -> EnergyReport:
    """Check (1/2)||u||^2(t) - (1/2)||u||^2(s) + int_s^t dissipation = 0.

    Stage-accumulated dissipation ledgers are used when present; loaded
    trajectories without them fall back to trapezoid quadrature of the
    instantaneous rate, which is marked in the report and is only
    O(dt_output^2) accurate.
    """
    states = t.states()
    if len(states) < 2:
        raise InvariantViolation("energy report needs at least two snapshots")
    times = t.times
    energies = np.array([s.energy() for s in states])
    ledgers = np.array([s.dissipated for s in states])
    if np.any(np.diff(ledgers) != 0.0):
        route = "stage"
        integrals = np.diff(ledgers)
    else:
        route = "trapezoid"
        rates = np.array([s.dissipation_rate() for s in states])
        integrals = 0.5 * (rates[1:] + rates[:-1]) * np.diff(times)
    residuals = np.diff(energies) + integrals
    worst = float(np.max(np.abs(residuals))) if residuals.size else 0.0
    return EnergyReport(
        times=times,
        energies=energies,
        dissipation_integrals=integrals,
        residuals=residuals,
        worst=worst,
        suitable_grade=bool(worst <= tolerance),
        dissipation_route=route,
        tolerance=tolerance,
    )


_stencil_cache: dict[tuple, list] = {}


def _ball_stencils(n: int, box_length: float):
    """rfftn of ball-indicator stencils for dyadic radii 2 dx * 2^j <= L/2.

    The smallest radius is 2 dx: at r = dx the discrete cell count (7)
    overshoots the continuum ball volume by two thirds, while from 2 dx on
    the lattice count tracks (4 pi/3) r^3 within a few percent.
    """
    key = (n, box_length)
    got = _stencil_cache.get(key)
    if got is not None:
        return got
    dx = box_length / n
    shifts = dx * np.minimum(np.arange(n), n - np.arange(n)).astype(float)
    d2 = (
        shifts[:, None, None] ** 2
        + shifts[None, :, None] ** 2
        + shifts[None, None, :] ** 2
    )
    out = []
    r = 2.0 * dx
    while r <= 0.5 * box_length * (1.0 + 1e-12):
        ind = (d2 <= r * r * (1.0 + 1e-12)).astype(float)
        out.append((r, np.fft.rfftn(ind)))
        r *= 2.0
    if len(_stencil_cache) > 8:
        _stencil_cache.clear()
    _stencil_cache[key] = out
    return out


def maximal_function(f: np.ndarray, box_length: float) -> np.ndarray:
    """Discrete Hardy-Littlewood maximal function with 1/r^3 normalization.

    Mf(x) = max over dyadic radii of r^(-3) * sum of f over the periodic
    ball B_r(x) times dx^3.  The bare 1/r^3 convention (no 4 pi / 3) is
    deliberate, so a constant field c maps to about (4 pi / 3) c.
    """
    f = np.asarray(f, dtype=float)
    if f.ndim != 3 or f.shape[0] != f.shape[1] or f.shape[1] != f.shape[2]:
        raise ValueError("expected a cubic scalar field")
    if np.any(f < 0.0):
        raise NegativeInput("maximal function input must be nonnegative")
    n = f.shape[0]
    dx = box_length / n
    f_hat = np.fft.rfftn(f)
    out = np.zeros_like(f)
    for r, s_hat in _ball_stencils(n, box_length):
        avg = np.fft.irfftn(f_hat * s_hat, s=(n, n, n),
                            axes=(0, 1, 2)) * (dx**3 / r**3)
        np.maximum(out, avg, out=out)
    # convolution roundoff can leave -1e-17 wiggles on a zero background
    np.maximum(out, 0.0, out=out)
    return out


def ball_average(f: np.ndarray, box_length: float, r: float) -> np.ndarray:
    """(1/r^3) * integral of f over the periodic ball, one fixed radius."""
    f = np.asarray(f, dtype=float)
    n = f.shape[0]
    dx = box_length / n
    shifts = dx * np.minimum(np.arange(n), n - np.arange(n)).astype(float)
    d2 = (
        shifts[:, None, None] ** 2
        + shifts[None, :, None] ** 2
        + shifts[None, None, :] ** 2
    )
    ind = (d2 <= r * r * (1.0 + 1e-12)).astype(float)
    return np.fft.irfftn(np.fft.rfftn(f) * np.fft.rfftn(ind), s=(n, n, n),
                         axes=(0, 1, 2)) * (
        dx**3 / r**3
    )


@dataclass(frozen=True)
class GradPReport:
    """Empirical constant in the pressure-gradient integrability bound."""

    exponent: float
    lhs: float
    rhs: float
    ratio: float
    degenerate: bool
    dissipation_route: str
    caveat: str = TORUS_CAVEAT


def gradp_integrability_report(t: Trajectory) -> GradPReport:
    """Compare space-time integral of |grad p|^((3+2a)/4) against the
    dissipation functional raised to (3+2a)/8; the ratio is the empirical
    constant of the bound and should drift by less than 10x across
    resolutions.
    """
    al = t.alpha
    q = (3.0 + 2.0 * al) / 4.0
    states = t.states()
    times = t.times
    vol_el = states[0].dx ** 3
    norms = []
    for s in states:
        g = grad_pressure(s)
        mag = np.sqrt(g[0] ** 2 + g[1] ** 2 + g[2] ** 2)
        norms.append(float(np.sum(mag**q)) * vol_el)
    lhs = float(np.trapezoid(norms, times))
    ledgers = np.array([s.dissipated for s in states])
    if np.any(np.diff(ledgers) != 0.0):
        route = "stage"
        total_diss = float(ledgers[-1] - ledgers[0])
    else:
        route = "trapezoid"
        rates = [s.dissipation_rate() for s in states]
        total_diss = float(np.trapezoid(rates, times))
    rhs = total_diss ** ((3.0 + 2.0 * al) / 8.0)
    degenerate = rhs == 0.0
    ratio = 0.0 if degenerate else lhs / rhs
    if degenerate and lhs > 0.0:
        raise ZeroField("zero dissipation with nonzero pressure gradient")
    return GradPReport(
        exponent=q,
        lhs=lhs,
        rhs=rhs,
        ratio=ratio,
        degenerate=degenerate,
        dissipation_route=route,
    )
