"""Scale-invariant cylinder quantities and lemma-shaped diagnostics.

Five quantities live on parabolic cylinders Q_r(z) = B_r(x) x (t - r^{2a}, t]:
the sup-energy A, the cubic norm C, the oscillation pressure norm D, the
wall-weighted extension energy E, and the nonlocal tail T. All are computed
from stored trajectory snapshots by cell-center quadrature; every report
carries the torus caveat because the tail's sup over large radii is truncated
at half the box.

The lemma diagnostics return dimensionless ratios lhs/rhs with the implied
constant set to 1, so sweeps over radii and ensembles measure the empirical
constant directly. Ratios on the zero field report 0 rather than 0/0.
"""

from __future__ import annotations

import math
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.integrate import simpson
from scipy.interpolate import CubicSpline

from .errors import (
    BadTestFunction,
    CylinderOutOfWindow,
    DegenerateDenominator,
    DomainInputError,
    InvariantViolation,
    NonDyadicLambda,
    RadiusUnresolved,
)
from .extension import (
    ExtendedField,
    ExtensionProfile,
    extend_field,
    make_y_grid,
    solve_profile,
)
from .fields import TORUS_CAVEAT, VelocityState, active_modes
from .ioutil import atomic_write_text, fmt12, write_csv
from .solver import PressureField, Trajectory

_TINY = 1e-30


# --------------------------------------------------------------------------
# report containers


@dataclass(frozen=True)
class QuantityReport:
    """The five quantities at one cylinder, plus the epsilon-regularity sum."""

    center: tuple[float, float, float]
    time: float
    radius: float
    a_val: float
    c_val: float
    d_val: float
    e_val: float
    t_val: float
    caveat: str = TORUS_CAVEAT

    def __post_init__(self):
        for name in ("a_val", "c_val", "d_val", "e_val", "t_val"):
            if getattr(self, name) < 0.0:
                raise InvariantViolation(f"{name} must be nonnegative")

    @property
    def epsilon_sum(self) -> float:
        return self.c_val + self.d_val + self.t_val


@dataclass(frozen=True)
class EpsilonVerdict:
    epsilon_sum: float
    threshold: float
    satisfied: bool
    report: QuantityReport


# --------------------------------------------------------------------------
# test functions


def _bump(s: np.ndarray) -> np.ndarray:
    """(1-s^2)^6 on |s|<1, zero outside; C^5 across the support edge.

    The high power keeps the bump's spectral tail far below the grid's
    aliasing wrap, so cell-center sums of field-times-bump products stay
    accurate at desk resolutions.
    """
    s = np.asarray(s, dtype=float)
    inside = np.abs(s) < 1.0
    v = np.where(inside, 1.0 - s * s, 0.0)
    return v**6


def _dbump(s: np.ndarray) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    inside = np.abs(s) < 1.0
    v = np.where(inside, 1.0 - s * s, 0.0)
    return -12.0 * s * v**5


def _ddbump(s: np.ndarray) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    inside = np.abs(s) < 1.0
    v = np.where(inside, 1.0 - s * s, 0.0)
    return v**4 * (132.0 * s * s - 12.0)


@dataclass(frozen=True)
class TestFunction:
    """Separable bump phi(x, y, t) = A X(x) Y(y) T(t) for the local inequality.

    X is a product of per-axis bumps of half-width r_space around center
    (periodic min-image), Y a half-bump in y of width r_y (even in y, so the
    wall-normal derivative vanishes at y = 0), T a bump of half-width r_time
    around t_center. y_slope deliberately tilts Y to exercise the Neumann
    validation and must stay 0 for a valid test function.
    """

    center: tuple[float, float, float]
    t_center: float
    r_space: float
    r_y: float
    r_time: float
    amplitude: float = 1.0
    y_slope: float = 0.0

    # -- x factors -----------------------------------------------------
    def _axis_args(self, n: int, box_length: float):
        x = np.arange(n) * (box_length / n)
        out = []
        for c in self.center:
            d = (x - c + 0.5 * box_length) % box_length - 0.5 * box_length
            out.append(d / self.r_space)
        return out

    def space_factor(self, n: int, box_length: float) -> np.ndarray:
        sa, sb, sc = self._axis_args(n, box_length)
        return (
            self.amplitude
            * _bump(sa)[:, None, None]
            * _bump(sb)[None, :, None]
            * _bump(sc)[None, None, :]
        )

    def space_gradient(self, n: int, box_length: float) -> np.ndarray:
        sa, sb, sc = self._axis_args(n, box_length)
        ga, gb, gc = _bump(sa), _bump(sb), _bump(sc)
        da, db, dc = _dbump(sa), _dbump(sb), _dbump(sc)
        inv = self.amplitude / self.r_space
        out = np.empty((3, n, n, n))
        out[0] = inv * da[:, None, None] * gb[None, :, None] * gc[None, None, :]
        out[1] = inv * ga[:, None, None] * db[None, :, None] * gc[None, None, :]
        out[2] = inv * ga[:, None, None] * gb[None, :, None] * dc[None, None, :]
        return out

    def space_laplacian(self, n: int, box_length: float) -> np.ndarray:
        sa, sb, sc = self._axis_args(n, box_length)
        ga, gb, gc = _bump(sa), _bump(sb), _bump(sc)
        ha, hb, hc = _ddbump(sa), _ddbump(sb), _ddbump(sc)
        inv = self.amplitude / self.r_space**2
        return inv * (
            ha[:, None, None] * gb[None, :, None] * gc[None, None, :]
            + ga[:, None, None] * hb[None, :, None] * gc[None, None, :]
            + ga[:, None, None] * gb[None, :, None] * hc[None, None, :]
        )

    # -- y factors -----------------------------------------------------
    def y_factor(self, y) -> np.ndarray:
        s = np.asarray(y, dtype=float) / self.r_y
        return _bump(s) + self.y_slope * s * _bump(s)

    def dy_factor(self, y) -> np.ndarray:
        s = np.asarray(y, dtype=float) / self.r_y
        return (_dbump(s) + self.y_slope * (_bump(s) + s * _dbump(s))) / self.r_y

    def yb_factor(self, y, b: float) -> np.ndarray:
        """Y'' + (b/y) Y', finite at the wall because Y is even there."""
        s = np.asarray(y, dtype=float) / self.r_y
        ypp = (_ddbump(s) + self.y_slope * (2.0 * _dbump(s) + s * _ddbump(s)))
        # Y'/y = (dbump(s)/s)/r_y^2; dbump(s)/s = -12(1-s^2)^5 is smooth at 0
        inside = np.abs(s) < 1.0
        v = np.where(inside, 1.0 - s * s, 0.0)
        db_over_s = -12.0 * v**5
        with np.errstate(divide="ignore", invalid="ignore"):
            tilt = np.where(s > 0, (_bump(s) + s * _dbump(s)) / s, np.inf)
        yp_over_y = db_over_s + self.y_slope * tilt
        return (ypp + b * yp_over_y) / self.r_y**2

    # -- t factors -----------------------------------------------------
    def time_factor(self, t) -> np.ndarray:
        return _bump((np.asarray(t, dtype=float) - self.t_center) / self.r_time)

    def dtime_factor(self, t) -> np.ndarray:
        return _dbump(
            (np.asarray(t, dtype=float) - self.t_center) / self.r_time
        ) / self.r_time

    # -- validation ----------------------------------------------------
    def validate(self, times: np.ndarray, box_length: float, y_max: float) -> None:
        if min(self.r_space, self.r_y, self.r_time) <= 0.0:
            raise BadTestFunction("support radii must be positive")
        if self.amplitude < 0.0:
            raise BadTestFunction("test function must be nonnegative")
        if self.r_space >= 0.5 * box_length:
            raise BadTestFunction("spatial support does not fit inside the box")
        if self.r_y >= y_max:
            raise BadTestFunction("wall-normal support exceeds the extension grid")
        if not (times[0] < self.t_center - self.r_time
                and self.t_center + self.r_time < times[-1]):
            raise BadTestFunction(
                "time support must lie strictly inside the stored window"
            )
        h = 1e-7 * self.r_y
        slope = (self.y_factor(h) - self.y_factor(0.0)) / h
        if abs(slope) > 1e-5 / self.r_y:
            raise BadTestFunction("wall-normal derivative at y=0 must vanish")
        ys = np.linspace(0.0, self.r_y, 101)
        if np.min(self.y_factor(ys)) < -1e-12:
            raise BadTestFunction("test function must be nonnegative")


def random_test_function(rng: np.random.Generator, t: Trajectory,
                         y_max: float) -> TestFunction:
    """A valid random bump supported inside the trajectory window."""
    box = t.box_length
    times = t.times
    span = times[-1] - times[0]
    r_time = span * rng.uniform(0.15, 0.3)
    t_center = rng.uniform(times[0] + 1.2 * r_time, times[-1] - 1.2 * r_time)
    center = tuple(rng.uniform(0.0, box, size=3))
    return TestFunction(
        center=center,
        t_center=float(t_center),
        r_space=float(box * rng.uniform(0.15, 0.35)),
        r_y=float(min(0.8 * y_max, rng.uniform(0.3, 0.9))),
        r_time=float(r_time),
        amplitude=float(rng.uniform(0.5, 2.0)),
    )


# --------------------------------------------------------------------------
# quadrature helpers


def _ball_mask(n: int, box_length: float, center, radius: float) -> np.ndarray:
    """Cells whose centers fall in the periodic ball; membership by center."""
    x = np.arange(n) * (box_length / n)
    d2 = 0.0
    axes = ((slice(None), None, None), (None, slice(None), None),
            (None, None, slice(None)))
    for c, ax in zip(center, axes):
        d = np.abs(x - c)
        d = np.minimum(d, box_length - d)
        d2 = d2 + (d**2)[ax]
    return d2 <= radius * radius * (1.0 + 1e-12)


def _interval_weights(times: np.ndarray, t_lo: float, t_hi: float):
    """Midpoint-cell overlap weights: snapshot i integrates over the part of
    [t_lo, t_hi] closer to it than to its neighbours. Covariant under a
    uniform rescaling of all times, which the scaling group relies on."""
    lo_edges = np.empty_like(times)
    hi_edges = np.empty_like(times)
    lo_edges[1:] = 0.5 * (times[1:] + times[:-1])
    hi_edges[:-1] = lo_edges[1:]
    h = times[1] - times[0] if len(times) > 1 else 1.0
    lo_edges[0] = times[0] - 0.5 * h
    hi_edges[-1] = times[-1] + 0.5 * h
    w = np.clip(np.minimum(hi_edges, t_hi) - np.maximum(lo_edges, t_lo), 0.0, None)
    return w


def _wall_weights(y: np.ndarray, tau: np.ndarray, b: float,
                  upper: float) -> np.ndarray:
    """Weights w_j with sum_j w_j F(y_j) ~ integral_0^upper y^b F dy.

    Trapezoid in tau = ln y, a linearly interpolated partial cell at the
    upper limit, and a constant-F head over [0, y_0) where y^b integrates
    in closed form. F is smooth down to the wall so the head is benign.
    """
    n_y = y.shape[0]
    w = np.zeros(n_y)
    head = min(upper, y[0]) ** (b + 1.0) / (b + 1.0)
    w[0] += head
    if upper <= y[0]:
        return w
    j_up = int(np.searchsorted(y, upper, side="right"))  # nodes 0..j_up-1 inside
    tw = np.zeros(n_y)
    if j_up >= 2:
        h = tau[1] - tau[0]
        tw[0:j_up] = h
        tw[0] = 0.5 * h
        tw[j_up - 1] = 0.5 * h
    if j_up < n_y:
        delta = math.log(upper) - tau[j_up - 1]
        if delta > 0.0:
            c = delta / (tau[j_up] - tau[j_up - 1])
            tw[j_up - 1] += 0.5 * delta * (2.0 - c)
            tw[j_up] += 0.5 * delta * c
    w += tw * y ** (b + 1.0)
    return w


def _dyadic_radii(r_min: float, r_max: float) -> list[float]:
    out = []
    radius = r_min
    while radius <= r_max * (1.0 + 1e-12):
        out.append(radius)
        radius *= 2.0
    return out


# --------------------------------------------------------------------------
# extension provider


_profile_cache: dict[tuple, ExtensionProfile] = {}
_profile_lock = threading.Lock()


def shared_profile(alpha: float, **solve_kw) -> ExtensionProfile:
    """Process-wide memo of solved extension profiles, keyed by exponent."""
    key = (round(float(alpha), 12), tuple(sorted(solve_kw.items())))
    with _profile_lock:
        prof = _profile_cache.get(key)
    if prof is None:
        prof = solve_profile(alpha, **solve_kw)
        with _profile_lock:
            prof = _profile_cache.setdefault(key, prof)
    return prof


@dataclass(frozen=True)
class _SnapshotExtension:
    """Per-snapshot mode table with profile values at every wall level."""

    ext: ExtendedField
    modal: np.ndarray     # (3, m) boundary amplitudes
    xi: np.ndarray        # (3, m) wavevectors
    phi_tab: np.ndarray   # (m, n_y)
    psi_tab: np.ndarray   # (m, n_y)
    dphi_tab: np.ndarray  # (m, n_y)

    def _synth(self, modal: np.ndarray, mean=None) -> np.ndarray:
        n = self.ext.base.n_grid
        full = np.zeros((3, n, n, n // 2 + 1), dtype=complex)
        if modal.shape[1]:
            ii, jj, kk = self.ext.k_index.T
            full[:, ii, jj, kk] = modal
        if mean is not None:
            full[:, 0, 0, 0] = mean
        return np.fft.irfftn(full, s=(n, n, n), axes=(1, 2, 3)) * n**3

    def u_level(self, j: int) -> np.ndarray:
        """u* at level j; the spatial mean extends as a constant."""
        return self._synth(self.modal * self.phi_tab[None, :, j],
                           mean=self.ext.mean_mode)

    def lap_level(self, j: int) -> np.ndarray:
        """lap_b u* at level j: per mode k^2 psi(k y_j); kills the mean."""
        k2 = self.xi[0] ** 2 + self.xi[1] ** 2 + self.xi[2] ** 2
        return self._synth(self.modal * (k2 * self.psi_tab[:, j])[None, :])

    def lap_sq_level(self, j: int) -> np.ndarray:
        lap = self.lap_level(j)
        return lap[0] ** 2 + lap[1] ** 2 + lap[2] ** 2

    def grad_level(self, j: int) -> np.ndarray:
        """(4, 3, n, n, n): the three spatial derivatives then d/dy."""
        n = self.ext.base.n_grid
        out = np.empty((4, 3, n, n, n))
        col = self.phi_tab[:, j]
        for a in range(3):
            out[a] = self._synth(self.modal * (1j * self.xi[a] * col)[None, :])
        kmag = self.ext.k_mags
        out[3] = self._synth(self.modal * (kmag * self.dphi_tab[:, j])[None, :])
        return out


class ExtensionProvider:
    """Memoized per-snapshot extensions over one shared trajectory.

    Reads are plain dict lookups; insertion happens under a single lock, so
    concurrent analysis workers can share a provider. The wall-normal grid
    is sized once from the union of active bands so every snapshot (and any
    dyadically rescaled copy) sees consistent levels.
    """

    def __init__(self, trajectory: Trajectory, n_y: int = 160,
                 profile: ExtensionProfile | None = None):
        self.trajectory = trajectory
        alpha = trajectory.alpha
        self.profile = profile if profile is not None else shared_profile(alpha)
        if abs(self.profile.alpha - alpha) > 1e-12:
            raise DomainInputError("profile exponent does not match trajectory")
        kmin, kmax = self._band(trajectory)
        if kmax > 0.0:
            self.y_grid = make_y_grid(0.01 / kmax, 30.0 / kmin, n_y)
        else:
            self.y_grid = None  # identically zero trajectory
        self._lock = threading.Lock()
        self._cache: dict[int, _SnapshotExtension] = {}
        self._u_real: dict[int, np.ndarray] = {}
        self._p_real: dict[int, np.ndarray] = {}
        self._masks: dict[tuple, np.ndarray] = {}
        self._reports: dict[tuple, "QuantityReport"] = {}

    @staticmethod
    def _band(trajectory: Trajectory) -> tuple[float, float]:
        kmin, kmax = np.inf, 0.0
        for s in trajectory.states():
            _, kmag, _, _ = active_modes(s)
            if kmag.shape[0]:
                kmin = min(kmin, float(kmag.min()))
                kmax = max(kmax, float(kmag.max()))
        return kmin, kmax

    def u_real(self, i: int) -> np.ndarray:
        f = self._u_real.get(i)
        if f is None:
            f = self.trajectory.snapshots[i][0].real_field()
            with self._lock:
                f = self._u_real.setdefault(i, f)
        return f

    def p_real(self, i: int) -> np.ndarray:
        f = self._p_real.get(i)
        if f is None:
            f = self.trajectory.snapshots[i][1].real_field()
            with self._lock:
                f = self._p_real.setdefault(i, f)
        return f

    def ball(self, center, radius: float) -> np.ndarray:
        s = self.trajectory.snapshots[0][0]
        key = (tuple(np.round(np.asarray(center, dtype=float), 12)),
               round(float(radius), 12))
        m = self._masks.get(key)
        if m is None:
            m = _ball_mask(s.n_grid, s.box_length, center, radius)
            with self._lock:
                m = self._masks.setdefault(key, m)
        return m

    def snapshot(self, i: int) -> _SnapshotExtension | None:
        if self.y_grid is None:
            return None
        se = self._cache.get(i)
        if se is not None:
            return se
        state = self.trajectory.snapshots[i][0]
        ext = extend_field(state, self.profile, self.y_grid)
        sel, kmag, _, modal = active_modes(state)
        scale = 2.0 * math.pi / state.box_length
        n = state.n_grid
        mx = np.fft.fftfreq(n, 1.0 / n)
        xi = np.stack([
            scale * mx[sel[:, 0]],
            scale * mx[sel[:, 1]],
            scale * sel[:, 2].astype(float),
        ])
        s_args = kmag[:, None] * self.y_grid.y[None, :]
        se = _SnapshotExtension(
            ext=ext,
            modal=modal,
            xi=xi,
            phi_tab=self.profile.phi_at(s_args),
            psi_tab=self.profile.psi_at(s_args),
            dphi_tab=self.profile.dphi_at(s_args),
        )
        with self._lock:
            se = self._cache.setdefault(i, se)
        return se


# --------------------------------------------------------------------------
# the five quantities


def _cylinder_slices(t: Trajectory, t_lo: float, t_hi: float):
    """Midpoint-cell overlap weights for the window; active = carries weight.

    Short windows (below the snapshot cadence) collapse to a single active
    slice; that one-point rule is the best the stored cadence supports and
    its error is covered by the refinement oracle, so no cadence guard here.
    """
    times = t.times
    slack = 1e-9 * max(1.0, abs(float(times[-1])))
    if t_lo < times[0] - slack or t_hi > times[-1] + slack:
        raise CylinderOutOfWindow(
            f"cylinder spans [{t_lo:g}, {t_hi:g}] but the trajectory stores "
            f"[{times[0]:g}, {times[-1]:g}]"
        )
    w = _interval_weights(times, t_lo, t_hi)
    active = np.nonzero(w > 0.0)[0]
    return active, w


def _tail_sup(u_sq_sum: np.ndarray, provider: ExtensionProvider, center,
              r_low: float, box_length: float, dx: float) -> float:
    """sup over dyadic R in [r_low, box/2] of R^{-3a} mean_{B_R} |u|^2."""
    alpha = provider.trajectory.alpha
    floor = 0.5 * math.sqrt(3.0) * dx * (1.0 + 1e-9)
    best = 0.0
    for radius in _dyadic_radii(r_low, 0.5 * box_length):
        m = provider.ball(center, max(radius, floor))
        mean = float(u_sq_sum[m].mean())
        best = max(best, radius ** (-3.0 * alpha) * mean)
    return best


def compute_quantities(t: Trajectory, provider: ExtensionProvider, z,
                       r: float) -> QuantityReport:
    """All five quantities on Q_r(z), z = (x, t_end-of-cylinder)."""
    if provider.trajectory is not t:
        raise DomainInputError("provider is bound to a different trajectory")
    x_c, t_c = z
    x_c = tuple(float(v) for v in x_c)
    r = float(r)
    s0 = t.snapshots[0][0]
    box, dx, alpha = s0.box_length, s0.dx, t.alpha
    if r <= 0.0:
        raise DomainInputError("radius must be positive")
    if r >= 0.25 * box:
        raise DomainInputError("radius must stay below a quarter of the box")
    if 2.0 * r < 4.0 * dx * (1.0 - 1e-9):
        raise RadiusUnresolved(
            f"radius {r:g} spans fewer than 4 cells at dx={dx:g}"
        )
    key = (tuple(round(v, 12) for v in x_c), round(float(t_c), 12),
           round(r, 12))
    cached = provider._reports.get(key)
    if cached is not None:
        return cached
    depth = r ** (2.0 * alpha)
    active, w = _cylinder_slices(t, t_c - depth, t_c)
    cell = dx**3
    mask = provider.ball(x_c, r)

    a_val = c_val = d_val = t_val = e_val = 0.0
    wall_w = None
    for i in active:
        wi = float(w[i])
        u = provider.u_real(i)
        u_sq = u[0] ** 2 + u[1] ** 2 + u[2] ** 2
        sq_ball = u_sq[mask]
        a_val = max(a_val, float(sq_ball.sum()) * cell)
        c_val += wi * float(np.sum(sq_ball**1.5)) * cell
        p = provider.p_real(i)[mask]
        d_val += wi * float(np.sum(np.abs(p - p.mean()) ** 1.5)) * cell
        t_val += wi * _tail_sup(u_sq, provider, x_c, 0.25 * r, box, dx)
        se = provider.snapshot(i)
        if se is not None:
            if wall_w is None:
                yg = provider.y_grid
                bexp = 3.0 - 2.0 * alpha
                wall_w = _wall_weights(yg.y, yg.tau, bexp, r)
            acc = 0.0
            for j in np.nonzero(wall_w)[0]:
                acc += wall_w[j] * float(se.lap_sq_level(int(j))[mask].sum())
            e_val += wi * acc * cell

    report = QuantityReport(
        center=x_c,
        time=float(t_c),
        radius=r,
        a_val=a_val / r ** (5.0 - 4.0 * alpha),
        c_val=c_val / r ** (6.0 - 4.0 * alpha),
        d_val=d_val / r ** (6.0 - 4.0 * alpha),
        e_val=e_val / r ** (5.0 - 4.0 * alpha),
        t_val=t_val * r ** (5.0 * alpha - 2.0),
    )
    with provider._lock:
        report = provider._reports.setdefault(key, report)
    return report


# --------------------------------------------------------------------------
# scaling group


def _relabel(f: np.ndarray, lam: int) -> np.ndarray:
    n = f.shape[-1]
    idx = (lam * np.arange(n)) % n
    return f[..., idx, :, :][..., :, idx, :][..., :, :, idx]


def scaling_transform(t: Trajectory, lam: float) -> Trajectory:
    """Dyadic rescaling u -> lam^{2a-1} u(lam x, lam^{2a} t), exact on the grid.

    For lam = 2^k the map x -> lam x permutes grid points, so the transform
    is a relabeling plus amplitude factors with no interpolation. The stepper's
    dissipation ledger is dropped (zeroed) because it tracks the original run.
    """
    lam = float(lam)
    k = round(math.log2(lam)) if lam > 0 else -1
    if lam <= 0 or k < 0 or abs(lam - 2.0**k) > 1e-12 * lam:
        raise NonDyadicLambda(
            f"scaling factor must be 2^k with integer k >= 0, got {lam:g}"
        )
    if lam == 1.0:
        return t
    lam_i = int(round(lam))
    alpha = t.alpha
    u_fac = lam ** (2.0 * alpha - 1.0)
    p_fac = lam ** (4.0 * alpha - 2.0)
    t_fac = lam ** (-2.0 * alpha)
    snaps = []
    for s, p in t.snapshots:
        n = s.n_grid
        ur = _relabel(s.real_field(), lam_i) * u_fac
        # beyond-band modes can fold back in, so skip the dealias mask
        u_hat = np.fft.rfftn(ur, axes=(1, 2, 3)) / n**3
        s2 = VelocityState(n, s.box_length, alpha, s.time * t_fac, u_hat)
        pr = _relabel(p.real_field(), lam_i) * p_fac
        p_hat = np.fft.rfftn(pr) / n**3
        p2 = PressureField(n, p.box_length, p.time * t_fac, p_hat)
        snaps.append((s2, p2))
    return Trajectory(alpha=alpha, dt_output=t.dt_output * t_fac,
                      snapshots=tuple(snaps))


def scaling_invariance_residual(t: Trajectory, lam: float, z, r: float,
                                provider: ExtensionProvider | None = None,
                                ) -> dict[str, float]:
    """Relative defect of each quantity under the dyadic scaling group."""
    if provider is None:
        provider = ExtensionProvider(t)
    t_scaled = scaling_transform(t, lam)
    n_y = provider.y_grid.n_y if provider.y_grid is not None else 160
    if t_scaled is t:
        p_scaled = provider
    else:
        p_scaled = ExtensionProvider(t_scaled, n_y=n_y, profile=provider.profile)
    q0 = compute_quantities(t, provider, z, r)
    x_c, t_c = z
    z_scaled = (tuple(float(v) / lam for v in x_c), t_c / lam ** (2.0 * t.alpha))
    q1 = compute_quantities(t_scaled, p_scaled, z_scaled, r / lam)
    out = {}
    for key, name in (("a", "a_val"), ("c", "c_val"), ("d", "d_val"),
                      ("e", "e_val"), ("t", "t_val")):
        v0, v1 = getattr(q0, name), getattr(q1, name)
        out[key] = abs(v0 - v1) / max(v0, _TINY)
    return out


# --------------------------------------------------------------------------
# lemma ratios


def _check_radius_pair(r: float, rho: float) -> None:
    if not 0.0 < r <= 0.5 * rho:
        raise DomainInputError(
            f"need 0 < r <= rho/2, got r={r:g}, rho={rho:g}"
        )


def interpolation_ratio(t: Trajectory, z, r: float, rho: float,
                        provider: ExtensionProvider | None = None) -> float:
    """C(r) against the two-scale interpolation bound at rho, constant 1."""
    _check_radius_pair(r, rho)
    if provider is None:
        provider = ExtensionProvider(t)
    alpha = t.alpha
    qr = compute_quantities(t, provider, z, r)
    qs = compute_quantities(t, provider, z, rho)
    denom = (
        (rho / r) ** (7.5 - 6.0 * alpha)
        * math.sqrt(qs.a_val) * (qs.e_val + qs.t_val)
        + (r / rho) ** (6.0 * alpha - 3.0) * qs.a_val**1.5
    )
    if denom <= _TINY:
        if qr.c_val <= _TINY:
            return 0.0
        raise DegenerateDenominator(
            "interpolation bound vanished with a nonzero cubic norm"
        )
    return qr.c_val / denom


def pressure_decay_ratio(t: Trajectory, z, r: float, rho: float,
                         provider: ExtensionProvider | None = None) -> float:
    """D(r) against the one-step pressure decay bound at rho, constant 1."""
    _check_radius_pair(r, rho)
    if provider is None:
        provider = ExtensionProvider(t)
    alpha = t.alpha
    qr = compute_quantities(t, provider, z, r)
    qs = compute_quantities(t, provider, z, rho)
    denom = (
        (r / rho) ** (4.0 * alpha - 1.5) * qs.d_val
        + (rho / r) ** (6.0 - 4.0 * alpha) * qs.c_val
    )
    if denom <= _TINY:
        if qr.d_val <= _TINY:
            return 0.0
        raise DegenerateDenominator(
            "pressure decay bound vanished with a nonzero oscillation norm"
        )
    return qr.d_val / denom


def local_energy_ratio(t: Trajectory, provider: ExtensionProvider, z, r: float,
                       g=None) -> float:
    """(A(r) + E(r)) against the local energy bound over Q_{4r/3}, constant 1.

    g is an L^1 time function entering through |u| | |u|^2 - g(t) |; None
    selects the per-slice spatial mean of |u|^2 over B_{4r/3}, which
    minimizes that middle integrand among per-slice constants.
    """
    if provider.trajectory is not t:
        raise DomainInputError("provider is bound to a different trajectory")
    x_c, t_c = z
    r = float(r)
    big = 4.0 * r / 3.0
    s0 = t.snapshots[0][0]
    box, dx, alpha = s0.box_length, s0.dx, t.alpha
    if big >= 0.25 * box:
        raise DomainInputError("4r/3 must stay below a quarter of the box")
    q = compute_quantities(t, provider, z, r)
    lhs = q.a_val + q.e_val

    depth = big ** (2.0 * alpha)
    _, w = _cylinder_slices(t, t_c - depth, t_c)
    mask = provider.ball(tuple(float(v) for v in x_c), big)
    cell = dx**3
    term1 = term2 = term3 = 0.0
    times = t.times
    for i in range(len(w)):
        wi = float(w[i])
        if wi <= 0.0:
            continue
        u = provider.u_real(i)
        u_sq = u[0] ** 2 + u[1] ** 2 + u[2] ** 2
        sq_ball = u_sq[mask]
        term1 += wi * float(sq_ball.sum()) * cell
        if g is None:
            g_i = float(sq_ball.mean())
        else:
            g_i = float(g(float(times[i])))
        p_ball = np.abs(provider.p_real(i)[mask])
        mag = np.sqrt(sq_ball)
        term2 += wi * float(np.sum(mag * (np.abs(sq_ball - g_i) + p_ball))) * cell
        term3 += wi * _tail_sup(u_sq, provider, x_c, r, box, dx)
    rhs = (
        term1 / r ** (5.0 - 2.0 * alpha)
        + term2 / r ** (6.0 - 4.0 * alpha)
        + term3 * r ** (5.0 * alpha - 2.0)
    )
    if rhs <= _TINY:
        if lhs <= _TINY:
            return 0.0
        raise DegenerateDenominator(
            "local energy bound vanished with nonzero local energy"
        )
    return lhs / rhs


def embedding_ratio(u: VelocityState, e: ExtendedField, r: float,
                    rho: float) -> float:
    """Squared critical Lebesgue norm on B_r against the extension bound.

    lhs is ||u||^2 in L^q(B_r) with q = 6/(3-2a); rhs is the wall-weighted
    extension energy over B_rho x [0, rho) plus rho^{a+3} times the dyadic
    tail sup at rho/4. Balls are centered at the origin.
    """
    _check_radius_pair(r, rho)
    if e.base is not u and not np.array_equal(e.base.u_hat, u.u_hat):
        raise DomainInputError("extension does not belong to the given state")
    alpha = u.alpha
    n, box, dx = u.n_grid, u.box_length, u.dx
    if rho >= 0.25 * box:
        raise DomainInputError("rho must stay below a quarter of the box")
    if 2.0 * r < 4.0 * dx * (1.0 - 1e-9):
        raise RadiusUnresolved(
            f"radius {r:g} spans fewer than 4 cells at dx={dx:g}"
        )
    cell = dx**3
    center = (0.0, 0.0, 0.0)
    ur = u.real_field()
    u_sq = ur[0] ** 2 + ur[1] ** 2 + ur[2] ** 2
    mask_r = _ball_mask(n, box, center, r)
    q_exp = 6.0 / (3.0 - 2.0 * alpha)
    lhs = (float(np.sum(u_sq[mask_r] ** (0.5 * q_exp))) * cell) ** (2.0 / q_exp)

    mask_rho = _ball_mask(n, box, center, rho)
    bexp = 3.0 - 2.0 * alpha
    wall_w = _wall_weights(e.y_grid.y, e.y_grid.tau, bexp, rho)
    k2 = e.k_mags**2
    sel = e.k_index
    _, _, _, amp = active_modes(e.base)
    ext_term = 0.0
    for j in np.nonzero(wall_w)[0]:
        full = np.zeros((3, n, n, n // 2 + 1), dtype=complex)
        if sel.shape[0]:
            psi_col = e.profile.psi_at(e.k_mags * e.y_grid.y[int(j)])
            ii, jj, kk = sel.T
            full[:, ii, jj, kk] = amp * (k2 * psi_col)[None, :]
        lap = np.fft.irfftn(full, s=(n, n, n), axes=(1, 2, 3)) * n**3
        lap_sq = lap[0] ** 2 + lap[1] ** 2 + lap[2] ** 2
        ext_term += wall_w[j] * float(lap_sq[mask_rho].sum()) * cell

    floor = 0.5 * math.sqrt(3.0) * dx * (1.0 + 1e-9)
    tail = 0.0
    for radius in _dyadic_radii(0.25 * rho, 0.5 * box):
        m = _ball_mask(n, box, center, max(radius, floor))
        tail = max(tail, radius ** (-3.0 * alpha) * float(u_sq[m].mean()))
    rhs = ext_term + rho ** (alpha + 3.0) * tail
    if rhs <= _TINY:
        if lhs <= _TINY:
            return 0.0
        raise DegenerateDenominator("embedding bound vanished with nonzero norm")
    return lhs / rhs


# --------------------------------------------------------------------------
# suitability


def suitability_terms(t: Trajectory, provider: ExtensionProvider,
                      phi: TestFunction, c_alpha: float | None = None) -> dict:
    """All pieces of the local energy inequality, quadratured over phi.

    The convective and pressure fluxes enter as (|u|^2 + 2p) u . grad phi:
    the pressure rides doubled because the inequality tracks |u|^2 rather
    than |u|^2/2. Evaluated at the final stored time; phi's compact time
    support makes the endpoint energy term vanish.
    """
    if provider.trajectory is not t:
        raise DomainInputError("provider is bound to a different trajectory")
    s0 = t.snapshots[0][0]
    n, box, alpha = s0.n_grid, s0.box_length, t.alpha
    times = t.times
    y_max = provider.y_grid.y[-1] if provider.y_grid is not None else np.inf
    phi.validate(times, box, y_max)
    if c_alpha is None:
        c_alpha = provider.profile.c_alpha
    cell = s0.dx**3
    bexp = 3.0 - 2.0 * alpha

    X = phi.space_factor(n, box)
    gradX = phi.space_gradient(n, box)
    lapX = phi.space_laplacian(n, box)
    T = phi.time_factor(times)
    dT = phi.dtime_factor(times)
    if provider.y_grid is not None:
        yg = provider.y_grid
        wall_w = _wall_weights(yg.y, yg.tau, bexp, phi.r_y)
        levels = np.nonzero(wall_w)[0]
        Yv = phi.y_factor(yg.y)
        dYv = phi.dy_factor(yg.y)
        Ybv = phi.yb_factor(yg.y, bexp)
    else:
        levels = np.zeros(0, dtype=int)

    # Product quadrature in time: the solution-dependent factors F(t) are
    # smooth at the snapshot cadence, while phi's bump can be much narrower,
    # so we spline F over the stored slices and integrate F times the
    # analytic time factor on a fine grid. Slices more than two nodes away
    # from phi's time support never enter (T and dT vanish there).
    n_t = len(times)
    lo = t.times.searchsorted(phi.t_center - phi.r_time)
    hi = t.times.searchsorted(phi.t_center + phi.r_time, side="right")
    used = range(max(0, lo - 2), min(n_t, hi + 2))
    f1 = np.zeros(n_t)
    f2 = np.zeros(n_t)
    g1 = np.zeros(n_t)
    g2 = np.zeros(n_t)
    for i in used:
        u = provider.u_real(i)
        u_sq = u[0] ** 2 + u[1] ** 2 + u[2] ** 2
        f1[i] = float(np.sum(u_sq * X)) * cell
        p = provider.p_real(i)
        adv = u[0] * gradX[0] + u[1] * gradX[1] + u[2] * gradX[2]
        f2[i] = float(np.sum((u_sq + 2.0 * p) * adv)) * cell
        if levels.shape[0] == 0:
            continue
        se = provider.snapshot(i)
        if se is None:
            continue
        acc1 = acc2 = 0.0
        for j in levels:
            j = int(j)
            lap = se.lap_level(j)
            lap_sq = lap[0] ** 2 + lap[1] ** 2 + lap[2] ** 2
            acc1 += wall_w[j] * Yv[j] * float(np.sum(lap_sq * X))
            grads = se.grad_level(j)
            ustar = se.u_level(j)
            inner = 0.0
            for comp in range(3):
                dot = (
                    gradX[0] * Yv[j] * grads[0, comp]
                    + gradX[1] * Yv[j] * grads[1, comp]
                    + gradX[2] * Yv[j] * grads[2, comp]
                    + X * dYv[j] * grads[3, comp]
                )
                lapphi = lapX * Yv[j] + X * Ybv[j]
                inner += float(np.sum(
                    lap[comp] * (2.0 * dot + ustar[comp] * lapphi)
                ))
            acc2 += wall_w[j] * inner
        g1[i] = acc1 * cell
        g2[i] = acc2 * cell

    u_fin = provider.u_real(n_t - 1)
    u_sq = u_fin[0] ** 2 + u_fin[1] ** 2 + u_fin[2] ** 2
    final_energy = float(np.sum(u_sq * X)) * float(T[-1]) * cell

    sub = np.array(list(used))
    t_sub = times[sub]
    fine = np.linspace(float(t_sub[0]), float(t_sub[-1]), 4001)
    T_f = phi.time_factor(fine)
    dT_f = phi.dtime_factor(fine)

    def _quad(vals: np.ndarray, weight: np.ndarray) -> float:
        y = vals[sub]
        if np.all(y == 0.0):
            return 0.0
        if len(sub) >= 4:
            y_fine = CubicSpline(t_sub, y)(fine)
        else:
            y_fine = np.interp(fine, t_sub, y)
        return float(simpson(y_fine * weight, x=fine))

    ext_lhs = 2.0 * c_alpha * _quad(g1, T_f)
    ext_rhs = -2.0 * c_alpha * _quad(g2, T_f)
    boundary_time = _quad(f1, dT_f)
    flux = _quad(f2, T_f)
    lhs = final_energy + ext_lhs
    rhs = boundary_time + flux + ext_rhs
    scale = max(abs(final_energy), abs(ext_lhs), abs(boundary_time),
                abs(flux), abs(ext_rhs), _TINY)
    return {
        "final_energy": final_energy,
        "extension_lhs": ext_lhs,
        "boundary_time": boundary_time,
        "flux": flux,
        "extension_rhs": ext_rhs,
        "lhs": lhs,
        "rhs": rhs,
        "residual": rhs - lhs,
        "scale": scale,
    }


def suitability_residual(t: Trajectory, provider: ExtensionProvider,
                         phi: TestFunction,
                         c_alpha: float | None = None) -> float:
    """rhs - lhs of the local energy inequality; >= -tol on resolved runs."""
    return suitability_terms(t, provider, phi, c_alpha)["residual"]


# --------------------------------------------------------------------------
# epsilon criterion and exports


def epsilon_criterion(t: Trajectory, provider: ExtensionProvider, z, r: float,
                      epsilon_0: float) -> EpsilonVerdict:
    """C + D + T at the cylinder against a configured threshold."""
    if epsilon_0 <= 0.0:
        raise DomainInputError("epsilon_0 must be positive")
    rep = compute_quantities(t, provider, z, r)
    return EpsilonVerdict(
        epsilon_sum=rep.epsilon_sum,
        threshold=float(epsilon_0),
        satisfied=rep.epsilon_sum < epsilon_0,
        report=rep,
    )


def parallel_reports(t: Trajectory, provider: ExtensionProvider, jobs,
                     max_workers: int | None = None) -> list[QuantityReport]:
    """Reports for many (z, r) over one shared provider.

    Jobs are independent; the provider's caches are the only shared state
    and take inserts under its lock, so worker threads just race to fill
    them. Results keep job order.
    """
    jobs = list(jobs)
    if not jobs:
        return []
    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        futs = [pool.submit(compute_quantities, t, provider, z, r)
                for z, r in jobs]
        return [f.result() for f in futs]


def quantities_to_csv(reports, path: str) -> None:
    rows = [
        (rep.center[0], rep.center[1], rep.center[2], rep.time, rep.radius,
         rep.a_val, rep.c_val, rep.d_val, rep.e_val, rep.t_val,
         rep.epsilon_sum)
        for rep in reports
    ]
    write_csv(path, "x1,x2,x3,t,r,A,C,D,E,T,eps_sum", rows)


def sweep_to_csv(rows, path: str) -> None:
    """Lemma sweep rows (r, rho, ratio, flag) with a textual flag column."""
    lines = ["r,rho,ratio,flag"]
    for r, rho, ratio, flag in rows:
        lines.append(f"{fmt12(r)},{fmt12(rho)},{fmt12(ratio)},{flag}")
    atomic_write_text(path, "\n".join(lines) + "\n")
