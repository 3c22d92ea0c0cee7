"""Periodic divergence-free velocity fields in spectral form.

The torus stands in for whole space: every report downstream carries that
caveat. Fields live as normalized rFFT coefficients (u_hat = rfftn(u)/n^3),
so Parseval reads  integral |u|^2 dx = V * sum mult |u_hat|^2  with mult = 2
except on the kz = 0 and kz = n/2 planes. Modes at or beyond the 2/3 cutoff
are kept exactly zero on every axis.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import AlphaOutOfRange, NanDetected

_TWO_PI = 2.0 * math.pi

# every report downstream carries this caveat verbatim
TORUS_CAVEAT = (
    "periodic torus stands in for whole space; locality holds only for "
    "scales well below the box size"
)


def _check_alpha(alpha: float) -> float:
    alpha = float(alpha)
    if not 1.0 < alpha < 1.25:
        raise AlphaOutOfRange(f"alpha must lie in (1, 5/4), got {alpha}")
    return alpha


class _GridTables:
    """Wavenumber, dealias, and multiplicity tables for one (n, box) pair."""

    def __init__(self, n: int, box_length: float):
        self.n = n
        self.box_length = box_length
        scale = _TWO_PI / box_length
        mx = np.fft.fftfreq(n, 1.0 / n)            # integer mode numbers
        mz = np.arange(n // 2 + 1, dtype=float)
        self.kx = (scale * mx)[:, None, None]
        self.ky = (scale * mx)[None, :, None]
        self.kz = (scale * mz)[None, None, :]
        self.k2 = self.kx**2 + self.ky**2 + self.kz**2
        self.k2[0, 0, 0] = 0.0
        cut = n / 3.0                               # 2/3 rule per axis
        self.dealias = (
            (np.abs(mx)[:, None, None] < cut)
            & (np.abs(mx)[None, :, None] < cut)
            & (mz[None, None, :] < cut)
        )
        mult = np.full(n // 2 + 1, 2.0)
        mult[0] = 1.0
        if n % 2 == 0:
            mult[-1] = 1.0
        self.mult = mult[None, None, :]
        # integer |k|^2 in index units, for mode bucketing
        self.m2_int = np.rint(
            (mx**2)[:, None, None] + (mx**2)[None, :, None] + (mz**2)[None, None, :]
        ).astype(np.int64)


_grid_cache: dict[tuple[int, float], _GridTables] = {}


def grid_tables(n: int, box_length: float) -> _GridTables:
    key = (int(n), float(box_length))
    tab = _grid_cache.get(key)
    if tab is None:
        tab = _grid_cache[key] = _GridTables(*key)
    return tab


@dataclass(frozen=True)
class VelocityState:
    """Divergence-free spectral snapshot of the velocity field.

    dissipated carries the running integral of |(-Delta)^{alpha/2} u|^2
    accumulated by the stepper since the start of the run; it rides along
    so the global energy report can compare exact Parseval energies against
    a quadrature consistent with the time integrator.
    """

    n_grid: int
    box_length: float
    alpha: float
    time: float
    u_hat: np.ndarray            # (3, n, n, n//2 + 1) complex
    dissipated: float = 0.0

    def __post_init__(self):
        if self.u_hat.shape != (3, self.n_grid, self.n_grid, self.n_grid // 2 + 1):
            raise ValueError("u_hat shape does not match n_grid")

    @property
    def tables(self) -> _GridTables:
        return grid_tables(self.n_grid, self.box_length)

    @property
    def volume(self) -> float:
        return self.box_length**3

    @property
    def dx(self) -> float:
        return self.box_length / self.n_grid

    def real_field(self) -> np.ndarray:
        """Velocity on the collocation grid, shape (3, n, n, n)."""
        n = self.n_grid
        return np.fft.irfftn(self.u_hat * n**3, s=(n, n, n), axes=(1, 2, 3))

    def energy(self) -> float:
        """(1/2) integral |u|^2 dx via Parseval."""
        t = self.tables
        return 0.5 * self.volume * float(
            np.sum(t.mult * np.abs(self.u_hat) ** 2)
        )

    def dissipation_rate(self) -> float:
        """integral |(-Delta)^{alpha/2} u|^2 dx at this instant."""
        t = self.tables
        ka = np.zeros_like(t.k2)
        np.power(t.k2, self.alpha, out=ka, where=t.k2 > 0)
        return self.volume * float(
            np.sum(t.mult * ka * np.sum(np.abs(self.u_hat) ** 2, axis=0))
        )

    def gradient_sq_integral(self) -> float:
        """integral |grad u|^2 dx via Parseval."""
        t = self.tables
        return self.volume * float(
            np.sum(t.mult * t.k2 * np.sum(np.abs(self.u_hat) ** 2, axis=0))
        )

    def divergence_max(self) -> float:
        """max_k |xi . u_hat(xi)|, the solenoidality defect."""
        t = self.tables
        div = t.kx * self.u_hat[0] + t.ky * self.u_hat[1] + t.kz * self.u_hat[2]
        return float(np.max(np.abs(div)))

    def max_speed(self) -> float:
        u = self.real_field()
        return float(np.sqrt(np.max(u[0] ** 2 + u[1] ** 2 + u[2] ** 2)))

    def check_finite(self) -> None:
        if not np.all(np.isfinite(self.u_hat.view(np.float64))):
            raise NanDetected(f"non-finite spectral data at t={self.time}")


def _apply_mask(u_hat: np.ndarray, tab: _GridTables) -> np.ndarray:
    return np.where(tab.dealias[None], u_hat, 0.0)


def leray_project_hat(u_hat: np.ndarray, tab: _GridTables) -> np.ndarray:
    """u_hat <- (I - xi xi^T / |xi|^2) u_hat; the zero mode passes through."""
    k2 = np.where(tab.k2 > 0, tab.k2, 1.0)
    dot = tab.kx * u_hat[0] + tab.ky * u_hat[1] + tab.kz * u_hat[2]
    dot /= k2
    out = np.empty_like(u_hat)
    out[0] = u_hat[0] - tab.kx * dot
    out[1] = u_hat[1] - tab.ky * dot
    out[2] = u_hat[2] - tab.kz * dot
    # |xi|^2 was patched to 1 at the origin, where dot = 0 anyway
    return out


def leray_project(state: VelocityState) -> VelocityState:
    tab = state.tables
    return replace(state, u_hat=leray_project_hat(state.u_hat, tab))


def from_real(u: np.ndarray, box_length: float, alpha: float, time: float = 0.0,
              project: bool = False) -> VelocityState:
    """Build a state from collocation samples, dealiasing on entry."""
    alpha = _check_alpha(alpha)
    n = u.shape[1]
    tab = grid_tables(n, box_length)
    u_hat = np.fft.rfftn(u, axes=(1, 2, 3)) / n**3
    u_hat = _apply_mask(u_hat, tab)
    if project:
        u_hat = leray_project_hat(u_hat, tab)
    return VelocityState(n, box_length, alpha, time, u_hat)


def taylor_green(n: int, alpha: float, box_length: float = _TWO_PI,
                 amplitude: float = 1.0) -> VelocityState:
    """Classical single-scale vortex array; solenoidal by construction."""
    x = np.arange(n) * (box_length / n) * (_TWO_PI / box_length)
    X, Y, Z = np.meshgrid(x, x, x, indexing="ij")
    u = np.stack([
        amplitude * np.sin(X) * np.cos(Y) * np.cos(Z),
        -amplitude * np.cos(X) * np.sin(Y) * np.cos(Z),
        np.zeros_like(X),
    ])
    return from_real(u, box_length, alpha)


def random_bandlimited(n: int, alpha: float, seed: int, k_min: int, k_max: int,
                       box_length: float = _TWO_PI,
                       energy: float = 1.0) -> VelocityState:
    """Seeded solenoidal field supported on integer mode radii [k_min, k_max]."""
    alpha = _check_alpha(alpha)
    if not 1 <= k_min <= k_max:
        raise ValueError("need 1 <= k_min <= k_max")
    if k_max >= n / 3.0:
        raise ValueError("band must sit below the dealias cutoff")
    tab = grid_tables(n, box_length)
    rng = np.random.default_rng(seed)
    u = rng.standard_normal((3, n, n, n))
    u_hat = np.fft.rfftn(u, axes=(1, 2, 3)) / n**3
    m = np.sqrt(tab.m2_int.astype(float))
    band = (m >= k_min - 0.5) & (m <= k_max + 0.5) & tab.dealias
    u_hat = np.where(band[None], u_hat, 0.0)
    u_hat = leray_project_hat(u_hat, tab)
    state = VelocityState(n, box_length, alpha, 0.0, u_hat)
    e = state.energy()
    if e <= 0:
        raise ValueError("degenerate band produced an empty field")
    return replace(state, u_hat=u_hat * math.sqrt(energy / e))


def single_mode(n: int, alpha: float, k_index: tuple[int, int, int],
                amplitude: float = 1.0, box_length: float = _TWO_PI,
                direction: tuple[float, float, float] | None = None) -> VelocityState:
    """A cos(k.x) shear mode polarized orthogonally to k."""
    kvec = np.array(k_index, dtype=float)
    if direction is None:
        # any vector not parallel to k works as a seed for the polarization
        seed = np.array([1.0, 0.0, 0.0])
        if abs(np.dot(seed, kvec)) >= 0.99 * np.linalg.norm(kvec):
            seed = np.array([0.0, 1.0, 0.0])
        e = seed - kvec * np.dot(seed, kvec) / np.dot(kvec, kvec)
    else:
        e = np.array(direction, dtype=float)
        if abs(np.dot(e, kvec)) > 1e-12 * np.linalg.norm(e) * np.linalg.norm(kvec):
            raise ValueError("polarization must be orthogonal to k")
    e /= np.linalg.norm(e)
    x = np.arange(n) * (_TWO_PI / n)
    X, Y, Z = np.meshgrid(x, x, x, indexing="ij")
    phase = k_index[0] * X + k_index[1] * Y + k_index[2] * Z
    u = amplitude * e[:, None, None, None] * np.cos(phase)[None]
    return from_real(u, box_length, alpha)


def active_modes(state: VelocityState, tol: float | None = None):
    """Half-spectrum modes carrying coefficients above tol, zero mode excluded.

    tol=None uses 1e-13 times the largest coefficient, which strips the
    roundoff-level junk an FFT leaves on every mode.  Pass tol=0.0 to keep
    everything nonzero.

    Returns (index_array (m, 3), |k| (m,), mult (m,), coeffs (3, m)).
    """
    tab = state.tables
    mag = np.max(np.abs(state.u_hat), axis=0)
    mag[0, 0, 0] = 0.0
    if tol is None:
        tol = 1e-13 * float(mag.max())
    sel = np.argwhere(mag > tol)
    if sel.size == 0:
        idx = np.empty((0, 3), dtype=np.int64)
        return idx, np.empty(0), np.empty(0), np.empty((3, 0), dtype=complex)
    i, j, k = sel[:, 0], sel[:, 1], sel[:, 2]
    kmag = np.sqrt(
        tab.kx[i, 0, 0] ** 2 + tab.ky[0, j, 0] ** 2 + tab.kz[0, 0, k] ** 2
    )
    mult = np.broadcast_to(tab.mult, tab.k2.shape)[i, j, k]
    coeffs = state.u_hat[:, i, j, k]
    return sel, kmag, mult, coeffs
