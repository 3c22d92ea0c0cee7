"""Parabolic coverings, box-counting dimension, and the counting argument.

Cylinders Q_r(z) pair a Euclidean ball of radius r in space with a time
interval (t - r^{2a}, t], so coverings are anisotropic: counting uses grid
cells of size r per space axis and a time slab whose depth is r^{2a}
snapped down to the nearest power of two. Cells partition space-time once
per radius, anchored at the origin in every axis, so counts of different
sets are comparable: occupancy is additive over unions and monotone under
inclusion because both sides of the comparison see the same grid.
Snapping the depth costs at most a factor 2, but buys exact nesting:
along a dyadic radius sweep every coarse cell is a disjoint union of
finer cells in all d+1 axes, so occupied-cell counts are provably
nonincreasing in r. The count stands in for the NP-hard minimal covering;
it never undercounts the true minimum (each cell fits inside one cylinder
of the same radius) and overcounts by at most 3^{d+1} (a cylinder meets
at most three cells per space axis and, with the snapped depth, three
slabs in time). Dimension estimates, being log-log slopes, absorb any
bounded factor.

Grid cells are left-closed in space and half-open (lo, hi] in time,
mirroring the cylinder convention, so no point lands in two cells.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import (
    CylinderOutOfWindow,
    DomainInputError,
    EmptyPointSet,
    InvariantViolation,
    WindowTooNarrow,
)
from .fields import _check_alpha
from .bounds import eval_L, eval_J
from .ioutil import atomic_write_text, fmt12
from .quantities import (
    ExtensionProvider,
    _cylinder_slices,
    _wall_weights,
    parallel_reports,
)
from .solver import Trajectory, maximal_function


# --------------------------------------------------------------------------
# point sets


@dataclass(frozen=True)
class ParabolicPointSet:
    """Finite set of space-time points (x, t) with x in R^d, d in {1, 3}.

    coords holds one point per row, x columns first and t last, sorted
    lexicographically with exact duplicates removed; construct through
    point_set so those invariants hold. alpha fixes the r^{2a} time scaling
    of the cylinders the set will be covered with.
    """

    coords: np.ndarray
    alpha: float

    def __post_init__(self):
        c = self.coords
        if c.ndim != 2 or c.shape[1] not in (2, 4):
            raise DomainInputError(
                "points must form an (m, d+1) array with d in {1, 3}"
            )
        if c.shape[0] and not np.all(np.isfinite(c)):
            raise DomainInputError("points must be finite")
        _check_alpha(self.alpha)
        c.setflags(write=False)
        if c.shape[0]:
            window = tuple(
                (float(c[:, j].min()), float(c[:, j].max()))
                for j in range(c.shape[1])
            )
        else:
            window = None
        object.__setattr__(self, "window", window)

    @property
    def dim(self) -> int:
        return self.coords.shape[1] - 1

    @property
    def n_points(self) -> int:
        return self.coords.shape[0]


def point_set(points, alpha: float, dim: int | None = None) -> ParabolicPointSet:
    """Build a ParabolicPointSet: dedupe, sort, record the window.

    dim is only needed to disambiguate an empty input.
    """
    arr = np.asarray(points, dtype=float)
    if arr.size == 0:
        if dim is None:
            raise DomainInputError("empty input needs an explicit dim")
        arr = np.empty((0, dim + 1))
    if arr.ndim != 2:
        raise DomainInputError("points must form an (m, d+1) array")
    if dim is not None and arr.shape[1] != dim + 1:
        raise DomainInputError(
            f"points have {arr.shape[1] - 1} space+time columns, expected dim={dim}"
        )
    if arr.shape[0]:
        arr = np.unique(arr, axis=0)
    return ParabolicPointSet(coords=arr, alpha=float(alpha))


# --------------------------------------------------------------------------
# covering numbers


def _cell_indices(s: ParabolicPointSet, r: float) -> np.ndarray:
    c = s.coords
    d = s.dim
    idx = np.empty((c.shape[0], d + 1), dtype=np.int64)
    for j in range(d):
        idx[:, j] = np.floor(c[:, j] / r)
    # Depth r^{2a} snapped down to a power of two, so slabs at dyadic radii
    # nest exactly and counts stay monotone in r.
    depth = 2.0 ** math.floor(2.0 * s.alpha * math.log2(r))
    # Time slabs ((k-1) depth, k depth] are half-open at the bottom, like the
    # cylinder intervals they mirror; ceil puts a point on a slab face into
    # the slab it closes.
    idx[:, d] = np.ceil(c[:, d] / depth)
    return idx


def covering_number(s: ParabolicPointSet, r: float) -> int:
    """Occupied anisotropic grid cells: width r in space, dyadic-snapped
    depth in (r^{2a}/2, r^{2a}] in time, anchored at the origin."""
    if r <= 0.0:
        raise DomainInputError("covering radius must be positive")
    if s.n_points == 0:
        return 0
    return int(np.unique(_cell_indices(s, r), axis=0).shape[0])


def _dyadic_radii_between(r_min: float, r_max: float) -> list[float]:
    """All radii 2^{-k}, k integer, strictly inside (r_min, r_max), descending."""
    if not 0.0 < r_min < r_max:
        raise DomainInputError("need 0 < r_min < r_max")
    k = math.floor(-math.log2(r_max)) + 1
    while 2.0 ** (-k) >= r_max:   # guard the floating-point boundary
        k += 1
    out = []
    while 2.0 ** (-k) > r_min:
        out.append(2.0 ** (-k))
        k += 1
    return out


def _worker_count(n_jobs: int) -> int:
    cap = os.environ.get("FRACREG_THREADS")
    limit = int(cap) if cap else (os.cpu_count() or 1)
    return max(1, min(n_jobs, limit, 8))


@dataclass(frozen=True)
class DimensionFit:
    """Log-log covering fit: radii ascending, counts nonincreasing along them."""

    radii: tuple
    counts: tuple
    dimension: float
    residual: float
    fit_window: tuple   # (r_lo, r_hi) subrange actually fitted

    def __post_init__(self):
        counts = np.asarray(self.counts)
        if counts.size and np.any(np.diff(counts) > 0):
            raise InvariantViolation(
                "covering counts increased with the radius"
            )


def dimension_fit(s: ParabolicPointSet, r_min: float, r_max: float) -> DimensionFit:
    """Least-squares slope of log N(s, r) against -log r over dyadic radii.

    The fit drops the first and last sixth of the radii (the middle
    two-thirds rule): the large-r end saturates at one cell and the small-r
    end at one point per cell, and both flats bias the slope. The estimate
    is clamped into [0, d + 2a], the range a subset of a parabolic window
    can attain.
    """
    if s.n_points == 0:
        raise EmptyPointSet("cannot fit a dimension to an empty set")
    radii = _dyadic_radii_between(r_min, r_max)
    if len(radii) < 6:
        raise WindowTooNarrow(
            f"only {len(radii)} dyadic radii inside ({r_min:g}, {r_max:g}); need 6"
        )
    with ThreadPoolExecutor(max_workers=_worker_count(len(radii))) as pool:
        counts = list(pool.map(lambda r: covering_number(s, r), radii))
    drop = len(radii) // 6
    sel = slice(drop, len(radii) - drop)
    x = -np.log(np.array(radii[sel]))
    y = np.log(np.array(counts[sel], dtype=float))
    slope, intercept = np.polyfit(x, y, 1)
    resid = float(np.sqrt(np.mean((y - (slope * x + intercept)) ** 2)))
    dim_max = s.dim + 2.0 * s.alpha
    return DimensionFit(
        radii=tuple(radii[::-1]),
        counts=tuple(counts[::-1]),
        dimension=float(min(max(slope, 0.0), dim_max)),
        residual=resid,
        fit_window=(radii[sel][-1], radii[sel][0]),
    )


def box_dimension(s: ParabolicPointSet, r_min: float, r_max: float) -> float:
    """The covering-slope dimension estimate; see dimension_fit for details."""
    return dimension_fit(s, r_min, r_max).dimension


# --------------------------------------------------------------------------
# separated families


def parabolic_distance(p: np.ndarray, q: np.ndarray, alpha: float) -> float:
    """max(|x - x'|, |t - t'|^{1/(2a)}) for rows (x..., t)."""
    space = float(np.linalg.norm(p[:-1] - q[:-1]))
    return max(space, abs(float(p[-1] - q[-1])) ** (1.0 / (2.0 * alpha)))


def separated_family(s: ParabolicPointSet, a: float) -> ParabolicPointSet:
    """Greedy maximal subset with pairwise parabolic distance >= a.

    Greedy in stored order: every rejected point was within a of an earlier
    keeper, so the family is automatically maximal. Any single parabolic
    ball of radius a meets at most 5 * 3^d covering cells of the same
    radius (three per space axis; the two-sided time extent 2a^{2a} spans
    at most five snapped slabs), so |family| >= N(s, a) / (5 * 3^d).
    """
    if a <= 0.0:
        raise DomainInputError("separation scale must be positive")
    c = s.coords
    if c.shape[0] == 0:
        return s
    inv = 1.0 / (2.0 * s.alpha)
    kept = [0]
    for i in range(1, c.shape[0]):
        xs = c[kept, :-1] - c[i, :-1]
        space = np.sqrt(np.sum(xs * xs, axis=1))
        time = np.abs(c[kept, -1] - c[i, -1]) ** inv
        if np.all(np.maximum(space, time) >= a):
            kept.append(i)
    return ParabolicPointSet(coords=c[kept].copy(), alpha=s.alpha)


# --------------------------------------------------------------------------
# candidate extraction from a run


def singular_candidates(t: Trajectory, epsilon_0: float, r: float,
                        provider: ExtensionProvider | None = None,
                        n_centers: int = 4, times=None,
                        max_workers: int | None = None) -> ParabolicPointSet:
    """Lattice centers whose cylinder fails the smallness test at radius r.

    The lattice is n_centers^3 cell-centered spatial points crossed with
    every snapshot time deep enough for the cylinder to fit (or an explicit
    times list). On resolved decaying runs with a threshold above the
    observed sums the set is empty, which is the expected honest outcome.
    """
    if epsilon_0 <= 0.0:
        raise DomainInputError("epsilon_0 must be positive")
    if n_centers < 1:
        raise DomainInputError("need at least one lattice center per axis")
    if provider is None:
        provider = ExtensionProvider(t)
    box = t.box_length
    snap_times = t.times
    depth = r ** (2.0 * t.alpha)
    if times is None:
        slack = 1e-9 * max(1.0, abs(float(snap_times[-1])))
        times = [float(tc) for tc in snap_times
                 if tc - depth >= snap_times[0] - slack]
        if not times:
            raise CylinderOutOfWindow(
                f"no snapshot time is at least {depth:g} into the run"
            )
    h = box / n_centers
    centers = [((i + 0.5) * h, (j + 0.5) * h, (k + 0.5) * h)
               for i in range(n_centers)
               for j in range(n_centers)
               for k in range(n_centers)]
    jobs = [((c, tc), r) for c in centers for tc in times]
    reports = parallel_reports(t, provider, jobs, max_workers=max_workers)
    rows = [(*rep.center, rep.time) for rep in reports
            if rep.epsilon_sum >= epsilon_0]
    return point_set(rows, alpha=t.alpha, dim=3)


# --------------------------------------------------------------------------
# budget integrals for the counting argument


class _SliceCache:
    """Per-snapshot real fields shared by every cylinder in one demo run."""

    def __init__(self, provider: ExtensionProvider):
        self.provider = provider
        self._grad_sq: dict[int, np.ndarray] = {}
        self._mf: dict[int, np.ndarray] = {}
        self._gp_sq: dict[int, np.ndarray] = {}

    def grad_sq(self, i: int) -> np.ndarray:
        f = self._grad_sq.get(i)
        if f is None:
            state = self.provider.trajectory.snapshots[i][0]
            tab, n = state.tables, state.n_grid
            f = np.zeros((n, n, n))
            for kvec in (tab.kx, tab.ky, tab.kz):
                d = np.fft.irfftn(1j * kvec[None] * state.u_hat * n**3,
                                  s=(n, n, n), axes=(1, 2, 3))
                f += d[0] ** 2 + d[1] ** 2 + d[2] ** 2
            self._grad_sq[i] = f
        return f

    def maximal(self, i: int) -> np.ndarray:
        f = self._mf.get(i)
        if f is None:
            u = self.provider.u_real(i)
            state = self.provider.trajectory.snapshots[i][0]
            f = maximal_function(u[0] ** 2 + u[1] ** 2 + u[2] ** 2,
                                 state.box_length)
            self._mf[i] = f
        return f

    def grad_p_sq(self, i: int) -> np.ndarray:
        f = self._gp_sq.get(i)
        if f is None:
            p = self.provider.trajectory.snapshots[i][1]
            state = self.provider.trajectory.snapshots[i][0]
            tab, n = state.tables, state.n_grid
            f = np.zeros((n, n, n))
            for kvec in (tab.kx, tab.ky, tab.kz):
                d = np.fft.irfftn(1j * kvec * p.p_hat * n**3,
                                  s=(n, n, n), axes=(0, 1, 2))
                f += d * d
            self._gp_sq[i] = f
        return f


def budget_integrals(t: Trajectory, provider: ExtensionProvider, z, a: float,
                     cache: _SliceCache | None = None) -> dict:
    """The five local integrals hypothesised small on regular cylinders.

    Over Q_a(z): |grad u|^2, (M|u|^2)^{(3+2a)/3}, |p - [p]_{2a}|^{(3+2a)/3}
    with the mean over B_{2a} per slice, and |grad p|^{(3+2a)/4}; over the
    extended cylinder Q*_a(z): the y^b-weighted squared b-Laplacian of the
    wall-normal extension up to height a. Unnormalized space-time integrals
    (no r-power scaling), as the counting argument sums them raw.
    """
    if provider.trajectory is not t:
        raise DomainInputError("provider is bound to a different trajectory")
    if a <= 0.0:
        raise DomainInputError("radius must be positive")
    if cache is None:
        cache = _SliceCache(provider)
    x_c, t_c = z
    x_c = tuple(float(v) for v in x_c)
    alpha = t.alpha
    s0 = t.snapshots[0][0]
    cell = s0.dx ** 3
    q3 = (3.0 + 2.0 * alpha) / 3.0
    q4 = (3.0 + 2.0 * alpha) / 4.0
    depth = a ** (2.0 * alpha)
    active, w = _cylinder_slices(t, t_c - depth, t_c)
    mask = provider.ball(x_c, a)
    mask2 = provider.ball(x_c, 2.0 * a)
    wall_w = None
    levels = ()
    if provider.y_grid is not None:
        yg = provider.y_grid
        wall_w = _wall_weights(yg.y, yg.tau, 3.0 - 2.0 * alpha, a)
        levels = np.nonzero(wall_w)[0]
    out = {k: 0.0 for k in
           ("grad_u", "maximal", "pressure_osc", "grad_p", "extension")}
    for i in active:
        wi = float(w[i])
        out["grad_u"] += wi * float(cache.grad_sq(i)[mask].sum()) * cell
        out["maximal"] += wi * float((cache.maximal(i)[mask] ** q3).sum()) * cell
        p = provider.p_real(i)
        p_ref = float(p[mask2].mean()) if mask2.any() else 0.0
        osc = np.abs(p[mask] - p_ref)
        out["pressure_osc"] += wi * float((osc ** q3).sum()) * cell
        gp = cache.grad_p_sq(i)[mask]
        out["grad_p"] += wi * float((gp ** (0.5 * q4)).sum()) * cell
        se = provider.snapshot(i)
        if se is not None:
            acc = 0.0
            for j in levels:
                acc += wall_w[j] * float(se.lap_sq_level(int(j))[mask].sum())
            out["extension"] += wi * acc * cell
    out["total"] = sum(out.values())
    return out


# --------------------------------------------------------------------------
# the counting argument


@dataclass(frozen=True)
class CountingReport:
    """Everything the separated-family counting argument produces.

    Per schedule entry a: the separated family size, the summed budget over
    the family, the smallest single-cylinder budget, the lower bound
    |family| * a^{L-gamma} * epsilon, the ceiling K / (a^{L-gamma} epsilon),
    and whether K dominates the lower bound. k_budget is the largest summed
    budget across the schedule, the finite stand-in for the uniform
    constant that caps the sum at every scale. delta mirrors the
    intermediate dimension of the contradiction argument and is set to the
    measured covering-slope estimate.
    """

    radii: tuple
    counts: tuple
    dimension_estimate: float
    fit_residual: float
    fit_window: tuple | None
    delta: float
    gamma: float
    epsilon: float
    a_schedule: tuple
    separation_counts: tuple
    budget_sums: tuple
    min_point_budgets: tuple
    lower_bounds: tuple
    ceilings: tuple
    bound_holds: tuple
    k_budget: float

    def __post_init__(self):
        counts = np.asarray(self.counts)
        if counts.size and np.any(np.diff(counts) > 0):
            raise InvariantViolation("covering counts increased with the radius")
        if self.k_budget < 0.0 or any(b < 0.0 for b in self.budget_sums):
            raise InvariantViolation("budget integrals must be nonnegative")


def counting_demo(t: Trajectory, s: ParabolicPointSet, gamma: float,
                  epsilon: float, a_schedule,
                  provider: ExtensionProvider | None = None) -> CountingReport:
    """Numerically replay the dimension-bound tension on a finite point set.

    For each separation scale a: the summed budget over an a-separated
    family must dominate |family| * a^{L-gamma} * epsilon whenever every
    member's own budget exceeds a^{L-gamma} * epsilon, while the uniform
    cap K keeps the sum bounded; together they ceiling the family size.
    gamma must sit in [0, L - J), the window where the improved exponent
    argument runs.
    """
    if epsilon <= 0.0:
        raise DomainInputError("epsilon must be positive")
    a_schedule = [float(a) for a in a_schedule]
    if not a_schedule or min(a_schedule) <= 0.0:
        raise DomainInputError("a_schedule must be nonempty and positive")
    if s.dim != 3:
        raise DomainInputError("counting over a trajectory needs d=3 points")
    if abs(s.alpha - t.alpha) > 1e-12:
        raise DomainInputError("point set and trajectory disagree on alpha")
    alpha = t.alpha
    big_l = eval_L(alpha)
    gap = big_l - eval_J(alpha)
    if not 0.0 <= gamma < gap:
        raise DomainInputError(
            f"gamma must lie in [0, {gap:g}) at alpha={alpha:g}"
        )
    exponent = big_l - gamma

    if s.n_points:
        r_max = 2.0 * max(a_schedule)
        r_min = min(a_schedule) / 64.0
        fit = dimension_fit(s, r_min, r_max)
        radii, counts = fit.radii, fit.counts
        dim_est, resid, window = fit.dimension, fit.residual, fit.fit_window
    else:
        radii, counts, dim_est, resid, window = (), (), 0.0, 0.0, None

    if provider is None:
        provider = ExtensionProvider(t)
    cache = _SliceCache(provider)
    sizes, sums, minima, lowers = [], [], [], []
    for a in a_schedule:
        family = separated_family(s, a)
        budgets = [budget_integrals(t, provider,
                                    (tuple(row[:3]), float(row[3])), a,
                                    cache=cache)["total"]
                   for row in family.coords]
        sizes.append(family.n_points)
        sums.append(float(sum(budgets)))
        minima.append(float(min(budgets)) if budgets else 0.0)
        lowers.append(family.n_points * a ** exponent * epsilon)
    k_budget = max(sums) if sums else 0.0
    ceilings = [k_budget / (a ** exponent * epsilon) for a in a_schedule]
    holds = [k >= lo for k, lo in zip([k_budget] * len(lowers), lowers)]
    return CountingReport(
        radii=radii, counts=counts, dimension_estimate=dim_est,
        fit_residual=resid, fit_window=window, delta=dim_est,
        gamma=float(gamma), epsilon=float(epsilon),
        a_schedule=tuple(a_schedule), separation_counts=tuple(sizes),
        budget_sums=tuple(sums), min_point_budgets=tuple(minima),
        lower_bounds=tuple(lowers), ceilings=tuple(ceilings),
        bound_holds=tuple(holds), k_budget=float(k_budget),
    )


# --------------------------------------------------------------------------
# persistence


def counting_to_csv(report, path: str) -> None:
    """Covering sweep as `r,count` rows; the final row is dimension,residual.

    Accepts either a CountingReport or a bare DimensionFit.
    """
    dim = getattr(report, "dimension_estimate", None)
    if dim is None:
        dim = report.dimension
    resid = getattr(report, "fit_residual", None)
    if resid is None:
        resid = report.residual
    lines = ["r,count"]
    for r, c in zip(report.radii, report.counts):
        lines.append(f"{fmt12(r)},{int(c)}")
    lines.append(f"{fmt12(dim)},{fmt12(resid)}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def point_set_to_csv(s: ParabolicPointSet, path: str) -> None:
    """Rows x1[,x2,x3],t using shortest exact float form (lossless reload)."""
    header = "x1,t" if s.dim == 1 else "x1,x2,x3,t"
    lines = [header]
    for row in s.coords:
        lines.append(",".join(repr(float(v)) for v in row))
    atomic_write_text(path, "\n".join(lines) + "\n")


def point_set_from_csv(path: str, alpha: float) -> ParabolicPointSet:
    with open(path, "r") as fh:
        header = fh.readline().strip()
        if header == "x1,t":
            dim = 1
        elif header == "x1,x2,x3,t":
            dim = 3
        else:
            raise DomainInputError(f"unrecognized point-set header {header!r}")
        rows = [tuple(float(v) for v in line.split(","))
                for line in fh.read().split("\n") if line.strip()]
    for row in rows:
        if len(row) != dim + 1:
            raise DomainInputError("point row width does not match the header")
    return point_set(rows, alpha=alpha, dim=dim)
