"""Closed-form dimension bounds and the gamma optimizer.

The quantities here live on the dissipation range alpha in (1, 5/4):

    L(alpha) = (15 - 2*alpha - 8*alpha^2) / 3
    J(alpha) = 36*(3-alpha)*(3+2*alpha)*(5-4*alpha)
               / (-64*alpha^3 + 272*alpha^2 - 300*alpha + 369)

L is the energy-method dimension bound; J is the improvement, so the
optimized singularity-dimension exponent approaches L - J. The auxiliary
exponents depend on a decrement step zeta, a product N*zeta, and the
candidate dimension gamma; eta is chosen so two competing exponents in
the iteration coincide:

    eta = (2/9) * ((6-2a)*zeta + (2a-6)*N*zeta + 9/2 + (L-gamma)*2a/(3+2a))

Feasibility of a candidate gamma is five sign conditions: three derived
exponents j1, j2, j3 must be nonnegative, eta must be at least 1, and
gamma <= (4a-3)/(4a)*L. Each condition is affine decreasing in gamma, so
it is equivalently "gamma below a closed-form bound"; constraint_margins
reports those margins. The optimizer pushes gamma up against all five
with the analytically optimal N*zeta as a seed, then realizes an integer
step count N and re-verifies.

All closed forms have integer coefficients, so feeding fractions.Fraction
arguments yields exact rational output; floats and numpy arrays work the
same way elementwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .errors import (
    AlphaOutOfRange,
    DenominatorNearZero,
    InfeasibleAtGammaZero,
    InvariantViolation,
    NonmonotoneSchedule,
    ThetaOutOfRange,
)

ALPHA_LO = 1          # closure endpoints; both exact in binary floating point
ALPHA_HI = 1.25

_DEFAULT_ZETA_SCHEDULE = (1e-1, 1e-2, 1e-3, 1e-4, 1e-5, 1e-6)


@dataclass(frozen=True)
class AlphaParams:
    """Dissipation exponent, strictly inside (1, 5/4).

    The evaluation functions also accept the closure endpoints directly
    (boundary probes); this container enforces the open interval because
    everything downstream of the optimizer assumes it.
    """

    alpha: float

    def __post_init__(self) -> None:
        if not (ALPHA_LO < self.alpha < ALPHA_HI):
            raise AlphaOutOfRange(
                f"alpha must lie in (1, 5/4) strictly, got {self.alpha!r}")

    @property
    def b(self):
        """Extension weight exponent b = 3 - 2*alpha."""
        return 3 - 2 * self.alpha


def _alpha_of(a):
    """Accept AlphaParams, scalars (incl. Fraction), or numpy arrays."""
    value = a.alpha if isinstance(a, AlphaParams) else a
    if isinstance(value, (np.ndarray, list, tuple)):
        arr = np.asarray(value, dtype=float)
        if not (np.all(arr >= ALPHA_LO) and np.all(arr <= ALPHA_HI)):
            raise AlphaOutOfRange("alpha values must lie in [1, 5/4]")
        return arr
    if not (ALPHA_LO <= value <= ALPHA_HI):
        raise AlphaOutOfRange(f"alpha must lie in [1, 5/4], got {value!r}")
    return value


def _cubic_denominator(a):
    """-64 a^3 + 272 a^2 - 300 a + 369, positive on the whole interval."""
    return -64 * a**3 + 272 * a**2 - 300 * a + 369


def _guard_denominator(den) -> None:
    bad = np.any(np.abs(np.asarray(den, dtype=float)) < 1e-12)
    if bad:
        raise DenominatorNearZero("cubic denominator within 1e-12 of zero")


def eval_L(a):
    """Energy-method dimension bound L(alpha) = (15 - 2a - 8a^2)/3."""
    a = _alpha_of(a)
    return (15 - 2 * a - 8 * a**2) / 3


def eval_J(a):
    """Dimension improvement J(alpha), factored product form."""
    a = _alpha_of(a)
    den = _cubic_denominator(a)
    _guard_denominator(den)
    return 36 * (3 - a) * (3 + 2 * a) * (5 - 4 * a) / den


def eval_J_expanded(a):
    """J(alpha) as the expanded cubic-over-cubic rational form.

    Independent route used to cross-check eval_J; the two agree exactly
    as rational functions.
    """
    a = _alpha_of(a)
    den = 64 * a**3 - 272 * a**2 + 300 * a - 369
    _guard_denominator(den)
    return (-288 * a**3 + 792 * a**2 + 756 * a - 1620) / den


def nzeta_star(a):
    """Analytically optimal product N*zeta in the zeta -> 0 limit.

    N*zeta = 27*(4a-5) / (-64a^3 + 272a^2 - 300a + 369 with flipped sign),
    i.e. 27*(4a-5) / (64a^3 - 272a^2 + 300a - 369); both factors are
    negative on (1, 5/4), so the value is positive and vanishes at 5/4.
    It is the crossing point of the second and third gamma bounds at
    zeta = 0.
    """
    a = _alpha_of(a)
    den = 64 * a**3 - 272 * a**2 + 300 * a - 369
    _guard_denominator(den)
    return 27 * (4 * a - 5) / den


def eta_from(a, zeta, nzeta, gamma):
    """The eta that equates the two competing iteration exponents."""
    a = _alpha_of(a)
    beta = eval_L(a) - gamma
    # (2/9) * [ (6-2a) zeta + (2a-6) nzeta + 9/2 + beta * 2a/(3+2a) ]
    return (2 * ((6 - 2 * a) * zeta + (2 * a - 6) * nzeta) + 9) / 9 \
        + 4 * a * beta / (9 * (3 + 2 * a))


@dataclass(frozen=True)
class ExponentTriplet:
    """The three derived iteration exponents at given (zeta, nzeta, gamma)."""

    j1: float
    j2: float
    j3: float
    eta: float


def exponent_triplet(a, zeta, nzeta, gamma) -> ExponentTriplet:
    """j1, j2, j3 with eta substituted from eta_from."""
    a = _alpha_of(a)
    beta = eval_L(a) - gamma
    eta = eta_from(a, zeta, nzeta, gamma)
    j1 = (eta + nzeta) * (4 * a - 2) + 3 * beta / (3 + 2 * a)
    j2 = ((8 * a - 3) * nzeta + (12 * a - 15) * eta) / 2 + beta
    j3 = ((-16 * a**2 + 56 * a - 51) * zeta
          + (4 * a - 5) * (4 * a - 3) * nzeta
          + 9 * (4 * a - 5)) / 6 \
        + (16 * a**2 - 8 * a + 27) * beta / (6 * (3 + 2 * a))
    return ExponentTriplet(j1=j1, j2=j2, j3=j3, eta=eta)


def _gamma_bounds(a, zeta, nzeta):
    """The five closed-form upper bounds for gamma.

    Each is the root in gamma of the corresponding sign condition
    (j1 >= 0, j2 >= 0, j3 >= 0, eta >= 1, gamma <= (4a-3)L/(4a)), so
    margin signs agree exactly with the raw exponent signs.
    """
    L = eval_L(a)
    d27 = 16 * a**2 - 8 * a + 27
    d18 = 16 * a**2 - 8 * a + 18
    w = 3 + 2 * a
    b1 = L + w * (4 * a - 2) * (9 + (4 * a - 3) * nzeta
                                + 2 * (6 - 2 * a) * zeta) / d27
    b2 = L + w * (9 * (4 * a - 5) + (16 * a**2 - 44 * a + 51) * nzeta
                  + 2 * (4 * a - 5) * (6 - 2 * a) * zeta) / d18
    b3 = L + w * (9 * (4 * a - 5) + (4 * a - 5) * (4 * a - 3) * nzeta
                  + (-16 * a**2 + 56 * a - 51) * zeta) / d27
    b4 = L + w * ((a - 3) * nzeta + (3 - a) * zeta) / a
    b5 = (4 * a - 3) * L / (4 * a)
    return b1, b2, b3, b4, b5


@dataclass(frozen=True)
class ConstraintMargins:
    """Margins of the five gamma bounds and the raw exponents behind them.

    m_i = (closed-form bound i) - gamma. Feasibility of (gamma, zeta,
    nzeta) is min(m1..m5) >= 0, equivalently j1, j2, j3 >= 0 together
    with eta >= 1 and gamma <= (4a-3)L/(4a).
    """

    m1: float
    m2: float
    m3: float
    m4: float
    m5: float
    j1: float
    j2: float
    j3: float
    eta: float

    @property
    def margins(self):
        return (self.m1, self.m2, self.m3, self.m4, self.m5)

    @property
    def feasible(self) -> bool:
        return min(self.margins) >= 0


def constraint_margins(a, zeta, nzeta, gamma) -> ConstraintMargins:
    """Evaluate all five margins at a candidate (zeta, nzeta, gamma)."""
    a = _alpha_of(a)
    b1, b2, b3, b4, b5 = _gamma_bounds(a, zeta, nzeta)
    trip = exponent_triplet(a, zeta, nzeta, gamma)
    return ConstraintMargins(
        m1=b1 - gamma, m2=b2 - gamma, m3=b3 - gamma,
        m4=b4 - gamma, m5=b5 - gamma,
        j1=trip.j1, j2=trip.j2, j3=trip.j3, eta=trip.eta)


_check_startup_done = False


def _startup_denominator_check() -> None:
    """One-time sign check of the cubic denominator on a fine grid."""
    global _check_startup_done
    if _check_startup_done:
        return
    grid = np.linspace(ALPHA_LO, ALPHA_HI, 1001)
    den = _cubic_denominator(grid)
    if np.any(den <= 0) or np.min(np.abs(den)) < 1e-6:
        raise DenominatorNearZero(
            "cubic denominator loses its sign on [1, 5/4]")
    _check_startup_done = True


_startup_denominator_check()


# --- optimizer ---

_INV_PHI = (math.sqrt(5) - 1) / 2  # golden ratio conjugate


def _min_bound(a: float, zeta: float, nz: float) -> float:
    """min over the five gamma bounds; concave piecewise affine in nz."""
    return min(_gamma_bounds(a, zeta, nz))


def _gamma_roof(a: float, zeta: float):
    """Maximize min-bound over nzeta > 0 by golden section.

    Seeded at the analytic optimum and widened geometrically until the
    maximum is bracketed. Returns (roof value, argmax nzeta).
    """
    seed = float(nzeta_star(a))
    if seed <= 0:
        seed = 1e-12
    lo, hi = seed / 4, seed * 4
    f = lambda nz: _min_bound(a, zeta, nz)
    for _ in range(80):  # widen until interior point beats both ends
        mid = math.sqrt(lo * hi)
        if f(mid) >= max(f(lo), f(hi)):
            break
        if f(lo) > f(hi):
            lo /= 4
        else:
            hi *= 4
    else:
        raise InvariantViolation("failed to bracket the nzeta maximum")
    x1 = hi - _INV_PHI * (hi - lo)
    x2 = lo + _INV_PHI * (hi - lo)
    f1, f2 = f(x1), f(x2)
    for _ in range(90):
        if f1 < f2:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + _INV_PHI * (hi - lo)
            f2 = f(x2)
        else:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - _INV_PHI * (hi - lo)
            f1 = f(x1)
    nz = (lo + hi) / 2
    return f(nz), nz


@dataclass(frozen=True)
class GammaWitness:
    """Feasible integer-step realization backing a reported gamma*."""

    gamma: float
    zeta: float
    n_steps: int
    nzeta: float
    eta: float
    margins: ConstraintMargins
    admissible_zeta: bool


@dataclass(frozen=True)
class OptimizeResult:
    """Optimizer output: gamma*, per-zeta trend, and the final witness."""

    alpha: float
    gamma_star: float
    trend: tuple  # (zeta, gamma_max) pairs, zeta strictly decreasing
    witness: GammaWitness


def zeta_admissibility_bound(a, gamma) -> float:
    """Largest zeta the final admissibility display allows for a gamma.

    zeta <= (16a^2 - 8a + 27) / (9*(3+2a)*(5-4a)) * (L - J - gamma).
    """
    a = _alpha_of(a)
    coeff = (16 * a**2 - 8 * a + 27) / (9 * (3 + 2 * a) * (5 - 4 * a))
    return coeff * (eval_L(a) - eval_J(a) - gamma)


def optimize_gamma(a, zeta_schedule=_DEFAULT_ZETA_SCHEDULE,
                   bisect_depth: int = 50) -> OptimizeResult:
    """Maximize gamma subject to the five margins over the zeta schedule.

    For each zeta the inner problem maximizes the smallest of the five
    closed-form bounds over nzeta > 0 (golden section seeded at the
    analytic optimum); a bisection on gamma against that roof then pins
    gamma_max(zeta). The reported gamma* is gamma_max at the smallest
    zeta; the witness realizes an integer N = round(nzeta/zeta), backs
    gamma off by a small slack until the five margins and the zeta
    admissibility display hold, and ships the margins for inspection.
    """
    a = float(_alpha_of(a))
    schedule = tuple(float(z) for z in zeta_schedule)
    if not schedule or any(z <= 0 for z in schedule):
        raise NonmonotoneSchedule("zeta schedule must be positive")
    if any(b >= c for b, c in zip(schedule[1:], schedule)):
        raise NonmonotoneSchedule("zeta schedule must be strictly decreasing")

    trend = []
    roof = nz_opt = None
    for zeta in schedule:
        roof, nz_opt = _gamma_roof(a, zeta)
        if roof < 0:
            # this zeta admits no gamma at all; recorded as nan, fatal
            # only if it persists down to the smallest schedule entry
            trend.append((zeta, math.nan))
            continue
        lo, hi = 0.0, float(eval_L(a)) + 1.0  # hi always infeasible (m5 < 0)
        for _ in range(bisect_depth):
            mid = 0.5 * (lo + hi)
            if mid <= roof:
                lo = mid
            else:
                hi = mid
        trend.append((zeta, lo))

    zeta = schedule[-1]
    gamma_star = trend[-1][1]
    if math.isnan(gamma_star):
        raise InfeasibleAtGammaZero(
            f"margins fail at gamma=0 for alpha={a}, zeta={zeta}")
    n_steps = max(1, round(nz_opt / zeta))
    nz_int = n_steps * zeta

    slack = 8 * zeta + 1e-9
    witness = None
    for _ in range(40):
        gamma_w = max(gamma_star - slack, 0.0)
        margins = constraint_margins(a, zeta, nz_int, gamma_w)
        admissible = zeta <= zeta_admissibility_bound(a, gamma_w) + 1e-15
        if margins.feasible and admissible:
            witness = GammaWitness(
                gamma=gamma_w, zeta=zeta, n_steps=n_steps, nzeta=nz_int,
                eta=margins.eta, margins=margins, admissible_zeta=True)
            break
        slack *= 2
    if witness is None:
        raise InvariantViolation(
            f"could not realize a feasible integer-N witness at alpha={a}")
    return OptimizeResult(alpha=a, gamma_star=gamma_star,
                          trend=tuple(trend), witness=witness)


# --- iteration bound ---

@dataclass(frozen=True)
class IterParams:
    """Geometric iteration data: radii r_k = rho^(eta + k*zeta).

    theta = rho^zeta <= 1/2 is the per-step radius ratio; either supply
    theta directly or a rho from which it is derived.
    """

    zeta: float
    eta: float
    n_steps: int
    rho: float | None = None
    theta: float = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        if self.theta is None:
            if self.rho is None:
                raise ThetaOutOfRange("supply theta or rho")
            if not (0 < self.rho < 1):
                raise ThetaOutOfRange(f"rho must lie in (0,1), got {self.rho}")
            object.__setattr__(self, "theta", self.rho ** self.zeta)
        if not (0 < self.theta <= 0.5):
            raise ThetaOutOfRange(f"theta must lie in (0, 1/2], got {self.theta}")
        if self.n_steps < 1:
            raise ThetaOutOfRange("n_steps must be at least 1")

    def radii(self):
        """r_k for k = 0..n_steps (requires rho)."""
        if self.rho is None:
            raise ThetaOutOfRange("radii need an explicit rho")
        return [self.rho ** (self.eta + k * self.zeta)
                for k in range(self.n_steps + 1)]


def iteration_bound(a, theta: float, c_values, d0: float) -> float:
    """Two-part geometric bound accumulated over the shrinking radii.

    I + II = sum_{i=1..N} theta^((4a-3/2)(i-1) + 4a-6) * c[N-i]
           + theta^((4a-3/2) N) * d0,

    where c[k] is the concentration value at radius r_k and d0 the
    pressure value at the largest radius. Monotone in every c and in d0.
    """
    a = float(_alpha_of(a))
    if not (0 < theta <= 0.5):
        raise ThetaOutOfRange(f"theta must lie in (0, 1/2], got {theta}")
    n = len(c_values)
    if n < 1:
        raise ThetaOutOfRange("need at least one c value")
    rate = 4 * a - 1.5
    total = sum(theta ** (rate * (i - 1) + 4 * a - 6) * c_values[n - i]
                for i in range(1, n + 1))
    return total + theta ** (rate * n) * d0


# --- curve ---

def default_alpha_grid(n: int = 999):
    """Interior grid {1 + k/4000 : k = 1..n}; n = 999 reaches 1.24975."""
    k = np.arange(1, n + 1)
    return 1 + k / 4000.0


@dataclass(frozen=True)
class BoundCurve:
    """Sampled curve of (alpha, L, J, gamma*) rows, alpha increasing."""

    alphas: np.ndarray
    L_values: np.ndarray
    J_values: np.ndarray
    gamma_star_values: np.ndarray

    def rows(self):
        for row in zip(self.alphas, self.L_values, self.J_values,
                       self.gamma_star_values):
            yield row


def bound_curve(alphas=None, zeta: float = 1e-5,
                bisect_depth: int = 40) -> BoundCurve:
    """Evaluate L, J and the optimizer's gamma* on an alpha grid.

    The gamma* column runs the real optimizer per row with a single-entry
    zeta schedule; gamma_max(zeta) deviates from the closed-form limit
    L - J by about 1.6*zeta, so zeta = 1e-5 keeps the whole column well
    inside the curve's 1e-4 tolerance.
    """
    if alphas is None:
        alphas = default_alpha_grid()
    alphas = np.asarray(alphas, dtype=float)
    if np.any(np.diff(alphas) <= 0):
        raise AlphaOutOfRange("alpha grid must be strictly increasing")
    L = np.asarray(eval_L(alphas), dtype=float)
    J = np.asarray(eval_J(alphas), dtype=float)
    gamma = np.empty_like(L)
    for i, a in enumerate(alphas):
        result = optimize_gamma(float(a), zeta_schedule=(zeta,),
                                bisect_depth=bisect_depth)
        gamma[i] = result.gamma_star
    return BoundCurve(alphas=alphas, L_values=L, J_values=J,
                      gamma_star_values=gamma)
