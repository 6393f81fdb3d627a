"""Critical-value functions for the many-weak-instrument t-statistic.

Three families live here:

* the one-sided curve c(nu) built for a given (|rho|, alpha): a closed-form
  segment from the fixed point up to the tangency, then an iterative
  three-crossing continuation that keeps the conditional rejection
  probability at alpha for every conditioning value T >= 0;
* the conditional-Wald quantile c_cw(rho, T);
* a loader for externally supplied two-sided tables in the curve CSV format.

Curves are immutable and cheap to evaluate; building one is the expensive
step, so a small disk cache with atomic writes is provided.
"""

from __future__ import annotations

import hashlib
import os
import tempfile
from bisect import bisect_right
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq
from scipy.stats import norm

from .errors import DataError, NumericalError, TableError

__all__ = [
    "RHO_CAP",
    "RHO_BUILD_FLOOR",
    "CurveBuildConfig",
    "CriticalValueCurve",
    "ContinuationState",
    "t2_w_curve",
    "closed_form_c",
    "small_rho_limit_c",
    "fixed_point",
    "find_tangency",
    "extend_three_crossing",
    "build_vtfo_curve",
    "evaluate_critical_value",
    "cw_critical_value",
    "TwoSidedTable",
    "load_two_sided_table",
    "curve_csv_text",
    "write_curve_csv",
    "load_curve_csv",
    "CurveCache",
    "snap_rho_to_grid",
]

RHO_CAP = 0.9999
RHO_BUILD_FLOOR = 0.02
_FORMAT_VERSION = "2"


def _check_alpha(alpha: float) -> None:
    if not 0.0 < alpha < 0.5:
        raise DataError(f"alpha must be in (0, 0.5), got {alpha}")


def two_sided_chi2(alpha: float) -> float:
    """Square of the two-sided standard-normal cutoff."""
    return float(norm.ppf(1.0 - alpha / 2.0) ** 2)


@dataclass(frozen=True)
class CurveBuildConfig:
    """Grid and tolerance knobs for curve construction."""

    t_grid_step: float = 0.01
    nu_grid_step: float = 0.01
    nu_max: float = 12.0
    root_tolerance: float = 1e-10
    max_iterations: int = 100000

    def __post_init__(self):
        for name in ("t_grid_step", "nu_grid_step", "nu_max", "root_tolerance"):
            if getattr(self, name) <= 0:
                raise DataError(f"{name} must be positive")
        if self.max_iterations <= 0:
            raise DataError("max_iterations must be positive")
        if self.root_tolerance > 1e-9:
            raise DataError("root_tolerance must be <= 1e-9")

    def cache_key(self) -> str:
        payload = "|".join(
            [
                _FORMAT_VERSION,
                repr(self.t_grid_step),
                repr(self.nu_grid_step),
                repr(self.nu_max),
                repr(self.root_tolerance),
                repr(self.max_iterations),
            ]
        )
        return hashlib.sha256(payload.encode()).hexdigest()[:12]


@dataclass(frozen=True)
class CriticalValueCurve:
    """Tabulated c(nu) for one (|rho|, alpha) with its domain floor.

    Below ``domain_low`` the critical value is +inf (never reject); above
    the last knot the final value extends as a constant. ``t_tilde`` and
    ``t_last`` record the conditioning values where the continuation
    started and stopped (None for the small-rho limit curve and for
    ranges the continuation never reached).
    """

    rho_abs: float
    alpha: float
    knots_nu: np.ndarray
    knots_c: np.ndarray
    domain_low: float
    t_tilde: float | None = None
    t_last: float | None = None

    def evaluate(self, nu: float) -> float:
        if nu < self.domain_low:
            return float("inf")
        return float(np.interp(nu, self.knots_nu, self.knots_c))

    def evaluate_array(self, nu: np.ndarray) -> np.ndarray:
        nu = np.asarray(nu, dtype=float)
        out = np.interp(nu, self.knots_nu, self.knots_c)
        return np.where(nu < self.domain_low, np.inf, out)


def evaluate_critical_value(curve: CriticalValueCurve, nu: float) -> float:
    """Linear interpolation with the +inf sentinel below the domain floor."""
    return curve.evaluate(nu)


def t2_w_curve(nu: float, t: float, rho: float) -> float:
    """The W-shaped statistic surface nu^2 (nu-T)^2 / (rho^2 T^2 + (1-rho^2)(nu-T)^2)."""
    u = nu - t
    denom = rho**2 * t**2 + (1.0 - rho**2) * u**2
    if denom == 0.0:
        raise NumericalError("degenerate W-curve point")
    return nu**2 * u**2 / denom


def _t2_vec(nu: np.ndarray, t: float, rho: float) -> np.ndarray:
    u = nu - t
    denom = rho**2 * t**2 + (1.0 - rho**2) * u**2
    with np.errstate(divide="ignore", invalid="ignore"):
        return nu**2 * u**2 / denom


def closed_form_c(nu_bar: float, rho: float, alpha: float) -> float:
    """Initial curve segment: c = nu^2 / (rho^2 (nu/(|rho| sqrt(q)) - 1)^2 + 1 - rho^2)."""
    _check_alpha(alpha)
    rho_abs = abs(rho)
    if rho_abs == 0.0 or rho_abs >= 1.0:
        raise NumericalError("closed form undefined at rho boundary")
    sqrt_q = float(norm.ppf(1.0 - alpha))
    return nu_bar**2 / (rho**2 * (nu_bar / (rho_abs * sqrt_q) - 1.0) ** 2 + (1.0 - rho**2))


def fixed_point(rho: float, alpha: float) -> tuple[float, float]:
    """Starting knot (nu*, c*) = (|rho| sqrt(q), rho^2 q / (1 - rho^2))."""
    _check_alpha(alpha)
    rho_abs = abs(rho)
    if rho_abs == 0.0 or rho_abs >= 1.0:
        raise NumericalError("closed form undefined at rho boundary")
    sqrt_q = float(norm.ppf(1.0 - alpha))
    nu_star = rho_abs * sqrt_q
    return nu_star, nu_star**2 / (1.0 - rho_abs**2)


def small_rho_limit_c(nu_bar: float, alpha: float = 0.05) -> float:
    """Pointwise |rho| -> 0 limit of the curve: c = q2 nu^2 / (nu^2 + q2).

    At rho = 0 the conditioning value collapses onto nu and the leftover
    randomness is an independent unit normal, so exact conditional size
    forces c T^2 / (T^2 - c) = q2 at every T != 0, which inverts to this
    curve. It coincides with the conditional-Wald quantile at rho = 0.
    """
    _check_alpha(alpha)
    q2 = two_sided_chi2(alpha)
    return q2 * nu_bar**2 / (nu_bar**2 + q2)


def _refine_max(f, x0: float, x1: float, x2: float, rounds: int = 6) -> float:
    """Parabolic refinement of an interior maximum bracketed by x0 < x1 < x2."""
    fx0, fx1, fx2 = f(x0), f(x1), f(x2)
    best = fx1
    for _ in range(rounds):
        d1 = (x1 - x0) * (fx1 - fx2)
        d2 = (x1 - x2) * (fx1 - fx0)
        denom = d1 - d2
        if denom == 0.0:
            break
        xv = x1 - 0.5 * ((x1 - x0) * d1 - (x1 - x2) * d2) / denom
        if not (x0 < xv < x2) or xv == x1:
            break
        fv = f(xv)
        best = max(best, fv)
        # Keep a bracketing triple around the larger of the two candidates.
        if xv < x1:
            if fv > fx1:
                x2, fx2, x1, fx1 = x1, fx1, xv, fv
            else:
                x0, fx0 = xv, fv
        else:
            if fv > fx1:
                x0, fx0, x1, fx1 = x1, fx1, xv, fv
            else:
                x2, fx2 = xv, fv
    return best


def _hump_excess(t: float, rho_abs: float, alpha: float, nu_star: float, n_grid: int = 241) -> float:
    """Largest value of t2 - c over the hump region (nu*, T); -inf if empty."""
    lo = nu_star * (1.0 + 1e-12)
    hi = t * (1.0 - 1e-12)
    if hi <= lo:
        return float("-inf")
    grid = np.linspace(lo, hi, n_grid)
    c_vals = grid**2 / (rho_abs**2 * (grid / nu_star - 1.0) ** 2 + (1.0 - rho_abs**2))
    h = _t2_vec(grid, t, rho_abs) - c_vals
    i = int(np.argmax(h))
    if i == 0 or i == n_grid - 1:
        return float(h[i])

    def f(nu):
        return t2_w_curve(nu, t, rho_abs) - closed_form_c(nu, rho_abs, alpha)

    return max(float(h[i]), _refine_max(f, grid[i - 1], grid[i], grid[i + 1]))


def find_tangency(rho: float, alpha: float, cfg: CurveBuildConfig | None = None) -> tuple[float, float]:
    """First conditioning value T with multiple statistic/curve crossings.

    Scans a T grid for the onset of a hump excess, then bisects (the excess
    is monotone in T) down to ``root_tolerance``. Returns (t_tilde,
    nu_tilde) where nu_tilde is the surviving single-crossing root at
    t_tilde.
    """
    cfg = cfg or CurveBuildConfig()
    _check_alpha(alpha)
    rho_abs = abs(rho)
    if rho_abs == 0.0 or rho_abs >= 1.0:
        raise NumericalError("closed form undefined at rho boundary")
    sqrt_q = float(norm.ppf(1.0 - alpha))
    nu_star = rho_abs * sqrt_q

    t_hi = None
    n_steps = max(1, int(np.ceil(cfg.nu_max / cfg.t_grid_step)))
    for step_idx in range(1, n_steps + 1):
        t = step_idx * cfg.t_grid_step
        if _hump_excess(t, rho_abs, alpha, nu_star) > 0.0:
            t_hi = t
            break
    if t_hi is None:
        raise NumericalError("tangency not found in range")
    t_lo = t_hi - cfg.t_grid_step
    while t_lo > 0.0 and _hump_excess(t_lo, rho_abs, alpha, nu_star) > 0.0:
        t_hi = t_lo
        t_lo -= cfg.t_grid_step
    if t_lo <= 0.0:
        t_lo = t_hi / 2.0
        while _hump_excess(t_lo, rho_abs, alpha, nu_star) > 0.0:
            t_hi = t_lo
            t_lo /= 2.0
            if t_lo < 1e-12:
                raise NumericalError("tangency not found in range")

    for _ in range(cfg.max_iterations):
        if t_hi - t_lo <= cfg.root_tolerance:
            break
        mid = 0.5 * (t_lo + t_hi)
        if _hump_excess(mid, rho_abs, alpha, nu_star) > 0.0:
            t_hi = mid
        else:
            t_lo = mid
    t_tilde = 0.5 * (t_lo + t_hi)

    def h(nu):
        return t2_w_curve(nu, t_tilde, rho_abs) - closed_form_c(nu, rho_abs, alpha)

    lo = t_tilde + 0.5 * nu_star
    hi = t_tilde + 1.5 * nu_star
    if not h(lo) < 0.0 < h(hi):
        raise NumericalError("tangency not found in range: crossing bracket failed")
    nu_tilde = float(brentq(h, lo, hi, xtol=cfg.root_tolerance))
    return t_tilde, nu_tilde


@dataclass
class ContinuationState:
    """Mutable bookkeeping for the three-crossing continuation."""

    rho_abs: float
    alpha: float
    nu_star: float
    t_tilde: float
    nu_tilde: float
    cont_nu: list[float] = field(default_factory=list)
    cont_c: list[float] = field(default_factory=list)
    prev_nu_l: float | None = None
    prev_nu_m: float | None = None
    last_t: float | None = None
    c_tilde: float = field(init=False)

    def __post_init__(self):
        self.c_tilde = self._closed(self.nu_tilde)

    def _closed(self, nu: float) -> float:
        r2 = self.rho_abs**2
        return nu**2 / (r2 * (nu / self.nu_star - 1.0) ** 2 + (1.0 - r2))

    def curve_value(self, nu: float) -> float:
        """Built curve so far: exact closed form, then the appended knots."""
        if nu <= self.nu_tilde:
            return self._closed(nu)
        if not self.cont_nu:
            return self.c_tilde
        i = bisect_right(self.cont_nu, nu)
        if i >= len(self.cont_nu):
            return self.cont_c[-1]
        x0 = self.cont_nu[i - 1] if i > 0 else self.nu_tilde
        y0 = self.cont_c[i - 1] if i > 0 else self.c_tilde
        x1, y1 = self.cont_nu[i], self.cont_c[i]
        return y0 + (nu - x0) / (x1 - x0) * (y1 - y0)

    @property
    def frontier(self) -> float:
        return self.cont_nu[-1] if self.cont_nu else self.nu_tilde


def _expand_bracket(h, lo: float, hi: float, cap: float, grow: float) -> tuple[float, float]:
    """Grow hi until h changes sign on [lo, hi]; respects an upper cap."""
    h_lo = h(lo)
    for _ in range(200):
        h_hi = h(min(hi, cap))
        if h_lo == 0.0 or h_lo * h_hi < 0.0:
            return lo, min(hi, cap)
        if hi >= cap:
            break
        hi = min(cap, hi + grow)
        grow *= 2.0
    raise NumericalError("continuation step failed: root bracketing failure")


def extend_three_crossing(
    state: ContinuationState, t_next: float, cfg: CurveBuildConfig | None = None
) -> tuple[float, float]:
    """One continuation step: solve the middle/low crossings on the built
    segment, place the high crossing from the acceptance-probability
    equation, and append the new knot. Returns (nu_h, c_h)."""
    cfg = cfg or CurveBuildConfig()
    rho = state.rho_abs
    t = float(t_next)
    if t < state.t_tilde - 1e-12:
        raise NumericalError("continuation step failed: T below the tangency onset")

    def h(nu):
        return t2_w_curve(nu, t, rho) - state.curve_value(nu)

    # Warm starts from the crossing quadratic against the closed form:
    # nu^2 - (T + nu*) nu + 2 nu* T = 0.
    disc = max(t * t - 6.0 * state.nu_star * t + state.nu_star**2, 0.0)
    root = np.sqrt(disc)
    quad_lo = 0.5 * (t + state.nu_star - root)
    quad_hi = 0.5 * (t + state.nu_star + root)
    nu_touch = 0.5 * (state.t_tilde + state.nu_star)

    # Low crossing: between the domain floor and the previous low crossing.
    lo_edge = state.nu_star * (1.0 + 1e-12)
    hi_edge = state.prev_nu_l if state.prev_nu_l is not None else max(nu_touch, quad_lo + 1e-9)
    if h(lo_edge) >= 0.0 or h(hi_edge) <= 0.0:
        lo_edge, hi_edge = _expand_bracket(h, lo_edge, hi_edge, cap=t, grow=cfg.t_grid_step)
    nu_l = float(brentq(h, lo_edge, hi_edge, xtol=cfg.root_tolerance))

    # Middle crossing: moves up with T, capped strictly below T.
    cap = t * (1.0 - 1e-12)
    lo_m = state.prev_nu_m if state.prev_nu_m is not None else max(nu_touch, nu_l + 1e-12)
    hi_m = min(max(quad_hi, lo_m + cfg.t_grid_step), cap)
    if h(lo_m) <= 0.0 or h(hi_m) >= 0.0:
        lo_m, hi_m = _expand_bracket(h, lo_m, hi_m, cap=cap, grow=cfg.t_grid_step)
    nu_m = float(brentq(h, lo_m, hi_m, xtol=cfg.root_tolerance))

    if not state.nu_star <= nu_l <= nu_m <= t:
        raise NumericalError("crossing order violated")

    z_l = (nu_l - t) / rho
    z_m = (nu_m - t) / rho
    hump_prob = float(norm.cdf(z_m) - norm.cdf(z_l))
    target = 1.0 - state.alpha + hump_prob
    if not 0.5 < target < 1.0:
        raise NumericalError("continuation step failed: acceptance probability out of range")
    nu_h = t + rho * float(norm.ppf(target))
    if nu_h <= state.frontier:
        raise NumericalError("continuation step failed: frontier did not advance")
    c_h = t2_w_curve(nu_h, t, rho)

    state.cont_nu.append(nu_h)
    state.cont_c.append(c_h)
    state.prev_nu_l = nu_l
    state.prev_nu_m = nu_m
    state.last_t = t
    return nu_h, c_h


def _closed_form_knots(rho_abs: float, alpha: float, nu_star: float, nu_end: float, cfg: CurveBuildConfig):
    """Knots for the closed-form segment, refined until the piecewise-linear
    interpolant tracks the segment to ~5e-7.

    At T = 0 the statistic surface touches the curve tangentially at the
    fixed point, so interpolation error there converts into conditional
    size error at square-root rate. A geometric ladder of knots out of
    nu_star keeps the panel error quadratically small in the distance to
    the contact and removes that sliver.
    """

    def c(nu):
        return closed_form_c(nu, rho_abs, alpha)

    n_base = max(2, int(np.ceil((nu_end - nu_star) / cfg.nu_grid_step)) + 1)
    base = np.linspace(nu_star, nu_end, n_base)
    pairs = [(float(base[0]), c(base[0]))]
    eps = 1e-8 * max(nu_star, 1.0)
    first_step = float(base[1] - base[0])
    while eps < first_step and nu_star + eps < nu_end:
        pairs.append((nu_star + eps, c(nu_star + eps)))
        eps *= 1.4
    stack = [(float(base[i]), float(base[i + 1])) for i in range(n_base - 2, -1, -1)]
    while stack:
        a, b = stack.pop()
        mid = 0.5 * (a + b)
        ca, cb, cm = c(a), c(b), c(mid)
        if abs(cm - 0.5 * (ca + cb)) > 5e-7 and (b - a) > 64 * cfg.root_tolerance:
            stack.append((mid, b))
            stack.append((a, mid))
        else:
            pairs.append((mid, cm))
            pairs.append((b, cb))
    pairs.sort()
    nus: list[float] = []
    cs: list[float] = []
    for nu, cc in pairs:
        if not nus or nu > nus[-1]:
            nus.append(nu)
            cs.append(cc)
    return nus, cs


def _small_rho_knots(alpha: float, cfg: CurveBuildConfig):
    """Knots for the small-rho limit curve over [0, nu_max], refined with
    the same midpoint rule as the closed-form segment."""

    def c(nu):
        return small_rho_limit_c(nu, alpha)

    n_base = max(2, int(np.ceil(cfg.nu_max / cfg.nu_grid_step)) + 1)
    base = np.linspace(0.0, cfg.nu_max, n_base)
    pairs = [(0.0, 0.0)]
    stack = [(float(base[i]), float(base[i + 1])) for i in range(n_base - 2, -1, -1)]
    while stack:
        a, b = stack.pop()
        mid = 0.5 * (a + b)
        ca, cb, cm = c(a), c(b), c(mid)
        if abs(cm - 0.5 * (ca + cb)) > 5e-7 and (b - a) > 64 * cfg.root_tolerance:
            stack.append((mid, b))
            stack.append((a, mid))
        else:
            pairs.append((mid, cm))
            pairs.append((b, cb))
    pairs.sort()
    nus: list[float] = []
    cs: list[float] = []
    for nu, cc in pairs:
        if not nus or nu > nus[-1]:
            nus.append(nu)
            cs.append(cc)
    return nus, cs


def build_vtfo_curve(
    rho: float, alpha: float = 0.05, cfg: CurveBuildConfig | None = None
) -> CriticalValueCurve:
    """Construct the one-sided curve for |rho| at level alpha.

    The construction only sees rho through rho^2 and |rho|, so the sign of
    rho is irrelevant. Below RHO_BUILD_FLOOR the continuation is
    ill-conditioned (the hump probability approaches alpha and the
    high-crossing quantile diverges; builds fail outright below ~0.003),
    so those curves use the small-rho limit instead. The limit sits within
    ~6e-4 of the exact curve at the floor, a conditional size error of
    roughly 2e-5.
    """
    cfg = cfg or CurveBuildConfig()
    _check_alpha(alpha)
    rho_abs = abs(float(rho))
    if rho_abs > RHO_CAP:
        raise DataError(f"rho out of range: |rho| must be <= {RHO_CAP}")

    if rho_abs < RHO_BUILD_FLOOR:
        nus, cs = _small_rho_knots(alpha, cfg)
        return CriticalValueCurve(
            rho_abs=rho_abs,
            alpha=alpha,
            knots_nu=np.array(nus),
            knots_c=np.array(cs),
            domain_low=0.0,
        )

    nu_star, _ = fixed_point(rho_abs, alpha)
    try:
        t_tilde, nu_tilde = find_tangency(rho_abs, alpha, cfg)
    except NumericalError as exc:
        if "tangency not found in range" not in str(exc):
            raise
        # Pure closed form over the requested range.
        nus, cs = _closed_form_knots(rho_abs, alpha, nu_star, cfg.nu_max, cfg)
        return CriticalValueCurve(
            rho_abs=rho_abs,
            alpha=alpha,
            knots_nu=np.array(nus),
            knots_c=np.array(cs),
            domain_low=nu_star,
        )

    nus, cs = _closed_form_knots(rho_abs, alpha, nu_star, nu_tilde, cfg)
    state = ContinuationState(
        rho_abs=rho_abs,
        alpha=alpha,
        nu_star=nu_star,
        t_tilde=t_tilde,
        nu_tilde=nu_tilde,
    )
    t = t_tilde
    for _ in range(cfg.max_iterations):
        t += cfg.t_grid_step
        nu_h, _ = extend_three_crossing(state, t, cfg)
        if nu_h >= cfg.nu_max:
            break
    else:
        raise NumericalError("continuation step failed: nu_max not reached")

    knots_nu = np.array(nus + state.cont_nu)
    knots_c = np.array(cs + state.cont_c)
    if not np.all(np.diff(knots_nu) > 0.0):
        raise NumericalError("continuation step failed: knots not strictly increasing")
    return CriticalValueCurve(
        rho_abs=rho_abs,
        alpha=alpha,
        knots_nu=knots_nu,
        knots_c=knots_c,
        domain_low=nu_star,
        t_tilde=t_tilde,
        t_last=state.last_t,
    )


def cw_critical_value(rho: float, t_stat: float, alpha: float = 0.05) -> float:
    """Conditional quantile of the statistic given T = t_stat.

    Solves P(t2(T + rho Z, T, rho) <= c) = 1 - alpha over Z ~ N(0,1) by
    monotone bisection in c; the acceptance set for a candidate c is read
    off the real roots of a quartic in z.
    """
    _check_alpha(alpha)
    rho_abs = abs(float(rho))
    if rho_abs >= 1.0:
        raise DataError("rho out of range: |rho| must be < 1 for the conditional quantile")
    t = float(t_stat)
    q2 = two_sided_chi2(alpha)
    if rho_abs < 1e-12:
        if t == 0.0:
            return 0.0
        return q2 * t * t / (t * t + q2)

    def accept_prob(c: float) -> float:
        if c <= 0.0:
            return 0.0
        # t2 <= c as a quartic inequality in z (leading coefficient > 0).
        coeffs = [
            rho_abs**2,
            2.0 * t * rho_abs,
            t * t - c * (1.0 - rho_abs**2),
            0.0,
            -c * t * t,
        ]
        roots = np.roots(coeffs)
        real = np.sort(roots[np.abs(roots.imag) <= 1e-9 * (1.0 + np.abs(roots.real))].real)
        points = [float(r) for r in real]
        prob = 0.0
        prev = -np.inf
        poly = np.polynomial.Polynomial(coeffs[::-1])
        for right in points + [np.inf]:
            if right > prev:
                if np.isinf(prev):
                    mid = (right - 1.0) if np.isfinite(right) else 0.0
                elif np.isinf(right):
                    mid = prev + 1.0
                else:
                    mid = 0.5 * (prev + right)
                if poly(mid) <= 0.0:
                    lo_cdf = 0.0 if np.isinf(prev) else float(norm.cdf(prev))
                    hi_cdf = 1.0 if np.isinf(right) else float(norm.cdf(right))
                    prob += hi_cdf - lo_cdf
                prev = right
        return prob

    target = 1.0 - alpha
    hi = max(4.0 * q2, 2.0 * rho_abs**2 * q2 / (1.0 - rho_abs**2), t * t)
    for _ in range(200):
        if accept_prob(hi) >= target:
            break
        hi *= 2.0
    else:
        raise NumericalError("CW quantile failure: no upper bracket")
    try:
        c_star = float(brentq(lambda c: accept_prob(c) - target, 0.0, hi, xtol=1e-9, maxiter=200))
    except (RuntimeError, ValueError) as exc:
        raise NumericalError(f"CW quantile failure: {exc}") from exc
    return c_star


# ---------------------------------------------------------------------------
# Serialization: curve CSV with `# key=value` sidecar comments.
# ---------------------------------------------------------------------------


def _sidecar_key(base: str, rho_abs: float, multi: bool) -> str:
    return f"{base}[rho={rho_abs!r}]" if multi else base


def curve_csv_text(curves) -> str:
    """Curve CSV as a string: comment sidecar, `rho,nu,crit` header, rows
    sorted by (rho, nu). Infinite values are never serialized; the domain
    floor rides in the sidecar."""
    if isinstance(curves, CriticalValueCurve):
        curves = [curves]
    curves = sorted(curves, key=lambda c: c.rho_abs)
    multi = len(curves) > 1
    lines = []
    for cv in curves:
        lines.append(f"# {_sidecar_key('domain_low', cv.rho_abs, multi)}={cv.domain_low!r}\n")
        lines.append(f"# {_sidecar_key('alpha', cv.rho_abs, multi)}={cv.alpha!r}\n")
        if cv.t_tilde is not None:
            lines.append(f"# {_sidecar_key('t_tilde', cv.rho_abs, multi)}={cv.t_tilde!r}\n")
        if cv.t_last is not None:
            lines.append(f"# {_sidecar_key('t_last', cv.rho_abs, multi)}={cv.t_last!r}\n")
    lines.append("rho,nu,crit\n")
    for cv in curves:
        for nu, c in zip(cv.knots_nu, cv.knots_c):
            lines.append(f"{cv.rho_abs!r},{float(nu)!r},{float(c)!r}\n")
    return "".join(lines)


def write_curve_csv(path, curves) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(curve_csv_text(curves))


def _parse_curve_file(path):
    meta: dict[str, float] = {}
    rows: list[tuple[float, float, float]] = []
    try:
        with open(path, encoding="utf-8") as fh:
            saw_header = False
            for raw in fh:
                line = raw.strip()
                if not line:
                    continue
                if line.startswith("#"):
                    body = line[1:].strip()
                    if "=" in body:
                        # bracketed keys contain '='; the value follows the last one
                        key, _, value = body.rpartition("=")
                        try:
                            meta[key.strip()] = float(value)
                        except ValueError as exc:
                            raise TableError(f"table parse error: bad sidecar {line!r}") from exc
                    continue
                if not saw_header:
                    if [p.strip() for p in line.split(",")] != ["rho", "nu", "crit"]:
                        raise TableError(f"table parse error: bad header {line!r}")
                    saw_header = True
                    continue
                parts = line.split(",")
                if len(parts) != 3:
                    raise TableError(f"table parse error: bad row {line!r}")
                try:
                    rows.append((float(parts[0]), float(parts[1]), float(parts[2])))
                except ValueError as exc:
                    raise TableError(f"table parse error: bad row {line!r}") from exc
    except OSError as exc:
        raise TableError(f"table parse error: {exc}") from exc
    if not saw_header or not rows:
        raise TableError("table parse error: empty table")
    return meta, rows


def _group_blocks(meta, rows):
    blocks = []
    current_rho = None
    nus: list[float] = []
    cs: list[float] = []

    def flush():
        if current_rho is None:
            return
        nu_arr = np.array(nus)
        if np.any(np.diff(nu_arr) <= 0.0):
            raise TableError("table grid error: nu not strictly increasing")
        multi_key = f"domain_low[rho={current_rho!r}]"
        domain = meta.get(multi_key, meta.get("domain_low", nus[0]))
        blocks.append((current_rho, nu_arr, np.array(cs), float(domain)))

    for rho, nu, c in rows:
        if rho != current_rho:
            flush()
            current_rho = rho
            nus, cs = [], []
        nus.append(nu)
        cs.append(c)
    flush()
    rhos = [b[0] for b in blocks]
    if sorted(rhos) != rhos or len(set(rhos)) != len(rhos):
        raise TableError("table grid error: rho blocks not sorted")
    return blocks


def load_curve_csv(path) -> list[CriticalValueCurve]:
    """Read curves back; sidecar metadata is optional."""
    meta, rows = _parse_curve_file(path)
    blocks = _group_blocks(meta, rows)
    multi = len(blocks) > 1
    out = []
    for rho, nus, cs, domain in blocks:
        def get(base, default=None):
            return meta.get(_sidecar_key(base, rho, multi), meta.get(base, default))

        out.append(
            CriticalValueCurve(
                rho_abs=rho,
                alpha=float(get("alpha", float("nan"))),
                knots_nu=nus,
                knots_c=cs,
                domain_low=domain,
                t_tilde=get("t_tilde"),
                t_last=get("t_last"),
            )
        )
    return out


@dataclass(frozen=True)
class TwoSidedTable:
    """Externally supplied c(nu, rho) lookup, bilinear between blocks."""

    blocks: tuple[tuple[float, np.ndarray, np.ndarray, float], ...]

    def _block_eval(self, idx: int, nu) -> np.ndarray:
        rho, nus, cs, domain = self.blocks[idx]
        nu = np.asarray(nu, dtype=float)
        vals = np.interp(nu, nus, cs)
        return np.where(nu < domain, np.inf, vals)

    def lookup_array(self, nu, rho: float) -> np.ndarray:
        rhos = [b[0] for b in self.blocks]
        r = abs(float(rho))
        if r <= rhos[0] or len(rhos) == 1:
            return self._block_eval(0, nu)
        if r >= rhos[-1]:
            return self._block_eval(len(rhos) - 1, nu)
        j = bisect_right(rhos, r)
        r0, r1 = rhos[j - 1], rhos[j]
        w = (r - r0) / (r1 - r0)
        return (1.0 - w) * self._block_eval(j - 1, nu) + w * self._block_eval(j, nu)

    def lookup(self, nu: float, rho: float) -> float:
        return float(self.lookup_array(np.array([nu]), rho)[0])


def load_two_sided_table(path) -> TwoSidedTable:
    """Load an external two-sided table in the curve CSV format."""
    meta, rows = _parse_curve_file(path)
    return TwoSidedTable(blocks=tuple(_group_blocks(meta, rows)))


# ---------------------------------------------------------------------------
# Disk + memory cache.
# ---------------------------------------------------------------------------


def snap_rho_to_grid(rho: float) -> float:
    """Nearest not-smaller |rho| on the tabulation grid {0.00..0.99, cap}."""
    r = abs(float(rho))
    if r > 0.99:
        return RHO_CAP
    snapped = float(np.ceil(r * 100.0 - 1e-9) / 100.0)
    if snapped <= 0.0:
        return 0.0
    return min(snapped, 0.99)


class CurveCache:
    """Build-once curve store keyed by (rho, alpha, build config).

    ``directory=None`` keeps curves in memory only. Disk writes go through
    a temporary file and an atomic rename, so concurrent builders can race
    without corrupting the cache.
    """

    def __init__(self, directory=None, cfg: CurveBuildConfig | None = None):
        self.directory = directory
        self.cfg = cfg or CurveBuildConfig()
        self._memory: dict[tuple[str, str, str], CriticalValueCurve] = {}

    def _filename(self, rho_abs: float, alpha: float) -> str:
        return f"vtfo_rho{rho_abs!r}_alpha{alpha!r}_{self.cfg.cache_key()}.csv"

    def get(self, rho: float, alpha: float = 0.05) -> CriticalValueCurve:
        rho_abs = abs(float(rho))
        key = (repr(rho_abs), repr(float(alpha)), self.cfg.cache_key())
        hit = self._memory.get(key)
        if hit is not None:
            return hit
        path = None
        if self.directory is not None:
            path = os.path.join(self.directory, self._filename(rho_abs, alpha))
            if os.path.exists(path):
                curve = load_curve_csv(path)[0]
                self._memory[key] = curve
                return curve
        curve = build_vtfo_curve(rho_abs, alpha, self.cfg)
        if path is not None:
            os.makedirs(self.directory, exist_ok=True)
            fd, tmp = tempfile.mkstemp(dir=self.directory, suffix=".tmp")
            os.close(fd)
            try:
                write_curve_csv(tmp, curve)
                os.replace(tmp, path)
            finally:
                if os.path.exists(tmp):
                    os.unlink(tmp)
        self._memory[key] = curve
        return curve
