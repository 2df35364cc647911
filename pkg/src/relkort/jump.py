"""End-state problem for phase-boundary fronts.

A state pair (nu_minus, nu_plus) on opposite convex branches is admissible
when it satisfies the reduced jump conditions

    (r'(nu))^2 (1 + m^2/nu^2) = c^2
    p(nu) + (r'(nu)/nu) m^2   = q1

for common constants (c, q1).  Geometrically the pair is a self-intersection
of the plane curve

    X_m(nu) = ( (r'(nu))^2 (1 + m^2/nu^2),  p(nu) + (r'(nu)/nu) m^2 ).

At m = 0 the intersection is the classical equal-area (Maxwell) pair: equal
pressure and equal index derivative in the two phases.  For m > 0 the pair
continues as a one-parameter family, tracked here by damped Newton marching.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .eos import Eos, TOL_ROOT, find_spinodal, p_check
from .errors import (
    BracketError,
    NewtonDiverged,
    PressureOutOfWindow,
    SpinodalCrossing,
    WindowCollapse,
)

TOL_NEWTON = 1e-11      # max-norm residual tolerance for the 2x2 solves
MAX_NEWTON_ITER = 50
WINDOW_INSET_FRAC = 1e-9  # relative inset of the Maxwell bisection window
MAX_DM_HALVINGS = 8


@dataclass
class MaxwellStates:
    """Zero-flux solution: common pressure and index derivative."""
    pi_star: float
    c: float
    nu_minus0: float
    nu_plus0: float


@dataclass
class FamilyRow:
    m: float
    nu_minus: float
    nu_plus: float
    c: float
    q1: float
    q0: float


@dataclass
class EndStateFamily:
    """Continuation table of admissible state pairs, m strictly increasing."""
    rows: list
    m_bar_numeric: float
    stopped_by: str = "fold"   # "fold" | "m_max"

    def as_array(self) -> np.ndarray:
        return np.array(
            [[r.m, r.nu_minus, r.nu_plus, r.c, r.q1, r.q0] for r in self.rows]
        )

    def row_at(self, m: float, atol: float = 1e-12):
        for r in self.rows:
            if abs(r.m - m) <= atol:
                return r
        raise KeyError(f"no family row at m={m}")


def curve_point(eos: Eos, m: float, nu: float):
    """Evaluate X_m(nu) = (X1, X2)."""
    eos.require_in_domain(nu)
    r1 = float(eos.r1(nu))
    x1 = r1 * r1 * (1.0 + m * m / (nu * nu))
    x2 = float(p_check(eos, nu)) + (r1 / nu) * m * m
    return x1, x2


def spinodal_pressures(eos: Eos):
    """(p(nu_B), p(nu_A)); raises WindowCollapse when not a proper window."""
    nu_a, nu_b = find_spinodal(eos)
    p_a = float(p_check(eos, nu_a))
    p_b = float(p_check(eos, nu_b))
    if p_b >= p_a:
        raise WindowCollapse(f"pressure window collapsed: p(nu_B)={p_b} >= p(nu_A)={p_a}")
    return p_b, p_a


def _root_on_branch(eos: Eos, pi: float, branch: str, clamp: bool,
                    tol_root: float) -> float:
    """Root of p(nu) = pi on one convex branch (p is increasing there).

    With clamp=True a root pushed past the domain edge by truncation is
    replaced by the edge itself (used by the area function, whose bracketing
    signs survive the clamping); with clamp=False that case raises
    BracketError.
    """
    lo, hi = eos.domain
    nu_a, nu_b = find_spinodal(eos)
    a, b = (lo, nu_a) if branch == "low" else (nu_b, hi)
    fa = float(p_check(eos, a)) - pi
    fb = float(p_check(eos, b)) - pi
    atol = 1e-12 * max(1.0, abs(pi))
    if abs(fa) <= atol:
        return a
    if abs(fb) <= atol:
        return b
    if fa > 0.0 or fb < 0.0:
        if clamp:
            return a if fa > 0.0 else b
        raise BracketError(
            f"root of p(nu)={pi} on branch {branch!r} truncated by domain [{lo}, {hi}]"
        )
    return brentq(lambda x: float(p_check(eos, x)) - pi, a, b, xtol=tol_root)


def pressure_roots(eos: Eos, pi: float, branch: str = "both",
                   tol_root: float = TOL_ROOT):
    """Unique roots of p(nu) = pi in the two stable phases.

    The admissible window is p(nu_B) < pi < p(nu_A); values at the window
    edges are accepted within a closed tolerance and yield the spinodal
    point itself.  branch selects "low", "high", or "both" (a pair).
    """
    p_b, p_a = spinodal_pressures(eos)
    atol = 1e-12 * max(1.0, abs(p_a), abs(p_b))
    if pi < p_b - atol or pi > p_a + atol:
        raise PressureOutOfWindow(
            f"pi={pi} outside pressure window ({p_b}, {p_a})"
        )
    pi = min(max(pi, p_b), p_a)
    if branch == "low":
        return _root_on_branch(eos, pi, "low", False, tol_root)
    if branch == "high":
        return _root_on_branch(eos, pi, "high", False, tol_root)
    if branch == "both":
        return (
            _root_on_branch(eos, pi, "low", False, tol_root),
            _root_on_branch(eos, pi, "high", False, tol_root),
        )
    raise ValueError(f"branch must be 'low', 'high' or 'both', got {branch!r}")


def area_function(eos: Eos, pi: float, tol_root: float = TOL_ROOT) -> float:
    """Equal-area indicator I(pi) = r'(nu_plus(pi)) - r'(nu_minus(pi)).

    Strictly decreasing where both roots are interior, positive at the
    bottom of the window and negative at the top, so its unique zero is the
    Maxwell pressure.  Roots truncated by the domain are clamped to the
    domain edge, which preserves those bracketing signs.
    """
    p_b, p_a = spinodal_pressures(eos)
    atol = 1e-12 * max(1.0, abs(p_a), abs(p_b))
    if pi < p_b - atol or pi > p_a + atol:
        raise PressureOutOfWindow(f"pi={pi} outside pressure window ({p_b}, {p_a})")
    pi = min(max(pi, p_b), p_a)
    nu_m = _root_on_branch(eos, pi, "low", True, tol_root)
    nu_p = _root_on_branch(eos, pi, "high", True, tol_root)
    return float(eos.r1(nu_p)) - float(eos.r1(nu_m))


def maxwell(eos: Eos, tol_root: float = TOL_ROOT) -> MaxwellStates:
    """Equal-pressure, equal-derivative state pair at zero mass flux.

    Bisects the area indicator over the pressure window (inset by a
    relative margin to avoid the double roots at the spinodal pressures,
    intersected with the pressures actually attained on the domain).
    """
    lo, hi = eos.domain
    p_b, p_a = spinodal_pressures(eos)
    w_lo = max(p_b, float(p_check(eos, lo)))
    w_hi = min(p_a, float(p_check(eos, hi)))
    eps_w = WINDOW_INSET_FRAC * (p_a - p_b)
    a, b = w_lo + eps_w, w_hi - eps_w
    if not a < b:
        raise WindowCollapse(f"empty Maxwell search window ({a}, {b})")
    ia = area_function(eos, a, tol_root)
    ib = area_function(eos, b, tol_root)
    if not (ia > 0.0 > ib):
        raise WindowCollapse(
            f"area indicator does not change sign on ({a}, {b}): I={ia}, {ib}"
        )
    pi_star = brentq(lambda p: area_function(eos, p, tol_root), a, b, xtol=tol_root)
    nu_m, nu_p = pressure_roots(eos, pi_star, "both", tol_root)
    return MaxwellStates(
        pi_star=pi_star,
        c=float(eos.r1(nu_m)),
        nu_minus0=nu_m,
        nu_plus0=nu_p,
    )


def rh_residual(eos: Eos, nu: float, m: float, c: float, q1: float):
    """Residuals of the two reduced jump conditions at a single state."""
    x1, x2 = curve_point(eos, m, nu)
    return x1 - c * c, x2 - q1


def _curve_derivative(eos: Eos, m: float, nu: float):
    """d X_m / d nu."""
    r1 = float(eos.r1(nu))
    r2 = float(eos.r2(nu))
    m2 = m * m
    d1 = 2.0 * r1 * r2 * (1.0 + m2 / nu**2) - 2.0 * r1 * r1 * m2 / nu**3
    d2 = nu * r2 + m2 * (r2 * nu - r1) / nu**2
    return d1, d2


def end_state_jacobian(eos: Eos, m: float, nu_minus: float, nu_plus: float) -> np.ndarray:
    """Jacobian of F(nu_minus, nu_plus) = X_m(nu_minus) - X_m(nu_plus)."""
    dm1, dm2 = _curve_derivative(eos, m, nu_minus)
    dp1, dp2 = _curve_derivative(eos, m, nu_plus)
    return np.array([[dm1, -dp1], [dm2, -dp2]])


def end_states(eos: Eos, m: float, seed, tol_newton: float = TOL_NEWTON):
    """Solve X_m(nu_minus) = X_m(nu_plus) by damped Newton from a seed pair.

    Returns (nu_minus, nu_plus, c, q1) with c = sqrt(X1), q1 = X2 at the
    intersection.  Iterates must stay on their branches: nu_minus in
    (nu_lo, nu_A), nu_plus in (nu_B, nu_hi).
    """
    lo, hi = eos.domain
    nu_a, nu_b = find_spinodal(eos)
    x = np.array([seed[0], seed[1]], dtype=float)

    def check_branches(v, what):
        if not (lo <= v[0] < nu_a and nu_b < v[1] <= hi):
            raise SpinodalCrossing(
                f"{what} ({v[0]:.6g}, {v[1]:.6g}) leaves branches "
                f"({lo}, {nu_a}) x ({nu_b}, {hi})"
            )

    check_branches(x, "seed")

    def residual(v):
        a1, a2 = curve_point(eos, m, v[0])
        b1, b2 = curve_point(eos, m, v[1])
        return np.array([a1 - b1, a2 - b2])

    f = residual(x)
    fnorm = np.max(np.abs(f))
    for _ in range(MAX_NEWTON_ITER):
        if fnorm <= 0.05 * tol_newton:
            break
        jac = end_state_jacobian(eos, m, x[0], x[1])
        try:
            step = np.linalg.solve(jac, -f)
        except np.linalg.LinAlgError as exc:
            raise NewtonDiverged(f"singular Jacobian at {x}") from exc
        s = 1.0
        for _ in range(30):
            x_new = x + s * step
            if lo <= x_new[0] < nu_a and nu_b < x_new[1] <= hi:
                f_new = residual(x_new)
                if np.max(np.abs(f_new)) < (1.0 - 1e-4 * s) * fnorm:
                    break
            s *= 0.5
        else:
            check_branches(x + step, "iterate")
            raise NewtonDiverged(f"no residual decrease from {x} (m={m})")
        x, f = x_new, f_new
        fnorm = np.max(np.abs(f))
    if fnorm > tol_newton:
        raise NewtonDiverged(f"residual {fnorm:.3e} > {tol_newton} after iteration (m={m})")
    x1, x2 = curve_point(eos, m, x[0])
    return x[0], x[1], math.sqrt(x1), x2


def continue_family(eos: Eos, dm: float = 0.01, m_max=None,
                    tol_newton: float = TOL_NEWTON) -> EndStateFamily:
    """March the state pair in m, seeding each step with the previous row.

    Starts from the Maxwell pair at m = 0.  On a failed step the increment
    is halved (up to MAX_DM_HALVINGS times in total) before the march stops;
    the largest converged m is reported as m_bar_numeric.  m_max=None means
    continue until the family folds.
    """
    if dm <= 0:
        raise ValueError("dm must be positive")
    mx = maxwell(eos)
    nu_m, nu_p, c, q1 = end_states(eos, 0.0, (mx.nu_minus0, mx.nu_plus0), tol_newton)
    rows = [FamilyRow(0.0, nu_m, nu_p, c, q1, c * 0.0)]
    nu_a, nu_b = find_spinodal(eos)

    stopped_by = "fold"
    halvings = 0
    m = 0.0
    step = dm
    while True:
        if m_max is not None and m >= m_max - 1e-15:
            stopped_by = "m_max"
            break
        m_next = m + step
        if m_max is not None and m_next > m_max:
            m_next = m_max
        prev = rows[-1]
        try:
            nu_m, nu_p, c, q1 = end_states(
                eos, m_next, (prev.nu_minus, prev.nu_plus), tol_newton
            )
            if not (nu_m < nu_a < nu_b < nu_p):
                raise NewtonDiverged("converged pair violates branch ordering")
        except (NewtonDiverged, SpinodalCrossing):
            halvings += 1
            if halvings > MAX_DM_HALVINGS:
                break
            step *= 0.5
            continue
        rows.append(FamilyRow(m_next, nu_m, nu_p, c, q1, c * m_next))
        m = m_next
    return EndStateFamily(rows=rows, m_bar_numeric=rows[-1].m, stopped_by=stopped_by)
