"""Barotropic equation of state expressed through the energy law r(nu).

The fluid state is parametrized by the conjugate index nu.  An Eos bundles
the energy law r and its first three derivatives, the capillarity
coefficient kappa with its derivative, a closed domain [nu_lo, nu_hi], and
the cached spinodal pair (nu_A, nu_B) where r'' changes sign.

Derived quantities:
    f    = r'(nu)                 (Lichnerowicz index, dual variable)
    p    = nu*r'(nu) - r(nu)      (pressure; written p_check below)
    cs2  = nu*r''(nu) / r'(nu)    (squared sound speed; negative inside
                                   the spinodal region)

Energy and pressure are Legendre conjugate on each convex branch:
    r(nu) + pi(f) = nu*f   with   f = r'(nu), nu = pi'(f).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from numpy.polynomial import Polynomial
from scipy.interpolate import CubicSpline
from scipy.optimize import brentq

from .errors import (
    ConfigError,
    DomainError,
    MalformedSpinodal,
    NoSpinodal,
    RangeError,
)

TOL_ROOT = 1e-12     # scalar bisection / Newton tolerance
TOL_DUAL = 1e-10     # Legendre duality identity tolerance
N_GRID = 1001        # dense-grid size for validation and sign scans


@dataclass
class Eos:
    """Barotropic energy law with capillarity coefficient.

    Immutable by convention after construction; the spinodal cache is the
    only field written post-init (once, by find_spinodal), so instances are
    safe to share across workers.
    """

    r: Callable[[np.ndarray], np.ndarray]
    r1: Callable[[np.ndarray], np.ndarray]
    r2: Callable[[np.ndarray], np.ndarray]
    r3: Callable[[np.ndarray], np.ndarray]
    kappa: Callable[[np.ndarray], np.ndarray]
    kappa1: Callable[[np.ndarray], np.ndarray]
    domain: tuple[float, float]
    spinodal: Optional[tuple[float, float]] = None
    # ascending power coefficients when the energy law is polynomial;
    # enables exact Taylor recentering in quad_remainder
    poly_coeffs: Optional[np.ndarray] = field(default=None, repr=False)
    label: str = ""

    def __post_init__(self):
        lo, hi = self.domain
        if not (0.0 < lo < hi):
            raise ConfigError(f"invalid domain [{lo}, {hi}]: need 0 < lo < hi")

    def contains(self, nu: float) -> bool:
        lo, hi = self.domain
        return lo <= nu <= hi

    def require_in_domain(self, nu: float) -> None:
        if not np.all((self.domain[0] <= np.asarray(nu)) & (np.asarray(nu) <= self.domain[1])):
            raise DomainError(
                f"nu={nu} outside domain [{self.domain[0]}, {self.domain[1]}]"
            )

    def quad_remainder(self, nu, nu_star: float):
        """Stable (r(nu) - r(nu*) - r'(nu*)*(nu-nu*)) / (nu-nu*)**2.

        Direct evaluation of the numerator loses all significant digits
        near nu*; profile tails need this quantity at |nu-nu*| ~ 1e-6.
        Polynomial laws are recentered exactly; other representations fall
        back to a two-term Taylor form close to nu*.
        """
        dnu = np.asarray(nu, dtype=float) - nu_star
        if self.poly_coeffs is not None:
            shifted = _taylor_shift(self.poly_coeffs, nu_star)
            out = _horner(shifted[2:], dnu)
            return out if out.ndim else float(out)
        # generic fallback: direct form away from nu*, Taylor inside
        scale = self.domain[1] - self.domain[0]
        cut = 1e-4 * scale
        direct_num = self.r(nu_star + dnu) - self.r(nu_star) - self.r1(nu_star) * dnu
        with np.errstate(divide="ignore", invalid="ignore"):
            direct = np.where(dnu != 0.0, direct_num / np.where(dnu != 0.0, dnu, 1.0) ** 2, 0.0)
        taylor = 0.5 * self.r2(nu_star) + self.r3(nu_star) * dnu / 6.0
        out = np.where(np.abs(dnu) < cut, taylor, direct)
        return out if out.ndim else float(out)

    # -- constructors -----------------------------------------------------

    @classmethod
    def polynomial(cls, coeffs: Sequence[float], domain, kappa=1.0, label="") -> "Eos":
        """Energy law r(nu) = sum_k coeffs[k] * nu**k (ascending powers)."""
        c = np.asarray(coeffs, dtype=float)
        p = Polynomial(c)
        d1, d2, d3 = p.deriv(1), p.deriv(2), p.deriv(3)
        kap, kap1 = _make_kappa(kappa)
        return cls(
            r=p, r1=d1, r2=d2, r3=d3,
            kappa=kap, kappa1=kap1,
            domain=(float(domain[0]), float(domain[1])),
            poly_coeffs=c, label=label,
        )

    @classmethod
    def tabulated(cls, nu: Sequence[float], r: Sequence[float], kappa=1.0, label="") -> "Eos":
        """C2 interpolant through (nu_i, r_i); nu strictly increasing."""
        nu = np.asarray(nu, dtype=float)
        r = np.asarray(r, dtype=float)
        if nu.ndim != 1 or nu.shape != r.shape or len(nu) < 4:
            raise ConfigError("tabulated EOS needs matching 1-d arrays of length >= 4")
        if not np.all(np.diff(nu) > 0):
            raise ConfigError("tabulated EOS samples must be strictly increasing in nu")
        spline = CubicSpline(nu, r)
        kap, kap1 = _make_kappa(kappa)
        return cls(
            r=spline, r1=spline.derivative(1), r2=spline.derivative(2),
            r3=spline.derivative(3),
            kappa=kap, kappa1=kap1,
            domain=(float(nu[0]), float(nu[-1])), label=label,
        )

    @classmethod
    def from_config(cls, cfg: dict) -> "Eos":
        """Build from a config mapping and enforce the validation report."""
        kind = cfg.get("kind")
        kappa = cfg.get("kappa", {"kind": "constant", "value": 1.0})
        label = cfg.get("label", "")
        if kind == "polynomial":
            try:
                eos = cls.polynomial(cfg["coeffs"], cfg["domain"], kappa, label)
            except KeyError as exc:
                raise ConfigError(f"polynomial EOS config missing key {exc}") from exc
        elif kind == "tabulated":
            try:
                eos = cls.tabulated(cfg["nu"], cfg["r"], kappa, label)
            except KeyError as exc:
                raise ConfigError(f"tabulated EOS config missing key {exc}") from exc
        else:
            raise ConfigError(f"unknown EOS kind {kind!r}")
        report = validate(eos)
        if not report.ok:
            raise ConfigError(f"EOS config fails validation: {report.summary()}")
        return eos

    @classmethod
    def load(cls, path) -> "Eos":
        with open(path, "r", encoding="utf-8") as fh:
            return cls.from_config(json.load(fh))


def _make_kappa(spec):
    """Capillarity coefficient from a constant, callable pair, or config dict."""
    if isinstance(spec, (int, float)):
        k = float(spec)
        return (lambda nu: np.full_like(np.asarray(nu, dtype=float), k) if np.ndim(nu) else k,
                lambda nu: np.zeros_like(np.asarray(nu, dtype=float)) if np.ndim(nu) else 0.0)
    if isinstance(spec, dict):
        kind = spec.get("kind")
        if kind == "constant":
            return _make_kappa(float(spec["value"]))
        if kind == "polynomial":
            p = Polynomial(np.asarray(spec["coeffs"], dtype=float))
            return p, p.deriv(1)
        raise ConfigError(f"unknown kappa kind {spec.get('kind')!r}")
    if isinstance(spec, tuple) and len(spec) == 2:
        return spec
    raise ConfigError(f"cannot interpret kappa spec {spec!r}")


def _taylor_shift(coeffs: np.ndarray, x0: float) -> np.ndarray:
    """Coefficients b with p(x0 + d) = sum_j b[j] d**j (exact recentering)."""
    n = len(coeffs)
    b = np.zeros(n)
    for k in range(n - 1, -1, -1):
        # synthetic Horner step: b accumulates the shifted expansion
        for j in range(n - 1 - k, 0, -1):
            b[j] = b[j] * x0 + b[j - 1]
        b[0] = b[0] * x0 + coeffs[k]
    return b


def _horner(coeffs: np.ndarray, x):
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    for c in coeffs[::-1]:
        out = out * x + c
    return out


@dataclass
class EosPoint:
    """Pointwise EOS evaluation record."""
    r: float
    r1: float
    r2: float
    p_check: float
    f: float
    cs2: float


def evaluate(eos: Eos, nu: float) -> EosPoint:
    """Evaluate energy, pressure, Lichnerowicz index and sound speed at nu."""
    eos.require_in_domain(nu)
    r = float(eos.r(nu))
    r1 = float(eos.r1(nu))
    r2 = float(eos.r2(nu))
    return EosPoint(
        r=r, r1=r1, r2=r2,
        p_check=nu * r1 - r,
        f=r1,
        cs2=nu * r2 / r1,
    )


def p_check(eos: Eos, nu):
    """Pressure nu*r'(nu) - r(nu); vectorized, no domain check."""
    return nu * eos.r1(nu) - eos.r(nu)


def find_spinodal(eos: Eos, tol_root: float = TOL_ROOT, n_grid: int = N_GRID):
    """Locate the two sign changes of r'' and cache them on the Eos.

    Raises NoSpinodal when r'' keeps one sign, MalformedSpinodal when the
    sign pattern on the domain is anything other than (+, -, +).
    """
    if eos.spinodal is not None:
        return eos.spinodal
    lo, hi = eos.domain
    grid = np.linspace(lo, hi, n_grid)
    vals = np.asarray(eos.r2(grid), dtype=float)
    signs = np.sign(vals)
    nz = signs != 0
    comp_idx = np.flatnonzero(nz)
    comp = signs[comp_idx]
    changes = np.flatnonzero(comp[1:] * comp[:-1] < 0)
    if len(changes) == 0:
        raise NoSpinodal("r'' has no sign change on the domain")
    pattern = [comp[0]] + [comp[i + 1] for i in changes]
    if len(changes) != 2 or pattern != [1.0, -1.0, 1.0]:
        raise MalformedSpinodal(
            f"r'' sign pattern {pattern} is not (+, -, +) on [{lo}, {hi}]"
        )
    roots = []
    for i in changes:
        a, b = grid[comp_idx[i]], grid[comp_idx[i + 1]]
        roots.append(brentq(lambda x: float(eos.r2(x)), a, b, xtol=tol_root))
    nu_a, nu_b = roots
    eos.spinodal = (nu_a, nu_b)
    return eos.spinodal


@dataclass
class ValidationReport:
    """Grid-based admissibility report; never raises."""
    ok: bool
    failures: list            # (condition, first violating nu)
    max_cs2_stable: Optional[float]
    causality_warning: bool
    n_grid: int
    spinodal: Optional[tuple[float, float]] = None

    def summary(self) -> str:
        if self.ok:
            s = "all conditions pass"
        else:
            s = "; ".join(f"{cond} fails first at nu={nu:.6g}" for cond, nu in self.failures)
        if self.causality_warning:
            s += f" (warning: cs2 up to {self.max_cs2_stable:.4g} > 1 in the stable region)"
        return s


def validate(eos: Eos, n_grid: int = N_GRID) -> ValidationReport:
    """Check r > 0, nu*r' > r and kappa > 0 on a dense grid.

    Also reports the max squared sound speed over the stable region
    (r'' > 0) with a superluminal warning when it exceeds 1; the warning
    is informational only.  Fills the spinodal cache as a side effect when
    the EOS is of van der Waals type.
    """
    lo, hi = eos.domain
    grid = np.linspace(lo, hi, n_grid)
    r = np.asarray(eos.r(grid), dtype=float)
    r1 = np.asarray(eos.r1(grid), dtype=float)
    r2 = np.asarray(eos.r2(grid), dtype=float)
    kap = np.asarray(eos.kappa(grid), dtype=float)

    failures = []
    for cond, bad in (
        ("r > 0", r <= 0),
        ("nu*r' > r", grid * r1 - r <= 0),
        ("kappa > 0", kap <= 0),
    ):
        idx = np.flatnonzero(bad)
        if len(idx):
            failures.append((cond, float(grid[idx[0]])))

    max_cs2 = None
    warning = False
    stable = (r2 > 0) & (r1 > 0)
    if np.any(stable):
        cs2 = grid[stable] * r2[stable] / r1[stable]
        max_cs2 = float(np.max(cs2))
        warning = max_cs2 > 1.0

    spin = eos.spinodal
    if spin is None and not failures:
        try:
            spin = find_spinodal(eos, n_grid=n_grid)
        except (NoSpinodal, MalformedSpinodal):
            spin = None

    return ValidationReport(
        ok=not failures,
        failures=failures,
        max_cs2_stable=max_cs2,
        causality_warning=warning,
        n_grid=n_grid,
        spinodal=spin,
    )


def branch_interval(eos: Eos, branch: str) -> tuple[float, float]:
    """Closed nu-interval of the requested convex branch.

    "low" is (nu_lo, nu_A), "high" is (nu_B, nu_hi); a globally convex EOS
    (no spinodal) exposes its full domain under either name.
    """
    lo, hi = eos.domain
    try:
        nu_a, nu_b = find_spinodal(eos)
    except NoSpinodal:
        return lo, hi
    if branch == "low":
        return lo, nu_a
    if branch == "high":
        return nu_b, hi
    raise ValueError(f"branch must be 'low' or 'high', got {branch!r}")


def legendre_pressure(eos: Eos, f: float, branch: str = "low",
                      tol_root: float = TOL_ROOT) -> float:
    """Legendre-conjugate pressure pi(f) = nu*f - r(nu) with r'(nu) = f.

    The dual variable is inverted on the requested convex branch, where r'
    is strictly increasing.  Satisfies pi(r'(nu)) = nu*r'(nu) - r(nu).
    """
    a, b = branch_interval(eos, branch)
    fa, fb = float(eos.r1(a)), float(eos.r1(b))
    pad = 1e-12 * max(1.0, abs(fa), abs(fb))
    if not (fa - pad <= f <= fb + pad):
        raise RangeError(
            f"f={f} not attained on branch {branch!r} (range [{fa:.6g}, {fb:.6g}])"
        )
    f = min(max(f, fa), fb)
    if f == fa:
        nu = a
    elif f == fb:
        nu = b
    else:
        nu = brentq(lambda x: float(eos.r1(x)) - f, a, b, xtol=tol_root)
    return nu * f - float(eos.r(nu))


def cubic_vdw() -> Eos:
    """Canonical test EOS: quartic energy law with spinodal exactly (1, 2).

    r(nu) = nu^4/12 - nu^3/2 + nu^2 + nu/2 - 1/20 on [0.2, 4], kappa = 1,
    so r''(nu) = (nu-1)(nu-2) and the pressure nu^4/4 - nu^3 + nu^2 + 1/20
    stays positive on the whole domain.
    """
    return Eos.polynomial(
        [-0.05, 0.5, 1.0, -0.5, 1.0 / 12.0],
        (0.2, 4.0),
        kappa=1.0,
        label="cubic-vdw",
    )
