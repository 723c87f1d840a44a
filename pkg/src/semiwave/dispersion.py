"""Characteristic functions of the linearized wave equation and their roots.

The family studied here is

    R(z, c) = z^2 - c z - q + p * M(z, c),       p > q > 0,

where M is a kernel transform.  Specializing (q, p) to the slopes at the
trivial state gives the function whose positive roots control admissible
exponential tails; specializing to (inf f', L) gives the constructive
variant used by the envelope construction.  The minimal speed is the
smallest c for which a positive root exists; at that speed the root is a
tangency (double root).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from .errors import BadBracket, DomainExceeded, InvalidParameter
from .kernels import ABSCISSA_MARGIN, Kernel, transform

__all__ = [
    "DispersionFunction",
    "TransformDomain",
    "RootReport",
    "SpeedResult",
    "transform_domain",
    "eval_R",
    "mu_q",
    "positive_roots",
    "minimal_speed",
    "default_speed_bracket",
    "chi_identity_check",
]

ROOT_TOL = 1e-9        # z-tolerance of bracketed root refinement
DOUBLE_TOL = 1e-6      # |min R| below which a rootless minimum counts as double
DOUBLE_GAP = 1e-4      # root separation below which a pair counts as double
SPEED_TOL = 1e-9       # c-bisection tolerance of minimal_speed
N_GRID = 256           # initial scan resolution in z


@dataclass(frozen=True)
class DispersionFunction:
    """One member of the characteristic family: decay coefficient q, growth
    coefficient p, and the kernel whose transform closes the formula."""
    q: float
    p: float
    kernel: Kernel

    def __post_init__(self) -> None:
        if not (self.p > self.q > 0.0):
            raise InvalidParameter(
                f"need p > q > 0, got p={self.p:g}, q={self.q:g}")


@dataclass(frozen=True)
class TransformDomain:
    """Usable tilt interval [z_lo, z_hi) at a given speed."""
    c: float
    z_lo: float
    z_hi: float


@dataclass(frozen=True)
class RootReport:
    """Positive roots of R(. , c) with the tangency classification.

    `min_value`/`min_z` describe the refined minimum of R over the scan
    interval; when no sign change exists they quantify how far the curve
    stays from tangency.
    """
    c: float
    roots: tuple[float, ...]
    is_double: bool
    bound_mu_q: float
    min_value: float
    min_z: float


@dataclass(frozen=True)
class SpeedResult:
    """Outcome of the minimal-speed bisection."""
    c_min: float
    lambda_tangent: float
    bracket: tuple[float, float]
    evaluations: int
    bracket_capped: bool = False


def transform_domain(kernel: Kernel, c: float) -> TransformDomain:
    """The interval on which R(. , c) can be evaluated.

    For the built-in closed forms the first pole coincides with the
    convergence abscissa, so a single bound suffices.
    """
    z_hi = kernel.abscissa(c)
    if not z_hi > 0.0:
        raise DomainExceeded(f"empty transform domain at c={c:g}")
    return TransformDomain(c=c, z_lo=0.0, z_hi=z_hi)


def eval_R(d: DispersionFunction, z: float, c: float,
           method: str = "auto") -> float:
    """R(z, c) = z^2 - c z - q + p M(z, c)."""
    return z * z - c * z - d.q + d.p * transform(d.kernel, z, c, method=method)


def mu_q(c: float, q: float) -> float:
    """Positive root of z^2 - c z - q = 0; an upper bound for all roots."""
    if q <= 0.0:
        raise InvalidParameter("q must be positive")
    return 0.5 * (c + math.sqrt(c * c + 4.0 * q))


def _scan_cap(d: DispersionFunction, c: float) -> float:
    """Upper end of the root-scan interval: stay inside the transform domain
    (with margin) and below the universal root bound."""
    dom = transform_domain(d.kernel, c)
    cap = mu_q(c, d.q)
    if math.isfinite(dom.z_hi):
        cap = min(cap, ABSCISSA_MARGIN * dom.z_hi * 0.999)
    return cap


def _refined_min(d: DispersionFunction, c: float,
                 n_grid: int = N_GRID) -> tuple[float, float]:
    """Minimum of R(. , c) over the scan interval: coarse grid, then a
    bounded scalar minimization around the grid argmin."""
    cap = _scan_cap(d, c)
    z = np.linspace(cap / n_grid, cap, n_grid)
    vals = np.array([eval_R(d, zz, c) for zz in z])
    i = int(np.argmin(vals))
    lo = z[i - 1] if i > 0 else z[0] * 1e-3
    hi = z[i + 1] if i + 1 < len(z) else cap
    res = minimize_scalar(lambda zz: eval_R(d, zz, c), bounds=(lo, hi),
                          method="bounded", options={"xatol": 1e-12})
    if res.fun < vals[i]:
        return float(res.fun), float(res.x)
    return float(vals[i]), float(z[i])


def positive_roots(d: DispersionFunction, c: float,
                   root_tol: float = ROOT_TOL,
                   double_tol: float = DOUBLE_TOL,
                   n_grid: int = N_GRID) -> RootReport:
    """Find the (at most two) positive roots of R(. , c).

    Scans a refining grid below min(transform domain, root bound), brackets
    sign changes and polishes each with a bracketed root solver.  A rootless
    scan whose refined minimum sits within `double_tol` of zero, or a pair
    closer than the tangency gap, is classified as a double root.
    """
    cap = _scan_cap(d, c)
    bound = mu_q(c, d.q)
    z = np.linspace(cap / n_grid, cap, n_grid)
    vals = np.array([eval_R(d, zz, c) for zz in z])

    brackets = []
    signs = np.sign(vals)
    for i in np.nonzero(signs[:-1] * signs[1:] < 0)[0]:
        brackets.append((z[i], z[i + 1]))
    if len(brackets) > 2:
        raise InvalidParameter(
            f"{len(brackets)} sign changes found at c={c:g}; the scan "
            "tolerances are misconfigured (at most two roots can exist)")

    min_val, min_z = _refined_min(d, c, n_grid)

    if not brackets and min_val < 0.0:
        # the dip lies between grid nodes; bracket it around the minimum
        span = cap / n_grid
        brackets = [(max(min_z - span, z[0] * 1e-3), min_z), (min_z, min(min_z + span, cap))]

    roots = []
    for lo, hi in brackets:
        f_lo, f_hi = eval_R(d, lo, c), eval_R(d, hi, c)
        if f_lo == 0.0:
            roots.append(lo)
            continue
        if f_lo * f_hi > 0.0:
            continue
        roots.append(float(brentq(lambda zz: eval_R(d, zz, c), lo, hi,
                                  xtol=root_tol)))
    roots = tuple(sorted(roots))

    if len(roots) == 2:
        is_double = (roots[1] - roots[0]) < DOUBLE_GAP
    elif not roots:
        is_double = 0.0 <= min_val <= double_tol
        if is_double and min_val <= root_tol:
            # a genuine tangency: both coincident roots are reportable
            roots = (min_z, min_z)
    else:
        is_double = False
    return RootReport(c=c, roots=roots, is_double=is_double,
                      bound_mu_q=bound, min_value=min_val, min_z=min_z)


def default_speed_bracket(d: DispersionFunction,
                          beta_ref: float | None = None) -> tuple[float, float, bool]:
    """Grow an upper speed geometrically from 1 until a root appears.

    Returns (lo, hi, capped); `capped` means the heuristic ceiling
    2 sqrt(beta_ref p) was reached without finding roots, which callers
    should surface as a warning.
    """
    beta_ref = beta_ref if beta_ref is not None else 2.0 * d.p + 1.0
    cap = 2.0 * math.sqrt(beta_ref * d.p)
    lo = 0.0
    if _refined_min(d, lo)[0] <= 0.0:
        raise BadBracket("roots already exist at c=0; supply a bracket "
                         "with a negative lower end")
    hi = 1.0
    while _refined_min(d, hi)[0] > 0.0:
        hi *= 2.0
        if hi > cap:
            return lo, cap, True
    return lo, hi, False


def minimal_speed(d: DispersionFunction,
                  c_bracket: tuple[float, float] | None = None,
                  speed_tol: float = SPEED_TOL,
                  n_grid: int = N_GRID) -> SpeedResult:
    """Smallest speed at which R(. , c) admits a positive root.

    Bisects on the indicator min_z R(z, c) <= 0, which is monotone in c for
    the kernels considered here (the transform decreases in c at positive
    tilt).  The returned speed is the upper end of the final bracket, where
    a root is guaranteed to exist.
    """
    capped = False
    if c_bracket is None:
        lo, hi, capped = default_speed_bracket(d)
        if capped and _refined_min(d, hi, n_grid)[0] > 0.0:
            raise BadBracket(
                f"no roots up to the heuristic cap c={hi:g}; supply c_bracket")
    else:
        lo, hi = c_bracket

    evals = 0

    def has_root(c: float) -> bool:
        nonlocal evals
        evals += 1
        return _refined_min(d, c, n_grid)[0] <= 0.0

    if has_root(lo):
        raise BadBracket(f"roots already exist at the lower end c={lo:g}")
    if not has_root(hi):
        raise BadBracket(f"no roots at the upper end c={hi:g}")

    while hi - lo > speed_tol:
        mid = 0.5 * (lo + hi)
        if has_root(mid):
            hi = mid
        else:
            lo = mid

    _, lam = _refined_min(d, hi, n_grid)
    return SpeedResult(c_min=hi, lambda_tangent=lam, bracket=(lo, hi),
                       evaluations=evals, bracket_capped=capped)


def chi_identity_check(d: DispersionFunction, beta: float, c: float,
                       z_grid) -> float:
    """Cross-check the two expressions for the variational characteristic
    function chi(z) = -R(z, c) / (beta + c z - z^2).

    Evaluates chi both from its integral-equation form and from the ratio
    form on the given grid and returns the maximum absolute discrepancy.
    Also verifies chi(0) = (q - p)/beta < 0 in both routes.
    """
    if beta <= d.q:
        raise InvalidParameter("beta must exceed the decay coefficient q")
    mu_beta = mu_q(c, beta)
    dom = transform_domain(d.kernel, c)
    z_grid = np.asarray(z_grid, dtype=float)
    if np.any(z_grid < 0.0) or np.any(z_grid >= mu_beta) or \
            np.any(z_grid >= ABSCISSA_MARGIN * dom.z_hi):
        raise DomainExceeded(
            "z grid must lie in [0, mu_beta(c)) within the transform domain")

    # chi(0) both ways: the transform is exactly 1 at z = 0
    chi0_integral = 1.0 - (beta - d.q) / beta - d.p / beta
    chi0_ratio = -(0.0 - 0.0 - d.q + d.p) / beta
    if not (chi0_integral < 0.0 and chi0_ratio < 0.0):
        raise InvalidParameter("chi(0) must be negative when p > q")
    worst = abs(chi0_integral - chi0_ratio)

    for z in z_grid:
        den = beta + c * z - z * z
        m = transform(d.kernel, float(z), c)
        chi_integral = 1.0 - (beta - d.q) / den - d.p * m / den
        chi_ratio = -(z * z - c * z - d.q + d.p * m) / den
        worst = max(worst, abs(chi_integral - chi_ratio))
    return worst
