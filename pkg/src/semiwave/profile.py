"""Semi-wavefront profiles by operator iteration inside an exponential
envelope.

The profile equation in the co-moving frame,

    y'' - c y' - f(y) + (k2 (*) g(y)) = 0,

is solved through its fixed-point form  phi = k1 * (k2 * g(phi) + f_beta(phi))
on a uniform grid, where k1 is the two-sided exponential Green kernel of
-d^2/dt^2 + c d/dt + beta, k2 is the space-time kernel projected onto the
moving-frame lag, and f_beta(s) = beta s - f(s).

The iteration starts from the upper envelope, is projected onto the band
between the explicit lower and upper envelopes while the birth term is
regularized to be exactly linear near 0 (which is what makes the band
invariant), and finishes with a polish phase under the original
nonlinearity.  Convergence is never assumed: it is certified a posteriori
through the fixed-point residual and the differential-equation residual.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import brentq
from scipy.signal import fftconvolve

from .dispersion import DispersionFunction, eval_R, mu_q, positive_roots
from .errors import (InvalidParameter, NoAdmissibleM, NoPositiveFixedPoint,
                     NotConverged, SandwichBroken, UnboundedDerivative)
from .kernels import Kernel, project

__all__ = [
    "Nonlinearity",
    "ConditionCheck",
    "HypothesisReport",
    "Grid",
    "WaveProblem",
    "Profile",
    "IterationTrace",
    "CriticalSpeedReport",
    "validate_hypotheses",
    "select_beta",
    "xi2_bound",
    "k1_eval",
    "make_wave_problem",
    "sub_super",
    "apply_G",
    "apply_A",
    "apply_L",
    "regularize",
    "solve_profile",
    "residual_ode",
    "persistence_check",
    "fixed_points_of_fg",
    "FixedPointReport",
    "critical_speed_profile",
]

CLIP_EPS = 1e-8         # clipping below this absolute size is bookkeeping noise
SANDWICH_CAP = 1e-5     # larger un-clipped band violations signal a bug
RESIDUAL_TOL = 1e-6     # fixed-point residual certifying convergence


# ---------------------------------------------------------------------------
# nonlinearity
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Nonlinearity:
    """The pair (f, g): monotone removal f and monostable birth g.

    Scalar descriptors (slopes at 0, linear majorant L, suprema) are caller
    supplied; `validate_hypotheses` checks them against dense samples.  The
    constructor is deliberately permissive so that invalid pairs can be
    built and then *reported* as invalid.
    """
    g: Callable[[np.ndarray], np.ndarray]
    g_prime0: float
    L: float
    g_sup: float
    f: Callable[[np.ndarray], np.ndarray]
    f_prime0: float
    f_inf_slope: float
    f_inverse: Callable[[float], float] | None = None
    name: str = "custom"

    @property
    def upper_bound(self) -> float:
        """A-priori bound sup g / inf f' for bounded profiles."""
        return self.g_sup / self.f_inf_slope

    def f_beta(self, beta: float) -> Callable[[np.ndarray], np.ndarray]:
        return lambda s: beta * s - self.f(s)

    def f_inv(self, y: float) -> float:
        """Inverse of f, closed form when supplied, else by bisection."""
        if self.f_inverse is not None:
            return self.f_inverse(y)
        if y <= 0.0:
            return 0.0
        hi = max(1.0, self.upper_bound)
        for _ in range(200):
            if self.f(hi) >= y:
                break
            hi *= 2.0
        else:
            raise InvalidParameter("f never reaches the requested value")
        return brentq(lambda s: self.f(s) - y, 0.0, hi, xtol=1e-13)


@dataclass(frozen=True)
class ConditionCheck:
    name: str
    ok: bool
    first_violation: float | None = None
    detail: str = ""


@dataclass(frozen=True)
class HypothesisReport:
    checks: tuple[ConditionCheck, ...]

    @property
    def all_ok(self) -> bool:
        return all(c.ok for c in self.checks)

    def __getitem__(self, name: str) -> ConditionCheck:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)


def validate_hypotheses(nl: Nonlinearity, samples: int = 400) -> HypothesisReport:
    """Check the monostability hypotheses and the two slope conditions on a
    log-spaced sample of [0, 10 * upper_bound].  Report-only."""
    ub = nl.g_sup / nl.f_inf_slope if nl.f_inf_slope > 0 else max(nl.g_sup, 1.0)
    s = np.concatenate(([0.0], np.geomspace(1e-9 * max(ub, 1.0), 10.0 * ub, samples)))
    gs = np.asarray(nl.g(s), dtype=float)
    fs = np.asarray(nl.f(s), dtype=float)
    checks = []

    # H1: g vanishes only at 0, stays positive, and has slope g_prime0 there
    ok, where, detail = True, None, ""
    if abs(gs[0]) > 0.0:
        ok, where, detail = False, 0.0, "g(0) != 0"
    else:
        bad = np.nonzero(gs[1:] <= 0.0)[0]
        if bad.size:
            ok, where, detail = False, float(s[1:][bad[0]]), "g(s) <= 0 for s > 0"
        else:
            tiny = s[1:6]
            slope = nl.g(tiny) / tiny
            if np.max(np.abs(slope - nl.g_prime0)) > 1e-3 * max(1.0, abs(nl.g_prime0)):
                ok, where = False, float(tiny[0])
                detail = f"g(s)/s near 0 is {slope[0]:.6g}, not g_prime0={nl.g_prime0:g}"
    checks.append(ConditionCheck("H1", ok, where, detail))

    # H2: f strictly increasing from 0, slope ordering, eventually above sup g
    ok, where, detail = True, None, ""
    if abs(fs[0]) > 0.0:
        ok, where, detail = False, 0.0, "f(0) != 0"
    elif not (0.0 < nl.f_prime0 < nl.g_prime0):
        ok, detail = False, f"slope ordering 0 < f'(0)={nl.f_prime0:g} < g'(0)={nl.g_prime0:g} fails"
    else:
        dec = np.nonzero(np.diff(fs) <= 0.0)[0]
        if dec.size:
            ok, where, detail = False, float(s[dec[0] + 1]), "f is not strictly increasing"
        elif not np.max(fs) > nl.g_sup:
            ok, detail = False, f"f stays below sup g = {nl.g_sup:g} on the sampled range"
        else:
            tiny = s[1:6]
            slope = nl.f(tiny) / tiny
            if np.max(np.abs(slope - nl.f_prime0)) > 1e-3 * max(1.0, abs(nl.f_prime0)):
                ok, where = False, float(tiny[0])
                detail = f"f(s)/s near 0 is {slope[0]:.6g}, not f_prime0={nl.f_prime0:g}"
    checks.append(ConditionCheck("H2", ok, where, detail))

    # linear majorant g(s) <= L s
    slack = 1e-12 * nl.L * s + 1e-15
    bad = np.nonzero(gs > nl.L * s + slack)[0]
    checks.append(ConditionCheck(
        "e11", bad.size == 0, float(s[bad[0]]) if bad.size else None,
        "g(s) > L s" if bad.size else ""))

    # lower slope bound f(s) >= inf f' * s
    slack = 1e-12 * abs(nl.f_inf_slope) * s + 1e-15
    bad = np.nonzero(fs < nl.f_inf_slope * s - slack)[0]
    checks.append(ConditionCheck(
        "con1", bad.size == 0, float(s[bad[0]]) if bad.size else None,
        "f(s) < inf f' * s" if bad.size else ""))

    return HypothesisReport(tuple(checks))


def select_beta(nl: Nonlinearity) -> float:
    """Shift large enough that beta*s - f(s) is nonnegative and nondecreasing
    on the a-priori range: max(2 f'(0), sup f' on [0, U]) + 1."""
    ub = nl.upper_bound
    s = np.linspace(0.0, ub, 4001)
    fp = np.diff(np.asarray(nl.f(s), dtype=float)) / np.diff(s)
    sup_fp = float(np.max(fp))
    if not math.isfinite(sup_fp) or sup_fp > 1e12:
        raise UnboundedDerivative("f' diverges on the a-priori range")
    return max(2.0 * nl.f_prime0, sup_fp) + 1.0


def xi2_bound(nl: Nonlinearity) -> float:
    """Some s with f(s) > sup g; the persistence threshold scale."""
    target = nl.g_sup * 1.000001
    hi = max(1.0, nl.upper_bound)
    for _ in range(200):
        if nl.f(hi) > target:
            break
        hi *= 2.0
    else:
        raise InvalidParameter("f never exceeds sup g")
    return float(brentq(lambda s: nl.f(s) - target, 0.0, hi, xtol=1e-12)) * 1.01


# ---------------------------------------------------------------------------
# grid and Green kernel
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Grid:
    """Uniform grid on [t_min, t_max] with step h and n nodes."""
    t_min: float
    t_max: float
    h: float
    n: int

    @classmethod
    def regular(cls, t_min: float, t_max: float, h: float) -> "Grid":
        """Grid from bounds and step; t_max is snapped to a whole number of
        steps from t_min."""
        if h <= 0 or not (t_min < 0.0 < t_max):
            raise InvalidParameter("need h > 0 and t_min < 0 < t_max")
        n = int(round((t_max - t_min) / h)) + 1
        return cls(t_min=t_min, t_max=t_min + (n - 1) * h, h=h, n=n)

    @property
    def t(self) -> np.ndarray:
        return self.t_min + self.h * np.arange(self.n)


def k1_eval(s, c: float, beta: float):
    """Two-sided exponential Green kernel of -y'' + c y' + beta y.

    k1(s) = exp(nu s)/sigma for s >= 0 and exp(mu s)/sigma for s < 0, where
    nu < 0 < mu are the roots of z^2 - c z - beta and sigma = sqrt(c^2+4beta).
    Its total mass is 1/beta.
    """
    if beta <= 0:
        raise InvalidParameter("beta must be positive")
    sigma = math.sqrt(c * c + 4.0 * beta)
    nu = 0.5 * (c - sigma)
    mu = 0.5 * (c + sigma)
    s = np.asarray(s, dtype=float)
    out = np.where(s >= 0, np.exp(nu * s), np.exp(mu * s)) / sigma
    return float(out) if out.ndim == 0 else out


def _k1_rates(c: float, beta: float) -> tuple[float, float, float]:
    sigma = math.sqrt(c * c + 4.0 * beta)
    return sigma, 0.5 * (c - sigma), 0.5 * (c + sigma)


def _green_cell_weights(D: float, c: float, gamma: float,
                        h: float) -> tuple[int, np.ndarray]:
    """Exact cell integrals of the two-sided exponential Green kernel of
    -D y'' + c y' + gamma y on the cells [j h - h/2, j h + h/2].

    Using closed-form cell masses keeps the discrete kernel's total mass at
    exactly 1/gamma (up to an exp(-37) truncation), so constants are
    reproduced to round-off by the discrete convolution.
    """
    sigma = math.sqrt(c * c + 4.0 * D * gamma)
    nu = (c - sigma) / (2.0 * D)
    mu = (c + sigma) / (2.0 * D)
    j_max = int(math.ceil(37.0 / (abs(nu) * h))) + 1
    j_min = -int(math.ceil(37.0 / (mu * h))) - 1

    def seg_pos(a: float, b: float) -> float:
        return (math.exp(nu * b) - math.exp(nu * a)) / (nu * sigma)

    def seg_neg(a: float, b: float) -> float:
        return (math.exp(mu * b) - math.exp(mu * a)) / (mu * sigma)

    w = np.empty(j_max - j_min + 1)
    for idx, j in enumerate(range(j_min, j_max + 1)):
        a, b = j * h - 0.5 * h, j * h + 0.5 * h
        if a >= 0.0:
            w[idx] = seg_pos(a, b)
        elif b <= 0.0:
            w[idx] = seg_neg(a, b)
        else:
            w[idx] = seg_neg(a, 0.0) + seg_pos(0.0, b)
    return j_min, w


def _k1_cell_weights(c: float, beta: float, h: float) -> tuple[int, np.ndarray]:
    return _green_cell_weights(1.0, c, beta, h)


# ---------------------------------------------------------------------------
# wave problem and pre-sampled operators
# ---------------------------------------------------------------------------

@dataclass
class WaveProblem:
    """One profile-equation instance with its envelope exponents.

    `lam` is the leftmost positive root of the constructive characteristic
    function at speed c; `m` is a second exponent with a strictly negative
    characteristic value, or None at (or below) the critical speed, where no
    such exponent exists.  Instances are immutable in use; the sampled
    convolution kernels are cached on first access.
    """
    nl: Nonlinearity
    kernel: Kernel
    c: float
    beta: float
    grid: Grid
    reg_n: int
    delta: float
    lam: float
    m: float | None
    chi_L: DispersionFunction
    lam_is_root: bool = True
    _k1: tuple[int, np.ndarray] | None = field(default=None, repr=False)
    _k2: "_K2Sampler | None" = field(default=None, repr=False)

    @property
    def sigma(self) -> float:
        return math.sqrt(self.c * self.c + 4.0 * self.beta)

    def k1_weights(self) -> tuple[int, np.ndarray]:
        if self._k1 is None:
            self._k1 = _k1_cell_weights(self.c, self.beta, self.grid.h)
        return self._k1

    def k2_sampler(self) -> "_K2Sampler":
        if self._k2 is None:
            self._k2 = _K2Sampler.build(self.kernel, self.c, self.grid)
        return self._k2


@dataclass
class _K2Sampler:
    """Projected kernel sampled on grid multiples, plus symbolic atoms.

    Density weights are trapezoid samples rescaled so their sum is exactly
    the density part of the kernel mass; together with the exact k1 cell
    masses this makes constants fixed points of the discrete operator.
    """
    j_lo: int
    weights: np.ndarray            # empty when the projection is purely atomic
    atoms: tuple[tuple[float, float], ...]   # (shift in t units, weight)
    r_lo: float
    r_hi: float

    MAX_SAMPLES = 1 << 21

    @classmethod
    def build(cls, kernel: Kernel, c: float, grid: Grid) -> "_K2Sampler":
        pk = project(kernel, c)
        atoms = tuple((float(r), float(wt)) for r, wt in pk.atoms)
        atom_mass = sum(wt for _, wt in atoms)
        if pk.density is None:
            return cls(0, np.empty(0), atoms, 0.0, 0.0)
        h = grid.h
        j_lo = int(math.floor(pk.r_min / h)) - 1
        j_hi = int(math.ceil(pk.r_max / h)) + 1
        if j_hi - j_lo + 1 > cls.MAX_SAMPLES:
            raise InvalidParameter(
                f"projected kernel span needs {j_hi - j_lo + 1} samples at "
                f"h={h:g}; coarsen the grid or shrink the kernel support")
        r = h * np.arange(j_lo, j_hi + 1)
        vals = np.asarray(pk.density(r), dtype=float)
        w = vals * h
        w[0] *= 0.5
        w[-1] *= 0.5
        total = float(np.sum(w))
        target = 1.0 - atom_mass
        if not (0.98 * target <= total <= 1.02 * target):
            raise InvalidParameter(
                f"sampled projected-kernel mass {total:.6f} is far from "
                f"{target:.6f}; the grid does not resolve the kernel")
        w *= target / total
        return cls(j_lo, w, atoms, float(pk.r_min), float(pk.r_max))

    @property
    def pos_reach(self) -> float:
        """Largest positive lag pulled in by this kernel."""
        reach = 0.0
        if self.weights.size:
            reach = max(reach, self.r_hi)
        for r, _ in self.atoms:
            reach = max(reach, r)
        return reach

    @property
    def neg_reach(self) -> float:
        reach = 0.0
        if self.weights.size:
            reach = max(reach, -self.r_lo)
        for r, _ in self.atoms:
            reach = max(reach, -r)
        return reach


def _extend(a: np.ndarray, j_lo: int, j_hi: int) -> np.ndarray:
    """Values of a at extended indices [-j_hi, n-1-j_lo]: zero to the left of
    the grid (the profile vanishes at -inf) and frozen at the last node to
    the right (bounded tail)."""
    n = a.shape[0]
    idx = np.arange(-j_hi, n - j_lo)
    out = a[np.clip(idx, 0, n - 1)].astype(float, copy=True)
    out[idx < 0] = 0.0
    return out


def _convolve(a: np.ndarray, j_lo: int, weights: np.ndarray,
              atoms: tuple[tuple[float, float], ...], grid: Grid,
              exact: bool = False) -> np.ndarray:
    """(weights * a)(t_i) = sum_j w_j a(t_i - (j_lo+j) h) plus atomic shifts,
    with the off-grid extension policy above.

    The FFT path is fast but its round-off is relative to the largest array
    entry; `exact` switches to direct summation, whose error is relative to
    each node's own terms, for diagnostics fed with exponentially graded
    inputs."""
    n = grid.n
    out = np.zeros(n)
    if weights.size:
        j_hi = j_lo + weights.size - 1
        a_ext = _extend(a, j_lo, j_hi)
        if exact:
            out += np.convolve(a_ext, weights, mode="valid")
        else:
            out += fftconvolve(a_ext, weights, mode="valid")
    if atoms:
        t = grid.t
        for r, wt in atoms:
            out += wt * np.interp(t - r, t, a, left=0.0, right=a[-1])
    return out


# ---------------------------------------------------------------------------
# problem construction
# ---------------------------------------------------------------------------

def _select_m(chi_l: DispersionFunction, c: float, lam: float,
              lam2: float | None) -> float | None:
    """Scan (lam, min(lam2, mu_q)) for a strictly negative characteristic
    value and return the midpoint of the negative region, or None."""
    hi = mu_q(c, chi_l.q)
    if lam2 is not None:
        hi = min(hi, lam2)
    if hi <= lam:
        return None
    zs = np.linspace(lam, hi, 66)[1:-1]
    vals = np.array([eval_R(chi_l, float(z), c) for z in zs])
    neg = np.nonzero(vals < 0.0)[0]
    if neg.size == 0:
        return None
    m = 0.5 * (zs[neg[0]] + zs[neg[-1]])
    # the ratio form needs a positive denominator, guaranteed below mu_beta
    return float(m)


def make_wave_problem(nl: Nonlinearity, kernel: Kernel, c: float, *,
                      beta: float | None = None, grid: Grid | None = None,
                      reg_n: int = 50, delta: float | None = None) -> WaveProblem:
    """Assemble a WaveProblem: validate the nonlinearity, choose beta, find
    the envelope exponents from the constructive characteristic function,
    and build (or validate) the grid."""
    report = validate_hypotheses(nl)
    if not report.all_ok:
        bad = ", ".join(c.name for c in report.checks if not c.ok)
        raise InvalidParameter(f"nonlinearity fails hypotheses: {bad}")

    if beta is None:
        beta = select_beta(nl)
    ub = nl.upper_bound
    s = np.linspace(0.0, ub, 2001)
    fb = beta * s - np.asarray(nl.f(s), dtype=float)
    if beta <= nl.f_prime0 or np.any(np.diff(fb) < -1e-12) or np.any(fb < -1e-12):
        raise InvalidParameter(
            f"beta={beta:g} does not make beta*s - f(s) nonnegative and "
            "nondecreasing on the a-priori range")

    chi_l = DispersionFunction(q=nl.f_inf_slope, p=nl.L, kernel=kernel)
    rr = positive_roots(chi_l, c)
    if rr.roots:
        lam = rr.roots[0]
        lam2 = rr.roots[1] if len(rr.roots) == 2 else None
        lam_is_root = True
    else:
        # below (or at) the critical speed there is no positive root; the
        # argmin still sets a usable tail scale for grids and reports
        lam, lam2, lam_is_root = rr.min_z, None, False
    m = _select_m(chi_l, c, lam, lam2) if lam_is_root else None

    if delta is None:
        delta = min(1.0 / reg_n, 0.1 * ub)
    if 1.0 / reg_n > delta * (1.0 + 1e-12):
        raise InvalidParameter(
            f"regularization level n={reg_n} is too coarse: the linear range "
            f"1/n={1.0/reg_n:g} must fit inside delta={delta:g}")

    sigma, nu, mu = _k1_rates(c, beta)
    if grid is None:
        rate = max(abs(nu), mu, lam)
        h = 1.0 / (20.0 * rate)
        half = 40.0 / lam
        n = int(round(2.0 * half / h)) + 1
        if n > 2_000_000:
            raise InvalidParameter(
                f"default grid would need {n} nodes; pass an explicit grid")
        grid = Grid(t_min=-half, t_max=-half + (n - 1) * h, h=h, n=n)
    if not (grid.t_min < 0.0 < grid.t_max):
        raise InvalidParameter("grid must straddle 0")
    if math.expm1(max(abs(nu), mu) * grid.h) >= 0.5:
        raise InvalidParameter(
            f"step h={grid.h:g} does not resolve the Green-kernel rates")

    return WaveProblem(nl=nl, kernel=kernel, c=c, beta=beta, grid=grid,
                       reg_n=reg_n, delta=delta, lam=lam, m=m, chi_L=chi_l,
                       lam_is_root=lam_is_root)


# ---------------------------------------------------------------------------
# envelopes and operators
# ---------------------------------------------------------------------------

def sub_super(p: WaveProblem) -> tuple[np.ndarray, np.ndarray]:
    """Lower and upper envelopes on the grid.

    upper(t) = delta exp(lam t);  lower(t) = upper(t) (1 - exp((m-lam) t))
    for t <= 0 and 0 beyond.  Requires a strictly supercritical speed, where
    the second exponent m exists.
    """
    if p.m is None:
        raise NoAdmissibleM(
            f"no admissible second exponent at c={p.c:g}; the speed is at or "
            "below the critical one (use critical_speed_profile there)")
    t = p.grid.t
    upper = p.delta * np.exp(p.lam * t)
    lower = np.where(t <= 0.0, upper * -np.expm1((p.m - p.lam) * t), 0.0)
    return lower, upper


def _apply_G(p: WaveProblem, phi: np.ndarray,
             gfun: Callable[[np.ndarray], np.ndarray],
             fbfun: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    k2 = p.k2_sampler()
    return _convolve(np.asarray(gfun(phi), dtype=float), k2.j_lo, k2.weights,
                     k2.atoms, p.grid) + np.asarray(fbfun(phi), dtype=float)


def apply_G(p: WaveProblem, phi: np.ndarray) -> np.ndarray:
    """Birth convolution plus shifted removal:
    (k2 * g(phi))(t) + beta phi(t) - f(phi(t))."""
    return _apply_G(p, phi, p.nl.g, p.nl.f_beta(p.beta))


def _apply_A(p: WaveProblem, phi: np.ndarray,
             gfun: Callable[[np.ndarray], np.ndarray],
             fbfun: Callable[[np.ndarray], np.ndarray]) -> np.ndarray:
    j_lo, w = p.k1_weights()
    return _convolve(_apply_G(p, phi, gfun, fbfun), j_lo, w, (), p.grid)


def apply_A(p: WaveProblem, phi: np.ndarray) -> np.ndarray:
    """Full fixed-point operator k1 * G(phi).  Constants kappa with
    f(kappa) = g(kappa) are fixed points up to quadrature round-off."""
    return _apply_A(p, phi, p.nl.g, p.nl.f_beta(p.beta))


def apply_L(p: WaveProblem, phi: np.ndarray) -> np.ndarray:
    """Linear comparison operator k1 * (L (k2 * phi) + (beta - inf f') phi).

    The upper envelope is its eigenfunction with eigenvalue 1 when lam is a
    characteristic root, which is what the discretization tests exploit.
    """
    k2 = p.k2_sampler()
    conv = _convolve(phi, k2.j_lo, k2.weights, k2.atoms, p.grid, exact=True)
    inner = p.nl.L * conv + (p.beta - p.nl.f_inf_slope) * phi
    j_lo, w = p.k1_weights()
    return _convolve(inner, j_lo, w, (), p.grid, exact=True)


def regularize(nl: Nonlinearity, beta: float, n: int
               ) -> tuple[Callable[[np.ndarray], np.ndarray],
                          Callable[[np.ndarray], np.ndarray]]:
    """Continuous modifications (g_n, f_beta_n) that are exactly linear with
    slopes L and beta - inf f' on [0, 1/n] and clamped from below by their
    value at 1/n beyond; both converge uniformly to (g, f_beta) as n grows
    and both keep the global linear majorants."""
    if n < 1:
        raise InvalidParameter("regularization level must be >= 1")
    cut = 1.0 / n
    L = nl.L
    slope_fb = beta - nl.f_inf_slope

    def g_n(s: np.ndarray) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        return np.where(s <= cut, L * s, np.maximum(L * cut, nl.g(s)))

    def f_beta_n(s: np.ndarray) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        raw = beta * s - np.asarray(nl.f(s), dtype=float)
        return np.where(s <= cut, slope_fb * s, np.maximum(slope_fb * cut, raw))

    return g_n, f_beta_n


# ---------------------------------------------------------------------------
# metrics windows
# ---------------------------------------------------------------------------

def operator_interior(p: WaveProblem) -> slice:
    """Nodes whose operator image never consults the off-grid extension."""
    k2 = p.k2_sampler()
    j_lo, w = p.k1_weights()
    j_hi = j_lo + w.size - 1
    left = (j_hi * p.grid.h) + k2.pos_reach
    right = (-j_lo * p.grid.h) + k2.neg_reach
    i_lo = int(math.ceil(left / p.grid.h)) + 1
    i_hi = p.grid.n - int(math.ceil(right / p.grid.h)) - 1
    if i_lo >= i_hi:
        raise InvalidParameter("grid is too short for the kernel reach")
    return slice(i_lo, i_hi)


def ode_interior(p: WaveProblem) -> slice:
    """Nodes where the differential-equation residual is meaningful: inside
    the projected-kernel reach plus one stencil node."""
    k2 = p.k2_sampler()
    i_lo = int(math.ceil(k2.pos_reach / p.grid.h)) + 2
    i_hi = p.grid.n - int(math.ceil(k2.neg_reach / p.grid.h)) - 2
    if i_lo >= i_hi:
        raise InvalidParameter("grid is too short for the kernel reach")
    return slice(i_lo, i_hi)


# ---------------------------------------------------------------------------
# the solver
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Profile:
    """A sampled candidate profile with its convergence certificates."""
    grid: Grid
    values: np.ndarray
    c: float
    residual_sup: float
    tail_rate: float
    iterations: int
    converged: bool


@dataclass
class IterationTrace:
    """Per-iteration history of the projected fixed-point iteration."""
    sup_change: list[float] = field(default_factory=list)
    sandwich_violation: list[float] = field(default_factory=list)
    clip_count: list[int] = field(default_factory=list)
    phase: list[int] = field(default_factory=list)
    damped: bool = False
    notes: list[str] = field(default_factory=list)


def _tail_rate(p: WaveProblem, phi: np.ndarray) -> float:
    """Log-linear slope of the left tail, fitted on a window clear of the
    truncation boundary."""
    t = p.grid.t
    span = p.grid.t_max - p.grid.t_min
    lo = p.grid.t_min + 0.12 * span
    hi = p.grid.t_min + 0.35 * span
    mask = (t >= lo) & (t <= hi) & (phi > 1e-280)
    if np.count_nonzero(mask) < 8:
        return math.nan
    coef = np.polyfit(t[mask], np.log(phi[mask]), 1)
    return float(coef[0])


def solve_profile(p: WaveProblem, tol: float = 1e-8, max_iter: int = 2000,
                  initial: np.ndarray | None = None, project_band: bool = True,
                  residual_tol: float = RESIDUAL_TOL
                  ) -> tuple[Profile, IterationTrace]:
    """Iterate the regularized operator inside the envelope band, then polish
    with the original nonlinearity.

    Phase 1 uses (g_n, f_beta_n), for which the band [lower, upper] is
    invariant, and projects every iterate onto [lower, min(upper, U)]; a
    pre-projection exit from the band beyond SANDWICH_CAP raises
    SandwichBroken since the invariance is a theorem.  Phase 2 drops the
    regularization; the original birth law sits strictly below its linear
    majorant, so the band is not invariant for it and the lower clamp is
    kept only on the far tail (where the sub-linear correction is below
    round-off).  That tail clamp pins the translation mode, which is
    otherwise neutral and lets the front drift indefinitely.  Convergence
    is certified by the fixed-point residual on the operator interior; a
    non-converged run returns its best iterate flagged, it does not raise.
    """
    g_n, fb_n = regularize(p.nl, p.beta, p.reg_n)
    g_raw, fb_raw = p.nl.g, p.nl.f_beta(p.beta)
    lower, upper = sub_super(p)
    cap = np.minimum(upper, p.nl.upper_bound)
    trace = IterationTrace()
    interior = operator_interior(p)

    if initial is None:
        phi = cap.copy()
    else:
        phi = np.asarray(initial, dtype=float).copy()
        if phi.shape != (p.grid.n,):
            raise InvalidParameter("initial guess does not match the grid")

    def run_phase(phase: int, gfun, fbfun, lo_env, budget: int) -> bool:
        nonlocal phi
        averaged = False
        best = math.inf
        since_best = 0
        for _ in range(budget):
            psi = _apply_A(p, phi, gfun, fbfun)
            viol = 0.0
            if project_band:
                over = float(np.max(psi - upper, initial=0.0))
                under = float(np.max((lower if phase == 1 else 0.0) - psi, initial=0.0))
                viol = max(over, under, 0.0)
                if phase == 1 and viol > SANDWICH_CAP:
                    raise SandwichBroken(
                        f"iterate left the envelope band by {viol:.3e}; the "
                        "discretization violates the band invariance")
                clipped = np.clip(psi, lo_env, cap)
            else:
                clipped = psi
            n_clip = int(np.count_nonzero(np.abs(clipped - psi) > CLIP_EPS))
            nxt = 0.5 * (phi + clipped) if averaged else clipped
            change = float(np.max(np.abs(nxt - phi)))
            trace.sup_change.append(change)
            trace.sandwich_violation.append(viol)
            trace.clip_count.append(n_clip)
            trace.phase.append(phase)
            phi = nxt
            if change < tol:
                return True
            if change < best - 1e-16:
                best = change
                since_best = 0
            else:
                since_best += 1
                if since_best >= 20 and not averaged:
                    averaged = True
                    trace.damped = True
                    trace.notes.append(f"phase {phase}: switched to averaged iteration")
                    since_best = 0
                elif since_best >= 50:
                    trace.notes.append(f"phase {phase}: change stalled at {change:.3e}")
                    return False
        return False

    ok1 = run_phase(1, g_n, fb_n, lower, max_iter)
    used = len(trace.sup_change)
    if not ok1:
        trace.notes.append("regularized phase did not meet tolerance")
    tail_pin = np.where(upper <= 1e-3 * p.delta, lower, 0.0)
    ok2 = run_phase(2, g_raw, fb_raw, tail_pin, max_iter - used) \
        if used < max_iter else False

    # a few unprojected passes mollify the value-level kinks left by the
    # clipping (each Green-kernel convolution gains one derivative), so the
    # finite-difference residual is not polluted at the 1/h^2 scale
    for _ in range(3):
        phi = _apply_A(p, phi, g_raw, fb_raw)

    residual = _apply_A(p, phi, g_raw, fb_raw) - phi
    residual_sup = float(np.max(np.abs(residual[interior])))
    converged = residual_sup < residual_tol
    if not (ok1 and ok2):
        trace.notes.append("convergence certified by residual only"
                           if converged else "not converged")
    return (Profile(grid=p.grid, values=phi, c=p.c, residual_sup=residual_sup,
                    tail_rate=_tail_rate(p, phi),
                    iterations=len(trace.sup_change), converged=converged),
            trace)


def residual_ode(p: WaveProblem, prof: Profile) -> float:
    """Sup-norm of the differential-equation residual
    y'' - c y' - f(y) + k2 * g(y) over the interior, by central differences."""
    phi = prof.values
    h = p.grid.h
    d2 = (phi[2:] - 2.0 * phi[1:-1] + phi[:-2]) / (h * h)
    d1 = (phi[2:] - phi[:-2]) / (2.0 * h)
    k2 = p.k2_sampler()
    conv = _convolve(np.asarray(p.nl.g(phi), dtype=float), k2.j_lo, k2.weights,
                     k2.atoms, p.grid)
    res = d2 - p.c * d1 - np.asarray(p.nl.f(phi[1:-1]), dtype=float) + conv[1:-1]
    win = ode_interior(p)
    lo = max(win.start - 1, 0)
    hi = min(win.stop - 1, res.shape[0])
    return float(np.max(np.abs(res[lo:hi])))


def persistence_check(p: WaveProblem, prof: Profile, xi1: float) -> bool:
    """True when the profile stays above xi1 on the rightmost quarter of the
    grid and strictly positive on the interior left of it."""
    phi = prof.values
    n = p.grid.n
    right = phi[3 * n // 4:]
    interior = phi[n // 10: 3 * n // 4]
    return bool(np.min(right) > xi1 and np.min(interior) > 0.0)


@dataclass(frozen=True)
class FixedPointReport:
    """Positive balance points of f(s) = g(s) with attraction flags, plus the
    slope ratio of f^{-1} o g at 0."""
    points: tuple[tuple[float, bool], ...]
    g_over_f_slope0: float


def fixed_points_of_fg(nl: Nonlinearity, *, max_iterations: int = 10_000
                       ) -> FixedPointReport:
    """All solutions of f(s) = g(s) on (0, 10 U], each flagged attracting if
    the composition f^{-1} o g pulls a spread of seeds into it."""
    ub = nl.upper_bound
    s = np.geomspace(1e-8 * max(ub, 1.0), 10.0 * ub, 4000)
    diff = np.asarray(nl.f(s), dtype=float) - np.asarray(nl.g(s), dtype=float)
    signs = np.sign(diff)
    kappas: list[float] = []
    for i in np.nonzero(signs[:-1] * signs[1:] < 0)[0]:
        root = brentq(lambda x: float(nl.f(np.asarray(x)) - nl.g(np.asarray(x))),
                      s[i], s[i + 1], xtol=1e-13)
        if not kappas or abs(root - kappas[-1]) > 1e-9 * max(1.0, root):
            kappas.append(float(root))
    if not kappas:
        raise NoPositiveFixedPoint(
            "f(s) = g(s) has no positive solution below 10 * sup g / inf f'")

    seeds = np.geomspace(1e-3 * max(ub, 1.0), 10.0 * ub, 7)
    points = []
    for kappa in kappas:
        tol_k = 1e-9 * max(1.0, kappa)
        attracting = True
        for seed in seeds:
            x = float(seed)
            for _ in range(max_iterations):
                nxt = nl.f_inv(float(nl.g(np.asarray(x))))
                if not math.isfinite(nxt) or nxt > 100.0 * ub:
                    attracting = False
                    break
                if abs(nxt - x) < 0.1 * tol_k:
                    x = nxt
                    break
                x = nxt
            if abs(x - kappa) > 100.0 * tol_k:
                attracting = False
            if not attracting:
                break
        points.append((kappa, attracting))
    return FixedPointReport(points=tuple(points),
                            g_over_f_slope0=nl.g_prime0 / nl.f_prime0)


# ---------------------------------------------------------------------------
# critical speed
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CriticalSpeedReport:
    """Self-convergence record of the supercritical approximants c_n."""
    c_star: float
    levels: tuple[int, ...]
    speeds: tuple[float, ...]
    gaps: tuple[float, ...]            # sup gaps between consecutive levels
    window: tuple[float, float]
    derivative_bound: float
    derivative_max: tuple[float, ...]  # max |phi'| per level
    kappa: float


def _normalize_half_crossing(grid: Grid, phi: np.ndarray, level: float
                             ) -> np.ndarray:
    """Translate the profile so it crosses `level` at t = 0 (profiles of the
    autonomous equation are translation-invariant)."""
    above = np.nonzero(phi >= level)[0]
    if above.size == 0 or above[0] == 0:
        raise NotConverged("profile never crosses the normalization level")
    i = int(above[0])
    t = grid.t
    frac = (level - phi[i - 1]) / (phi[i] - phi[i - 1])
    t0 = t[i - 1] + frac * grid.h
    return np.interp(t + t0, t, phi, left=0.0, right=float(phi[-1]))


def critical_speed_profile(p: WaveProblem, n_max: int = 16, *,
                           tol: float = 1e-8, max_iter: int = 4000,
                           window: tuple[float, float] = (-20.0, 20.0)
                           ) -> tuple[Profile, CriticalSpeedReport]:
    """Profile at the critical speed as the limit of supercritical solves.

    Solves at c_n = (n+1) c_star / n for n = 2, 4, ..., n_max on the grid of
    `p`, normalizes each solution to cross kappa/2 at t = 0, and reports the
    Cauchy gaps between consecutive levels on a fixed window together with
    the uniform derivative bound (sup g + sup g / inf f') / sigma(c_star).
    """
    c_star = p.c
    fps = fixed_points_of_fg(p.nl)
    kappa = max(k for k, _ in fps.points)
    half = 0.5 * kappa
    bound = (p.nl.g_sup + p.nl.g_sup / p.nl.f_inf_slope) / p.sigma

    levels, speeds, profiles, der_max = [], [], [], []
    n = 2
    while n <= n_max:
        c_n = (n + 1) * c_star / n
        p_n = make_wave_problem(p.nl, p.kernel, c_n, beta=p.beta,
                                grid=p.grid, reg_n=p.reg_n, delta=p.delta)
        prof, _ = solve_profile(p_n, tol=tol, max_iter=max_iter)
        if not prof.converged:
            raise NotConverged(f"approximant at c_{n}={c_n:g} did not converge")
        norm = _normalize_half_crossing(p.grid, prof.values, half)
        dphi = (norm[2:] - norm[:-2]) / (2.0 * p.grid.h)
        levels.append(n)
        speeds.append(c_n)
        profiles.append(norm)
        der_max.append(float(np.max(np.abs(dphi))))
        n *= 2

    t = p.grid.t
    mask = (t >= window[0]) & (t <= window[1])
    gaps = tuple(float(np.max(np.abs(profiles[i + 1][mask] - profiles[i][mask])))
                 for i in range(len(profiles) - 1))

    final = Profile(grid=p.grid, values=profiles[-1], c=speeds[-1],
                    residual_sup=math.nan, tail_rate=math.nan,
                    iterations=0, converged=True)
    report = CriticalSpeedReport(
        c_star=c_star, levels=tuple(levels), speeds=tuple(speeds), gaps=gaps,
        window=window, derivative_bound=bound, derivative_max=tuple(der_max),
        kappa=kappa)
    return final, report
