"""Space-time averaging kernels and their exponential transforms.

A kernel K(s, w) weights contributions arriving with time lag s >= 0 and
spatial displacement w.  The quantities this module computes:

  * kernel_mass   -- the plain integral of K over its support box,
  * transform     -- M(z, c) = integral of K(s, w) exp(-z(cs + w)),
  * project_k2    -- the one-dimensional projection
                     k2(r) = integral over s of K(s, r - cs),

plus two built-in families: the asymmetric advective-Gaussian kernel of a
juvenile/adult marine population (closed-form transform with a finite
convergence abscissa) and separable products of a temporal delay law and a
spatial dispersal law.  Dirac components of either factor are kept symbolic
so the collapsed integrals stay exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import stats

from .errors import DomainExceeded, InvalidParameter, QuadratureFailure

__all__ = [
    "TAIL_TOL",
    "QUAD_TOL",
    "ABSCISSA_MARGIN",
    "SupportBox",
    "DelayLaw",
    "SpatialLaw",
    "Kernel",
    "ProjectedKernel",
    "dirac_delay",
    "exponential_delay",
    "gamma_delay",
    "exponentially_smoothed_delay",
    "dirac_spatial",
    "gaussian_spatial",
    "custom_spatial",
    "kernel_mass",
    "transform",
    "project",
    "project_k2",
    "k2_mass",
    "make_marine_kernel",
    "make_separable_kernel",
    "make_dirac_kernel",
]

TAIL_TOL = 1e-8          # mass allowed outside a support box
QUAD_TOL = 1e-9          # absolute tolerance of adaptive quadrature
ABSCISSA_MARGIN = 0.99   # transforms are evaluated only below this fraction of the abscissa

_LOG_TAIL = math.log(1.0 / TAIL_TOL)   # ~18.42 e-folds to the tail tolerance

# 16-node Gauss-Legendre rule on [-1, 1], reused by all composite panels.
_GL_X, _GL_W = np.polynomial.legendre.leggauss(16)


# ---------------------------------------------------------------------------
# composite Gauss-Legendre quadrature, vectorized
# ---------------------------------------------------------------------------

def _panel_nodes(a: float, b: float, n_panels: int) -> tuple[np.ndarray, np.ndarray]:
    """Nodes and weights of a composite 16-node GL rule on [a, b]."""
    edges = np.linspace(a, b, n_panels + 1)
    mid = 0.5 * (edges[:-1] + edges[1:])
    half = 0.5 * (edges[1:] - edges[:-1])
    nodes = (mid[:, None] + half[:, None] * _GL_X[None, :]).ravel()
    weights = (half[:, None] * _GL_W[None, :]).ravel()
    return nodes, weights


def _adaptive_gl(f: Callable[[np.ndarray], np.ndarray], a: float, b: float,
                 tol: float, max_panels: int = 4096) -> float:
    """Integrate a vectorized integrand on [a, b], doubling panels until the
    estimate moves by less than `tol`."""
    if b <= a:
        return 0.0
    n = 4
    x, w = _panel_nodes(a, b, n)
    prev = float(np.dot(w, f(x)))
    while n < max_panels:
        n *= 2
        x, w = _panel_nodes(a, b, n)
        cur = float(np.dot(w, f(x)))
        if abs(cur - prev) < tol:
            return cur
        prev = cur
    raise QuadratureFailure(
        f"no convergence on [{a:g}, {b:g}] after {max_panels} panels")


def _tilted_halfline(density: Callable[[np.ndarray], np.ndarray], u: float,
                     s_max: float, tol: float) -> float:
    """Integral of density(s) * exp(-u s) over [0, inf), truncated where the
    remaining contribution is below tol.  For u < 0 the tilt amplifies the
    tail, so the truncation point is grown geometrically; steady growth of
    the extension chunks means the integral diverges."""
    def f(s: np.ndarray) -> np.ndarray:
        return density(s) * np.exp(-u * s)

    total = _adaptive_gl(f, 0.0, s_max, tol)
    hi = s_max
    prev_chunk = math.inf
    grow = 0
    for _ in range(60):
        chunk = _adaptive_gl(f, hi, 2.0 * hi, tol)
        hi *= 2.0
        total += chunk
        if abs(chunk) < 0.25 * tol:
            return total
        if abs(chunk) >= prev_chunk:
            grow += 1
            if grow >= 3:
                raise QuadratureFailure(
                    f"tilted temporal integral diverges (tilt u={u:g})")
        else:
            grow = 0
        prev_chunk = abs(chunk)
    raise QuadratureFailure("tilted temporal integral did not settle")


def _tilted_line(density: Callable[[np.ndarray], np.ndarray], z: float,
                 w_min: float, w_max: float, tol: float) -> float:
    """Integral of density(w) * exp(-z w) over the real line, starting from
    [w_min, w_max] and extending both sides until the tails are below tol."""
    def f(w: np.ndarray) -> np.ndarray:
        return density(w) * np.exp(-z * w)

    total = _adaptive_gl(f, w_min, w_max, tol)
    span = max(w_max - w_min, 1.0)
    for side in (-1, +1):
        edge = w_min if side < 0 else w_max
        step = span
        prev_chunk = math.inf
        grow = 0
        for _ in range(60):
            lo, hi = (edge - step, edge) if side < 0 else (edge, edge + step)
            chunk = _adaptive_gl(f, lo, hi, tol)
            total += chunk
            edge = lo if side < 0 else hi
            if abs(chunk) < 0.25 * tol:
                break
            if abs(chunk) >= prev_chunk:
                grow += 1
                if grow >= 3:
                    raise QuadratureFailure(
                        f"tilted spatial integral diverges (tilt z={z:g})")
            else:
                grow = 0
            prev_chunk = abs(chunk)
            step *= 2.0
        else:
            raise QuadratureFailure("tilted spatial integral did not settle")
    return total


# ---------------------------------------------------------------------------
# factor laws
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DelayLaw:
    """Unit-mass law of the time lag on [0, inf).

    Either a finite list of Dirac atoms, a density, or both (mixtures are not
    needed here, so exactly one is expected).  `laplace` is the closed-form
    E[exp(-u S)] when known; `mgf_bound` is the supremum of eta >= 0 with
    E[exp(eta S)] finite, which limits transforms at negative tilt.
    """
    name: str
    atoms: tuple[tuple[float, float], ...] = ()
    density: Callable[[np.ndarray], np.ndarray] | None = None
    laplace: Callable[[float], float] | None = None
    mgf_bound: float = math.inf
    s_max: float = 0.0


@dataclass(frozen=True)
class SpatialLaw:
    """Unit-mass dispersal law on the real line.

    `transform` is the closed-form E[exp(-z W)] when known; `tilt_bound` is
    the supremum of z >= 0 for which that expectation is finite.
    """
    name: str
    atoms: tuple[tuple[float, float], ...] = ()
    density: Callable[[np.ndarray], np.ndarray] | None = None
    transform: Callable[[float], float] | None = None
    tilt_bound: float = math.inf
    w_min: float = 0.0
    w_max: float = 0.0


def dirac_delay(tau: float = 0.0) -> DelayLaw:
    """Discrete delay: all mass arrives with lag tau >= 0."""
    if tau < 0:
        raise InvalidParameter("delay atom must be nonnegative")
    return DelayLaw(name=f"dirac({tau:g})", atoms=((float(tau), 1.0),),
                    laplace=lambda u, _t=float(tau): math.exp(-u * _t),
                    s_max=float(tau))


def exponential_delay(rate: float) -> DelayLaw:
    """Exponentially distributed lag with the given rate."""
    if rate <= 0:
        raise InvalidParameter("exponential rate must be positive")
    r = float(rate)
    return DelayLaw(
        name=f"exponential({r:g})",
        density=lambda s: np.where(s >= 0, r * np.exp(-r * np.maximum(s, 0.0)), 0.0),
        laplace=lambda u: r / (r + u),
        mgf_bound=r,
        s_max=_LOG_TAIL / r,
    )


def gamma_delay(shape: float, rate: float) -> DelayLaw:
    """Gamma-distributed lag (shape k, rate)."""
    if shape <= 0 or rate <= 0:
        raise InvalidParameter("gamma shape and rate must be positive")
    k, r = float(shape), float(rate)
    dist = stats.gamma(k, scale=1.0 / r)
    return DelayLaw(
        name=f"gamma({k:g},{r:g})",
        density=lambda s: np.where(s > 0, dist.pdf(np.maximum(s, 1e-300)), 0.0),
        laplace=lambda u: (r / (r + u)) ** k,
        mgf_bound=r,
        s_max=float(dist.isf(TAIL_TOL)),
    )


def exponentially_smoothed_delay(base: DelayLaw, alpha: float) -> DelayLaw:
    """Law of S + E with S ~ base and E exponential(alpha), independent.

    This is the effective lag of a signal that, after the base delay, decays
    at rate alpha before being felt.  Densities are provided for atom and
    exponential bases; other bases keep only the closed-form transform.
    """
    if alpha <= 0:
        raise InvalidParameter("smoothing rate must be positive")
    a = float(alpha)
    if base.laplace is None:
        raise InvalidParameter("base delay law needs a closed-form transform")
    lap = lambda u, _b=base.laplace: _b(u) * a / (a + u)

    if base.atoms:
        atoms = base.atoms
        def density(s: np.ndarray, _at=atoms, _a=a) -> np.ndarray:
            s = np.asarray(s, dtype=float)
            out = np.zeros_like(s)
            for tau, wt in _at:
                out += np.where(s >= tau, wt * _a * np.exp(-_a * np.maximum(s - tau, 0.0)), 0.0)
            return out
        s_max = max(t for t, _ in atoms) + _LOG_TAIL / a
        return DelayLaw(name=f"{base.name}+exp({a:g})", density=density,
                        laplace=lap, mgf_bound=a, s_max=s_max)

    if base.name.startswith("exponential("):
        eta = base.mgf_bound
        if abs(eta - a) < 1e-12 * a:
            density = lambda s: np.where(s >= 0, a * a * np.maximum(s, 0.0) * np.exp(-a * np.maximum(s, 0.0)), 0.0)
        else:
            coef = a * eta / (a - eta)
            density = lambda s: np.where(
                s >= 0,
                coef * (np.exp(-eta * np.maximum(s, 0.0)) - np.exp(-a * np.maximum(s, 0.0))),
                0.0)
        rate_min = min(a, eta)
        return DelayLaw(name=f"{base.name}+exp({a:g})", density=density,
                        laplace=lap, mgf_bound=rate_min,
                        s_max=1.5 * _LOG_TAIL / rate_min)

    return DelayLaw(name=f"{base.name}+exp({a:g})", laplace=lap,
                    mgf_bound=min(base.mgf_bound, a),
                    s_max=base.s_max + _LOG_TAIL / a)


def dirac_spatial(loc: float = 0.0) -> SpatialLaw:
    """Point dispersal: all mass lands at offset loc."""
    return SpatialLaw(name=f"dirac({loc:g})", atoms=((float(loc), 1.0),),
                      transform=lambda z, _l=float(loc): math.exp(-z * _l),
                      w_min=float(loc), w_max=float(loc))


def gaussian_spatial(sigma: float) -> SpatialLaw:
    """Centered Gaussian dispersal with standard deviation sigma."""
    if sigma <= 0:
        raise InvalidParameter("sigma must be positive")
    s = float(sigma)
    inv = 1.0 / (s * math.sqrt(2.0 * math.pi))
    return SpatialLaw(
        name=f"gaussian({s:g})",
        density=lambda w: inv * np.exp(-0.5 * (w / s) ** 2),
        transform=lambda z: math.exp(0.5 * (z * s) ** 2),
        w_min=-6.5 * s, w_max=6.5 * s,
    )


def custom_spatial(density: Callable[[np.ndarray], np.ndarray],
                   w_min: float, w_max: float,
                   transform: Callable[[float], float] | None = None,
                   tilt_bound: float = math.inf,
                   name: str = "custom") -> SpatialLaw:
    """Wrap a user-supplied unit-mass spatial density with its truncation."""
    mass = _adaptive_gl(density, w_min, w_max, QUAD_TOL)
    if abs(mass - 1.0) > 1e-6:
        raise InvalidParameter(f"spatial density mass {mass:.9f} is not 1 "
                               "within its truncation bounds")
    return SpatialLaw(name=name, density=density, transform=transform,
                      tilt_bound=tilt_bound, w_min=w_min, w_max=w_max)


# ---------------------------------------------------------------------------
# kernel
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SupportBox:
    """Truncation bounds outside of which the kernel mass is below TAIL_TOL."""
    s_max: float
    w_min: float
    w_max: float


@dataclass(frozen=True)
class Kernel:
    """A space-time averaging kernel.

    `density` is the pointwise K(s, w) and is None when a Dirac factor makes
    pointwise evaluation meaningless; in that case the separable structure
    (`temporal`, `spatial`) carries the exact representation.  `w_window`
    maps (s, z) to the spatial integration window that contains all relevant
    mass at time s under the tilt exp(-z w); it keeps the quadrature honest
    when the tilt shifts the effective support.
    """
    name: str
    abscissa: Callable[[float], float]
    support_box: SupportBox
    density: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None
    transform_closed: Callable[[float, float], float] | None = None
    temporal: DelayLaw | None = None
    spatial: SpatialLaw | None = None
    w_window: Callable[[np.ndarray, float], tuple[np.ndarray, np.ndarray]] | None = None
    log_density: Callable[[np.ndarray, np.ndarray], np.ndarray] | None = None

    @property
    def separable(self) -> bool:
        return self.temporal is not None and self.spatial is not None


@dataclass(frozen=True)
class ProjectedKernel:
    """The kernel projected onto the moving-frame lag r = c s + w.

    A sum of Dirac atoms and a density part; either may be absent.
    """
    atoms: tuple[tuple[float, float], ...]
    density: Callable[[np.ndarray], np.ndarray] | None
    r_min: float
    r_max: float


# -- construction -----------------------------------------------------------

def make_marine_kernel(v_j: float, d_j: float, mu_j: float) -> Kernel:
    """Advective-Gaussian kernel of juveniles drifting at speed v_j,
    diffusing with d_j and dying at rate mu_j before maturing.

    K(s, w) = mu_j exp(-(w + v_j s)^2 / (4 d_j s) - mu_j s) / (2 sqrt(pi d_j s)).

    Transform: mu_j / (mu_j + (c - v_j) z - d_j z^2) below its pole, which is
    also the convergence abscissa.
    """
    if v_j <= 0 or d_j <= 0 or mu_j <= 0:
        raise InvalidParameter("marine kernel parameters must be positive")
    v, d, mu = float(v_j), float(d_j), float(mu_j)

    def density(s: np.ndarray, w: np.ndarray) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        var = 4.0 * d * s
        return mu * np.exp(-(w + v * s) ** 2 / var - mu * s) / np.sqrt(math.pi * var)

    def log_density(s: np.ndarray, w: np.ndarray) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        var = 4.0 * d * s
        return (math.log(mu) - (w + v * s) ** 2 / var - mu * s
                - 0.5 * np.log(math.pi * var))

    def abscissa(c: float) -> float:
        cv = c - v
        return (cv + math.sqrt(cv * cv + 4.0 * d * mu)) / (2.0 * d)

    def transform_closed(z: float, c: float) -> float:
        den = mu + (c - v) * z - d * z * z
        if den <= 0.0:
            raise DomainExceeded(f"marine transform pole reached at z={z:g}")
        return mu / den

    def w_window(s: np.ndarray, z: float) -> tuple[np.ndarray, np.ndarray]:
        # the tilt exp(-z w) recenters the Gaussian slice at -v s - 2 d s z
        center = -v * s - 2.0 * d * s * z
        half = 10.0 * np.sqrt(2.0 * d * s) + 1e-12
        return center - half, center + half

    s_max = _LOG_TAIL / mu
    spread = 6.0 * math.sqrt(2.0 * d * s_max)
    box = SupportBox(s_max=s_max, w_min=-v * s_max - spread, w_max=spread)
    return Kernel(name=f"marine(v={v:g},d={d:g},mu={mu:g})",
                  abscissa=abscissa, support_box=box, density=density,
                  transform_closed=transform_closed, w_window=w_window,
                  log_density=log_density)


def make_separable_kernel(temporal: DelayLaw, spatial: SpatialLaw,
                          name: str | None = None) -> Kernel:
    """Product kernel K(s, w) = T(s) J(w) from normalized factor laws."""
    for law, lo, hi, what in ((temporal, 0.0, temporal.s_max, "temporal"),
                              (spatial, spatial.w_min, spatial.w_max, "spatial")):
        if law.density is not None and not law.atoms:
            mass = _adaptive_gl(law.density, lo, hi, QUAD_TOL)
            if abs(mass - 1.0) > 2e-6:
                raise InvalidParameter(
                    f"{what} factor mass {mass:.9f} is not 1 within truncation")

    density = None
    if temporal.density is not None and spatial.density is not None:
        density = lambda s, w: temporal.density(s) * spatial.density(w)

    transform_closed = None
    if temporal.laplace is not None and spatial.transform is not None:
        def transform_closed(z: float, c: float,
                             _t=temporal.laplace, _s=spatial.transform) -> float:
            return _t(z * c) * _s(z)

    def abscissa(c: float, _mgf=temporal.mgf_bound, _tb=spatial.tilt_bound) -> float:
        a = _tb
        if c < 0 and _mgf < math.inf:
            a = min(a, _mgf / (-c))
        return a

    box = SupportBox(
        s_max=temporal.s_max if not temporal.atoms else max(t for t, _ in temporal.atoms),
        w_min=spatial.w_min, w_max=spatial.w_max)
    return Kernel(name=name or f"{temporal.name}*{spatial.name}",
                  abscissa=abscissa, support_box=box, density=density,
                  transform_closed=transform_closed,
                  temporal=temporal, spatial=spatial)


def make_dirac_kernel() -> Kernel:
    """No delay, no dispersal: K collapses the averaging entirely."""
    return make_separable_kernel(dirac_delay(0.0), dirac_spatial(0.0),
                                 name="dirac")


# -- operations --------------------------------------------------------------

def _box_window(k: Kernel) -> Callable[[np.ndarray, float], tuple[np.ndarray, np.ndarray]]:
    lo, hi = k.support_box.w_min, k.support_box.w_max
    def window(s: np.ndarray, z: float) -> tuple[np.ndarray, np.ndarray]:
        ones = np.ones_like(np.asarray(s, dtype=float))
        return lo * ones, hi * ones
    return window


def _slice_integrals(k: Kernel, s: np.ndarray, z: float, c: float,
                     n_w: int) -> np.ndarray:
    """Inner integrals over w of K(s, w) exp(-z (c s + w)), one per s node.

    The temporal part of the tilt is folded in here so that, via the kernel's
    log-density when available, the whole exponent is formed before a single
    exp call; separate density and tilt factors over- and underflow long
    before their product does."""
    window = k.w_window or _box_window(k)
    lo, hi = window(s, z)
    mid = 0.5 * (lo + hi)
    half = 0.5 * (hi - lo)
    x, w = np.polynomial.legendre.leggauss(n_w)
    nodes = mid[:, None] + half[:, None] * x[None, :]
    if k.log_density is not None:
        logv = k.log_density(s[:, None], nodes) - z * (c * s[:, None] + nodes)
        vals = np.exp(logv)
    else:
        with np.errstate(over="ignore", under="ignore", invalid="ignore"):
            vals = k.density(s[:, None], nodes) * np.exp(-z * (c * s[:, None] + nodes))
        vals = np.where(np.isfinite(vals), vals, 0.0)
    return half * (vals @ w)


def _octave_nodes(s_hi: float, n_per_octave: int,
                  n_octaves: int = 40) -> tuple[np.ndarray, np.ndarray]:
    """Composite GL nodes on [0, s_hi] with geometrically shrinking cells
    toward 0, so exponential decay is resolved at every scale at once."""
    edges = np.concatenate(([0.0], s_hi * 2.0 ** -np.arange(n_octaves - 1, -1.0, -1.0)))
    nodes, weights = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        x, w = _panel_nodes(a, b, n_per_octave)
        nodes.append(x)
        weights.append(w)
    return np.concatenate(nodes), np.concatenate(weights)


def _transform_quad_2d(k: Kernel, z: float, c: float, tol: float) -> float:
    """Adaptive 2-D quadrature of K(s, w) exp(-z (c s + w)).

    The s-truncation is grown geometrically first (the tilt can slow the
    temporal decay arbitrarily close to the abscissa), then node counts in
    both directions are doubled until the estimate settles."""
    def piece(a: float, b: float, n_panels: int, n_w: int) -> float:
        s_nodes, s_weights = _panel_nodes(a, b, n_panels)
        return float(np.dot(s_weights, _slice_integrals(k, s_nodes, z, c, n_w)))

    def full(s_hi: float, n_per_octave: int, n_w: int) -> float:
        s_nodes, s_weights = _octave_nodes(s_hi, n_per_octave)
        return float(np.dot(s_weights, _slice_integrals(k, s_nodes, z, c, n_w)))

    s_hi = k.support_box.s_max
    prev_chunk = math.inf
    grow = 0
    for _ in range(40):
        chunk = piece(s_hi, 2.0 * s_hi, 8, 48)
        if abs(chunk) < 0.25 * tol:
            break
        if abs(chunk) >= prev_chunk:
            grow += 1
            if grow >= 3:
                raise QuadratureFailure(
                    f"transform diverges at z={z:g}, c={c:g} (abscissa reached?)")
        else:
            grow = 0
        prev_chunk = abs(chunk)
        s_hi *= 2.0
    else:
        raise QuadratureFailure("transform truncation did not settle")

    n_per_octave, n_w = 1, 32
    prev = full(s_hi, n_per_octave, n_w)
    for _ in range(5):
        n_per_octave *= 2
        n_w = min(2 * n_w, 128)
        cur = full(s_hi, n_per_octave, n_w)
        if abs(cur - prev) < tol:
            return cur
        prev = cur
    raise QuadratureFailure(f"transform quadrature stalled at z={z:g}, c={c:g}")


def kernel_mass(k: Kernel, quad_tol: float = QUAD_TOL) -> float:
    """2-D quadrature of the kernel density over its support box.

    The caller compares the result to 1; the box itself may be truncated
    (e.g. for tail studies), in which case the missing mass shows up here.
    """
    if k.separable:
        t, sp = k.temporal, k.spatial
        if t.atoms:
            mass_t = sum(wt for tau, wt in t.atoms if tau <= k.support_box.s_max)
        else:
            if t.density is None:
                raise InvalidParameter("temporal law has no density to integrate")
            mass_t = _adaptive_gl(t.density, 0.0, k.support_box.s_max, quad_tol)
        if sp.atoms:
            mass_w = sum(wt for loc, wt in sp.atoms
                         if k.support_box.w_min <= loc <= k.support_box.w_max)
        else:
            mass_w = _adaptive_gl(sp.density, k.support_box.w_min,
                                  k.support_box.w_max, quad_tol)
        return mass_t * mass_w

    if k.density is None:
        raise InvalidParameter("kernel has neither density nor separable structure")

    def outer(n_per_octave: int, n_w: int) -> float:
        s_nodes, s_weights = _octave_nodes(k.support_box.s_max, n_per_octave)
        return float(np.dot(s_weights, _slice_integrals(k, s_nodes, 0.0, 0.0, n_w)))

    n_per_octave, n_w = 1, 32
    prev = outer(n_per_octave, n_w)
    for _ in range(6):
        n_per_octave *= 2
        n_w = min(2 * n_w, 128)
        cur = outer(n_per_octave, n_w)
        if abs(cur - prev) < quad_tol:
            return cur
        prev = cur
    raise QuadratureFailure("mass quadrature did not converge")


def transform(k: Kernel, z: float, c: float, method: str = "auto") -> float:
    """Evaluate M(z, c), the exponentially tilted kernel mass.

    `method` is "auto" (closed form when available), "closed", or "quad".
    Evaluations are refused at or beyond ABSCISSA_MARGIN of the abscissa,
    where the integral degenerates.
    """
    if z < 0:
        raise DomainExceeded("transform is defined for z >= 0")
    a = k.abscissa(c)
    if math.isfinite(a) and z >= ABSCISSA_MARGIN * a:
        raise DomainExceeded(
            f"z={z:g} is beyond {ABSCISSA_MARGIN:g} * abscissa({c:g})={a:g}")

    if method not in ("auto", "closed", "quad"):
        raise InvalidParameter(f"unknown transform method {method!r}")
    if method in ("auto", "closed") and k.transform_closed is not None:
        return k.transform_closed(z, c)
    if method == "closed":
        raise InvalidParameter(f"kernel {k.name} has no closed-form transform")

    if k.separable:
        t, sp = k.temporal, k.spatial
        u = z * c
        if t.atoms:
            factor_t = sum(wt * math.exp(-u * tau) for tau, wt in t.atoms)
        elif t.density is not None:
            factor_t = _tilted_halfline(t.density, u, t.s_max, QUAD_TOL)
        else:
            raise InvalidParameter("temporal law has no density for quadrature")
        if sp.atoms:
            factor_w = sum(wt * math.exp(-z * loc) for loc, wt in sp.atoms)
        else:
            factor_w = _tilted_line(sp.density, z, sp.w_min, sp.w_max, QUAD_TOL)
        return factor_t * factor_w

    if k.density is None:
        raise InvalidParameter("kernel has neither density nor separable structure")
    return _transform_quad_2d(k, z, c, QUAD_TOL)


def project(k: Kernel, c: float) -> ProjectedKernel:
    """Project the kernel onto the moving-frame lag r = c s + w at speed c."""
    box = k.support_box
    r_lo = min(0.0, c * box.s_max) + box.w_min
    r_hi = max(0.0, c * box.s_max) + box.w_max

    if k.separable:
        t, sp = k.temporal, k.spatial
        if t.atoms and sp.atoms:
            atoms = tuple((c * tau + loc, wt * wl)
                          for tau, wt in t.atoms for loc, wl in sp.atoms)
            return ProjectedKernel(atoms=atoms, density=None,
                                   r_min=min(a for a, _ in atoms),
                                   r_max=max(a for a, _ in atoms))
        if t.atoms:
            def density(r: np.ndarray, _at=t.atoms, _j=sp.density) -> np.ndarray:
                r = np.asarray(r, dtype=float)
                out = np.zeros_like(r)
                for tau, wt in _at:
                    out += wt * _j(r - c * tau)
                return out
            taus = [tau for tau, _ in t.atoms]
            return ProjectedKernel((), density,
                                   min(c * tau for tau in taus) + sp.w_min,
                                   max(c * tau for tau in taus) + sp.w_max)
        if sp.atoms:
            if t.density is None:
                raise InvalidParameter(
                    f"temporal law {t.name} has no density; cannot project")
            if c == 0.0:
                # the s-integral leaves the spatial atoms untouched
                return ProjectedKernel(tuple(sp.atoms), None,
                                       sp.w_min, sp.w_max)
            inv_c = 1.0 / abs(c)
            def density(r: np.ndarray, _at=sp.atoms, _t=t.density) -> np.ndarray:
                r = np.asarray(r, dtype=float)
                out = np.zeros_like(r)
                for loc, wl in _at:
                    out += wl * inv_c * _t((r - loc) / c)
                return out
            locs = [loc for loc, _ in sp.atoms]
            ends = [min(locs) , max(locs), min(locs) + c * t.s_max,
                    max(locs) + c * t.s_max]
            return ProjectedKernel((), density, min(ends), max(ends))

    def density(r: np.ndarray) -> np.ndarray:
        return _k2_density_quad(k, c, np.asarray(r, dtype=float))

    return ProjectedKernel((), density, r_lo, r_hi)


def _k2_density_quad(k: Kernel, c: float, r: np.ndarray) -> np.ndarray:
    """k2(r) = integral over s of K(s, r - c s), vectorized over r.

    Substituting s = u^2 removes the 1/sqrt(s) start-up singularity of
    diffusive kernels; panels are doubled until the whole batch settles."""
    if k.separable:
        t, sp = k.temporal, k.spatial
        if t.density is None or sp.density is None:
            raise InvalidParameter("projected density needs density factors")
        def integrand(u: np.ndarray) -> np.ndarray:
            s = u * u
            return 2.0 * u * t.density(s) * sp.density(r[:, None] - c * s)
    else:
        def integrand(u: np.ndarray) -> np.ndarray:
            s = u * u
            return 2.0 * u * k.density(s, r[:, None] - c * s)

    u_hi = math.sqrt(k.support_box.s_max)

    def estimate(n_per_octave: int) -> np.ndarray:
        xx, ww = _octave_nodes(u_hi, n_per_octave, n_octaves=24)
        vals = integrand(xx[None, :])
        return vals @ ww

    n = 1
    prev = estimate(n)
    for _ in range(7):
        n *= 2
        cur = estimate(n)
        if np.max(np.abs(cur - prev)) < QUAD_TOL * 10:
            return cur
        prev = cur
    raise QuadratureFailure("k2 projection quadrature did not converge")


def project_k2(k: Kernel, c: float, r) -> np.ndarray | float:
    """Pointwise density of the projected kernel k2 at lag(s) r.

    Raises InvalidParameter when the projection is purely atomic (no delay
    and no dispersal); use `project` for the symbolic representation then.
    """
    pk = project(k, c)
    if pk.density is None:
        raise InvalidParameter(
            "projected kernel is purely atomic; use project() instead")
    scalar = np.isscalar(r)
    out = pk.density(np.atleast_1d(np.asarray(r, dtype=float)))
    return float(out[0]) if scalar else out


def k2_mass(k: Kernel, c: float, quad_tol: float = 1e-8) -> float:
    """Integral of the projected kernel over all lags (atoms included).

    The density is integrated on panels that shrink geometrically toward
    lag 0, where diffusive projections concentrate their curvature.
    """
    pk = project(k, c)
    total = sum(wt for _, wt in pk.atoms)
    if pk.density is None:
        return total

    anchor = min(max(0.0, pk.r_min), pk.r_max)

    def estimate(n_per_octave: int) -> float:
        out = 0.0
        for length, sign in ((pk.r_max - anchor, +1.0), (anchor - pk.r_min, -1.0)):
            if length <= 0.0:
                continue
            x, w = _octave_nodes(length, n_per_octave, n_octaves=40)
            out += float(np.dot(w, pk.density(anchor + sign * x)))
        return out

    n = 1
    prev = estimate(n)
    for _ in range(5):
        n *= 2
        cur = estimate(n)
        if abs(cur - prev) < quad_tol:
            return cur
        prev = cur
    raise QuadratureFailure("k2 mass quadrature did not converge")
