"""Application models reduced to the scalar wave machinery.

Three configurations are packaged:

  * the marine population of the closed-form example (advective-Gaussian
    kernel, linear adult mortality),
  * an epidemic system (agent u diffuses and decays through f, infectives v
    relax at rate alpha toward a delayed infectivity g) whose traveling
    waves reduce to the scalar equation with an exponentially smoothed
    delay law, plus the reconstruction of the infective component,
  * a mature/immature population system whose immature component is
    reconstructed from the mature wave through its own Green kernel.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .dispersion import DispersionFunction
from .errors import InvalidParameter, SemiwaveError
from .kernels import (DelayLaw, Kernel, SpatialLaw, dirac_delay, dirac_spatial,
                      exponential_delay, exponentially_smoothed_delay,
                      gaussian_spatial, make_marine_kernel,
                      make_separable_kernel)
from .profile import Grid, Nonlinearity, Profile, _convolve, _green_cell_weights
from .profile import _K2Sampler

__all__ = [
    "EpidemicModel",
    "PopulationModel",
    "ModelSetup",
    "epidemic_kernel",
    "epidemic_dispersion",
    "epidemic_k2",
    "epidemic_reconstruct",
    "population_reconstruct",
    "marine_preset",
    "benchmark_nonlinearity",
    "rational_birth_nonlinearity",
    "preset",
    "PRESETS",
]


# ---------------------------------------------------------------------------
# nonlinearity builders
# ---------------------------------------------------------------------------

def rational_birth_nonlinearity(p: float, q: float = 1.0,
                                L: float | None = None,
                                name: str | None = None,
                                strict: bool = True) -> Nonlinearity:
    """Linear removal q*s against the saturating birth law p*s/(1+s).

    The birth slope at 0 is p (also its tightest linear majorant and its
    supremum), so the monostability condition is just p > q; the positive
    balance point is kappa = p/q - 1.  A looser majorant L > p may be
    forced to separate the constructive speed from the linearized one.
    With strict=False an invalid pair is still constructed, so that
    hypothesis validation can report exactly what fails.
    """
    if strict and (p <= q or q <= 0):
        raise InvalidParameter("need p > q > 0 for a monostable pair")
    if L is None:
        L = p
    elif strict and L < p:
        raise InvalidParameter("the majorant L cannot be below the slope at 0")
    return Nonlinearity(
        g=lambda s: p * s / (1.0 + s), g_prime0=p, L=L, g_sup=p,
        f=lambda s: q * np.asarray(s, dtype=float), f_prime0=q, f_inf_slope=q,
        f_inverse=lambda y: y / q,
        name=name or f"rational(p={p:g},q={q:g})")


def benchmark_nonlinearity() -> Nonlinearity:
    """The standard test pair f(s) = s, g(s) = 2s/(1+s) with kappa = 1."""
    return rational_birth_nonlinearity(2.0, 1.0, name="benchmark")


# ---------------------------------------------------------------------------
# epidemic system
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class EpidemicModel:
    """Agent/infective system with agent decay alpha, delay law P of the
    infectivity response, spatial agent dispersal J, and nonlinearity pair
    (f for removal, g for infectivity)."""
    alpha: float
    delay: DelayLaw
    spatial: SpatialLaw
    nl: Nonlinearity

    def __post_init__(self) -> None:
        if self.alpha <= 0:
            raise InvalidParameter("agent decay alpha must be positive")


def epidemic_kernel(m: EpidemicModel) -> Kernel:
    """Compound kernel of the scalar reduction: the delay law smoothed by the
    exponential(alpha) relaxation, times the spatial dispersal."""
    return make_separable_kernel(
        exponentially_smoothed_delay(m.delay, m.alpha), m.spatial,
        name=f"epidemic(alpha={m.alpha:g})")


def scaled_epidemic_nonlinearity(m: EpidemicModel) -> Nonlinearity:
    """Birth term of the scalar reduction: g / alpha (the relaxation spreads
    the infectivity mass 1/alpha over time)."""
    nl = m.nl
    a = m.alpha
    return Nonlinearity(
        g=lambda s: np.asarray(nl.g(s), dtype=float) / a,
        g_prime0=nl.g_prime0 / a, L=nl.L / a, g_sup=nl.g_sup / a,
        f=nl.f, f_prime0=nl.f_prime0, f_inf_slope=nl.f_inf_slope,
        f_inverse=nl.f_inverse, name=f"{nl.name}/alpha")


def epidemic_dispersion(m: EpidemicModel
                        ) -> tuple[DispersionFunction, DispersionFunction]:
    """Characteristic evaluators of the epidemic reduction, valid where
    c z + alpha > 0 (the compound kernel's abscissa encodes exactly that).

    Returns the pair (trivial-state function, constructive function); both
    feed positive_roots and minimal_speed unchanged.
    """
    kern = epidemic_kernel(m)
    chi0 = DispersionFunction(q=m.nl.f_prime0, p=m.nl.g_prime0 / m.alpha,
                              kernel=kern)
    chi_l = DispersionFunction(q=m.nl.f_inf_slope, p=m.nl.L / m.alpha,
                               kernel=kern)
    return chi0, chi_l


def epidemic_k2(m: EpidemicModel, w) -> np.ndarray:
    """The relaxation kernel K2(w) = integral_0^w exp(-alpha (w-r)) P(dr).

    Closed form for atomic and exponential delay laws; its total mass is
    1/alpha for any unit-mass P.
    """
    w = np.asarray(w, dtype=float)
    a = m.alpha
    P = m.delay
    if P.atoms:
        out = np.zeros_like(w)
        for tau, wt in P.atoms:
            out += np.where(w >= tau, wt * np.exp(-a * np.maximum(w - tau, 0.0)), 0.0)
        return out
    if P.name.startswith("exponential("):
        eta = P.mgf_bound
        if abs(eta - a) < 1e-12 * a:
            return np.where(w >= 0, a * np.maximum(w, 0.0) * np.exp(-a * np.maximum(w, 0.0)), 0.0)
        coef = eta / (a - eta)
        return np.where(w >= 0,
                        coef * (np.exp(-eta * np.maximum(w, 0.0))
                                - np.exp(-a * np.maximum(w, 0.0))), 0.0)
    raise InvalidParameter(
        f"no K2 form for delay law {P.name}; use atoms or an exponential law")


def epidemic_reconstruct(m: EpidemicModel, prof: Profile, c: float) -> np.ndarray:
    """Infective-component wave from a converged agent wave.

    psi(t) = integral_0^inf g(phi(t - c w)) K2(w) dw for c != 0, and
    alpha psi = g(phi) exactly at c = 0.  The discrete weights are scaled to
    the exact K2 mass 1/alpha, so the bound sup psi <= sup g / alpha is
    inherited by the discretization.
    """
    phi = prof.values
    grid = prof.grid
    if c == 0:
        return np.asarray(m.nl.g(phi), dtype=float) / m.alpha

    # w-grid aligned so the shifts c*w land on grid multiples
    dw = grid.h / abs(c)
    w_max = (max(t for t, _ in m.delay.atoms) if m.delay.atoms else m.delay.s_max) \
        + 37.0 / m.alpha
    n_w = int(math.ceil(w_max / dw)) + 1
    w = dw * np.arange(n_w)
    weights = epidemic_k2(m, w) * dw
    weights[0] *= 0.5
    weights[-1] *= 0.5
    weights *= (1.0 / m.alpha) / float(np.sum(weights))

    # shift index j corresponds to lag c*w_j = sign(c) * j * h
    j_lo = 0 if c > 0 else -(n_w - 1)
    if c < 0:
        weights = weights[::-1]
    g_phi = np.asarray(m.nl.g(phi), dtype=float)
    psi = _convolve(g_phi, j_lo, weights, (), grid)

    if np.min(psi) < -1e-12:
        raise SemiwaveError("reconstructed infective wave went negative")
    bound = m.nl.g_sup / m.alpha
    if np.max(psi) > bound + 1e-6:
        raise SemiwaveError(
            f"reconstructed infective wave exceeds its bound {bound:g}")
    n_edge = max(grid.n // 50, 2)
    input_vanishes = np.max(np.abs(phi[:n_edge])) <= 1e-3 * float(np.max(np.abs(phi)) + 1e-300)
    if input_vanishes and np.max(np.abs(psi[:n_edge])) > 1e-3 * float(np.max(psi)) + 1e-12:
        raise SemiwaveError("infective wave does not vanish on the left edge")
    return psi


# ---------------------------------------------------------------------------
# population system
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class PopulationModel:
    """Mature/immature population: immature diffusivity D, immature death
    gamma, maturation kernel, and mature nonlinearity pair."""
    D: float
    gamma: float
    kernel: Kernel
    nl: Nonlinearity

    def __post_init__(self) -> None:
        if self.D <= 0 or self.gamma <= 0:
            raise InvalidParameter("D and gamma must be positive")


def population_reconstruct(m: PopulationModel, prof: Profile, c: float
                           ) -> np.ndarray:
    """Immature-component wave from a converged mature wave.

    The immature balance g(phi) - k2 * g(phi) is smoothed by the two-sided
    exponential Green kernel of -D y'' + c y' + gamma y (mass 1/gamma).
    Constants are annihilated by the balance, so psi vanishes wherever the
    mature wave is flat.
    """
    phi = prof.values
    grid = prof.grid
    k2 = _K2Sampler.build(m.kernel, c, grid)
    g_phi = np.asarray(m.nl.g(phi), dtype=float)
    balance = g_phi - _convolve(g_phi, k2.j_lo, k2.weights, k2.atoms, grid)
    j_lo, w = _green_cell_weights(m.D, c, m.gamma, grid.h)
    psi = _convolve(balance, j_lo, w, (), grid)
    n_edge = max(grid.n // 50, 2)
    input_vanishes = np.max(np.abs(phi[:n_edge])) <= 1e-3 * float(np.max(np.abs(phi)))
    if input_vanishes and \
            np.max(np.abs(psi[:n_edge])) > 1e-3 * float(np.max(np.abs(psi))) + 1e-12:
        raise SemiwaveError("immature wave does not vanish on the left edge")
    return psi


# ---------------------------------------------------------------------------
# presets
# ---------------------------------------------------------------------------

def marine_preset(v_j: float = 0.02, d_j: float = 100.0, mu_j: float = 0.001,
                  mu_a: float = 0.05, p: float = 2.0,
                  g: Nonlinearity | None = None
                  ) -> tuple[Kernel, Nonlinearity, DispersionFunction]:
    """The closed-form marine example: advective-Gaussian maturation kernel,
    linear adult mortality mu_a, and a saturating birth law with slope p.

    Here L = g'(0) and inf f' = f'(0), so the trivial-state and constructive
    characteristic functions coincide.
    """
    if p <= mu_a:
        raise InvalidParameter("need birth slope p > adult mortality mu_a")
    kernel = make_marine_kernel(v_j, d_j, mu_j)
    nl = g if g is not None else rational_birth_nonlinearity(p, mu_a, name="marine")
    chi0 = DispersionFunction(q=nl.f_prime0, p=nl.g_prime0, kernel=kernel)
    return kernel, nl, chi0


@dataclass(frozen=True)
class ModelSetup:
    """Everything a command needs to run one model.

    The characteristic functions are None when the model parameters break
    monostability; hypothesis validation still runs and reports why.
    """
    name: str
    kernel: Kernel
    nl: Nonlinearity
    chi0: DispersionFunction | None
    chi_l: DispersionFunction | None
    epidemic: EpidemicModel | None = None
    population: PopulationModel | None = None


def _chi_pair(nl: Nonlinearity, kernel: Kernel, scale: float = 1.0
              ) -> tuple[DispersionFunction | None, DispersionFunction | None]:
    try:
        chi0 = DispersionFunction(q=nl.f_prime0, p=nl.g_prime0 * scale,
                                  kernel=kernel)
    except InvalidParameter:
        chi0 = None
    try:
        chi_l = DispersionFunction(q=nl.f_inf_slope, p=nl.L * scale,
                                   kernel=kernel)
    except InvalidParameter:
        chi_l = None
    return chi0, chi_l


def _setup_benchmark(**params) -> ModelSetup:
    nl = rational_birth_nonlinearity(params.get("g_prime0", 2.0),
                                     params.get("f_slope", 1.0),
                                     L=params.get("L"), name="benchmark",
                                     strict=False)
    kern = make_separable_kernel(
        exponential_delay(params.get("delay_rate", 1.0)),
        gaussian_spatial(params.get("sigma", 1.0)))
    chi0, chi_l = _chi_pair(nl, kern)
    return ModelSetup(name="benchmark", kernel=kern, nl=nl, chi0=chi0,
                      chi_l=chi_l)


def _setup_marine(**params) -> ModelSetup:
    kernel = make_marine_kernel(params.get("v_j", 0.02),
                                params.get("d_j", 100.0),
                                params.get("mu_j", 0.001))
    nl = rational_birth_nonlinearity(params.get("p", 2.0),
                                     params.get("mu_a", 0.05),
                                     name="marine", strict=False)
    chi0, chi_l = _chi_pair(nl, kernel)
    return ModelSetup(name="marine", kernel=kernel, nl=nl, chi0=chi0,
                      chi_l=chi_l)


def _setup_epidemic(**params) -> ModelSetup:
    alpha = params.get("alpha", 2.0)
    tau = params.get("delay_tau", 0.0)
    sigma = params.get("sigma", 1.0)
    g_slope = params.get("g_prime0", 4.0)
    nl = rational_birth_nonlinearity(g_slope, params.get("f_slope", 1.0),
                                     name="epidemic", strict=False)
    model = EpidemicModel(alpha=alpha, delay=dirac_delay(tau),
                          spatial=gaussian_spatial(sigma), nl=nl)
    kern = epidemic_kernel(model)
    chi0, chi_l = _chi_pair(nl, kern, scale=1.0 / alpha)
    return ModelSetup(name="epidemic", kernel=kern,
                      nl=scaled_epidemic_nonlinearity(model),
                      chi0=chi0, chi_l=chi_l, epidemic=model)


def _setup_population(**params) -> ModelSetup:
    base = _setup_benchmark(**params)
    model = PopulationModel(D=params.get("D", 1.0),
                            gamma=params.get("gamma", 1.0),
                            kernel=base.kernel, nl=base.nl)
    return ModelSetup(name="population", kernel=base.kernel, nl=base.nl,
                      chi0=base.chi0, chi_l=base.chi_l, population=model)


PRESETS = {
    "benchmark": _setup_benchmark,
    "marine": _setup_marine,
    "epidemic": _setup_epidemic,
    "population": _setup_population,
}


def preset(name: str, **params) -> ModelSetup:
    """Build a named model preset; unknown names raise InvalidParameter."""
    try:
        builder = PRESETS[name]
    except KeyError:
        raise InvalidParameter(
            f"unknown preset {name!r}; available: {sorted(PRESETS)}") from None
    return builder(**params)
