"""Closed-form alignment bounds and the over-alignment / over-fitting split.

All Gaussian tail probabilities go through :func:`scipy.special.ndtr`, which
keeps relative accuracy for small probabilities. Wherever the signal norm
appears it is ``kappa`` (the data model does not fix it to one).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtr

from .errors import ConfigurationError, DegenerateError, InapplicableError, ParameterError


def Phi(x):
    """Standard normal CDF."""
    return ndtr(x)


@dataclass
class BoundInputs:
    alpha: float
    n_plus: int
    h: int
    x_max: float
    x_min: float
    W_ref_max: float
    x_plus_norm: float
    lam: float = 0.0
    t1: float = 0.0
    t_alpha: float = 0.0
    t2: float = 0.0
    risk_at_t_alpha: float = math.log(2.0)
    risk_at_t2: float = math.log(2.0)
    eta: float = 0.05
    sigma: float = 1.0
    kappa: float = 1.0
    d: int = 2
    phi: float = 0.0
    Psi_at_stop: float = 1.0
    delta: float = 0.1
    C_complexity: float = 1.0

    def __post_init__(self):
        if self.x_plus_norm <= 0 or self.x_max <= 0:
            raise ParameterError("norms must be positive")
        if not 0.0 < self.delta < 1.0:
            raise ParameterError("delta must lie in (0, 1)")
        if not -1.0 <= self.Psi_at_stop <= 1.0:
            raise ParameterError("Psi_at_stop must lie in [-1, 1]")


def nu(inp: BoundInputs) -> float:
    """Coefficient of alpha in ``1 - zeta``."""
    return 4.0 * inp.n_plus * math.sqrt(inp.h) * inp.x_max**2 * inp.W_ref_max**2 / inp.x_plus_norm


def zeta(inp: BoundInputs) -> float:
    """May be negative, in which case the phase-1 bound is vacuous."""
    return 1.0 - nu(inp) * inp.alpha


def phase1_lower(inp: BoundInputs) -> float:
    """Lower bound on every positive-cone neuron's alignment (and Psi) at t_alpha.

    Returns 0 when zeta < 0 or t_alpha < t1.
    """
    z = zeta(inp)
    if z < 0 or inp.t_alpha < inp.t1:
        return 0.0
    rz = math.sqrt(z)
    return rz * math.tanh((inp.t_alpha - inp.t1) * inp.x_plus_norm * rz)


def phase1_angle_upper(inp: BoundInputs) -> tuple[float, bool]:
    """Explicit upper bound on the neuron/class-mean angle at t_alpha.

    Returns ``(angle, informative)``; the angle is pi/2 and ``informative``
    False when the arcsin argument reaches 1.
    """
    na = nu(inp) * inp.alpha
    if na >= 1.0:
        return math.pi / 2.0, False
    r = math.sqrt(1.0 - na)
    k = inp.x_plus_norm * r / (4.0 * inp.n_plus * inp.x_max)
    log_term = (math.log(4.0 * (1.0 - na)) + 2.0 * inp.t1 * inp.x_plus_norm * r
                + k * math.log(inp.h * inp.alpha))
    arg = na + math.exp(min(log_term, 700.0))
    if arg >= 1.0:
        return math.pi / 2.0, False
    return math.asin(math.sqrt(arg)), True


def corollary_condition(inp: BoundInputs) -> bool:
    return inp.x_plus_norm / inp.n_plus < 4.0 * inp.x_max


def beta(inp: BoundInputs) -> float:
    return inp.lam**2 * inp.x_min**2 / (32.0 * inp.x_max)


def g_flow(inp: BoundInputs) -> float:
    """Upper bound on the phase-2 decay exponent."""
    if inp.lam <= 0:
        raise InapplicableError("phase-2 bound needs a positive separability margin")
    if inp.eta > inp.risk_at_t2:
        raise ConfigurationError("eta must not exceed the risk at t2")
    return inp.x_max * inp.n_plus * (
        (inp.t2 - inp.t_alpha) * inp.risk_at_t_alpha + math.log(inp.risk_at_t2 / inp.eta) / beta(inp)
    )


def phase2_lower(inp: BoundInputs, psi_at_t_alpha: float) -> float:
    m = psi_at_t_alpha - inp.lam
    return inp.lam + m * math.exp(-g_flow(inp))


def _unit(w) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    nw = np.linalg.norm(w)
    if nw == 0.0:
        raise DegenerateError("zero predictor")
    return w / nw


def zero_one_error(w, kappa: float, sigma: float, s_plus) -> float:
    """Population misclassification rate of ``sign(<w, x>)``; scale-invariant in ``w``."""
    c = float(np.dot(_unit(w), s_plus))
    return float(Phi(-kappa * c / sigma))


def bayes_error(kappa: float, sigma: float) -> float:
    return float(Phi(-kappa / sigma))


def v_star(Psi: float, x_plus, s_plus) -> np.ndarray:
    """Unit vector in the cap ``{v : <v, x_+/|x_+|> >= Psi}`` most aligned with ``s_plus``."""
    if not -1.0 <= Psi <= 1.0:
        raise ParameterError("Psi must lie in [-1, 1]")
    xb = _unit(x_plus)
    s = _unit(s_plus)
    cphi = float(np.clip(np.dot(xb, s), -1.0, 1.0))
    if Psi <= cphi:
        return s
    phi = math.acos(cphi)
    if phi == 0.0:
        return xb
    if phi == math.pi:
        raise DegenerateError("signal antipodal to the class mean")
    bar = math.acos(Psi)
    v = (math.sin(phi - bar) * xb + math.sin(bar) * s) / math.sin(phi)
    return v / np.linalg.norm(v)


def best_signal_cosine(Psi: float, phi: float) -> float:
    """``<v*, s_plus>`` from the cap half-angle and the class-mean angle."""
    bar = math.acos(min(1.0, max(-1.0, Psi)))
    return 1.0 if bar >= phi else math.cos(phi - bar)


def oa_term(Psi: float, kappa: float, sigma: float, x_plus, s_plus) -> float:
    vs = v_star(Psi, x_plus, s_plus)
    return max(0.0, zero_one_error(vs, kappa, sigma, s_plus) - bayes_error(kappa, sigma))


def oa_from_angle(Psi: float, phi: float, kappa: float, sigma: float) -> float:
    return float(Phi(-kappa * best_signal_cosine(Psi, phi) / sigma) - Phi(-kappa / sigma))


def g_geom(Psi: float, phi: float, sigma: float, d: int) -> float:
    """Geometric complexity term of the over-fitting bound."""
    return (Psi * math.sqrt(math.cos(phi) ** 2 + sigma**2)
            + math.sqrt(max(0.0, 1.0 - Psi**2)) * math.sqrt(math.sin(phi) ** 2 + sigma**2 * (d - 1)))


def g_geom_critical(phi: float, sigma: float, d: int) -> float:
    """Psi at which ``g_geom`` switches from increasing to decreasing."""
    return math.sqrt((math.cos(phi) ** 2 + sigma**2) / (1.0 + sigma**2 * d))


def of_prefactor(kappa: float, sigma: float) -> float:
    return 2.0 * (1.0 + math.exp(kappa)) / (sigma * math.sqrt(2.0 * math.pi))


def of_bound(inp: BoundInputs) -> float:
    if inp.n_plus < 1:
        raise ParameterError("n_plus must be >= 1")
    if inp.C_complexity <= 0:
        raise ParameterError("C_complexity must be positive")
    g = g_geom(inp.Psi_at_stop, inp.phi, inp.sigma, inp.d)
    c = inp.C_complexity * (1.0 + inp.sigma * math.sqrt(inp.d))
    n = inp.n_plus
    return of_prefactor(inp.kappa, inp.sigma) * (
        4.0 / math.sqrt(n) * g + inp.eta + c * math.sqrt(math.log(2.0 / inp.delta) / n)
    )


@dataclass
class ErrorDecomposition:
    OA_exact: float
    OF_exact: float
    excess_exact: float
    OA_bound_term: float
    OF_bound_term: float
    g_geom: float
    v_star: np.ndarray = field(repr=False)
    psi_used: float
    bayes_error: float
    norm_ok: bool = True
    margin_ok: bool = True


def decompose(w_hat, Psi_at_stop: float, inp: BoundInputs, x_plus, s_plus, X_pos=None) -> ErrorDecomposition:
    """Split the excess error of ``w_hat`` at the cap defined by ``Psi_at_stop``.

    ``X_pos`` (positive-class rows), when given, is used to check the
    non-negative-margin side condition; violations are reported, not raised.
    """
    w_hat = np.asarray(w_hat, dtype=float)
    if np.linalg.norm(w_hat) == 0.0:
        raise DegenerateError("zero predictor")
    k, s = inp.kappa, inp.sigma
    vs = v_star(Psi_at_stop, x_plus, s_plus)
    e_w = zero_one_error(w_hat, k, s, s_plus)
    e_v = zero_one_error(vs, k, s, s_plus)
    b = bayes_error(k, s)
    oa = e_v - b
    of = e_w - e_v
    margin_ok = True if X_pos is None else bool(np.all(np.asarray(X_pos) @ w_hat >= 0.0))
    return ErrorDecomposition(
        OA_exact=oa,
        OF_exact=of,
        excess_exact=e_w - b,
        OA_bound_term=oa,
        OF_bound_term=of_bound(inp),
        g_geom=g_geom(Psi_at_stop, inp.phi, s, inp.d),
        v_star=vs,
        psi_used=Psi_at_stop,
        bayes_error=b,
        norm_ok=bool(np.linalg.norm(w_hat) <= 1.0),
        margin_ok=margin_ok,
    )


def population_logistic_risk(w, kappa: float, sigma: float, s_plus=None, nodes: int = 64) -> float:
    """Gauss-Hermite estimate of ``E[log(1 + exp(-(kappa <w, s> + sigma G)))]``."""
    w = np.asarray(w, dtype=float)
    if abs(np.linalg.norm(w) - 1.0) > 1e-8:
        raise ParameterError("w must be a unit vector")
    if nodes < 20:
        raise ParameterError("nodes must be >= 20")
    if s_plus is None:
        s_plus = np.zeros_like(w)
        s_plus[0] = 1.0
    mu = kappa * float(np.dot(w, s_plus))
    x, wt = np.polynomial.hermite.hermgauss(nodes)
    u = mu + sigma * math.sqrt(2.0) * x
    vals = np.maximum(-u, 0.0) + np.log1p(np.exp(-np.abs(u)))
    return float(np.dot(wt, vals) / math.sqrt(math.pi))
