"""Fast self-checks run by ``flslab verify``.

Each suite returns a :class:`SuiteResult` holding the measured metric and the
threshold it was held to. The suites are independent of each other and of
the sweep, so any subset can run on its own.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np
from scipy import optimize

from . import bounds, kernels, network
from .flow import FlowSpec, equivalence_twin, integrate
from .mixture import MixtureSpec, concentration_check, phi_coverage, sample_dataset
from .network import InitSpec, init_balanced
from .sweep import mc_error_many


@dataclass
class SuiteResult:
    name: str
    passed: bool
    metric: float
    threshold: float
    detail: str = ""
    runtime: float = 0.0


def suite_equivalence(alphas=(0.25, 1.0, 4.0), steps: int = 1000, lr: float = 1e-3, seed: int = 0) -> SuiteResult:
    """Output-multiplier twin against the initialisation-scale twin on the paper dataset."""
    data = sample_dataset(MixtureSpec(d=128, kappa=1.5, sigma=1.0, n=50, seed=seed))
    state = init_balanced(InitSpec(h=64, alpha=0.1, seed=seed), data.d)
    worst = max(equivalence_twin(state, data, a, lr, steps) for a in alphas)
    return SuiteResult("equivalence", worst <= 1e-9, worst, 1e-9,
                       f"alphas={' '.join(format(a, 'g') for a in alphas)} steps={steps}")


def suite_mc(n_pred: int = 20, samples: int = 10**6, seed: int = 0) -> SuiteResult:
    """Closed-form zero-one error against Monte-Carlo for random unit predictors."""
    mix = MixtureSpec(d=128, kappa=1.5, sigma=1.0)
    rng = np.random.default_rng(seed)
    Ws = rng.standard_normal((mix.d, n_pred))
    # tilt half of the predictors toward the signal so the errors are not all near 1/2
    Ws[0, : n_pred // 2] += 3.0 * np.sqrt(mix.d) * rng.random(n_pred // 2)
    Ws /= np.linalg.norm(Ws, axis=0)
    p, se = mc_error_many(Ws, mix, samples, seed + 1)
    exact = np.array([bounds.zero_one_error(Ws[:, j], mix.kappa, mix.sigma, mix.s_plus) for j in range(n_pred)])
    good = int(np.sum(np.abs(p - exact) <= 3.0 * se))
    need = n_pred - max(1, n_pred // 20)
    return SuiteResult("mc", good >= need, float(good), float(need), f"{good}/{n_pred} within 3 stderr")


def _fd_probe(rng, d=6, h=5, n=8, eps=1e-6):
    X = rng.standard_normal((n, d))
    y = np.where(np.arange(n) % 2 == 0, 1.0, -1.0)
    while True:
        W = rng.standard_normal((d, h))
        pre = X @ W
        if np.min(np.abs(pre)) > 1e-3:
            break
    v = rng.standard_normal(h)
    theta = np.concatenate([W.ravel(), v])

    def risk(th):
        Wt, vt = th[: d * h].reshape(d, h), th[d * h:]
        m = y * (np.maximum(X @ Wt, 0.0) @ vt)
        return float(np.mean(np.logaddexp(0.0, -m)))

    fd = np.empty_like(theta)
    for i in range(theta.size):
        e = np.zeros_like(theta)
        e[i] = eps
        fd[i] = (risk(theta + e) - risk(theta - e)) / (2 * eps)
    _, _, dW, dv = kernels.risk_grad(X, y, W, v, 1.0, network.RELU_PRIME_AT_ZERO)
    an = np.concatenate([dW.ravel(), dv])
    return float(np.linalg.norm(fd - an) / max(np.linalg.norm(fd), 1e-300))


def suite_gradient(probes: int = 100, seed: int = 0) -> SuiteResult:
    """Central differences at kink-free points plus the derivative selection at a kink.

    The kink probe puts one neuron exactly at zero; the subgradient chosen
    for it must be zero, which is what keeps dead neurons dead.
    """
    rng = np.random.default_rng(seed)
    worst = max(_fd_probe(rng) for _ in range(probes))
    X = rng.standard_normal((8, 6))
    y = np.where(np.arange(8) % 2 == 0, 1.0, -1.0)
    W = rng.standard_normal((6, 5))
    W[:, 2] = 0.0
    v = rng.standard_normal(5)
    _, _, dW, _ = kernels.risk_grad(X, y, W, v, 1.0, network.RELU_PRIME_AT_ZERO)
    kink = float(np.max(np.abs(dW[:, 2])))
    ok = worst <= 1e-5 and kink == 0.0
    return SuiteResult("gradient", ok, worst, 1e-5, f"max_rel_err={worst:.3g} kink_grad={kink:.3g}")


def suite_drift(seed: int = 0) -> SuiteResult:
    """Balancedness drift at the default step and its first-order halving."""
    data = sample_dataset(MixtureSpec(d=128, kappa=1.5, sigma=1.0, n=50, seed=seed))
    state = init_balanced(InitSpec(h=64, alpha=1e-2, seed=seed), data.d)
    drifts, signs_ok = [], True
    for tau in (2e-5, 1e-5):
        traj = integrate(state, data, FlowSpec(step=tau, eta_stop=0.05))
        drifts.append(max(traj.drift))
        signs_ok &= bool(np.all(np.sign(traj.final_state.v) == np.sign(state.v)))
    ratio = drifts[1] / drifts[0] if drifts[0] > 0 else 0.0
    ok = drifts[0] <= 1e-3 and 0.4 <= ratio <= 0.6 and signs_ok
    return SuiteResult("drift", ok, drifts[0], 1e-3, f"ratio={ratio:.4f} signs_kept={signs_ok}")


def suite_concentration(delta: float = 0.1, trials: int = 2000, seed: int = 0) -> SuiteResult:
    """Gaussian-mean radius bounds and class-mean angle bracket by Monte-Carlo."""
    worst, parts = 0.0, []
    for n, d in ((200, 32), (50, 128)):
        up, ortho = concentration_check(d, n, delta, trials, seed)
        miss = phi_coverage(MixtureSpec(d=d, n=n, kappa=1.5, sigma=1.0), delta, trials, seed + 1)
        worst = max(worst, up, ortho, miss)
        parts.append(f"n={n},d={d}:{up:.4f}/{ortho:.4f}/{miss:.4f}")
    return SuiteResult("concentration", worst <= delta + 0.03, worst, delta + 0.03, " ".join(parts))


def _vstar_oracle(Psi, xbar, s, rng, starts=8):
    """Maximise <v, s> over unit v with <v, xbar> >= Psi by constrained local search."""
    cons = [{"type": "eq", "fun": lambda v: v @ v - 1.0, "jac": lambda v: 2 * v},
            {"type": "ineq", "fun": lambda v: v @ xbar - Psi, "jac": lambda v: xbar}]
    best = -np.inf
    for _ in range(starts):
        v0 = rng.standard_normal(s.size)
        v0 /= np.linalg.norm(v0)
        res = optimize.minimize(lambda v: -(v @ s), v0, jac=lambda v: -s, constraints=cons,
                                method="SLSQP", options={"ftol": 1e-14, "maxiter": 500})
        v = res.x / np.linalg.norm(res.x)
        if v @ xbar >= Psi - 1e-9:
            best = max(best, float(v @ s))
    return best


def suite_bound_shape(seed: int = 0) -> SuiteResult:
    """Over-alignment monotonicity, g_geom critical point and v* optimality."""
    rng = np.random.default_rng(seed)
    d, sigma, kappa = 6, 0.7, 1.5
    worst = 0.0
    mono = True
    for phi in (0.2, 0.7, 1.2):
        grid = np.linspace(math.cos(phi), 1.0, 200)
        oa = [bounds.oa_from_angle(P, phi, kappa, sigma) for P in grid]
        mono &= bool(np.all(np.diff(oa) >= -1e-15))

        # the derivative of g_geom changes sign once on (0, 1)
        def slope(P, h=1e-7):
            return bounds.g_geom(P + h, phi, sigma, d) - bounds.g_geom(P - h, phi, sigma, d)

        lo, hi = 1e-6, 1 - 1e-6
        for _ in range(80):
            mid = 0.5 * (lo + hi)
            lo, hi = (mid, hi) if slope(mid) > 0 else (lo, mid)
        worst = max(worst, abs(0.5 * (lo + hi) - bounds.g_geom_critical(phi, sigma, d)))

        s = np.zeros(d)
        s[0] = 1.0
        u = rng.standard_normal(d)
        u[0] = 0.0
        xbar = math.cos(phi) * s + math.sin(phi) * u / np.linalg.norm(u)
        for Psi in (math.cos(phi) + 0.3 * (1 - math.cos(phi)), 0.95):
            got = float(bounds.v_star(Psi, xbar, s) @ s)
            worst = max(worst, abs(got - _vstar_oracle(Psi, xbar, s, rng)))
    return SuiteResult("bound_shape", mono and worst <= 1e-6, worst, 1e-6, f"oa_monotone={mono}")


SUITES = {
    "equivalence": suite_equivalence,
    "mc": suite_mc,
    "gradient": suite_gradient,
    "drift": suite_drift,
    "concentration": suite_concentration,
    "bound_shape": suite_bound_shape,
}


def run_suites(names=None, **kwargs) -> list[SuiteResult]:
    """Run the named suites (all by default). ``alpha`` narrows the equivalence suite."""
    names = list(names or SUITES)
    unknown = [n for n in names if n not in SUITES]
    if unknown:
        raise KeyError(f"unknown suite(s): {', '.join(unknown)}")
    out = []
    for name in names:
        kw = {}
        if name == "equivalence" and kwargs.get("alpha") is not None:
            kw["alphas"] = (float(kwargs["alpha"]),)
        t0 = time.perf_counter()
        res = SUITES[name](**kw)
        res.runtime = time.perf_counter() - t0
        out.append(res)
    return out
