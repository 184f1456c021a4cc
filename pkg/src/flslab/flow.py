"""Discretised gradient flow, characteristic times, and the scaling twin."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import kernels, network
from ._pykernels import softplus_neg
from .cones import ConePartition, detect_trapping_time, membership_codes
from .errors import DivergenceError, ParameterError
from .network import NetworkState

CLOCKS = ("theory", "sum", "mean")
INTEGRATORS = ("euler", "heun")


@dataclass(frozen=True)
class FlowSpec:
    """Integration settings.

    ``clock`` fixes the time unit. ``"mean"`` follows the mean risk,
    ``"sum"`` the summed loss (times n), and ``"theory"`` the summed loss
    with the logistic slope at the origin normalised to one (times 2n), which
    is the unit the phase-1 horizon and alignment rates are stated in.
    """

    step: float = 1e-4
    max_time: float = 10.0
    record_every: int = 20
    eta_stop: float = 0.05
    integrator: str = "euler"
    clock: str = "theory"
    drop_ratio: float = 0.9
    trap_window: int = 5

    def __post_init__(self):
        if not self.step > 0 or not self.max_time > 0:
            raise ParameterError("step and max_time must be positive")
        if not 0.0 < self.eta_stop < math.log(2.0):
            raise ParameterError("eta_stop must lie in (0, log 2)")
        if self.record_every < 1:
            raise ParameterError("record_every must be >= 1")
        if self.integrator not in INTEGRATORS:
            raise ParameterError(f"integrator must be one of {INTEGRATORS}")
        if self.clock not in CLOCKS:
            raise ParameterError(f"clock must be one of {CLOCKS}")
        if not 0.0 < self.drop_ratio <= 1.0:
            raise ParameterError("drop_ratio must lie in (0, 1]")

    def scale(self, n: int) -> float:
        return {"mean": 1.0, "sum": float(n), "theory": 2.0 * n}[self.clock]


def t_alpha(alpha: float, n_plus: int, x_max: float, h: int) -> tuple[float, bool]:
    """Phase-1 horizon ``log(1/(sqrt(h) alpha)) / (4 n_plus x_max)``.

    Returns ``(t, valid)``; ``valid`` is False (and ``t`` is 0) when
    ``alpha * sqrt(h) >= 1``.
    """
    arg = math.sqrt(h) * alpha
    if not 0.0 < arg < 1.0:
        return 0.0, False
    return math.log(1.0 / arg) / (4.0 * n_plus * x_max), True


def alpha_admissible_max(h: int, x_max: float, W_ref_max: float) -> float:
    """Largest initialisation scale for which the phase-1 ODE estimate applies."""
    return 1.0 / (4.0 * math.sqrt(h) * x_max * W_ref_max**2)


@dataclass
class StopRecord:
    eta: float
    t_eta: float
    reached: bool
    t_alpha: float
    t_alpha_valid: bool
    t2: float = float("nan")
    t2_found: bool = False
    t1_detected: float = float("nan")
    t1_found: bool = False
    risk_at_t_alpha: float = float("nan")
    risk_at_t2: float = float("nan")
    record_index: int = -1
    state: NetworkState | None = field(default=None, repr=False)


@dataclass
class Trajectory:
    times: list = field(default_factory=list)
    risk_all: list = field(default_factory=list)
    risk_plus: list = field(default_factory=list)
    psi: list = field(default_factory=list)
    predictor_norm: list = field(default_factory=list)
    drift: list = field(default_factory=list)
    codes: list = field(default_factory=list)
    final_state: NetworkState | None = None
    t_alpha: float = 0.0
    t_alpha_valid: bool = False
    alpha_state: NetworkState | None = None
    alpha_index: int = -1
    stops: dict = field(default_factory=dict)
    eta_stop: float = float("nan")
    steps: int = 0
    backend: str = kernels.BACKEND

    @property
    def stop(self) -> StopRecord | None:
        return self.stops.get(self.eta_stop)

    def partition(self, k: int) -> ConePartition:
        return ConePartition(np.asarray(self.codes[k]), self.times[k])

    def as_arrays(self) -> dict:
        return {
            "t": np.asarray(self.times),
            "risk_all": np.asarray(self.risk_all),
            "risk_plus": np.asarray(self.risk_plus),
            "psi": np.asarray(self.psi),
            "predictor_norm": np.asarray(self.predictor_norm),
            "drift": np.asarray(self.drift),
            "codes": np.asarray(self.codes),
        }

    def rows(self):
        """Export rows ``t,risk_all,risk_plus,psi,predictor_norm,drift,n_Vplus,n_Vminus,n_Vdead``."""
        for k, t in enumerate(self.times):
            c = np.asarray(self.codes[k])
            yield (t, self.risk_all[k], self.risk_plus[k], self.psi[k], self.predictor_norm[k],
                   self.drift[k], int((c == 1).sum()), int((c == -1).sum()), int((c == 0).sum()))


def _observe(traj: Trajectory, t: float, W, v, data) -> None:
    m = data.y * (np.maximum(data.X @ W, 0.0) @ v)
    loss = softplus_neg(m)
    codes = membership_codes(W, data.X, data.y)
    idx = np.flatnonzero(codes == 1)
    if idx.size:
        w_hat = W[:, idx] @ v[idx]
        nrm = float(np.linalg.norm(w_hat))
        psi = float(np.dot(w_hat, data.x_plus) / (nrm * np.linalg.norm(data.x_plus))) if nrm > 0 else float("nan")
    else:
        nrm, psi = float("nan"), float("nan")
    traj.times.append(float(t))
    traj.risk_all.append(float(loss.mean()))
    traj.risk_plus.append(float(loss[data.y > 0].mean()))
    traj.psi.append(psi)
    traj.predictor_norm.append(nrm)
    traj.drift.append(float(np.max(np.abs(v**2 - np.sum(W**2, axis=0)))))
    traj.codes.append(codes)


def integrate(state: NetworkState, data, spec: FlowSpec, etas=None) -> Trajectory:
    """Integrate the flow from ``state`` (left untouched).

    Observables are recorded every ``record_every`` steps, at ``t_alpha``
    exactly (the step before it is shortened to land on it), and at the first
    step where the positive-class risk is at or below each stopping level
    after ``t_alpha``. Runs until the smallest level is reached or
    ``max_time``. One :class:`StopRecord` per level is stored in ``stops``.
    """
    levels = sorted({float(spec.eta_stop), *(float(e) for e in (etas or ()))}, reverse=True)
    for e in levels:
        if not 0.0 < e < math.log(2.0):
            raise ParameterError("stopping levels must lie in (0, log 2)")
    W = state.W.copy()
    v = state.v.copy()
    X, y = data.X, data.y
    pos = (y > 0).astype(np.uint8)
    scale = spec.scale(data.n)
    heun = spec.integrator == "heun"
    sp0 = network.RELU_PRIME_AT_ZERO
    tau = spec.step
    ta, ta_valid = t_alpha(state.alpha, data.n_plus, data.x_max, state.h)
    traj = Trajectory(t_alpha=ta, t_alpha_valid=ta_valid, eta_stop=float(spec.eta_stop))

    def snapshot():
        return NetworkState(W.copy(), v.copy(), state.alpha, state.W_ref_max, state.seed)

    def fail(msg):
        traj.final_state = snapshot()
        raise DivergenceError(msg, trajectory=traj)

    _observe(traj, 0.0, W, v, data)
    t_base, k = 0.0, 0
    total_steps = int(math.ceil(spec.max_time / tau - 1e-9))

    # phase 1: fixed steps up to t_alpha, landing on it exactly
    n_pre = min(int(math.floor(ta / tau)), total_steps)
    while k < n_pre:
        chunk = min(spec.record_every, n_pre - k)
        done, ok = kernels.advance(X, y, pos, W, v, tau, scale, chunk, heun, -1.0, sp0)
        k += done
        if not ok:
            fail(f"non-finite state at t={k * tau:.6g}")
        _observe(traj, k * tau, W, v, data)
    t_base = k * tau
    rem = ta - t_base
    if ta_valid and rem > 0 and k < total_steps:
        _, ok = kernels.advance(X, y, pos, W, v, rem, scale, 1, heun, -1.0, sp0)
        if not ok:
            fail(f"non-finite state at t={ta:.6g}")
        t_base = ta
    if ta_valid:
        if traj.times[-1] != t_base:
            _observe(traj, t_base, W, v, data)
        traj.alpha_state = snapshot()
        traj.alpha_index = len(traj.times) - 1
    k_rem = total_steps - k
    j = 0  # steps since t_base

    # phase 2: step with the stopping check armed
    pending = list(levels)
    while pending and j < k_rem:
        chunk = min(spec.record_every - (j % spec.record_every), k_rem - j)
        done, ok = kernels.advance(X, y, pos, W, v, tau, scale, chunk, heun, pending[0], sp0)
        j += done
        if not ok:
            fail(f"non-finite state at t={t_base + j * tau:.6g}")
        t = t_base + j * tau
        if done < chunk:
            if traj.times[-1] != t:
                _observe(traj, t, W, v, data)
            while pending and traj.risk_plus[-1] <= pending[0]:
                eta = pending.pop(0)
                traj.stops[eta] = StopRecord(eta, t, True, ta, ta_valid,
                                             record_index=len(traj.times) - 1, state=snapshot())
            continue
        _observe(traj, t, W, v, data)
    if traj.times[-1] != t_base + j * tau:
        _observe(traj, t_base + j * tau, W, v, data)
    for eta in pending:
        traj.stops[eta] = StopRecord(eta, traj.times[-1], False, ta, ta_valid,
                                     record_index=len(traj.times) - 1, state=snapshot())
    traj.steps = k + j
    traj.final_state = snapshot()
    _annotate_stops(traj, spec)
    return traj


def _annotate_stops(traj: Trajectory, spec: FlowSpec) -> None:
    t1, found = detect_trapping_time(traj.times, traj.codes, spec.trap_window,
                                     traj.t_alpha if traj.t_alpha_valid else None)
    t2, t2_found = detect_t2(traj, spec.drop_ratio)
    rp = np.asarray(traj.risk_plus)
    ia = max(traj.alpha_index, 0)
    r_ta = float(rp[ia])
    r_t2 = float(np.interp(t2, traj.times, rp))
    for rec in traj.stops.values():
        rec.t1_detected, rec.t1_found = t1, found
        rec.t2, rec.t2_found = t2, t2_found
        rec.risk_at_t_alpha, rec.risk_at_t2 = r_ta, r_t2


def detect_t2(traj: Trajectory, drop_ratio: float = 0.9) -> tuple[float, bool]:
    """First record at or after t_alpha where the positive risk has fallen to
    ``drop_ratio`` times its value at t_alpha. Returns ``(t2, found)``."""
    times = np.asarray(traj.times)
    rp = np.asarray(traj.risk_plus)
    ta = traj.t_alpha if traj.t_alpha_valid else 0.0
    start = int(np.searchsorted(times, ta, side="left"))
    if start >= len(times):
        return float(times[-1]), False
    target = drop_ratio * rp[start]
    hits = np.flatnonzero(rp[start:] <= target)
    if hits.size == 0:
        return float(times[-1]), False
    return float(times[start + hits[0]]), True


def equivalence_twin(state: NetworkState, data, alpha: float, lr: float, steps: int) -> float:
    """Run output-multiplier and initialisation-scale twins; return max |f_A - f_B|.

    Configuration A trains ``(W, v)`` with output multiplier ``alpha**2`` and
    learning rate ``lr``; configuration B trains ``(alpha W, alpha v)`` with
    multiplier 1 and learning rate ``lr * alpha**2``.
    """
    WA, vA = state.W.copy(), state.v.copy()
    WB, vB = alpha * state.W, alpha * state.v
    gA, lrB = alpha**2, lr * alpha**2
    sp0 = network.RELU_PRIME_AT_ZERO
    X, y = data.X, data.y
    worst = 0.0
    for _ in range(steps + 1):
        _, mA, dWA, dvA = kernels.risk_grad(X, y, WA, vA, gA, sp0)
        _, mB, dWB, dvB = kernels.risk_grad(X, y, WB, vB, 1.0, sp0)
        worst = max(worst, float(np.max(np.abs(mA - mB))))
        WA -= lr * dWA
        vA -= lr * dvA
        WB -= lrB * dWB
        vB -= lrB * dvB
    return worst
