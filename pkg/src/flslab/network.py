"""Bias-free two-layer ReLU network with balanced, scaled initialization."""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from . import kernels
from ._pykernels import softplus_neg
from .errors import ConfigurationError, ParameterError, ShapeError

REF_DISTRIBUTIONS = ("normal", "normalized")

# Clarke selection for the ReLU derivative at 0. Anything other than 0 is a
# deliberate fault used to check that the verification suite notices.
RELU_PRIME_AT_ZERO = 1.0 if os.environ.get("FLSLAB_FAULT") == "sigma-prime-one" else 0.0

RISK_FLOOR = 1e-300


@dataclass(frozen=True)
class InitSpec:
    h: int = 64
    alpha: float = 1e-3
    ref_distribution: str = "normal"
    seed: int = 0

    def __post_init__(self):
        if self.h < 1:
            raise ParameterError("h must be >= 1")
        if not self.alpha >= 0:
            raise ParameterError("alpha must be nonnegative")
        if self.ref_distribution not in REF_DISTRIBUTIONS:
            raise ParameterError(f"ref_distribution must be one of {REF_DISTRIBUTIONS}")


@dataclass
class NetworkState:
    """First-layer weights ``W`` (d x h, columns are neurons) and output weights ``v``."""

    W: np.ndarray
    v: np.ndarray
    alpha: float
    W_ref_max: float
    seed: int = 0

    def __post_init__(self):
        self.W = np.ascontiguousarray(self.W, dtype=float)
        self.v = np.ascontiguousarray(self.v, dtype=float)
        if self.W.ndim != 2 or self.v.shape != (self.W.shape[1],):
            raise ShapeError("W must be d x h and v of length h")

    @property
    def d(self) -> int:
        return self.W.shape[0]

    @property
    def h(self) -> int:
        return self.W.shape[1]

    @property
    def degenerate(self) -> bool:
        return self.alpha == 0.0

    def copy(self) -> "NetworkState":
        return NetworkState(self.W.copy(), self.v.copy(), self.alpha, self.W_ref_max, self.seed)


def reference_matrix(d: int, spec: InitSpec, rng: np.random.Generator) -> np.ndarray:
    R = rng.standard_normal((d, spec.h))
    if spec.ref_distribution == "normalized":
        R /= np.linalg.norm(R, axis=0, keepdims=True)
    return R


def init_balanced(spec: InitSpec, d: int, rng: np.random.Generator | None = None) -> NetworkState:
    """``W = alpha * R`` for a seeded reference ``R``; ``v_j = +/- ||w_j||`` with fair signs."""
    if rng is None:
        rng = np.random.default_rng(spec.seed)
    R = reference_matrix(d, spec, rng)
    signs = np.where(rng.integers(0, 2, size=spec.h) == 1, 1.0, -1.0)
    W = spec.alpha * R
    v = signs * np.linalg.norm(W, axis=0)
    return NetworkState(W, v, spec.alpha, float(np.linalg.norm(R, axis=0).max()), spec.seed)


def forward(state: NetworkState, x: np.ndarray) -> float | np.ndarray:
    """Network output for one input (length d) or a batch (rows)."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != state.d:
        raise ShapeError(f"input dimension {x.shape[-1]} != {state.d}")
    out = np.maximum(x @ state.W, 0.0) @ state.v
    return float(out) if x.ndim == 1 else out


def _class_mask(data, class_filter: str) -> np.ndarray:
    if class_filter == "all":
        return np.ones(data.n, dtype=bool)
    if class_filter == "positive":
        return data.y > 0
    if class_filter == "negative":
        return data.y < 0
    raise ConfigurationError(f"unknown class filter {class_filter!r}")


def training_risk(state: NetworkState, data, class_filter: str = "all", with_flag: bool = False):
    """Mean logistic loss over the selected class (normalised by that class's count).

    Values below 1e-300 are returned as 0; ``with_flag`` also returns whether
    that happened.
    """
    mask = _class_mask(data, class_filter)
    if not mask.any():
        raise ConfigurationError(f"no samples in class {class_filter!r}")
    m = data.y[mask] * forward(state, data.X[mask])
    r = float(np.mean(softplus_neg(np.atleast_1d(m))))
    clamped = r < RISK_FLOOR
    if clamped:
        r = 0.0
    return (r, clamped) if with_flag else r


def gradient(state: NetworkState, data, gamma: float = 1.0):
    """Subgradient ``(dW, dv)`` of the mean training risk over all samples."""
    _, _, dW, dv = kernels.risk_grad(data.X, data.y, state.W, state.v, gamma, RELU_PRIME_AT_ZERO)
    return dW, dv


def balancedness_drift(state: NetworkState) -> float:
    return float(np.max(np.abs(state.v**2 - np.sum(state.W**2, axis=0))))


def save_checkpoint(state: NetworkState, path) -> None:
    """Write a key=value text checkpoint; W is stored column-major."""
    fmt = lambda a: " ".join(format(float(x), ".17g") for x in a)
    lines = [
        f"d={state.d}",
        f"h={state.h}",
        f"alpha={state.alpha!r}",
        f"W_ref_max={state.W_ref_max!r}",
        f"seed={state.seed}",
        f"W={fmt(state.W.ravel(order='F'))}",
        f"v={fmt(state.v)}",
    ]
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def load_checkpoint(path) -> NetworkState:
    kv = {}
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if "=" in line:
                k, val = line.rstrip("\n").split("=", 1)
                kv[k] = val
    d, h = int(kv["d"]), int(kv["h"])
    W = np.array([float(t) for t in kv["W"].split()]).reshape((d, h), order="F")
    v = np.array([float(t) for t in kv["v"].split()])
    return NetworkState(W, v, float(kv["alpha"]), float(kv["W_ref_max"]), int(kv["seed"]))
