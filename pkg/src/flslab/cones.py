"""Data-dependent cones, neuron partitions, effective predictor and alignment."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateError

PLUS, MINUS, DEAD, UNRESOLVED = 1, -1, 0, 2
CODE_NAMES = {PLUS: "plus", MINUS: "minus", DEAD: "dead", UNRESOLVED: "unresolved"}

# pre-activations below this fraction of ||w|| ||x|| count as inactive
ACTIVATION_RTOL = 1e-14


def membership_codes(W: np.ndarray, X: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Cone code of every column of ``W`` (int8 array of length h)."""
    W = W.reshape(W.shape[0], -1)
    pre = X @ W
    tol = ACTIVATION_RTOL * np.linalg.norm(X, axis=1)[:, None] * np.linalg.norm(W, axis=0)[None, :]
    active = pre > tol
    pos = (y > 0)[:, None]
    codes = np.full(W.shape[1], UNRESOLVED, dtype=np.int8)
    codes[np.all(active == pos, axis=0)] = PLUS
    codes[np.all(active == ~pos, axis=0)] = MINUS
    codes[~active.any(axis=0)] = DEAD
    return codes


def cone_membership(w: np.ndarray, data) -> str:
    """``"plus"``, ``"minus"``, ``"dead"`` or ``"unresolved"`` for one weight vector."""
    w = np.asarray(w, dtype=float)
    return CODE_NAMES[int(membership_codes(w[:, None], data.X, data.y)[0])]


@dataclass(frozen=True)
class ConePartition:
    codes: np.ndarray
    t_observed: float = 0.0

    @property
    def V_plus(self) -> np.ndarray:
        return np.flatnonzero(self.codes == PLUS)

    @property
    def V_minus(self) -> np.ndarray:
        return np.flatnonzero(self.codes == MINUS)

    @property
    def V_dead(self) -> np.ndarray:
        return np.flatnonzero(self.codes == DEAD)

    @property
    def unresolved(self) -> np.ndarray:
        return np.flatnonzero(self.codes == UNRESOLVED)

    def counts(self) -> tuple[int, int, int, int]:
        c = self.codes
        return (int((c == PLUS).sum()), int((c == MINUS).sum()),
                int((c == DEAD).sum()), int((c == UNRESOLVED).sum()))

    def same_as(self, other: "ConePartition") -> bool:
        return np.array_equal(self.codes, other.codes)


def partition(state, data, t: float = 0.0) -> ConePartition:
    return ConePartition(membership_codes(state.W, data.X, data.y), t)


def detect_trapping_time(times, codes, window: int = 5, horizon: float | None = None):
    """Earliest record time after which the partition is fully resolved and fixed.

    ``codes`` is a (records x h) array of cone codes. Only records with
    ``t <= horizon`` are considered. The stable run must extend to the last
    considered record and span at least ``window`` records. Returns
    ``(t1, found)``; when nothing stabilises, ``t1`` is the last considered
    time and ``found`` is False.
    """
    if window < 2:
        raise ValueError("window must be >= 2")
    times = np.asarray(times)
    codes = np.asarray(codes)
    last = len(times) - 1 if horizon is None else int(np.searchsorted(times, horizon, side="right")) - 1
    if last < 0:
        return (float(times[0]) if len(times) else 0.0), False
    end = codes[last]
    if np.any(end == UNRESOLVED):
        return float(times[last]), False
    k = last
    while k > 0 and np.array_equal(codes[k - 1], end):
        k -= 1
    if last - k + 1 < window:
        return float(times[last]), False
    return float(times[k]), True


def effective_predictor(state, part: ConePartition, cls: str = "positive") -> np.ndarray:
    """Sum of ``v_j w_j`` over the neurons of the requested class cone."""
    idx = part.V_plus if cls == "positive" else part.V_minus
    if idx.size == 0:
        raise DegenerateError(f"no neurons in the {cls} cone")
    return state.W[:, idx] @ state.v[idx]


@dataclass(frozen=True)
class AlignmentRecord:
    psi_j: np.ndarray
    indices: np.ndarray
    Psi: float
    reference: np.ndarray


def cosine(a: np.ndarray, b: np.ndarray) -> float:
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na == 0.0 or nb == 0.0:
        raise DegenerateError("cosine of a zero vector")
    return float(np.clip(np.dot(a, b) / (na * nb), -1.0, 1.0))


def alignment(state, part: ConePartition, data) -> AlignmentRecord:
    """Cosines of each positive-cone neuron and of the effective predictor with x_+."""
    ref_norm = np.linalg.norm(data.x_plus)
    if ref_norm == 0.0:
        raise DegenerateError("positive class sum is zero")
    r = data.x_plus / ref_norm
    idx = part.V_plus
    Wp = state.W[:, idx]
    norms = np.linalg.norm(Wp, axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        psi = np.clip((r @ Wp) / norms, -1.0, 1.0)
    w_hat = effective_predictor(state, part, "positive")
    return AlignmentRecord(psi, idx, cosine(w_hat, r), r)


PREDICTOR_RULES = ("auto", "cone", "sign")


def resolve_rule(state, data, rule: str = "auto") -> str:
    """Pick the predictor rule for ``state``.

    ``"auto"`` uses the cone predictor when every neuron sits in a cone and
    the positive cone is nonempty, and otherwise the positive-output-weight
    subnetwork (``"sign"``), which coincides with the cone predictor once the
    partition is resolved and no neuron is dead.
    """
    if rule not in PREDICTOR_RULES:
        raise ValueError(f"rule must be one of {PREDICTOR_RULES}")
    if rule != "auto":
        return rule
    part = partition(state, data)
    if part.unresolved.size == 0 and part.V_plus.size > 0:
        return "cone"
    return "sign"


def predictor(state, data, rule: str) -> np.ndarray:
    """Effective positive-class predictor under an explicit rule (``"cone"`` or ``"sign"``)."""
    if rule == "cone":
        return effective_predictor(state, partition(state, data), "positive")
    if rule == "sign":
        idx = np.flatnonzero(state.v > 0)
        if idx.size == 0:
            raise DegenerateError("no neuron with a positive output weight")
        return state.W[:, idx] @ state.v[idx]
    raise ValueError(f"unknown predictor rule {rule!r}")
