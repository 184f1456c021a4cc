"""Two-class Gaussian mixture data, separability, and class-mean geometry."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigurationError, DataError, ParameterError, SamplingFailure


def default_signal(d: int) -> np.ndarray:
    """First canonical basis vector e_1 in R^d."""
    s = np.zeros(d)
    s[0] = 1.0
    return s


@dataclass(frozen=True)
class MixtureSpec:
    """Generative parameters of the mixture ``x = kappa * y * s_y + sigma * z``.

    The negative-class signal is always ``-s_plus``.
    """

    d: int = 128
    kappa: float = 1.5
    sigma: float = 1.0
    n: int = 50
    balance: float = 0.5
    seed: int = 0
    s_plus: np.ndarray | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if self.d < 2 or self.n < 2:
            raise ParameterError(f"need d >= 2 and n >= 2, got d={self.d}, n={self.n}")
        if self.s_plus is None:
            object.__setattr__(self, "s_plus", default_signal(self.d))
        else:
            object.__setattr__(self, "s_plus", np.asarray(self.s_plus, dtype=float).copy())
        self.validate()

    def validate(self):
        if self.d < 2 or self.n < 2:
            raise ParameterError(f"need d >= 2 and n >= 2, got d={self.d}, n={self.n}")
        if not (self.kappa > 0 and self.sigma > 0):
            raise ParameterError("kappa and sigma must be positive")
        if not 0.0 < self.balance < 1.0:
            raise ParameterError("balance must lie in (0, 1)")
        if self.s_plus.shape != (self.d,):
            raise ParameterError("s_plus must have length d")
        if abs(np.linalg.norm(self.s_plus) - 1.0) > 1e-12:
            raise ParameterError("s_plus must be a unit vector")

    def n_positive(self) -> int:
        return math.ceil(self.balance * self.n)

    def replace(self, **changes) -> "MixtureSpec":
        kw = dict(d=self.d, kappa=self.kappa, sigma=self.sigma, n=self.n,
                  balance=self.balance, seed=self.seed, s_plus=self.s_plus)
        if "d" in changes and "s_plus" not in changes:
            kw["s_plus"] = None
        kw.update(changes)
        return MixtureSpec(**kw)

    def to_dict(self) -> dict:
        out = dict(d=self.d, kappa=self.kappa, sigma=self.sigma, n=self.n,
                   balance=self.balance, seed=self.seed)
        if not np.array_equal(self.s_plus, default_signal(self.d)):
            out["s_plus"] = " ".join(repr(float(c)) for c in self.s_plus)
        return out


@dataclass
class Dataset:
    X: np.ndarray
    y: np.ndarray
    x_max: float = field(init=False)
    x_min: float = field(init=False)
    n_plus: int = field(init=False)
    x_plus: np.ndarray = field(init=False, repr=False)
    x_minus: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.X = np.ascontiguousarray(self.X, dtype=float)
        self.y = np.ascontiguousarray(self.y, dtype=float)
        if self.X.ndim != 2 or self.y.shape != (self.X.shape[0],):
            raise DataError("X must be n x d and y of length n")
        if not np.all(np.abs(self.y) == 1.0):
            raise DataError("labels must be +1 or -1")
        pos = self.y > 0
        if pos.all() or not pos.any():
            raise ConfigurationError("both classes must be nonempty")
        norms = np.linalg.norm(self.X, axis=1)
        self.x_max = float(norms.max())
        self.x_min = float(norms.min())
        self.n_plus = int(pos.sum())
        self.x_plus = self.X[pos].sum(axis=0)
        self.x_minus = self.X[~pos].sum(axis=0)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]

    @property
    def n_minus(self) -> int:
        return self.n - self.n_plus

    @property
    def positive(self) -> np.ndarray:
        return self.y > 0


def sample_dataset(spec: MixtureSpec, rng: np.random.Generator | None = None) -> Dataset:
    """Draw ``spec.n`` labelled samples.

    The first ``ceil(balance * n)`` labels are +1 and the rest -1; rows are
    then shuffled by the same seeded stream.
    """
    spec.validate()
    n_pos = spec.n_positive()
    if n_pos < 1 or n_pos > spec.n - 1:
        raise ConfigurationError(f"degenerate class split: {n_pos} of {spec.n} positive")
    if rng is None:
        rng = np.random.default_rng(spec.seed)
    y = np.where(np.arange(spec.n) < n_pos, 1.0, -1.0)
    Z = rng.standard_normal((spec.n, spec.d))
    X = spec.kappa * y[:, None] * spec.s_plus[None, :] + spec.sigma * Z
    perm = rng.permutation(spec.n)
    return Dataset(X[perm], y[perm])


@dataclass(frozen=True)
class SeparabilityReport:
    lambda_hat: float
    pair: tuple[int, int]
    satisfied: bool
    threshold: float = 0.0


def measure_separability(data: Dataset, lam: float = 0.0) -> SeparabilityReport:
    """Minimum label-signed cosine over distinct pairs (exact, O(n^2 d))."""
    norms = np.linalg.norm(data.X, axis=1)
    if np.any(norms == 0.0):
        raise DataError("zero-norm input row")
    U = data.X / norms[:, None]
    C = (data.y[:, None] * data.y[None, :]) * (U @ U.T)
    np.fill_diagonal(C, np.inf)
    flat = int(np.argmin(C))
    i, j = divmod(flat, data.n)
    lam_hat = float(np.clip(C[i, j], -1.0, 1.0))
    return SeparabilityReport(lam_hat, (min(i, j), max(i, j)), lam_hat >= lam, lam)


def rejection_sample_separable(spec: MixtureSpec, lambda_min: float, max_tries: int = 1000):
    """Redraw from one seeded stream until ``lambda_hat >= lambda_min``.

    Returns ``(dataset, attempts)``.
    """
    if not 0.0 <= lambda_min < 1.0:
        raise ParameterError("lambda_min must lie in [0, 1)")
    if max_tries < 1:
        raise ParameterError("max_tries must be >= 1")
    rng = np.random.default_rng(spec.seed)
    best = -np.inf
    for attempt in range(1, max_tries + 1):
        data = sample_dataset(spec, rng)
        if lambda_min == 0.0:
            return data, attempt
        lam = measure_separability(data).lambda_hat
        if lam >= lambda_min:
            return data, attempt
        best = max(best, lam)
    raise SamplingFailure(
        f"no draw reached lambda_hat >= {lambda_min} in {max_tries} tries (best {best:.4g})",
        best_lambda=best,
    )


def concentration_terms(d: int, n: int, delta: float) -> tuple[float, float]:
    """Return ``(A, B)``: lower radius for the orthogonal part and upper radius
    for the full mean of ``n`` standard Gaussians in R^d, each at confidence
    ``1 - delta``."""
    L = math.log(1.0 / delta)
    a2 = max(0.0, (d - 1) - 2.0 * math.sqrt((d - 1) * L))
    A = math.sqrt(a2 / n)
    B = (math.sqrt(d) + math.sqrt(2.0 * L)) / math.sqrt(n)
    return A, B


@dataclass(frozen=True)
class GeometryReport:
    phi: float
    phi_lower: float
    phi_upper: float
    A_term: float
    B_term: float
    upper_valid: bool


def class_mean_angle(x_plus: np.ndarray, s_plus: np.ndarray) -> float:
    nx = np.linalg.norm(x_plus)
    if nx == 0.0:
        raise DataError("positive class sum is zero")
    c = float(np.dot(x_plus, s_plus) / (nx * np.linalg.norm(s_plus)))
    return math.acos(min(1.0, max(-1.0, c)))


def phi_bracket(d: int, n_plus: int, kappa: float, sigma: float, delta: float):
    """Probabilistic bracket on the class-mean angle at confidence ``1 - delta``.

    Returns ``(lower, upper, A, B, upper_valid)``. When the signal does not
    dominate ``sigma * B`` the upper side is reported as pi/2 with
    ``upper_valid`` False.
    """
    A, B = concentration_terms(d, n_plus, delta / 2.0)
    lower = math.asin(min(1.0, sigma * A / (kappa + sigma * B)))
    if kappa > sigma * B:
        upper = math.asin(min(1.0, sigma * B / (kappa - sigma * B)))
        valid = True
    else:
        upper, valid = math.pi / 2.0, False
    return lower, upper, A, B, valid


def geometry(data: Dataset, spec: MixtureSpec, delta: float = 0.1) -> GeometryReport:
    if not 0.0 < delta < 1.0:
        raise ParameterError("delta must lie in (0, 1)")
    phi = class_mean_angle(data.x_plus, spec.s_plus)
    lo, hi, A, B, valid = phi_bracket(data.d, data.n_plus, spec.kappa, spec.sigma, delta)
    return GeometryReport(phi, lo, hi, A, B, valid)


def concentration_check(d: int, n: int, delta: float, trials: int = 2000, seed: int = 0):
    """Monte-Carlo violation rates of the two Gaussian-mean radius bounds.

    Returns ``(upper_violation, ortho_violation)``; the orthogonal complement
    is taken against e_1.
    """
    if trials < 100:
        raise ParameterError("trials must be >= 100")
    rng = np.random.default_rng(seed)
    # the mean of n iid N(0, I) is exactly N(0, I/n)
    zbar = rng.standard_normal((trials, d)) / math.sqrt(n)
    A, B = concentration_terms(d, n, delta)
    full = np.linalg.norm(zbar, axis=1)
    perp = np.linalg.norm(zbar[:, 1:], axis=1)
    return float(np.mean(full > B)), float(np.mean(perp < A))


def phi_coverage(spec: MixtureSpec, delta: float, trials: int, seed: int = 0) -> float:
    """Fraction of fresh datasets whose class-mean angle falls outside the bracket."""
    rng = np.random.default_rng(seed)
    n_pos = spec.n_positive()
    lo, hi, *_ = phi_bracket(spec.d, n_pos, spec.kappa, spec.sigma, delta)
    # positive-class sum only depends on the positive rows
    Z = rng.standard_normal((trials, spec.d)) * math.sqrt(n_pos)
    xp = n_pos * spec.kappa * spec.s_plus[None, :] + spec.sigma * Z
    c = (xp @ spec.s_plus) / np.linalg.norm(xp, axis=1)
    phi = np.arccos(np.clip(c, -1.0, 1.0))
    return float(np.mean((phi < lo) | (phi > hi)))
