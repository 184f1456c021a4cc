"""Grids over initialisation scale, stopping level and seed.

Each grid point trains one network and reads off every stopping level from
the same trajectory. Random streams are keyed by (master seed, seed, purpose)
and, where the stream depends on the point, by the bit pattern of ``alpha``
and ``eta``. Adding or deleting a grid point therefore leaves every other
row unchanged.
"""

from __future__ import annotations

import math
import os
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace

import numpy as np
from scipy import stats

from . import bounds, io
from .cones import PREDICTOR_RULES, cosine, predictor, resolve_rule
from .errors import ConfigurationError, DegenerateError, DivergenceError, FlsLabError, ParameterError
from .flow import FlowSpec, integrate
from .mixture import MixtureSpec, geometry, measure_separability, rejection_sample_separable, sample_dataset
from .network import InitSpec, init_balanced

STREAM_DATA, STREAM_INIT, STREAM_MC = 0, 1, 2


def _bits(x: float) -> int:
    return int(np.float64(x).view(np.uint64))


def derive_seed(master_seed: int, *keys: int) -> int:
    """32-bit seed for the stream keyed by ``(master_seed, *keys)``."""
    return int(np.random.SeedSequence([int(master_seed), *map(int, keys)]).generate_state(1)[0])


@dataclass(frozen=True)
class SweepSpec:
    alpha_grid: tuple = tuple(np.logspace(-6, -1, 11))
    eta_list: tuple = (0.05,)
    seeds: tuple = (0, 1, 2)
    mixture: MixtureSpec = field(default_factory=MixtureSpec)
    init: InitSpec = field(default_factory=InitSpec)
    flow: FlowSpec = field(default_factory=lambda: FlowSpec(step=2e-5))
    mc_samples: int = 100_000
    delta: float = 0.1
    master_seed: int = 0
    predictor: str = "auto"
    lambda_min: float = 0.0
    max_tries: int = 1000
    C_complexity: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "alpha_grid", tuple(float(a) for a in self.alpha_grid))
        object.__setattr__(self, "eta_list", tuple(float(e) for e in self.eta_list))
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))
        a = np.asarray(self.alpha_grid)
        if a.size == 0 or np.any(a <= 0) or np.any(np.diff(a) <= 0):
            raise ConfigurationError("alpha_grid must be positive and strictly increasing")
        if not self.seeds:
            raise ConfigurationError("seeds must be nonempty")
        if len(set(self.seeds)) != len(self.seeds):
            raise ConfigurationError("seeds must be distinct")
        if not self.eta_list or any(not 0.0 < e < math.log(2.0) for e in self.eta_list):
            raise ConfigurationError("eta_list must be nonempty with values in (0, log 2)")
        if self.mc_samples < 10_000:
            raise ParameterError("mc_samples must be >= 10000")
        if not 0.0 < self.delta < 1.0:
            raise ParameterError("delta must lie in (0, 1)")
        if self.predictor not in PREDICTOR_RULES:
            raise ConfigurationError(f"predictor must be one of {PREDICTOR_RULES}")

    def to_dict(self) -> dict:
        out = {
            "alpha_grid": list(self.alpha_grid),
            "eta_list": list(self.eta_list),
            "seeds": list(self.seeds),
            "mc_samples": self.mc_samples,
            "delta": self.delta,
            "master_seed": self.master_seed,
            "predictor": self.predictor,
            "lambda_min": self.lambda_min,
            "max_tries": self.max_tries,
            "C_complexity": self.C_complexity,
        }
        out.update({f"mixture.{k}": v for k, v in self.mixture.to_dict().items() if k != "seed"})
        out.update({f"init.{k}": v for k, v in asdict(self.init).items() if k not in ("alpha", "seed")})
        out.update({f"flow.{k}": v for k, v in asdict(self.flow).items() if k != "eta_stop"})
        return out


@dataclass
class SweepRow:
    alpha: float
    seed: int
    eta: float
    status: str = "ok"
    reached: bool = False
    predictor_rule: str = ""
    lambda_hat: float = math.nan
    phi: float = math.nan
    t1_detected: float = math.nan
    t1_found: bool = False
    t_alpha: float = math.nan
    t2: float = math.nan
    t_eta: float = math.nan
    Psi_at_t_alpha: float = math.nan
    Psi_at_stop: float = math.nan
    predictor_norm_at_stop: float = math.nan
    norm_ok: bool = False
    margin_ok: bool = False
    OA: float = math.nan
    OF_exact: float = math.nan
    OF_bound: float = math.nan
    excess: float = math.nan
    zero_one: float = math.nan
    mc_error: float = math.nan
    mc_stderr: float = math.nan
    phase1_lower: float = math.nan
    phase2_lower: float = math.nan
    g_geom: float = math.nan
    runtime: float = 0.0

    @classmethod
    def columns(cls) -> list[str]:
        """CSV columns. ``runtime`` is excluded so the table is reproducible byte for byte."""
        return [f.name for f in fields(cls) if f.name != "runtime"]

    def values(self) -> list:
        return [getattr(self, c) for c in self.columns()]


def mc_error_many(Ws, mixture: MixtureSpec, samples: int, seed: int, chunk: int = 50_000):
    """Monte-Carlo misclassification rates of ``sign(<w, x>)`` for each column of ``Ws``.

    Labels are fair coin flips and full noise vectors are drawn; all
    predictors are scored on the same draws. A zero score counts as an error.
    Returns ``(rates, binomial standard errors)`` as arrays.
    """
    if samples < 10_000:
        raise ParameterError("samples must be >= 10000")
    Ws = np.asarray(Ws, dtype=float).reshape(mixture.d, -1)
    rng = np.random.default_rng(seed)
    sw = mixture.s_plus @ Ws
    errors = np.zeros(Ws.shape[1], dtype=np.int64)
    left = samples
    while left:
        m = min(chunk, left)
        y = np.where(rng.integers(0, 2, size=m) == 1, 1.0, -1.0)
        # <x, w> for x = kappa y s + sigma z, without materialising x
        score = mixture.kappa * y[:, None] * sw[None, :] + mixture.sigma * (rng.standard_normal((m, mixture.d)) @ Ws)
        errors += np.count_nonzero(y[:, None] * score <= 0.0, axis=0)
        left -= m
    p = errors / samples
    return p, np.sqrt(p * (1.0 - p) / samples)


def mc_error(w, mixture: MixtureSpec, samples: int, seed: int, chunk: int = 50_000):
    """Single-predictor form of :func:`mc_error_many`; returns ``(rate, stderr)``."""
    p, se = mc_error_many(np.asarray(w, dtype=float)[:, None], mixture, samples, seed, chunk)
    return float(p[0]), float(se[0])


def point_data(spec: SweepSpec, seed: int):
    mix = spec.mixture.replace(seed=derive_seed(spec.master_seed, seed, STREAM_DATA))
    if spec.lambda_min > 0:
        data, _ = rejection_sample_separable(mix, spec.lambda_min, spec.max_tries)
    else:
        data = sample_dataset(mix)
    return mix, data


def point_init(spec: SweepSpec, alpha: float, seed: int, d: int):
    return init_balanced(replace(spec.init, alpha=alpha, seed=derive_seed(spec.master_seed, seed, STREAM_INIT)), d)


def _psi(state, data, rule):
    try:
        return cosine(predictor(state, data, rule), data.x_plus)
    except DegenerateError:
        return math.nan


def run_point(spec: SweepSpec, alpha: float, seed: int) -> list[SweepRow]:
    """All rows of one ``(alpha, seed)`` grid point, one per stopping level."""
    t0 = time.perf_counter()
    mix, data = point_data(spec, seed)
    lam = measure_separability(data).lambda_hat
    geo = geometry(data, mix, spec.delta)
    rows = [SweepRow(alpha, seed, eta, lambda_hat=lam, phi=geo.phi) for eta in spec.eta_list]
    state = point_init(spec, alpha, seed, data.d)
    flow = replace(spec.flow, eta_stop=min(spec.eta_list))
    try:
        traj = integrate(state, data, flow, etas=spec.eta_list)
    except DivergenceError:
        for r in rows:
            r.status = "diverged"
            r.runtime = time.perf_counter() - t0
        return rows
    X_pos = data.X[data.positive]
    for r in rows:
        rec = traj.stops[r.eta]
        r.reached = rec.reached
        r.t1_detected, r.t1_found = rec.t1_detected, rec.t1_found
        r.t_alpha = rec.t_alpha if rec.t_alpha_valid else math.nan
        r.t2, r.t_eta = rec.t2, rec.t_eta
        rule = resolve_rule(rec.state, data, spec.predictor)
        r.predictor_rule = rule
        try:
            w_hat = predictor(rec.state, data, rule)
            if np.linalg.norm(w_hat) == 0.0:
                raise DegenerateError("zero predictor")
        except DegenerateError:
            r.status = "degenerate"
            continue
        if traj.alpha_state is not None:
            r.Psi_at_t_alpha = _psi(traj.alpha_state, data, rule)
        Psi = cosine(w_hat, data.x_plus)
        r.Psi_at_stop = Psi
        r.predictor_norm_at_stop = float(np.linalg.norm(w_hat))
        inp = bounds.BoundInputs(
            alpha=alpha, n_plus=data.n_plus, h=state.h, x_max=data.x_max, x_min=data.x_min,
            W_ref_max=state.W_ref_max, x_plus_norm=float(np.linalg.norm(data.x_plus)), lam=lam,
            t1=rec.t1_detected, t_alpha=rec.t_alpha, t2=rec.t2,
            risk_at_t_alpha=rec.risk_at_t_alpha, risk_at_t2=rec.risk_at_t2, eta=r.eta,
            sigma=mix.sigma, kappa=mix.kappa, d=data.d, phi=geo.phi, Psi_at_stop=Psi,
            delta=spec.delta, C_complexity=spec.C_complexity,
        )
        dec = bounds.decompose(w_hat, Psi, inp, data.x_plus, mix.s_plus, X_pos)
        r.OA, r.OF_exact, r.excess = dec.OA_exact, dec.OF_exact, dec.excess_exact
        r.OF_bound, r.g_geom = dec.OF_bound_term, dec.g_geom
        r.norm_ok, r.margin_ok = dec.norm_ok, dec.margin_ok
        r.zero_one = bounds.zero_one_error(w_hat, mix.kappa, mix.sigma, mix.s_plus)
        if rec.t_alpha_valid:
            r.phase1_lower = bounds.phase1_lower(inp)
            if lam > 0 and rec.t2_found and r.eta <= rec.risk_at_t2 and not math.isnan(r.Psi_at_t_alpha):
                r.phase2_lower = bounds.phase2_lower(inp, r.Psi_at_t_alpha)
        r.mc_error, r.mc_stderr = mc_error(
            w_hat, mix, spec.mc_samples,
            derive_seed(spec.master_seed, seed, STREAM_MC, *divmod(_bits(alpha), 2**32), *divmod(_bits(r.eta), 2**32)),
        )
        if not r.reached:
            r.status = "not_reached"
    elapsed = time.perf_counter() - t0
    for r in rows:
        r.runtime = elapsed
    return rows


def _run_point_args(args):
    return run_point(*args)


def run_sweep(spec: SweepSpec, jobs: int | None = None) -> list[SweepRow]:
    """Rows sorted by ``(alpha, eta, seed)``. ``jobs`` defaults to the CPU count."""
    points = [(spec, a, s) for a in spec.alpha_grid for s in spec.seeds]
    jobs = jobs or os.cpu_count() or 1
    if jobs <= 1 or len(points) == 1:
        results = [run_point(*p) for p in points]
    else:
        with ProcessPoolExecutor(max_workers=min(jobs, len(points))) as ex:
            results = list(ex.map(_run_point_args, points))
    rows = [r for chunk in results for r in chunk]
    rows.sort(key=lambda r: (r.alpha, r.eta, r.seed))
    return rows


@dataclass
class UShapeReport:
    eta: float
    alphas: np.ndarray
    per_seed: dict
    mean: np.ndarray
    argmin_index: int
    argmin_alpha: float
    interior: bool
    left_margin: float
    right_margin: float


def u_shape_report(rows, eta: float) -> UShapeReport:
    """Seed-averaged excess error against alpha at one stopping level.

    Only reached, finite rows enter the averages; an alpha with no such row
    gets a NaN and is skipped when locating the minimum.
    """
    sel = [r for r in rows if r.eta == eta]
    alphas = np.array(sorted({r.alpha for r in sel}))
    if alphas.size < 5:
        raise ConfigurationError("u-shape analysis needs at least 5 alpha values")
    seeds = sorted({r.seed for r in sel})
    pos = {a: i for i, a in enumerate(alphas)}
    per_seed = {s: np.full(alphas.size, np.nan) for s in seeds}
    for r in sel:
        if r.reached and math.isfinite(r.excess):
            per_seed[r.seed][pos[r.alpha]] = r.excess
    stack = np.vstack([per_seed[s] for s in seeds])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        mean = np.nanmean(stack, axis=0)
    if np.all(np.isnan(mean)):
        raise ConfigurationError("no reached rows at this stopping level")
    k = int(np.nanargmin(mean))
    return UShapeReport(
        eta=eta, alphas=alphas, per_seed=per_seed, mean=mean, argmin_index=k,
        argmin_alpha=float(alphas[k]), interior=0 < k < alphas.size - 1,
        left_margin=float(mean[0] - mean[k]), right_margin=float(mean[-1] - mean[k]),
    )


@dataclass
class PsiStabilityReport:
    eta: float
    alphas: np.ndarray
    psi_t_alpha: np.ndarray
    psi_stop: np.ndarray
    gaps: np.ndarray
    max_gap: float
    spearman_rho: float
    rho_defined: bool


def psi_stability_report(rows, eta: float | None = None) -> PsiStabilityReport:
    """Per-alpha alignment drift after t_alpha and the rank trend of Psi at the stop.

    Values are seed averages. ``eta`` defaults to the smallest level present.
    ``rho_defined`` is False when either series is constant (ties everywhere).
    """
    if eta is None:
        eta = min(r.eta for r in rows)
    sel = [r for r in rows if r.eta == eta]
    alphas = np.array(sorted({r.alpha for r in sel}))
    pa, ps = [], []
    for a in alphas:
        grp = [r for r in sel if r.alpha == a]
        pa.append(np.nanmean([r.Psi_at_t_alpha for r in grp]) if grp else np.nan)
        ps.append(np.nanmean([r.Psi_at_stop for r in grp]) if grp else np.nan)
    pa, ps = np.array(pa), np.array(ps)
    gaps = np.abs(ps - pa)
    ok = np.isfinite(ps)
    rho, defined = math.nan, False
    if ok.sum() >= 2 and np.ptp(ps[ok]) > 0:
        rho = float(stats.spearmanr(alphas[ok], ps[ok])[0])
        defined = math.isfinite(rho)
    finite = gaps[np.isfinite(gaps)]
    return PsiStabilityReport(eta, alphas, pa, ps, gaps, float(finite.max()) if finite.size else math.nan,
                              rho, defined)


LONG_SERIES = ("OA", "OF_exact", "OF_bound", "excess", "Psi_at_t_alpha", "Psi_at_stop")


def long_format(rows):
    """Seed-averaged ``(alpha, series, value)`` triples over reached rows."""
    out = []
    for eta in sorted({r.eta for r in rows}):
        for a in sorted({r.alpha for r in rows}):
            grp = [r for r in rows if r.eta == eta and r.alpha == a and r.reached]
            for name in LONG_SERIES:
                vals = [getattr(r, name) for r in grp if math.isfinite(getattr(r, name))]
                out.append((a, f"{name}@eta={eta:g}", float(np.mean(vals)) if vals else math.nan))
    return out


def write_sweep(rows, outdir, spec: SweepSpec, extra_meta: dict | None = None) -> dict:
    """Write ``sweep.csv``, ``long.csv``, ``timing.csv`` and ``meta.txt``; returns the paths."""
    from . import __version__, kernels

    d = io.ensure_dir(outdir)
    paths = {k: d / f for k, f in
             (("table", "sweep.csv"), ("long", "long.csv"), ("timing", "timing.csv"), ("meta", "meta.txt"))}
    io.write_csv(paths["table"], SweepRow.columns(), (r.values() for r in rows))
    io.write_csv(paths["long"], ["alpha", "series", "value"], long_format(rows))
    io.write_csv(paths["timing"], ["alpha", "seed", "eta", "runtime"],
                 ((r.alpha, r.seed, r.eta, r.runtime) for r in rows))
    meta = {"version": __version__, "backend": kernels.BACKEND, **spec.to_dict(), **(extra_meta or {})}
    io.write_kv(paths["meta"], meta)
    return paths
