"""Command-line front end: ``generate``, ``train``, ``sweep``, ``bounds``, ``verify``.

Settings resolve as defaults < ``--config`` file (flat key=value, keys named
like the long flags) < ``FLSLAB_SEED`` (seed only) < explicit flags. Every
output directory gets a ``config.txt`` echoing the effective settings, from
which the run can be repeated.

Exit codes: 0 success, 1 verification failure or runtime error, 2 invalid
configuration, 3 rejection sampling exhausted, 4 divergence.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
import time
from dataclasses import fields
from pathlib import Path

import numpy as np

from . import __version__, bounds, io, kernels
from .cones import CODE_NAMES, cosine, partition, predictor, resolve_rule
from .errors import ConfigurationError, DivergenceError, FlsLabError
from .flow import FlowSpec, integrate
from .mixture import MixtureSpec, geometry, measure_separability, rejection_sample_separable, sample_dataset
from .network import InitSpec, init_balanced, save_checkpoint
from .sweep import SweepSpec, psi_stability_report, run_sweep, u_shape_report, write_sweep

# flags that are never taken from a config file or echoed
_SKIP = {"command", "config", "func", "out"}
# provenance keys written to config.txt and ignored when it is read back
_PROVENANCE = {"command", "version", "backend", "wall_time"}


def _add_mixture(p):
    g = p.add_argument_group("data")
    g.add_argument("--d", type=int, default=128)
    g.add_argument("--kappa", type=float, default=1.5)
    g.add_argument("--sigma", type=float, default=1.0)
    g.add_argument("--n", type=int, default=50)
    g.add_argument("--balance", type=float, default=0.5)
    g.add_argument("--lambda-min", type=float, default=0.0, help="rejection-sample until lambda_hat >= this")
    g.add_argument("--max-tries", type=int, default=1000)


def _add_init(p):
    g = p.add_argument_group("network")
    g.add_argument("--h", type=int, default=64)
    g.add_argument("--ref", choices=("normal", "normalized"), default="normal")


def _add_flow(p, step):
    g = p.add_argument_group("flow")
    g.add_argument("--step", type=float, default=step)
    g.add_argument("--max-time", type=float, default=10.0)
    g.add_argument("--record-every", type=int, default=20)
    g.add_argument("--integrator", choices=("euler", "heun"), default="euler")
    g.add_argument("--clock", choices=("theory", "sum", "mean"), default="theory")
    g.add_argument("--drop-ratio", type=float, default=0.9)
    g.add_argument("--trap-window", type=int, default=5)
    g.add_argument("--predictor", choices=("auto", "cone", "sign"), default="auto")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="flslab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"flslab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="flat key=value file; flags override it")
        p.add_argument("--seed", type=int, default=0, help="master seed (FLSLAB_SEED overrides the config file)")
        p.add_argument("--out", default="runs", help="output directory")

    p = sub.add_parser("generate", help="sample a dataset and report its geometry")
    common(p)
    _add_mixture(p)
    p.add_argument("--delta", type=float, default=0.1)
    p.set_defaults(func=cmd_generate)

    p = sub.add_parser("train", help="integrate one network and analyse its cones")
    common(p)
    _add_mixture(p)
    _add_init(p)
    _add_flow(p, 1e-4)
    p.add_argument("--data", help="dataset CSV (y,x0,...) instead of sampling")
    p.add_argument("--alpha", type=float, default=1e-3)
    p.add_argument("--etas", type=float, nargs="+", default=[0.05])
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("sweep", help="alpha x eta x seed grid with bounds and error split")
    common(p)
    _add_mixture(p)
    _add_init(p)
    _add_flow(p, 2e-5)
    p.add_argument("--alphas", type=float, nargs="+", help="explicit grid (overrides the log-spaced one)")
    p.add_argument("--alpha-min", type=float, default=1e-6)
    p.add_argument("--alpha-max", type=float, default=1e-1)
    p.add_argument("--alpha-points", type=int, default=11)
    p.add_argument("--etas", type=float, nargs="+", default=[0.05])
    p.add_argument("--seeds", type=int, nargs="+", default=[0, 1, 2])
    p.add_argument("--mc-samples", type=int, default=100_000)
    p.add_argument("--delta", type=float, default=0.1)
    p.add_argument("--C-complexity", dest="C_complexity", type=float, default=1.0)
    p.add_argument("--jobs", type=int, default=os.cpu_count() or 1)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("bounds", help="evaluate the closed-form bounds from a stats file")
    common(p)
    p.add_argument("--stats", required=True, help="key=value file with the bound inputs")
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("verify", help="run the self-check suites")
    common(p)
    p.add_argument("--suite", action="append", help="suite name; repeat to select several")
    p.add_argument("--alpha", type=float, help="single alpha for the equivalence suite")
    p.set_defaults(func=cmd_verify)
    return parser


def _apply_config(parser, sub_parser, path):
    """Load a config file into the sub-parser defaults, converting values by flag type."""
    cfg = io.read_kv(path)
    actions = {a.dest: a for a in sub_parser._actions}
    updates = {}
    for key, raw in cfg.items():
        if key in _PROVENANCE:
            continue
        dest = key.replace("-", "_")
        if dest not in actions or dest in _SKIP:
            raise ConfigurationError(f"{path}: unknown key {key!r}")
        act = actions[dest]
        conv = act.type or str
        try:
            if act.nargs in ("+", "*"):
                updates[dest] = [conv(t) for t in raw.replace(",", " ").split()]
            else:
                updates[dest] = conv(raw)
        except ValueError:
            raise ConfigurationError(f"{path}: bad value for {key!r}: {raw!r}") from None
        if act.choices is not None and updates[dest] not in act.choices:
            raise ConfigurationError(f"{path}: {key} must be one of {sorted(act.choices)}")
    sub_parser.set_defaults(**updates)


def parse_args(argv=None):
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    ns = parser.parse_args(argv)
    sub_parser = parser._subparsers._group_actions[0].choices[ns.command]
    if ns.config:
        _apply_config(parser, sub_parser, ns.config)
    env_seed = os.environ.get("FLSLAB_SEED")
    if env_seed is not None:
        try:
            sub_parser.set_defaults(seed=int(env_seed))
        except ValueError:
            raise ConfigurationError(f"FLSLAB_SEED must be an integer, got {env_seed!r}") from None
    if ns.config or env_seed is not None:
        ns = parser.parse_args(argv)
    return ns


def effective_config(ns) -> dict:
    return {k: v for k, v in sorted(vars(ns).items()) if k not in _SKIP and v is not None}


def _echo(outdir, ns, extra=None):
    io.write_kv(Path(outdir) / "config.txt",
                {"command": ns.command, **effective_config(ns), "version": __version__,
                 "backend": kernels.BACKEND, **(extra or {})})


def _mixture(ns, seed=None) -> MixtureSpec:
    return MixtureSpec(d=ns.d, kappa=ns.kappa, sigma=ns.sigma, n=ns.n, balance=ns.balance,
                       seed=ns.seed if seed is None else seed)


def _flow(ns, etas) -> FlowSpec:
    return FlowSpec(step=ns.step, max_time=ns.max_time, record_every=ns.record_every,
                    eta_stop=min(etas), integrator=ns.integrator, clock=ns.clock,
                    drop_ratio=ns.drop_ratio, trap_window=ns.trap_window)


def _sample(spec: MixtureSpec, ns):
    if ns.lambda_min > 0:
        data, attempts = rejection_sample_separable(spec, ns.lambda_min, ns.max_tries)
        return data, attempts
    return sample_dataset(spec), 1


def cmd_generate(ns) -> int:
    spec = _mixture(ns)
    data, attempts = _sample(spec, ns)
    out = io.ensure_dir(ns.out)
    sep = measure_separability(data, ns.lambda_min)
    geo = geometry(data, spec, ns.delta)
    io.write_dataset(out / "dataset.csv", data)
    _echo(out, ns)
    report = {
        **{f"spec.{k}": v for k, v in spec.to_dict().items()},
        "attempts": attempts, "n_plus": data.n_plus, "x_max": data.x_max, "x_min": data.x_min,
        "lambda_hat": sep.lambda_hat, "lambda_pair": list(sep.pair), "lambda_satisfied": sep.satisfied,
        "phi": geo.phi, "phi_lower": geo.phi_lower, "phi_upper": geo.phi_upper,
        "phi_upper_valid": geo.upper_valid, "A_term": geo.A_term, "B_term": geo.B_term,
    }
    io.write_kv(out / "report.txt", report)
    print(f"wrote {out / 'dataset.csv'}: n={data.n} d={data.d} lambda_hat={sep.lambda_hat:.6g} phi={geo.phi:.6g}")
    return 0


def _write_trajectory(out, traj):
    io.write_csv(out / "trajectory.csv",
                 ["t", "risk_all", "risk_plus", "psi", "predictor_norm", "drift", "n_Vplus", "n_Vminus", "n_Vdead"],
                 traj.rows())


def cmd_train(ns) -> int:
    if ns.data:
        data = io.read_dataset(ns.data)
        spec = None
    else:
        spec = _mixture(ns)
        data, _ = _sample(spec, ns)
    state = init_balanced(InitSpec(h=ns.h, alpha=ns.alpha, ref_distribution=ns.ref, seed=ns.seed), data.d)
    out = io.ensure_dir(ns.out)
    _echo(out, ns)
    try:
        traj = integrate(state, data, _flow(ns, ns.etas), etas=ns.etas)
    except DivergenceError as exc:
        if exc.trajectory is not None:
            _write_trajectory(out, exc.trajectory)
        raise
    _write_trajectory(out, traj)
    save_checkpoint(traj.final_state, out / "checkpoint.txt")
    stop_state = traj.stop.state
    part = partition(stop_state, data, traj.stop.t_eta)
    with np.errstate(invalid="ignore", divide="ignore"):
        psi_j = (data.x_plus @ stop_state.W) / (np.linalg.norm(data.x_plus) * np.linalg.norm(stop_state.W, axis=0))
    io.write_csv(out / "partition.csv", ["j", "member", "psi_j"],
                 ((j, CODE_NAMES[int(c)], psi_j[j]) for j, c in enumerate(part.codes)))
    records = {"t_alpha": traj.t_alpha, "t_alpha_valid": traj.t_alpha_valid, "steps": traj.steps}
    for eta in sorted(traj.stops):
        rec = traj.stops[eta]
        rule = resolve_rule(rec.state, data, ns.predictor)
        try:
            Psi = cosine(predictor(rec.state, data, rule), data.x_plus)
        except FlsLabError:
            Psi = math.nan
        key = f"eta_{eta:g}"
        records.update({
            f"{key}.reached": rec.reached, f"{key}.t_eta": rec.t_eta, f"{key}.t1": rec.t1_detected,
            f"{key}.t1_found": rec.t1_found, f"{key}.t2": rec.t2, f"{key}.t2_found": rec.t2_found,
            f"{key}.risk_at_t_alpha": rec.risk_at_t_alpha, f"{key}.risk_at_t2": rec.risk_at_t2,
            f"{key}.predictor_rule": rule, f"{key}.Psi": Psi,
        })
    io.write_kv(out / "stop.txt", records)
    s = traj.stop
    print(f"t_alpha={traj.t_alpha:.6g} t_eta={s.t_eta:.6g} reached={s.reached} partition={part.counts()}")
    return 0


def cmd_sweep(ns) -> int:
    if ns.alphas:
        grid = sorted(ns.alphas)
    else:
        if ns.alpha_points < 1 or not 0 < ns.alpha_min <= ns.alpha_max:
            raise ConfigurationError("need 0 < alpha-min <= alpha-max and alpha-points >= 1")
        grid = np.logspace(math.log10(ns.alpha_min), math.log10(ns.alpha_max), ns.alpha_points)
    spec = SweepSpec(
        alpha_grid=grid, eta_list=ns.etas, seeds=ns.seeds, mixture=_mixture(ns, seed=0),
        init=InitSpec(h=ns.h, ref_distribution=ns.ref), flow=_flow(ns, ns.etas),
        mc_samples=ns.mc_samples, delta=ns.delta, master_seed=ns.seed, predictor=ns.predictor,
        lambda_min=ns.lambda_min, max_tries=ns.max_tries, C_complexity=ns.C_complexity,
    )
    t0 = time.perf_counter()
    rows = run_sweep(spec, jobs=ns.jobs)
    wall = time.perf_counter() - t0
    out = io.ensure_dir(ns.out)
    _echo(out, ns)
    write_sweep(rows, out, spec, {"wall_time": wall})

    u_rows, p_rows = [], []
    for eta in spec.eta_list:
        if len(spec.alpha_grid) >= 5:
            try:
                u = u_shape_report(rows, eta)
            except ConfigurationError as exc:
                print(f"u-shape at eta={eta:g}: {exc}")
            else:
                u_rows.append((eta, u.argmin_alpha, u.interior, u.left_margin, u.right_margin))
                print(f"eta={eta:g}: argmin alpha={u.argmin_alpha:.4g} interior={u.interior} "
                      f"margins=({u.left_margin:.4g}, {u.right_margin:.4g})")
        p = psi_stability_report(rows, eta)
        p_rows.append((eta, p.max_gap, p.spearman_rho, p.rho_defined))
    io.write_csv(out / "ushape.csv", ["eta", "argmin_alpha", "interior", "left_margin", "right_margin"], u_rows)
    io.write_csv(out / "psi_stability.csv", ["eta", "max_gap", "spearman_rho", "rho_defined"], p_rows)
    n_fail = sum(r.status == "diverged" for r in rows)
    print(f"{len(rows)} rows ({n_fail} diverged) in {wall:.1f}s -> {out}")
    return 0


# annotations are strings under postponed evaluation
_BOUND_FIELDS = {f.name: (int if f.type == "int" else float) for f in fields(bounds.BoundInputs)}


def cmd_bounds(ns) -> int:
    kv = io.read_kv(ns.stats)
    vals, extra = {}, {}
    for k, raw in kv.items():
        if k in _BOUND_FIELDS:
            conv = _BOUND_FIELDS[k]
            try:
                vals[k] = conv(raw)
            except ValueError:
                raise ConfigurationError(f"{ns.stats}: bad value for {k!r}: {raw!r}") from None
        elif k == "psi_at_t_alpha":
            extra[k] = float(raw)
        else:
            raise ConfigurationError(f"{ns.stats}: unknown key {k!r}")
    missing = [k for k in ("alpha", "n_plus", "h", "x_max", "x_min", "W_ref_max", "x_plus_norm") if k not in vals]
    if missing:
        raise ConfigurationError(f"{ns.stats}: missing {', '.join(missing)}")
    inp = bounds.BoundInputs(**vals)

    rows = []

    def add(name, fn):
        try:
            rows.append((name, fn(), "ok"))
        except FlsLabError as exc:
            rows.append((name, math.nan, type(exc).__name__))

    add("nu", lambda: bounds.nu(inp))
    add("zeta", lambda: bounds.zeta(inp))
    add("phase1_lower", lambda: bounds.phase1_lower(inp))
    add("phase1_angle_upper", lambda: bounds.phase1_angle_upper(inp)[0])
    add("corollary_condition", lambda: bounds.corollary_condition(inp))
    add("beta", lambda: bounds.beta(inp))
    add("g_flow", lambda: bounds.g_flow(inp))
    if "psi_at_t_alpha" in extra:
        add("phase2_lower", lambda: bounds.phase2_lower(inp, extra["psi_at_t_alpha"]))
    add("bayes_error", lambda: bounds.bayes_error(inp.kappa, inp.sigma))
    add("OA", lambda: bounds.oa_from_angle(inp.Psi_at_stop, inp.phi, inp.kappa, inp.sigma))
    add("g_geom", lambda: bounds.g_geom(inp.Psi_at_stop, inp.phi, inp.sigma, inp.d))
    add("g_geom_critical", lambda: bounds.g_geom_critical(inp.phi, inp.sigma, inp.d))
    add("OF_bound", lambda: bounds.of_bound(inp))
    out = io.ensure_dir(ns.out)
    _echo(out, ns)
    io.write_csv(out / "bounds.csv", ["quantity", "value", "status"], rows)
    for name, v, status in rows:
        print(f"{name:>20s}  {io.fmt(v)}  {status}")
    return 0


def cmd_verify(ns) -> int:
    from .verify import SUITES, run_suites

    names = ns.suite or list(SUITES)
    bad = [n for n in names if n not in SUITES]
    if bad:
        raise ConfigurationError(f"unknown suite(s) {', '.join(bad)}; choose from {', '.join(SUITES)}")
    results = run_suites(names, alpha=ns.alpha)
    out = io.ensure_dir(ns.out)
    _echo(out, ns)
    io.write_csv(out / "verify.csv", ["suite", "passed", "metric", "threshold", "runtime", "detail"],
                 ((r.name, r.passed, r.metric, r.threshold, r.runtime, r.detail) for r in results))
    for r in results:
        print(f"{'PASS' if r.passed else 'FAIL'}  {r.name:<14s} metric={r.metric:.6g} "
              f"threshold={r.threshold:.6g}  {r.detail}  ({r.runtime:.2f}s)")
    return 0 if all(r.passed for r in results) else 1


def main(argv=None) -> int:
    try:
        ns = parse_args(argv)
        return ns.func(ns)
    except FlsLabError as exc:
        print(f"flslab: {type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
