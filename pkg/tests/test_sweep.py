import math

import numpy as np
import pytest

from flslab import io
from flslab.bounds import zero_one_error
from flslab.errors import ConfigurationError, ParameterError
from flslab.flow import FlowSpec
from flslab.mixture import MixtureSpec
from flslab.network import InitSpec
from flslab.sweep import (
    SweepRow,
    SweepSpec,
    derive_seed,
    mc_error,
    psi_stability_report,
    run_point,
    run_sweep,
    u_shape_report,
    write_sweep,
)


def _small_spec(alphas=(1e-4, 1e-3, 1e-2), seeds=(0, 1)):
    return SweepSpec(
        alpha_grid=alphas, eta_list=(0.1, 0.2), seeds=seeds,
        mixture=MixtureSpec(d=16, kappa=2.0, sigma=0.5, n=20),
        init=InitSpec(h=16), flow=FlowSpec(step=1e-4, max_time=20.0), mc_samples=20_000,
    )


@pytest.fixture(scope="module")
def small_rows():
    return run_sweep(_small_spec(), jobs=1)


def test_derive_seed_is_frozen():
    assert derive_seed(0, 0, 0) == derive_seed(0, 0, 0)
    assert derive_seed(0, 0, 0) != derive_seed(0, 0, 1)
    assert derive_seed(7, 3, 1) == int(np.random.SeedSequence([7, 3, 1]).generate_state(1)[0])


def test_rows_sorted_and_identity(small_rows):
    keys = [(r.alpha, r.eta, r.seed) for r in small_rows]
    assert keys == sorted(keys) and len(keys) == 3 * 2 * 2
    for r in small_rows:
        if r.status == "ok":
            assert r.reached
            assert r.OA + r.OF_exact == pytest.approx(r.excess, abs=1e-12)
            assert r.OA >= 0.0
            assert abs(r.mc_error - r.zero_one) <= 5 * max(r.mc_stderr, 1e-3)


def test_parallel_matches_serial_bytes(small_rows, tmp_path):
    par = run_sweep(_small_spec(), jobs=2)
    a = write_sweep(small_rows, tmp_path / "a", _small_spec())
    b = write_sweep(par, tmp_path / "b", _small_spec())
    assert a["table"].read_bytes() == b["table"].read_bytes()
    assert "runtime" not in io.read_csv(a["table"])[0]


def test_grid_point_independent_of_grid(small_rows):
    alone = run_point(_small_spec(alphas=(1e-3,), seeds=(1,)), 1e-3, 1)
    mine = [r for r in small_rows if r.alpha == 1e-3 and r.seed == 1]
    assert [r.values() for r in alone] == [r.values() for r in mine]


def _row(alpha, seed, excess, eta=0.05, **kw):
    return SweepRow(alpha, seed, eta, reached=True, excess=excess, **kw)


def test_u_shape_on_convex_table():
    alphas = np.logspace(-5, -1, 7)
    rows = [_row(a, s, (math.log10(a) + 3) ** 2 + 0.01 * s) for a in alphas for s in range(3)]
    rep = u_shape_report(rows, 0.05)
    assert rep.interior and rep.argmin_alpha == pytest.approx(1e-3)
    assert rep.left_margin == pytest.approx(4.0) and rep.right_margin == pytest.approx(4.0)


def test_u_shape_monotone_and_small_grid():
    alphas = np.logspace(-5, -1, 6)
    rep = u_shape_report([_row(a, 0, a) for a in alphas], 0.05)
    assert not rep.interior and rep.argmin_index == 0
    with pytest.raises(ConfigurationError):
        u_shape_report([_row(a, 0, a) for a in alphas[:4]], 0.05)


def test_u_shape_skips_unreached():
    alphas = np.logspace(-5, -1, 5)
    rows = [_row(a, 0, 1.0 - a) for a in alphas]
    rows[-1].reached = False
    rep = u_shape_report(rows, 0.05)
    assert math.isnan(rep.mean[-1]) and rep.argmin_index == 3


def test_psi_stability_reports():
    alphas = [1e-4, 1e-3, 1e-2, 1e-1]
    rows = [_row(a, 0, 0.0, Psi_at_t_alpha=0.9, Psi_at_stop=0.9 - 0.1 * i) for i, a in enumerate(alphas)]
    rep = psi_stability_report(list(reversed(rows)))
    assert rep.rho_defined and rep.spearman_rho == pytest.approx(-1.0)
    assert rep.max_gap == pytest.approx(0.3)
    flat = psi_stability_report([_row(a, 0, 0.0, Psi_at_t_alpha=0.5, Psi_at_stop=0.5) for a in alphas])
    assert not flat.rho_defined and math.isnan(flat.spearman_rho) and flat.max_gap == 0.0


def test_mc_error_known_cases():
    mix = MixtureSpec(d=4, kappa=1.0, sigma=1.0)
    s = mix.s_plus
    p, se = mc_error(s, mix, 10**6, 11)
    exact = zero_one_error(s, 1.0, 1.0, s)
    assert exact == pytest.approx(0.158655253931457051, rel=1e-14)
    assert abs(p - exact) <= 4 * math.sqrt(exact * (1 - exact) / 10**6)
    assert se == pytest.approx(math.sqrt(p * (1 - p) / 10**6))
    quiet = MixtureSpec(d=4, kappa=1.0, sigma=1e-9)
    assert mc_error(quiet.s_plus, quiet, 10**4, 0)[0] == 0.0
    ortho = np.linalg.svd(s[None, :])[2][1]
    p, _ = mc_error(ortho, mix, 10**5, 3)
    assert abs(p - 0.5) <= 4 * math.sqrt(0.25 / 10**5)
    with pytest.raises(ParameterError):
        mc_error(s, mix, 9999, 0)


def test_spec_validation():
    with pytest.raises((ConfigurationError, ParameterError)):
        SweepSpec(alpha_grid=(-1.0,))
    with pytest.raises((ConfigurationError, ParameterError)):
        SweepSpec(mc_samples=10)
