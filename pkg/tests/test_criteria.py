import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rcrdesign import (
    BoundaryError,
    ClosedFormUnavailableError,
    CriterionKind,
    DegenerateDeterminantError,
    ExactDesign,
    ModelParams,
    RCRError,
    SweepConfig,
    eff_A,
    eff_D,
    efficiency,
    minimize_criterion,
    mse_matrix_alpha,
    phi_A,
    phi_D,
    phi_est,
    round_to_exact,
    sweep,
    var_blue_alpha0,
    w_star_D_closed,
    w_star_est,
)
from rcrdesign import criteria as crit
from rcrdesign.criteria import SWEEP_COLUMNS, criterion, criterion_derivative, golden_section, write_sweep_csv

from conftest import params_st, random_params


def limit_params(q, N=60, K=5):
    return ModelParams(1.0, 1.0, 999.0, 999.0 / q, K, N)


KINDS = list(CriterionKind)


# -- evaluation ------------------------------------------------------------------

def test_phi_est_substitution():
    assert phi_est(0.5, ModelParams(1, 1, 1, 1, 5, 60)) == pytest.approx(24.0)


@pytest.mark.parametrize("kind", KINDS)
@pytest.mark.parametrize("w", [0.0, 1.0, -0.5, 2.0])
def test_boundary_divergence(kind, w):
    with pytest.raises(BoundaryError, match="criterion diverges at boundary"):
        criterion(kind, w, ModelParams(1, 1, 1, 1, 5, 60))


def test_phi_D_fixed_effects_limit():
    with pytest.raises(DegenerateDeterminantError, match="determinant degenerate in fixed-effects limit"):
        phi_D(0.5, ModelParams(1, 1, 0, 0, 5, 60))


def test_kind_parse():
    assert CriterionKind.parse("pred-a") is CriterionKind.PredictionA
    assert CriterionKind.parse("PredictionD") is CriterionKind.PredictionD
    with pytest.raises(RCRError, match="unknown criterion kind"):
        CriterionKind.parse("e")


def test_vectorized_evaluation():
    p = ModelParams(1.2, 0.8, 2, 1, 3, 10)
    w = np.linspace(0.1, 0.9, 5)
    for kind in KINDS:
        np.testing.assert_allclose(criterion(kind, w, p), [criterion(kind, x, p) for x in w], rtol=1e-13)


@settings(max_examples=150, deadline=None)
@given(params_st(), st.floats(0.02, 0.98))
def test_phi_est_is_scaled_blue_variance(p, w):
    n1 = min(max(round(w * p.N), 1), p.N - 1)
    assert phi_est(n1 / p.N, p) == pytest.approx(p.K * p.N * var_blue_alpha0(p, ExactDesign(n1, p.N - n1)), rel=1e-12)


@settings(max_examples=150, deadline=None)
@given(params_st(min_disp=0.01), st.floats(0.02, 0.96), st.floats(0.01, 0.5))
def test_strict_convexity_A(p, a, gap):
    b = min(a + gap, 0.99)
    for f in (phi_est, phi_A):
        mid = f(0.5 * (a + b), p)
        assert mid <= 0.5 * (f(a, p) + f(b, p)) + 1e-12 * abs(mid)


def test_symmetric_special_case():
    p = ModelParams(2.0, 2.0, 1.7, 1.7, 4, 30)
    w = np.linspace(0.05, 0.95, 19)
    np.testing.assert_allclose(phi_A(w, p), phi_A(1 - w, p), rtol=1e-12)
    diff = phi_D(w, p) + np.log(w * (1 - w))
    np.testing.assert_allclose(diff, diff[0], rtol=1e-12)


def test_equal_sigma_D_shape():
    # with equal error variances phi_D is linear in w plus -log(w(1-w))
    p = ModelParams(1.5, 1.5, 3.0, 0.5, 5, 20)
    w = np.linspace(0.05, 0.95, 19)
    slope = p.N * math.log((p.K * p.v + 1) / (p.K * p.u + 1))
    rest = phi_D(w, p) - w * slope + np.log(w * (1 - w))
    np.testing.assert_allclose(rest, rest[0], rtol=1e-11, atol=1e-11)


@pytest.mark.parametrize("kind", KINDS)
def test_derivative_matches_finite_difference(kind, rng):
    for _ in range(20):
        p = random_params(rng, N=int(rng.integers(2, 80)))
        w = rng.uniform(0.05, 0.95)
        h = 1e-6
        fd = (criterion(kind, w + h, p) - criterion(kind, w - h, p)) / (2 * h)
        assert criterion_derivative(kind, w, p) == pytest.approx(fd, rel=1e-5, abs=1e-6)


# -- closed forms ----------------------------------------------------------------

def test_w_star_est_examples():
    assert w_star_est(ModelParams(2, 2, 3, 3, 4, 10)) == pytest.approx(0.5)
    p = ModelParams(1, 1, 1, 0, 5, 60)
    expected = 1 / (1 + math.sqrt(1 / 6))
    assert w_star_est(p) == pytest.approx(expected, rel=1e-14)
    grid = np.linspace(1e-3, 1 - 1e-3, 998_001)
    assert abs(grid[np.argmin(phi_est(grid, p))] - expected) <= 1e-6
    w = w_star_est(p)
    assert phi_est(w, p) <= min(phi_est(w - 1e-4, p), phi_est(w + 1e-4, p))


def test_w_star_est_monotone(rng):
    for _ in range(50):
        p = random_params(rng)
        w = w_star_est(p)
        assert w_star_est(p.replace(sigma1_sq=p.sigma1_sq * 1.5)) > w
        assert w_star_est(p.replace(u=p.u * 1.5)) > w
        assert w_star_est(p.replace(sigma2_sq=p.sigma2_sq * 1.5)) < w
        assert w_star_est(p.replace(v=p.v * 1.5)) < w
        eq = p.replace(sigma2_sq=p.sigma1_sq)
        assert (w_star_est(eq) > 0.5) == (eq.u > eq.v)


def test_w_star_D_closed_examples():
    assert w_star_D_closed(ModelParams(1, 1, 4, 4, 5, 60)) == 0.5
    assert w_star_D_closed(limit_params(3.0)) == pytest.approx(0.985, abs=5e-4)
    a = 60 * math.log((5 * 3330 + 1) / (5 * 999 + 1))
    assert a == pytest.approx(72.23, abs=0.01)
    w = w_star_D_closed(ModelParams(1, 1, 999, 3330, 5, 60))
    assert w == pytest.approx((a + 2 - math.sqrt(a * a + 4)) / (2 * a), rel=1e-12)
    assert w == pytest.approx(0.0137, abs=1e-4)
    assert minimize_criterion("pred-d", ModelParams(1, 1, 999, 3330, 5, 60), method="golden_section").w_star == pytest.approx(w, abs=1e-8)


def test_w_star_D_closed_requires_equal_sigma():
    with pytest.raises(ClosedFormUnavailableError, match="closed form requires equal error variances"):
        w_star_D_closed(ModelParams(1, 2, 1, 1, 5, 60))


def test_w_star_D_side(rng):
    for _ in range(50):
        p = random_params(rng, equal_sigma=True)
        assert (w_star_D_closed(p) > 0.5) == (p.u > p.v)


def test_w_star_D_small_a_continuous():
    # just above the threshold the closed form sits next to the limit value
    p = ModelParams(1, 1, 1.0, 1.0 + 1e-9, 5, 60)
    assert w_star_D_closed(p) == pytest.approx(0.5, abs=1e-8)


# -- minimizer -------------------------------------------------------------------

def test_golden_section_quadratic():
    x, fx, it, width = golden_section(lambda t: (t - 0.3) ** 2, 0.0, 1.0, tol=1e-9)
    assert abs(x - 0.3) < 1e-8
    assert width <= 1e-9 or fx == 0


def test_minimize_dispatch():
    p = ModelParams(1, 2, 1, 3, 5, 60)
    assert minimize_criterion("est", p).method == "closed_form"
    assert minimize_criterion("pred-d", p).method == "golden_section"
    assert minimize_criterion("pred-d", p.replace(sigma2_sq=1.0)).method == "closed_form"
    assert minimize_criterion("pred-a", p).method == "golden_section"
    with pytest.raises(ClosedFormUnavailableError):
        minimize_criterion("pred-a", p, method="closed_form")
    with pytest.raises(RCRError, match="tol"):
        minimize_criterion("est", p, tol=1e-13)


@pytest.mark.parametrize("kind", KINDS)
def test_local_optimality_certificate(kind, rng):
    for _ in range(20):
        p = random_params(rng, N=int(rng.integers(2, 100)))
        res = minimize_criterion(kind, p, method="golden_section")
        assert 0 < res.w_star < 1
        step = max(res.achieved_tol, 1e-9)
        for x in (res.w_star - step, res.w_star + step):
            if 0 < x < 1:
                assert res.criterion_value <= criterion(kind, x, p) * (1 + 1e-12)


def test_closed_form_cross_check(rng):
    for _ in range(50):
        p = random_params(rng, N=int(rng.integers(2, 200)), K=int(rng.integers(1, 10)))
        assert abs(minimize_criterion("est", p, method="golden_section").w_star - w_star_est(p)) <= 1e-8
        pe = p.replace(sigma2_sq=p.sigma1_sq)
        assert abs(minimize_criterion("pred-d", pe, method="golden_section").w_star - w_star_D_closed(pe)) <= 1e-8


@pytest.mark.parametrize("u", [0.01, 0.1, 1.0, 10.0, 100.0])
def test_q_one_balanced(u):
    p = ModelParams(1, 1, u, u, 5, 60)
    assert minimize_criterion("pred-a", p).w_star == pytest.approx(0.5, abs=1e-6)
    assert minimize_criterion("pred-d", p).w_star == pytest.approx(0.5, abs=1e-6)


def test_published_argmins():
    assert minimize_criterion("pred-a", limit_params(3.0)).w_star == pytest.approx(0.910, abs=5e-4)
    assert minimize_criterion("pred-a", limit_params(0.3)).w_star == pytest.approx(0.083, abs=5e-4)
    assert minimize_criterion("pred-d", limit_params(0.3)).w_star == pytest.approx(0.014, abs=5e-4)
    grid = np.linspace(0.001, 0.999, 9981)
    assert grid[np.argmin(phi_A(grid, limit_params(3.0)))] == pytest.approx(0.910, abs=1e-3)


# -- efficiencies ----------------------------------------------------------------

def test_efficiency_examples():
    assert eff_A(0.5, limit_params(3.0)) == pytest.approx(0.655, abs=5e-4)
    assert eff_D(0.5, limit_params(3.0)) == pytest.approx(0.615, abs=5e-4)
    assert eff_A(0.5, limit_params(0.3)) == pytest.approx(0.618, abs=5e-4)
    assert eff_D(0.5, limit_params(0.3)) == pytest.approx(0.585, abs=5e-4)
    for u in (0.1, 5.0, 300.0):
        p = ModelParams(1, 1, u, u, 5, 60)
        assert eff_A(0.5, p) == pytest.approx(1.0, abs=1e-12)
        assert eff_D(0.5, p) == pytest.approx(1.0, abs=1e-12)


@pytest.mark.parametrize("kind", KINDS)
def test_efficiency_scale(kind, rng):
    for _ in range(20):
        p = random_params(rng, N=int(rng.integers(2, 60)))
        ws = minimize_criterion(kind, p).w_star
        assert efficiency(kind, ws, p) == 1.0
        for w in rng.uniform(0.01, 0.99, size=5):
            e = efficiency(kind, w, p, w_star=ws)
            assert 0 < e <= 1 + 1e-12


# -- rounding --------------------------------------------------------------------

def test_round_to_exact_examples():
    assert round_to_exact(0.5, 60) == ExactDesign(30, 30)
    p = limit_params(3.0)
    chosen = round_to_exact(0.910, 60, "pred-a", p)
    best = min((54, 55), key=lambda n: phi_A(n / 60, p))
    assert chosen == ExactDesign(best, 60 - best)
    assert round_to_exact(0.014, 60) == ExactDesign(1, 59)
    assert round_to_exact(0.014, 60, "pred-d", limit_params(0.3)).n1 == 1
    with pytest.raises(RCRError, match="params"):
        round_to_exact(0.5, 60, "pred-a")


def test_integer_det_argmin(rng):
    for _ in range(30):
        N = int(rng.integers(2, 13))
        p = random_params(rng, N=N)
        logdets = [mse_matrix_alpha(p, ExactDesign(n, N - n)).logdet() for n in range(1, N)]
        best = 1 + int(np.argmin(logdets))
        cand = round_to_exact(minimize_criterion("pred-d", p).w_star, N, "pred-d", p).n1
        assert abs(best - cand) <= 1
        for n in range(1, N):
            assert phi_D(n / N, p) == pytest.approx(logdets[n - 1], abs=1e-8)


# -- sweeps ----------------------------------------------------------------------

def test_sweep_config_validation():
    with pytest.raises(RCRError, match="q"):
        SweepConfig(q=0.0)
    with pytest.raises(RCRError, match="increasing"):
        SweepConfig(q=1.0, rho_grid=(0.2, 0.1))
    with pytest.raises(RCRError, match=r"\(0, 1\)"):
        SweepConfig(q=1.0, rho_grid=(0.2, 1.0))


@pytest.mark.parametrize("kind", ["pred-a", "pred-d"])
def test_sweep_q_one_constant(kind):
    rows = sweep(SweepConfig(q=1.0, rho_grid=tuple(np.linspace(0.01, 0.99, 25))), kind, threads=1)
    assert all(abs(r.w_star - 0.5) < 1e-8 and abs(r.eff_balanced - 1) < 1e-9 for r in rows)


@pytest.mark.parametrize("kind", ["pred-a", "pred-d"])
def test_sweep_limits_and_monotonicity(kind):
    up = sweep(SweepConfig(q=3.0), kind, threads=1)
    down = sweep(SweepConfig(q=0.3), kind, threads=1)
    if kind == "pred-a":
        assert up[0].w_star == pytest.approx(0.5, abs=0.02)
        assert down[0].w_star == pytest.approx(0.5, abs=0.02)
    w_up = np.array([r.w_star for r in up])
    w_down = np.array([r.w_star for r in down])
    assert np.all(np.diff(w_up) >= -1e-9)
    assert np.all(np.diff(w_down) <= 1e-9)
    tiny = sweep(SweepConfig(q=3.0, rho_grid=(1e-7,)), kind, threads=1)[0]
    assert tiny.w_star == pytest.approx(0.5, abs=1e-4)


def test_sweep_deterministic_across_threads(tmp_path):
    cfg = SweepConfig(q=3.0, params_base=ModelParams(1.0, 2.0, 1, 1, 4, 30))
    serial = sweep(cfg, "pred-d", threads=1)
    parallel = sweep(cfg, "pred-d", threads=8)
    assert serial == parallel
    assert [r.rho for r in serial] == list(cfg.rho_grid)
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    write_sweep_csv(serial, a)
    write_sweep_csv(parallel, b)
    assert a.read_bytes() == b.read_bytes()
    with a.open() as fh:
        reader = csv.reader(fh)
        assert tuple(next(reader)) == SWEEP_COLUMNS
        first = next(reader)
    assert first[4] == "pred-d"
    assert float(first[0]) == 0.005


def test_sweep_row_errors_recorded(monkeypatch):
    def boom(kind, params):
        raise RCRError("forced failure")

    monkeypatch.setattr(crit, "minimize_criterion", boom)
    rows = sweep(SweepConfig(q=2.0, rho_grid=(0.1, 0.2)), "pred-a", threads=1)
    assert [r.error for r in rows] == ["forced failure"] * 2
    assert all(math.isnan(r.w_star) for r in rows)
