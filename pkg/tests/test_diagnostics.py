import io
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sapflow import (
    DegenerateFitError,
    FlowConfig,
    NonPositiveSamplesError,
    WindowTooSmallError,
    best_fit_sphere,
    compute_cache,
    compute_h,
    fit_exponential_rate,
    gen_ellipsoid,
    gen_icosphere,
    gen_perturbed_sphere,
    GaussianDentBump,
    identity_residuals,
    mean_convexity_onset,
    decay_rate_lower_bound,
    record_snapshot,
    run_flow,
)
from sapflow.diagnostics import (
    RECORD_FIELDS,
    DiagnosticsRecord,
    TimeSeries,
    area_identity_residuals,
    make_summary,
)
from sapflow.flow import FlowState


def series_from_columns(t, **overrides):
    base = {name: 1.0 for name in RECORD_FIELDS}
    records = []
    for i, ti in enumerate(t):
        row = dict(base)
        row["t"] = ti
        for key, values in overrides.items():
            row[key] = values[i]
        records.append(DiagnosticsRecord(**row))
    return TimeSeries(records=records, metadata={})


@pytest.fixture(scope="module")
def sphere_snapshot(icosphere):
    m = icosphere(1.0, 3)
    cache = compute_cache(m)
    state = FlowState(mesh=m, h=compute_h(m, cache), initial_area=cache.total_area)
    return record_snapshot(state, cache)


def test_sphere_snapshot_values(sphere_snapshot):
    r = sphere_snapshot
    assert r.h == pytest.approx(0.5, rel=1e-4)
    assert r.sup_one_minus_hH < 1e-4
    assert r.max_traceless < 1e-6
    assert r.area == pytest.approx(4 * np.pi, rel=5e-3)
    assert r.int_Hpow == pytest.approx(8 * np.pi, rel=5e-3)
    assert r.min_angle > 0.5


def test_snapshot_fields_finite_on_ellipsoid():
    m = gen_ellipsoid(1.0, 1.0, 2.0, 2)
    cache = compute_cache(m)
    state = FlowState(mesh=m, h=compute_h(m, cache), initial_area=cache.total_area)
    r = record_snapshot(state, cache)
    assert all(np.isfinite(getattr(r, name)) for name in RECORD_FIELDS)
    assert r.min_H < r.max_H
    assert r.int_traceless_sq > 0


# -- residuals -----------------------------------------------------------------


@pytest.fixture(scope="module")
def small_run():
    m = gen_ellipsoid(1.2, 1.0, 0.85, 2)
    config = FlowConfig(stepping="explicit", t_max=0.4, snapshot_every=1)
    return run_flow(m, config)


def test_area_residual_machine_level(small_run):
    assert area_identity_residuals(small_run.series).max() <= 1e-12


def test_ode_residuals_projection_compensated(small_run):
    res = identity_residuals(small_run.series, small_run.snapshot_meshes)
    assert len(res.h_ode) == len(small_run.series) - 1
    assert res.h_ode.max() < 0.05
    assert res.H2_ode.max() < 5.0
    # same run without projection gives near-identical residuals
    m = gen_ellipsoid(1.2, 1.0, 0.85, 2)
    config = FlowConfig(
        stepping="explicit", t_max=0.4, snapshot_every=1, area_projection=False
    )
    raw = run_flow(m, config)
    res2 = identity_residuals(raw.series, raw.snapshot_meshes)
    assert res2.h_ode.max() == pytest.approx(res.h_ode.max(), rel=0.1)


def test_residuals_require_aligned_meshes(small_run):
    with pytest.raises(ValueError):
        identity_residuals(small_run.series, small_run.snapshot_meshes[:-1])


def test_ode_residuals_shrink_under_joint_refinement():
    # halving dt together with one mesh refinement shrinks both ODE residuals
    from sapflow import SphericalHarmonicBump, gen_perturbed_sphere

    maxima = []
    for sub, dt in ((2, 0.004), (3, 0.002)):
        m = gen_perturbed_sphere(1.0, 0.05, SphericalHarmonicBump(2, 0), sub)
        config = FlowConfig(
            stepping="explicit", cfl_safety=1.0, dt_max=dt, t_max=0.24,
            snapshot_every=1, roundness_tol=1e-12,
        )
        result = run_flow(m, config)
        res = identity_residuals(result.series, result.snapshot_meshes)
        maxima.append((res.h_ode.max(), res.H2_ode.max()))
    assert maxima[1][0] < 0.5 * maxima[0][0]
    assert maxima[1][1] < 0.5 * maxima[0][1]


# -- exponential fit ------------------------------------------------------------


def test_fit_exact_log_linear_data():
    t = np.arange(0.0, 4.05, 0.1)
    series = series_from_columns(t, int_traceless_sq=np.exp(-0.5 * t))
    fit = fit_exponential_rate(series, "int_traceless_sq", window=(0.0, 4.0))
    assert fit.rate == pytest.approx(0.5, abs=1e-9)
    assert fit.r_squared == pytest.approx(1.0, abs=1e-12)


def test_fit_constant_series_rate_zero():
    t = np.linspace(0.0, 2.0, 21)
    series = series_from_columns(t, int_traceless_sq=np.full(21, 2.5))
    fit = fit_exponential_rate(series, "int_traceless_sq", window=(0.0, 2.0))
    assert fit.rate == pytest.approx(0.0, abs=1e-12)


@settings(max_examples=30, deadline=None)
@given(
    C=st.floats(min_value=1e-6, max_value=1e6),
    lam=st.floats(min_value=1e-3, max_value=50.0),
)
def test_fit_recovers_rate_property(C, lam):
    t = np.linspace(0.0, 3.0, 40)
    series = series_from_columns(t, int_traceless_sq=C * np.exp(-lam * t))
    fit = fit_exponential_rate(series, "int_traceless_sq", window=(0.0, 3.0))
    assert abs(fit.rate - lam) <= 1e-9 * max(1.0, lam)


def test_fit_window_default_skips_transient():
    t = np.linspace(0.0, 10.0, 101)
    series = series_from_columns(t, int_traceless_sq=np.exp(-t))
    fit = fit_exponential_rate(series, "int_traceless_sq")
    assert fit.rate == pytest.approx(1.0, abs=1e-9)


def test_fit_nonpositive_raises():
    t = np.linspace(0.0, 1.0, 11)
    y = np.exp(-t)
    y[5] = 0.0
    series = series_from_columns(t, int_traceless_sq=y)
    with pytest.raises(NonPositiveSamplesError):
        fit_exponential_rate(series, "int_traceless_sq", window=(0.0, 1.0))


def test_fit_window_too_small():
    t = np.linspace(0.0, 1.0, 11)
    series = series_from_columns(t, int_traceless_sq=np.exp(-t))
    with pytest.raises(WindowTooSmallError):
        fit_exponential_rate(series, "int_traceless_sq", window=(0.0, 0.2))


# -- decay bound -------------------------------------------------------------------


def test_decay_bound_exact_sphere_values():
    t = np.linspace(0.0, 1.0, 6)
    n_rows = len(t)
    series = series_from_columns(
        t,
        area=np.full(n_rows, 4 * np.pi),
        max_abs_A=np.full(n_rows, np.sqrt(2.0)),
        h=np.full(n_rows, 0.5),
        int_H2=np.full(n_rows, 16 * np.pi),
    )
    delta = decay_rate_lower_bound(series)
    assert delta == 1.0 / (8.0 * (16 * np.pi) ** 2 * 4 * np.pi)
    assert delta == pytest.approx(3.94e-6, rel=1e-2)


def test_decay_bound_positive_and_quarter_scaling(small_run):
    delta = decay_rate_lower_bound(small_run.series)
    assert delta > 0
    # doubling Lambda1 (via doubled int_H2 dominating) quarters delta
    t = np.linspace(0.0, 1.0, 6)
    mk = lambda lam: series_from_columns(
        t,
        area=np.ones(6),
        max_abs_A=np.ones(6),
        h=np.ones(6),
        int_H2=np.full(6, lam),
    )
    assert decay_rate_lower_bound(mk(40.0)) == pytest.approx(
        decay_rate_lower_bound(mk(20.0)) / 4.0
    )


# -- sphere fit ----------------------------------------------------------------------


def test_best_fit_sphere_exact_data(icosphere):
    m = icosphere(2.0, 3, (1.0, 2.0, 3.0))
    fit = best_fit_sphere(m)
    assert np.linalg.norm(fit.center - np.array([1.0, 2.0, 3.0])) < 1e-9
    assert fit.radius == pytest.approx(2.0, abs=1e-9)
    assert fit.rms_residual < 1e-9


def test_best_fit_sphere_rejects_ellipsoid_shape():
    fit = best_fit_sphere(gen_ellipsoid(1.0, 1.0, 2.0, 2))
    assert fit.rms_residual > 0.1


def test_best_fit_sphere_equivariance(icosphere):
    m = icosphere(1.0, 2)
    theta = 1.1
    rot = np.array(
        [
            [1, 0, 0],
            [0, np.cos(theta), -np.sin(theta)],
            [0, np.sin(theta), np.cos(theta)],
        ]
    )
    shift = np.array([0.4, -2.0, 0.9])
    fit0 = best_fit_sphere(m)
    fit1 = best_fit_sphere(m.vertices @ rot.T + shift)
    assert np.linalg.norm(fit1.center - (rot @ fit0.center + shift)) < 1e-10
    assert fit1.radius == pytest.approx(fit0.radius, abs=1e-10)
    assert fit1.rms_residual == pytest.approx(fit0.rms_residual, abs=1e-10)


def test_best_fit_sphere_coplanar_raises(flat_patch):
    with pytest.raises(DegenerateFitError):
        best_fit_sphere(flat_patch.vertices)


# -- mean convexity onset --------------------------------------------------------------


def test_onset_zero_for_convex_series():
    t = np.linspace(0.0, 1.0, 6)
    series = series_from_columns(t, min_H=np.full(6, 0.5))
    assert mean_convexity_onset(series) == 0.0


def test_onset_after_sign_change():
    t = np.array([0.0, 0.1, 0.2, 0.3, 0.4])
    series = series_from_columns(t, min_H=np.array([-1.0, -0.2, 0.1, 0.3, 0.5]))
    assert mean_convexity_onset(series) == pytest.approx(0.2)


def test_onset_none_when_never_positive():
    t = np.array([0.0, 0.1, 0.2])
    series = series_from_columns(t, min_H=np.array([-1.0, -0.5, -0.1]))
    assert mean_convexity_onset(series) is None


def test_onset_requires_staying_positive():
    t = np.array([0.0, 0.1, 0.2, 0.3])
    series = series_from_columns(t, min_H=np.array([-1.0, 0.5, -0.1, 0.4]))
    assert mean_convexity_onset(series) == pytest.approx(0.3)


def test_dented_sphere_onset_is_finite():
    m = gen_perturbed_sphere(1.0, -0.35, GaussianDentBump(width=0.3), 2)
    config = FlowConfig(stepping="explicit", t_max=0.6, snapshot_every=5)
    result = run_flow(m, config)
    series = result.series
    assert series.records[0].min_H < 0
    onset = mean_convexity_onset(series)
    assert onset is not None and 0 < onset < 0.6


# -- csv / series ------------------------------------------------------------------------


def test_series_csv_roundtrip(small_run):
    buf = io.StringIO()
    small_run.series.to_csv(buf)
    buf.seek(0)
    back = TimeSeries.from_csv(buf)
    for a, b in zip(small_run.series.records, back.records):
        for name in RECORD_FIELDS:
            assert getattr(a, name) == getattr(b, name)


def test_series_rejects_nonmonotone_time():
    t = np.array([0.0, 0.2, 0.1])
    series = series_from_columns(t)
    buf = io.StringIO()
    series.to_csv(buf)
    buf.seek(0)
    with pytest.raises(ValueError, match="strictly increasing"):
        TimeSeries.from_csv(buf)


def test_series_rejects_wrong_header():
    with pytest.raises(ValueError, match="header"):
        TimeSeries.from_csv(io.StringIO("a,b,c\n1,2,3\n"))


def test_summary_structure(small_run):
    summary = make_summary(
        small_run.series, small_run.snapshot_meshes, small_run.termination
    )
    assert set(summary) == {
        "termination",
        "fitted_rate",
        "R2",
        "delta_paper",
        "final_sphere",
        "mean_convexity_onset",
        "max_residuals",
    }
    assert summary["max_residuals"]["area"] <= 1e-12
    assert summary["final_sphere"]["radius"] > 0


def test_snapshot_suprema_bitwise_recomputable(small_run):
    idx = len(small_run.series) // 2
    rec = small_run.series.records[idx]
    cache = compute_cache(small_run.snapshot_meshes[idx])
    assert float(np.abs(1 - rec.h * cache.mean_curvature).max()) == rec.sup_one_minus_hH
    assert float(cache.traceless_norm.max()) == rec.max_traceless
    assert float(cache.grad_H_norm.max()) == rec.max_grad_H


def test_topping_ratio_bounded(small_run):
    series = small_run.series
    ratio = series.column("diameter_est") / series.column("int_Hpow")
    assert np.isfinite(ratio).all()
    assert ratio.max() < 100.0
