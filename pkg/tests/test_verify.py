import numpy as np
import pytest

from kahlergg import geometry as geo
from kahlergg.rp1 import INFINITY
from kahlergg.verify import (CONTROL_EXPECTATIONS, GridSpec, _gamma_recover_raw,
                             check_gamma_recovery, check_killing, check_laplacian_identity,
                             make_report, run_suite, subject_from_construction,
                             suite_passed)

FAST = GridSpec(base=(4, 4), n_tau=8, n_theta=2, n_random=60)


def failures(reports):
    return {r.check for r in reports if not r.passed}


def test_torus_suite_passes(torus_subject):
    reports = run_suite(torus_subject, FAST)
    assert suite_passed(reports), failures(run_suite(torus_subject, FAST))
    assert {r.check for r in reports} == {
        "kaehler", "killing", "geodesic_gradient", "laplacian", "gamma_recovery",
        "ode_identities", "bracket_identities", "bochner", "boundary_limits",
        "flow_lengths", "oracle_equivalence"}


def test_fs_suite_passes(fs_subject):
    reports = run_suite(fs_subject, FAST)
    assert suite_passed(reports), failures(reports)
    # no bracket/oracle-equivalence checks without connection data
    names = {r.check for r in reports}
    assert "bracket_identities" not in names
    assert "oracle_equivalence" not in names


def test_gamma_inf_suite_and_infinite_recovery(torus_inf_data):
    subject = subject_from_construction(torus_inf_data)
    reports = run_suite(subject, FAST)
    assert suite_passed(reports), failures(reports)
    pts, _ = subject.grid_points(FAST)
    rec = _gamma_recover_raw(subject, pts[:40])
    assert all(g == INFINITY for g in rec)


@pytest.mark.parametrize("control", sorted(CONTROL_EXPECTATIONS))
def test_negative_controls_fail_designated_checks(torus_data, control):
    subject = subject_from_construction(torus_data.with_control(control))
    wanted = CONTROL_EXPECTATIONS[control]
    reports = run_suite(subject, FAST, checks=list(wanted) + ["boundary_limits"])
    failed = failures(reports)
    for name in wanted:
        assert name in failed, f"{control} was expected to break {name}"
    assert not suite_passed(reports)


def test_controls_leave_other_checks_green(torus_data):
    # perturbing beta does not touch the fiber block: the Killing field and the
    # geodesic-gradient property survive (so those checks must stay green).
    subject = subject_from_construction(torus_data.with_control("perturb-beta"))
    reports = run_suite(subject, FAST, checks=["killing", "geodesic_gradient"])
    assert suite_passed(reports)


def test_gauge_invariance(torus_data):
    def f(x):
        return np.sin(2 * np.pi * x[:, 0])

    def df(x):
        return np.column_stack([2 * np.pi * np.cos(2 * np.pi * x[:, 0]),
                                np.zeros(x.shape[0])])

    def d2f(x):
        out = np.zeros((x.shape[0], 2, 2))
        out[:, 0, 0] = -(2 * np.pi) ** 2 * np.sin(2 * np.pi * x[:, 0])
        return out

    shifted = torus_data.with_connection(torus_data.chart_data.connection.add_df(f, df, d2f))
    base_reports = run_suite(subject_from_construction(torus_data), FAST)
    shift_reports = run_suite(subject_from_construction(shifted), FAST)
    for rb, rs in zip(base_reports, shift_reports):
        assert rb.check == rs.check
        assert rb.passed == rs.passed
        if rb.max > 1e-12:
            assert rs.max < 10.0 * rb.max + 1e-12


def test_laplacian_spot_value(torus_subject):
    # Delta tau at (1/4, 0, 1/2, 0) = (1/2 - 3)^(-1) * 1 + 0 = -0.4
    lap = geo.laplacian(torus_subject.metric, torus_subject.tau,
                        np.array([[0.25, 0.0, 0.5, 0.0]]))
    assert abs(lap[0] + 0.4) < 1e-5


def test_killing_route_agreement(torus_subject):
    pts, desc = torus_subject.grid_points(FAST)
    rep = check_killing(torus_subject, pts[:200], desc, 1e-6)
    assert rep.passed
    assert rep.extras["route_agreement_max"] < 1e-8


def test_wrong_field_is_not_killing(torus_subject):
    # negative control: d_tau in place of u has a large Lie derivative
    bad = geo.VectorField(value=lambda p: np.broadcast_to(
        [0.0, 0.0, 1.0, 0.0], (p.shape[0], 4)).copy())
    pts, _ = torus_subject.grid_points(FAST)
    lie = geo.lie_derivative_metric(torus_subject.metric, bad, pts[:50])
    assert np.max(np.abs(lie)) > 1.0


def test_gamma_recovery_fiber_spread(torus_subject):
    pts, desc = torus_subject.grid_points(FAST)
    rep = check_gamma_recovery(torus_subject, pts[:100], desc, 1e-5)
    assert rep.passed
    assert rep.extras["fiber_spread"] < 1e-6


def test_reports_are_reproducible(torus_subject):
    r1 = run_suite(torus_subject, FAST, checks=["laplacian", "gamma_recovery"])
    r2 = run_suite(torus_subject, FAST, checks=["laplacian", "gamma_recovery"])
    assert [r.to_dict() for r in r1] == [r.to_dict() for r in r2]


def test_make_report_semantics():
    pts = np.zeros((5, 4))
    res = np.array([1e-7, 5e-7, 2e-7, 9e-7, 3e-7])
    rep = make_report("demo", "grid", pts, res, 1e-6)
    assert rep.passed and rep.max == pytest.approx(9e-7)
    rep2 = make_report("demo", "grid", pts, res, 8e-7)
    assert not rep2.passed
    assert len(rep.offenders) == 5
    assert rep.offenders[0]["residual"] == pytest.approx(9e-7)
    d = rep.to_dict()
    assert d["pass"] is True and d["check"] == "demo"


def test_nonfinite_residuals_fail():
    pts = np.zeros((3, 4))
    rep = make_report("demo", "grid", pts, np.array([1e-9, np.nan, 1e-9]), 1e-6)
    assert not rep.passed


def test_sphere_north_chart_suite(sphere_data):
    subject = subject_from_construction(sphere_data.with_chart(1))
    reports = run_suite(subject, FAST, checks=["kaehler", "killing", "laplacian",
                                               "gamma_recovery", "bracket_identities"])
    assert suite_passed(reports), failures(reports)


def test_laplacian_check_on_perturbed_beta_fails(torus_data):
    subject = subject_from_construction(torus_data.with_control("perturb-beta"))
    pts, desc = subject.grid_points(FAST)
    rep = check_laplacian_identity(subject, pts, desc, 1e-5)
    assert not rep.passed
