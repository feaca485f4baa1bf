import numpy as np
import pytest
import scipy.linalg

from kahlergg import geometry as geo
from kahlergg.construction import (assemble_J, assemble_metric, christoffel_closed_form,
                                   fiber_point, fields_v_u_psi_phi, gamma_of_points,
                                   tau_field)


def rand_points(data, n, seed=0, s_range=(0.15, 0.85)):
    rng = np.random.default_rng(seed)
    (x1, x2), _ = data.chart_data.chart.bounds, None
    lam = data.maps.lam
    xs = rng.uniform(x1[0], x1[1], n)
    ys = rng.uniform(x2[0], x2[1], n)
    taus = np.asarray(data.maps.tau_of_s(rng.uniform(*(np.array(s_range) * lam), n)))
    ths = rng.uniform(0, 2 * np.pi, n)
    return np.column_stack([xs, ys, taus, ths])


def test_metric_spot_values(torus_data):
    # at (1/4, 0, 1/2, 0): Q = 1 so g_tautau = 1, g_thth = 1/4; gamma = 3 makes beta = 1
    g = assemble_metric(torus_data).value(np.array([[0.25, 0.0, 0.5, 0.0]]))[0]
    assert g[2, 2] == pytest.approx(1.0)
    assert g[3, 3] == pytest.approx(0.25)
    h = torus_data.chart_data.chart.h(np.array([[0.25, 0.0]]))[0]
    a_pot = torus_data.chart_data.connection.A(np.array([[0.25, 0.0]]))[0]
    expect = h + 0.25 * np.outer(a_pot, a_pot)
    assert np.allclose(g[:2, :2], expect, rtol=1e-12)


def test_block_orthogonality(torus_data):
    # g(d_theta, horizontal lift) = 0 by the block structure
    m = assemble_metric(torus_data)
    pts = rand_points(torus_data, 30)
    g = m.value(pts)
    a_pot = torus_data.chart_data.connection.A(pts[:, :2])
    for i in range(2):
        lift = np.zeros((30, 4))
        lift[:, i] = 1.0
        lift[:, 3] = a_pot[:, i]
        pair = np.einsum("pij,pi,pj->p", g, lift, np.broadcast_to([0, 0, 0, 1.0], (30, 4)))
        assert np.max(np.abs(pair)) < 1e-12


def test_tau_endpoint_outside_domain(torus_data):
    m = assemble_metric(torus_data)
    assert not m.domain(np.array([[0.1, 0.1, 0.0, 0.0]]))[0]
    assert not m.domain(np.array([[0.1, 0.1, 1.0, 0.0]]))[0]
    assert m.domain(np.array([[0.1, 0.1, 0.5, 0.0]]))[0]


def test_analytic_dg_matches_fd(torus_data):
    m = assemble_metric(torus_data)
    pts = rand_points(torus_data, 50, seed=1, s_range=(0.2, 0.8))
    assert geo.dvalue_residual(m, pts) < 1e-8


def test_analytic_dg_matches_fd_sphere(sphere_data):
    m = assemble_metric(sphere_data)
    pts = rand_points(sphere_data, 50, seed=2, s_range=(0.2, 0.8))
    assert geo.dvalue_residual(m, pts) < 1e-8


def test_J_structure(torus_data):
    jf = assemble_J(torus_data)
    m = assemble_metric(torus_data)
    pts = rand_points(torus_data, 40, seed=3)
    jv = jf.value(pts)
    assert np.max(np.abs(np.einsum("pij,pjk->pik", jv, jv) + np.eye(4))) < 1e-12
    g = m.value(pts)
    herm = np.einsum("pki,pkl,plj->pij", jv, g, jv) - g
    assert np.max(np.abs(herm)) < 1e-10


def test_J_maps_v_to_u(torus_data):
    jf = assemble_J(torus_data)
    v, u, _, _ = fields_v_u_psi_phi(torus_data)
    pts = rand_points(torus_data, 20, seed=4)
    jv = np.einsum("pij,pj->pi", jf.value(pts), v.value(pts))
    assert np.max(np.abs(jv - u.value(pts))) < 1e-12


def test_field_norms(torus_data):
    # g(v,v) = g(u,u) = Q and g(v,u) = 0
    m = assemble_metric(torus_data)
    v, u, _, _ = fields_v_u_psi_phi(torus_data)
    pts = rand_points(torus_data, 25, seed=5)
    g = m.value(pts)
    q = torus_data.profile.Q(pts[:, 2])
    vv = v.value(pts)
    uu = u.value(pts)
    assert np.max(np.abs(np.einsum("pij,pi,pj->p", g, vv, vv) - q)) < 1e-12
    assert np.max(np.abs(np.einsum("pij,pi,pj->p", g, uu, uu) - q)) < 1e-12
    assert np.max(np.abs(np.einsum("pij,pi,pj->p", g, vv, uu))) < 1e-12


def test_phi_spot_value(torus_data):
    # phi(x=1/4, tau=1/2) = Q/(2 (tau - gamma)) = 1/(2 (1/2 - 3)) = -0.2
    _, _, _, phi = fields_v_u_psi_phi(torus_data)
    val = phi(np.array([[0.25, 0.0, 0.5, 0.0]]))
    assert val[0] == pytest.approx(-0.2, rel=1e-12)


def test_phi_times_tau_minus_gamma(torus_data):
    _, _, _, phi = fields_v_u_psi_phi(torus_data)
    pts = rand_points(torus_data, 30, seed=6)
    gam = np.array([g.value for g in gamma_of_points(torus_data, pts)])
    q = torus_data.profile.Q(pts[:, 2])
    assert np.max(np.abs(2 * phi(pts) * (pts[:, 2] - gam) - q)) < 1e-12


def test_directional_rates_closed_form(torus_data):
    # d_v tau = Q and d_v Q = 2 psi Q hold exactly for the assembled fields
    v, _, psi, _ = fields_v_u_psi_phi(torus_data)
    pts = rand_points(torus_data, 20, seed=7)
    q = torus_data.profile.Q(pts[:, 2])
    vv = v.value(pts)
    assert np.max(np.abs(vv[:, 2] - q)) < 1e-14  # d_v tau = v^tau
    dq = torus_data.profile.dQ(pts[:, 2])
    assert np.max(np.abs(vv[:, 2] * dq - 2 * psi(pts) * q)) < 1e-12


def test_oracle_equivalence_torus(torus_data):
    pts = rand_points(torus_data, 120, seed=8)
    g_cf = christoffel_closed_form(torus_data, pts)
    g_fd = geo.christoffel(assemble_metric(torus_data), pts, force_fd=True)
    scale = 1.0 + np.max(np.abs(g_cf))
    assert np.max(np.abs(g_cf - g_fd)) / scale < 1e-6


def test_oracle_equivalence_sphere(sphere_data):
    pts = rand_points(sphere_data, 120, seed=9)
    g_cf = christoffel_closed_form(sphere_data, pts)
    g_fd = geo.christoffel(assemble_metric(sphere_data), pts, force_fd=True)
    scale = 1.0 + np.max(np.abs(g_cf))
    assert np.max(np.abs(g_cf - g_fd)) / scale < 1e-6


def test_flat_limit_vertical_block(torus_inf_data):
    # gamma = inf: surface-of-revolution fiber metric Q^{-1} dtau^2 + a^{-2} Q dtheta^2;
    # hand-derived symbols: G^t_tt = -psi/Q, G^th_t,th = psi/Q, G^t_thth = -psi Q/a^2.
    data = torus_inf_data
    pts = rand_points(data, 15, seed=10)
    gam = christoffel_closed_form(data, pts)
    q = data.profile.Q(pts[:, 2])
    psi = data.profile.psi(pts[:, 2])
    a = data.a
    assert np.max(np.abs(gam[:, 2, 2, 2] + psi / q)) < 1e-12
    assert np.max(np.abs(gam[:, 3, 2, 3] - psi / q)) < 1e-12
    assert np.max(np.abs(gam[:, 2, 3, 3] + psi * q / a ** 2)) < 1e-12
    # base block reduces to the (flat) surface symbols: all zero
    assert np.max(np.abs(gam[:, :2, :2, :2])) < 1e-12
    # no mixing between fiber and base
    assert np.max(np.abs(gam[:, 2, :2, 2:])) < 1e-12


def test_nabla_vv_is_psi_v_in_closed_form(torus_data):
    # line one of the derivative table is reproduced by the closed-form symbols
    v, _, psi, _ = fields_v_u_psi_phi(torus_data)
    pts = rand_points(torus_data, 20, seed=11)
    gam = christoffel_closed_form(torus_data, pts)
    vv = v.value(pts)
    dv = v.jac(pts)
    nvv = np.einsum("pi,pik->pk", vv, np.swapaxes(dv, 1, 2)) + np.einsum(
        "pkij,pi,pj->pk", gam, vv, vv)
    assert np.max(np.abs(nvv - psi(pts)[:, None] * vv)) < 1e-10


def test_hessian_eigenvalues_are_psi_psi_phi_phi(torus_data):
    m = assemble_metric(torus_data)
    tf = tau_field(torus_data)
    _, _, psi, phi = fields_v_u_psi_phi(torus_data)
    pts = rand_points(torus_data, 12, seed=12)
    hess = geo.hessian(m, tf, pts)
    g = m.value(pts)
    for i in range(12):
        eigs = np.sort(scipy.linalg.eigh(hess[i], g[i])[0])
        expect = np.sort([psi(pts[i:i+1])[0]] * 2 + [phi(pts[i:i+1])[0]] * 2)
        assert np.max(np.abs(eigs - expect)) < 1e-6


def test_geodesic_started_radially_stays_in_fiber(torus_data):
    m = assemble_metric(torus_data)
    p0 = fiber_point(torus_data, (0.3, 0.6), 0.4 * torus_data.maps.lam, theta=1.0)
    res = geo.integrate_geodesic(m, p0, [0.0, 0.0, 1.0, 0.0], length=0.5, n_steps=400)
    assert res.status == "completed"
    drift = np.max(np.abs(res.points[:, [0, 1, 3]] - p0[[0, 1, 3]]))
    assert drift < 1e-8
    assert res.speed_drift < 1e-8


def test_fiberwise_flow_arclength_matches_s(torus_data):
    # gradient flow of tau from tau = 0.05 to tau = 0.95: arclength = s(0.95) - s(0.05)
    m = assemble_metric(torus_data)
    tf = tau_field(torus_data)
    s0 = float(torus_data.maps.s_of_tau(0.05))
    s1 = float(torus_data.maps.s_of_tau(0.95))
    p0 = np.array([0.2, 0.7, 0.05, 0.3])
    path = geo.integrate_gradient_flow(m, tf, p0, target_value=0.95, step=2e-3)
    assert path.status == "target"
    assert abs(path.arclength[-1] - (s1 - s0)) < 1e-4


def test_closed_form_requires_unperturbed(torus_data):
    with pytest.raises(ValueError):
        christoffel_closed_form(torus_data.with_control("perturb-beta"),
                                np.array([[0.1, 0.1, 0.5, 0.0]]))


def test_gamma_inf_metric_is_product_like(torus_inf_data):
    m = assemble_metric(torus_inf_data)
    pts = rand_points(torus_inf_data, 10, seed=13)
    g = m.value(pts)
    h = torus_inf_data.chart_data.chart.h(pts[:, :2])
    assert np.max(np.abs(g[:, :2, :2] - h)) < 1e-14  # beta = 1, A = 0
    assert np.max(np.abs(g[:, :2, 3])) < 1e-14
