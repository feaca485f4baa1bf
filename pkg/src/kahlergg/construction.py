"""The total-space Kahler metric on a punctured line bundle, in coordinates.

Chart coordinates are q = (x1, x2, tau, theta): (x1, x2) ranges over a base
chart of (Sigma, h), tau over the open profile interval, and theta over the
fiber angle of the unit-frame trivialization xi = r(tau) e^(i theta).
Substituting dr/dtau = a r / Q into the fiber metric removes r from every
runtime formula and gives the block form

    g = beta * h + Q^(-1) dtau^2 + a^(-2) Q (dtheta - A)^2,

with beta = (tau - gamma)/(tau_star - gamma) (beta = 1 where gamma = inf)
and A the chart connection potential with dA = Omega.

Orientation note: theta rotates so that u = a d_theta = J(grad tau).  With
that choice the horizontal distribution is ker(dtau) n ker(dtheta - A) and
the horizontal lift of w is w + A(w) d_theta; the vertical part of a bracket
of lifts is then +dA(w,w') d_theta, which is what makes the prescribed
curvature sign close up with the Kahler condition (the torsion check in the
closed-form Christoffels cancels exactly iff dA = Omega).

Two independent routes to the Levi-Civita connection are exposed: the
assembled metric field (with exact analytic derivatives, differentiable by
the generic engine), and ``christoffel_closed_form``, reconstructed from
the covariant-derivative table of the construction (radial/angular fields
are eigenfields of nabla v; horizontal covariant derivatives reduce to the
base ones plus phi- and D(gamma)-corrections).  Their agreement at random
points is the main oracle-equivalence gate of the test suite.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .geometry import MatrixField, MetricField, ScalarField, VectorField
from .profiles import Interval, MomentumProfile, ReparamMaps, build_reparams, make_profile
from .surfaces import BaseSurfaceData, ChartData

CONTROLS = ("none", "perturb-beta", "perturb-j", "break-symmetry")


@dataclass
class ConstructionData:
    interval: Interval
    a: float
    profile: MomentumProfile
    maps: ReparamMaps
    surface: BaseSurfaceData
    chart_index: int = 0
    control: str = "none"

    def __post_init__(self) -> None:
        if self.control not in CONTROLS:
            raise ValueError(f"unknown control '{self.control}'")

    @property
    def chart_data(self) -> ChartData:
        return self.surface.charts[self.chart_index]

    @property
    def tau_star(self) -> float:
        return self.interval.tau_star

    def with_chart(self, index: int) -> "ConstructionData":
        return ConstructionData(self.interval, self.a, self.profile, self.maps,
                                self.surface, chart_index=index, control=self.control)

    def with_control(self, control: str) -> "ConstructionData":
        return ConstructionData(self.interval, self.a, self.profile, self.maps,
                                self.surface, chart_index=self.chart_index, control=control)

    def with_connection(self, connection) -> "ConstructionData":
        cd = self.chart_data
        charts = list(self.surface.charts)
        charts[self.chart_index] = ChartData(chart=cd.chart, gamma=cd.gamma, connection=connection)
        surface = BaseSurfaceData(self.surface.surface_type, charts, self.surface.params,
                                  self.surface.chern, self.surface.chern_deviation)
        return ConstructionData(self.interval, self.a, self.profile, self.maps,
                                surface, chart_index=self.chart_index, control=self.control)


def _beta(data: ConstructionData, x: np.ndarray, tau: np.ndarray):
    """beta and its (d_x1, d_x2, d_tau) derivatives; beta = 1 where gamma = inf."""
    gamma = data.chart_data.gamma
    n = x.shape[0]
    if gamma.infinite:
        return np.ones(n), np.zeros((n, 2)), np.zeros(n)
    g = gamma.value(x)
    dg = gamma.grad(x)
    ts = data.tau_star
    beta = (tau - g) / (ts - g)
    dbeta_dg = (tau - ts) / (ts - g) ** 2
    dbeta_dx = dbeta_dg[:, None] * dg
    dbeta_dtau = 1.0 / (ts - g)
    return beta, dbeta_dx, dbeta_dtau


def _inv_tau_minus_gamma(data: ConstructionData, x: np.ndarray, tau: np.ndarray) -> np.ndarray:
    gamma = data.chart_data.gamma
    if gamma.infinite:
        return np.zeros(x.shape[0])
    return 1.0 / (tau - gamma.value(x))


_BREAK_AMP = 0.1


def assemble_metric(data: ConstructionData) -> MetricField:
    """The coordinate metric with exact analytic first derivatives."""
    prof, a = data.profile, data.a
    iv = data.interval
    cd = data.chart_data
    control = data.control

    def value(P: np.ndarray) -> np.ndarray:
        P = np.asarray(P, dtype=float)
        x, tau = P[:, :2], P[:, 2]
        n = P.shape[0]
        h = cd.chart.h(x)
        A = cd.connection.A(x)
        Q = prof.Q(tau)
        beta, _, _ = _beta(data, x, tau)
        if control == "perturb-beta":
            beta = beta ** 1.01
        B = Q / a ** 2
        g = np.zeros((n, 4, 4))
        g[:, :2, :2] = beta[:, None, None] * h + B[:, None, None] * A[:, :, None] * A[:, None, :]
        g[:, :2, 3] = -B[:, None] * A
        g[:, 3, :2] = g[:, :2, 3]
        g[:, 3, 3] = B
        gtt = 1.0 / Q
        if control == "break-symmetry":
            gtt = gtt * (1.0 + _BREAK_AMP * np.sin(2.0 * np.pi * x[:, 0]) * np.sin(P[:, 3]))
        g[:, 2, 2] = gtt
        return g

    def dvalue(P: np.ndarray) -> np.ndarray:
        P = np.asarray(P, dtype=float)
        x, tau = P[:, :2], P[:, 2]
        n = P.shape[0]
        h = cd.chart.h(x)
        dh = cd.chart.dh(x)
        A = cd.connection.A(x)
        dA = cd.connection.dA(x)
        Q = prof.Q(tau)
        dQ = prof.dQ(tau)
        beta, dbeta_dx, dbeta_dtau = _beta(data, x, tau)
        if control == "perturb-beta":
            fac = 1.01 * beta ** 0.01
            dbeta_dx = fac[:, None] * dbeta_dx
            dbeta_dtau = fac * dbeta_dtau
            beta = beta ** 1.01
        B = Q / a ** 2
        dB = dQ / a ** 2
        out = np.zeros((n, 4, 4, 4))
        for ax in range(2):
            blk = (dbeta_dx[:, ax, None, None] * h + beta[:, None, None] * dh[:, ax]
                   + B[:, None, None] * (dA[:, ax, :, None] * A[:, None, :]
                                         + A[:, :, None] * dA[:, ax, None, :]))
            out[:, ax, :2, :2] = blk
            out[:, ax, :2, 3] = -B[:, None] * dA[:, ax]
            out[:, ax, 3, :2] = out[:, ax, :2, 3]
        out[:, 2, :2, :2] = (dbeta_dtau[:, None, None] * h
                             + dB[:, None, None] * A[:, :, None] * A[:, None, :])
        out[:, 2, :2, 3] = -dB[:, None] * A
        out[:, 2, 3, :2] = out[:, 2, :2, 3]
        out[:, 2, 3, 3] = dB
        out[:, 2, 2, 2] = -dQ / Q ** 2
        if control == "break-symmetry":
            s1 = np.sin(2.0 * np.pi * x[:, 0])
            c1 = np.cos(2.0 * np.pi * x[:, 0])
            st, ct = np.sin(P[:, 3]), np.cos(P[:, 3])
            out[:, 0, 2, 2] = (1.0 / Q) * _BREAK_AMP * 2.0 * np.pi * c1 * st
            out[:, 2, 2, 2] = (-dQ / Q ** 2) * (1.0 + _BREAK_AMP * s1 * st)
            out[:, 3, 2, 2] = (1.0 / Q) * _BREAK_AMP * s1 * ct
        return out

    def domain(P: np.ndarray) -> np.ndarray:
        P = np.asarray(P, dtype=float)
        return iv.contains(P[:, 2], closed=False) & cd.chart.domain(P[:, :2])

    def step_limiter(P: np.ndarray) -> np.ndarray:
        P = np.asarray(P, dtype=float)
        n = P.shape[0]
        h = np.full((n, 4), np.inf)
        gap = np.minimum(P[:, 2] - iv.tau_min, iv.tau_max - P[:, 2])
        h[:, 2] = 0.2 * gap
        return h

    return MetricField(dim=4, value=value, dvalue=dvalue, domain=domain,
                       step=np.array([1.5e-3, 1.5e-3, 3e-4, 1e-2]),
                       step_limiter=step_limiter,
                       name=f"construction[{data.surface.surface_type}:{cd.chart.name}]"
                            + ("" if control == "none" else f"+{control}"))


def assemble_J(data: ConstructionData) -> MatrixField:
    """Fiber rotation plus the lifted base complex structure, with analytic dJ."""
    prof, a = data.profile, data.a
    cd = data.chart_data
    sign = -1.0 if data.control == "perturb-j" else 1.0

    def value(P: np.ndarray) -> np.ndarray:
        P = np.asarray(P, dtype=float)
        x, tau = P[:, :2], P[:, 2]
        n = P.shape[0]
        js = sign * cd.chart.complex_structure(x)
        A = cd.connection.A(x)
        Q = prof.Q(tau)
        J = np.zeros((n, 4, 4))
        J[:, :2, :2] = js
        J[:, 2, :2] = (Q / a)[:, None] * A
        J[:, 3, :2] = np.einsum("pk,pki->pi", A, js)
        J[:, 3, 2] = a / Q
        J[:, 2, 3] = -Q / a
        return J

    def jac(P: np.ndarray) -> np.ndarray:
        P = np.asarray(P, dtype=float)
        x, tau = P[:, :2], P[:, 2]
        n = P.shape[0]
        h = cd.chart.h(x)
        dh = cd.chart.dh(x)
        hinv = np.linalg.inv(h)
        js = sign * cd.chart.complex_structure(x)
        A = cd.connection.A(x)
        dA = cd.connection.dA(x)
        Q = prof.Q(tau)
        dQ = prof.dQ(tau)
        out = np.zeros((n, 4, 4, 4))
        # d_a J_Sigma = -h^(-1) (d_a h) J_Sigma + (1/2) tr(h^(-1) d_a h) J_Sigma
        for ax in range(2):
            tr = np.einsum("pij,pji->p", hinv, dh[:, ax])
            djs = (-np.einsum("pkl,plm,pmj->pkj", hinv, dh[:, ax], js)
                   + 0.5 * tr[:, None, None] * js)
            out[:, ax, :2, :2] = djs
            out[:, ax, 2, :2] = (Q / a)[:, None] * dA[:, ax]
            out[:, ax, 3, :2] = (np.einsum("pk,pki->pi", dA[:, ax], js)
                                 + np.einsum("pk,pki->pi", A, djs))
        out[:, 2, 2, :2] = (dQ / a)[:, None] * A
        out[:, 2, 3, 2] = -a * dQ / Q ** 2
        out[:, 2, 2, 3] = -dQ / a
        return out

    return MatrixField(value=value, jac=jac, name="J" + ("" if sign > 0 else "-flipped"))


def tau_field(data: ConstructionData) -> ScalarField:
    def value(P):
        return np.asarray(P, dtype=float)[:, 2]

    def grad(P):
        P = np.asarray(P, dtype=float)
        out = np.zeros((P.shape[0], 4))
        out[:, 2] = 1.0
        return out

    return ScalarField(value=value, grad=grad, name="tau")


def fields_v_u_psi_phi(data: ConstructionData):
    """(v, u, psi, phi): gradient field, Killing field, and the two eigenvalues."""
    prof, a = data.profile, data.a

    def v_value(P):
        P = np.asarray(P, dtype=float)
        out = np.zeros((P.shape[0], 4))
        out[:, 2] = prof.Q(P[:, 2])
        return out

    def v_jac(P):
        P = np.asarray(P, dtype=float)
        out = np.zeros((P.shape[0], 4, 4))
        out[:, 2, 2] = prof.dQ(P[:, 2])
        return out

    def u_value(P):
        P = np.asarray(P, dtype=float)
        out = np.zeros((P.shape[0], 4))
        out[:, 3] = a
        return out

    def u_jac(P):
        P = np.asarray(P, dtype=float)
        return np.zeros((P.shape[0], 4, 4))

    def psi(P):
        return prof.psi(np.asarray(P, dtype=float)[:, 2])

    def phi(P):
        P = np.asarray(P, dtype=float)
        return 0.5 * prof.Q(P[:, 2]) * _inv_tau_minus_gamma(data, P[:, :2], P[:, 2])

    v = VectorField(value=v_value, jac=v_jac, name="v")
    u = VectorField(value=u_value, jac=u_jac, name="u")
    return v, u, psi, phi


def gamma_of_points(data: ConstructionData, P: np.ndarray) -> list:
    """Input gamma (as RP1 values) at the base points under the given chart points."""
    return data.chart_data.gamma.rp1_at(np.asarray(P, dtype=float)[:, :2])


def christoffel_closed_form(data: ConstructionData, P: np.ndarray) -> np.ndarray:
    """Levi-Civita symbols reconstructed from the covariant-derivative table.

    Independent of assemble_metric: only the base geometry (h, its
    Christoffels, J_Sigma), the potential A, gamma, and the profile enter.
    """
    if data.control != "none":
        raise ValueError("closed-form Christoffels describe the unperturbed construction")
    P = np.asarray(P, dtype=float)
    x, tau = P[:, :2], P[:, 2]
    n = P.shape[0]
    prof, a = data.profile, data.a
    cd = data.chart_data
    iv = data.interval

    Q = prof.Q(tau)
    if np.any(Q <= 0):
        raise ValueError("closed-form Christoffels need interior points (Q > 0)")
    psi = prof.psi(tau)
    inv_tg = _inv_tau_minus_gamma(data, x, tau)
    phi = 0.5 * Q * inv_tg
    beta, _, _ = _beta(data, x, tau)

    h = cd.chart.h(x)
    dh = cd.chart.dh(x)
    hinv = np.linalg.inv(h)
    t = dh + np.swapaxes(dh, 1, 2) - dh.transpose(0, 2, 3, 1)
    gamma_h = 0.5 * np.einsum("pkl,pijl->pkij", hinv, t)
    js = cd.chart.complex_structure(x)
    w_area = cd.chart.area_form(x)
    omega = np.zeros((n, 2, 2))
    omega[:, 0, 1] = w_area
    omega[:, 1, 0] = -w_area

    A = cd.connection.A(x)
    dA = cd.connection.dA(x)

    gam = data.chart_data.gamma
    if gam.infinite:
        dgam = np.zeros((n, 2))
        cphi_over_q = np.zeros(n)
    else:
        dgam = gam.grad(x)
        gv = gam.value(x)
        cphi_over_q = (tau - iv.tau_star) / (2.0 * (tau - gv) * (iv.tau_star - gv))
    dgam_up = np.einsum("pkl,pl->pk", hinv, dgam)

    # Effective base-block symbols with the D(gamma) correction.
    eye = np.eye(2)
    ghat = gamma_h + cphi_over_q[:, None, None, None] * (
        dgam[:, None, :, None] * eye[None, :, None, :]
        + dgam[:, None, None, :] * eye[None, :, :, None]
        - h[:, None, :, :] * dgam_up[:, :, None, None])

    G = np.zeros((n, 4, 4, 4))
    # Vertical block.
    G[:, 2, 2, 2] = -psi / Q
    G[:, 3, 2, 3] = G[:, 3, 3, 2] = psi / Q
    G[:, 2, 3, 3] = -psi * Q / a ** 2
    # tau-base mixed.
    for i in range(2):
        G[:, i, 2, i] = G[:, i, i, 2] = phi / Q
        G[:, 3, 2, i] = G[:, 3, i, 2] = (phi - psi) * A[:, i] / Q
    # theta-base mixed.
    aj = np.einsum("pk,pki->pi", A, js)  # (A . J_Sigma)_i
    for i in range(2):
        for k in range(2):
            G[:, k, 3, i] = G[:, k, i, 3] = (phi / a) * js[:, k, i]
        G[:, 2, 3, i] = G[:, 2, i, 3] = psi * Q * A[:, i] / a ** 2
        G[:, 3, 3, i] = G[:, 3, i, 3] = (phi / a) * aj[:, i]
    # Base-base.
    cross = np.einsum("pj,pki->pkij", A, js)  # cross[p,k,i,j] = A_j J_Sigma^k_i
    G[:, :2, :2, :2] = (ghat
                        - (phi / a)[:, None, None, None] * (cross + np.swapaxes(cross, 2, 3)))
    G[:, 2, :2, :2] = (-(phi * beta)[:, None, None] * h
                       - (psi * Q / a ** 2)[:, None, None] * A[:, :, None] * A[:, None, :])
    theta_ij = (np.einsum("pkij,pk->pij", ghat, A)
                - (a * phi * beta / Q)[:, None, None] * omega
                - dA[:, :2, :2]
                - (phi / a)[:, None, None] * np.einsum("pkij,pk->pij",
                                                       cross + np.swapaxes(cross, 2, 3), A))
    G[:, 3, :2, :2] = theta_ij
    return G


def fiber_point(data: ConstructionData, base_xy, s: float, theta: float = 0.0) -> np.ndarray:
    tau = float(data.maps.tau_of_s(s))
    return np.array([base_xy[0], base_xy[1], tau, theta])


def build_construction(interval: Interval, a: float, surface: BaseSurfaceData,
                       profile: Optional[MomentumProfile] = None,
                       q_interior=(), chart_index: int = 0,
                       control: str = "none") -> ConstructionData:
    if profile is None:
        profile = make_profile(interval, a, q_interior)
    maps = build_reparams(profile)
    return ConstructionData(interval=interval, a=a, profile=profile, maps=maps,
                            surface=surface, chart_index=chart_index, control=control)
