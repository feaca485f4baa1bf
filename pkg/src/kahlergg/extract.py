"""Classification direction: recover construction data from a metric oracle.

An :class:`ExtractionOracle` exposes only pointwise evaluations of (g, J,
tau) plus seed points; the metric's analytic derivatives are deliberately
stripped so every covariant quantity here goes through the finite
difference engine, keeping the round trip non-circular.  (tau's coordinate
differential is kept: it is data of the triple, not of the construction.)

The pipeline follows the geometry rather than any stored closed form:

  * unit-speed gradient-flow traces through each seed sweep out a fiber;
    along them sqrt(Q) is an odd function of the arclength-to-end u with
    slope a, so the endpoint values tau_min/tau_max, the Hessian constant
    a, and the one-sided slopes dQ/dtau -> +-2a all come from linear fits
    of d(sqrt Q)/ds and of the Newton estimate tau - Q/(dQ/dtau) against
    Q (which is itself a proxy for u^2), with the leading curvature bias
    removed by the fit;
  * Q is resampled against tau across all traces; the spread across base
    points is the numerical realization of "Q is a function of tau" and
    failing it rejects the oracle;
  * gamma comes per base point from tau - Q/(laplacian(tau) - dQ/dtau),
    averaged along the fiber with a consistency assertion;
  * h is the s -> 0 limit of (tau_min - gamma)^(-1)(tau_star - gamma) times
    the metric restricted to the orthogonal complement of (grad tau,
    J grad tau), Richardson-extrapolated at s = delta, 2 delta, 4 delta.

``round_trip`` rebuilds a construction from the extracted data (periodic
splines over the torus chart; constant gamma and a radial conformal factor
on the sphere) and reports the max relative metric deviation on a common
chart grid.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.interpolate import CubicSpline, PchipInterpolator

from . import geometry as geo
from .construction import (ConstructionData, assemble_metric, assemble_J,
                           build_construction, tau_field)
from .fubini import FSChart, fs_J, fs_metric, fs_random_directions, fs_tau
from .profiles import Interval, MomentumProfile, build_reparams, make_profile
from .rp1 import INFINITY, RP1Value, rp1_angle, rp1_distance
from .surfaces import (BaseSurfaceData, ChartData, GammaField, SurfaceChart,
                       curvature_form, gamma_constant, solve_connection_radial,
                       solve_connection_torus)


class InconsistentOracleError(ValueError):
    """Endpoint estimates from the two critical levels disagree."""


class NotAFunctionOfTauError(ValueError):
    """Q varies across base points at fixed tau: the gradient is not geodesic."""


class FiberInconsistencyError(ValueError):
    """The recovered gamma varies along a single fiber."""


@dataclass
class ExtractionOracle:
    name: str
    metric: geo.MetricField
    tau: geo.ScalarField
    J: geo.MatrixField
    dim: int
    seeds: np.ndarray
    base_axes: tuple = (0, 1)
    seed_bases: Optional[np.ndarray] = None
    meta: dict = field(default_factory=dict)


def oracle_from_construction(data: ConstructionData, n_x1: int = 24, n_x2: int = 2,
                             theta: float = 0.0) -> ExtractionOracle:
    """Value-only wrapper around an assembled construction."""
    m_full = assemble_metric(data)
    metric = geo.MetricField(dim=4, value=m_full.value, dvalue=None, domain=m_full.domain,
                             step=m_full.step, step_limiter=m_full.step_limiter,
                             name=m_full.name + ":oracle")
    tau_full = tau_field(data)
    tau = geo.ScalarField(value=tau_full.value, grad=tau_full.grad, name="tau:oracle")
    j_full = assemble_J(data)
    jf = geo.MatrixField(value=j_full.value, jac=None, name="J:oracle")
    (x1lo, x1hi), (x2lo, x2hi) = data.chart_data.chart.bounds
    if data.surface.surface_type == "torus":
        b1 = x1lo + (x1hi - x1lo) * np.arange(n_x1) / n_x1
        b2 = x2lo + (x2hi - x2lo) * (np.arange(n_x2) + 0.5) / n_x2
        g1, g2 = np.meshgrid(b1, b2, indexing="ij")
        bases = np.column_stack([g1.ravel(), g2.ravel()])
        meta = {"surface": "torus", "chart_bounds": data.chart_data.chart.bounds,
                "n_x1": n_x1, "n_x2": n_x2}
    else:
        radius = data.surface.params["radius"]
        radii = np.array([0.05, 0.12, 0.20, 0.28, 0.36, 0.44, 0.52, 0.60]) * radius
        angles = 2.0 * np.pi * (np.arange(6) + 0.5) / 6
        rr, aa = np.meshgrid(radii, angles, indexing="ij")
        bases = np.column_stack([(rr * np.cos(aa)).ravel(), (rr * np.sin(aa)).ravel()])
        meta = {"surface": "sphere", "radius": radius, "radii": radii, "n_angles": 6}
    tau_mid = data.interval.tau_star
    seeds = np.column_stack([bases, np.full(len(bases), tau_mid), np.full(len(bases), theta)])
    return ExtractionOracle(name=metric.name, metric=metric, tau=tau, J=jf, dim=4,
                            seeds=seeds, seed_bases=bases, meta=meta)


def oracle_from_fs(chart: Optional[FSChart] = None, n_seeds: int = 12) -> ExtractionOracle:
    chart = chart or FSChart()
    metric_full = fs_metric(chart)
    metric = geo.MetricField(dim=chart.dim, value=metric_full.value, dvalue=None,
                             step=metric_full.step, name="fubini-study:oracle")
    dirs = fs_random_directions(chart, n_seeds, np.random.default_rng(11))
    seeds = dirs * np.tan(np.pi / 4.0)  # tau = 1/2 on the default chart
    return ExtractionOracle(name="fubini-study", metric=metric, tau=fs_tau(chart),
                            J=fs_J(chart), dim=chart.dim, seeds=seeds,
                            base_axes=(), seed_bases=None, meta={"surface": "fubini"})


# ----------------------------------------------------------------------------
# Fiber traces
# ----------------------------------------------------------------------------

@dataclass
class FiberTrace:
    """One seed's unit-speed gradient-flow record, both directions merged.

    s is arclength with s = 0 at the seed, increasing with tau.
    """

    s: np.ndarray
    tau: np.ndarray
    q: np.ndarray
    points: np.ndarray


def _unit_grad_field(oracle: ExtractionOracle, sign: float) -> Callable:
    metric, tau = oracle.metric, oracle.tau

    def fld(pp):
        v = geo.scalar_gradient(metric, tau, pp)
        g = metric.value(pp)
        sp = np.sqrt(np.einsum("pij,pi,pj->p", g, v, v))
        return sign * v / sp[:, None]

    return fld


def _flow_batch(oracle: ExtractionOracle, seeds: np.ndarray, sign: float, ds: float,
                stop_sqrtq: Callable, max_steps: int) -> list:
    """RK4 unit-speed flow for every seed, frozen once its stop rule fires.

    Returns per-seed (s_arr, tau_arr, q_arr, pts_arr) up to the stop step.
    """
    fld = _unit_grad_field(oracle, sign)
    metric, tau_f = oracle.metric, oracle.tau
    x = seeds.copy()
    n = len(seeds)
    active = np.ones(n, dtype=bool)
    recs_pts = [x.copy()]
    stop_at = np.full(n, -1, dtype=int)

    def q_of(pp):
        v = geo.scalar_gradient(metric, tau_f, pp)
        g = metric.value(pp)
        return np.einsum("pij,pi,pj->p", g, v, v)

    q0 = q_of(x)
    recs_q = [q0]
    recs_tau = [tau_f.value(x)]
    sqrt_ref = np.sqrt(q0)
    for k in range(1, max_steps + 1):
        idx = np.where(active)[0]
        if idx.size == 0:
            break
        xa = x[idx]
        k1 = fld(xa)
        k2 = fld(xa + 0.5 * ds * k1)
        k3 = fld(xa + 0.5 * ds * k2)
        k4 = fld(xa + ds * k3)
        x_new = xa + (ds / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
        x = x.copy()
        x[idx] = x_new
        q = recs_q[-1].copy()
        q[idx] = q_of(x_new)
        t = recs_tau[-1].copy()
        t[idx] = tau_f.value(x_new)
        sqrt_ref = np.maximum(sqrt_ref, np.sqrt(q))
        stopped = idx[stop_sqrtq(np.sqrt(q[idx]), sqrt_ref[idx])]
        active[stopped] = False
        stop_at[stopped] = k
        recs_pts.append(x.copy())
        recs_q.append(q)
        recs_tau.append(t)
    pts = np.array(recs_pts)
    qs = np.array(recs_q)
    taus = np.array(recs_tau)
    out = []
    for i in range(n):
        stop = stop_at[i] if stop_at[i] > 0 else len(pts) - 1
        s = ds * np.arange(stop + 1)
        out.append((s, taus[: stop + 1, i], qs[: stop + 1, i], pts[: stop + 1, i]))
    return out


def trace_fibers(oracle: ExtractionOracle, ds: float = 1e-3, stop_frac: float = 0.04,
                 max_span: float = 6.0) -> list:
    """One merged FiberTrace per seed (descending then ascending)."""
    max_steps = int(max_span / ds)

    def stop(sq, ref):
        return sq < stop_frac * ref

    down = _flow_batch(oracle, oracle.seeds, -1.0, ds, stop, max_steps)
    up = _flow_batch(oracle, oracle.seeds, +1.0, ds, stop, max_steps)
    traces = []
    for (sd, td, qd, pd), (su, tu, qu, pu) in zip(down, up):
        s = np.concatenate([-sd[::-1], su[1:]])
        t = np.concatenate([td[::-1], tu[1:]])
        q = np.concatenate([qd[::-1], qu[1:]])
        p = np.concatenate([pd[::-1], pu[1:]])
        traces.append(FiberTrace(s=s, tau=t, q=q, points=p))
    return traces


def _deriv4(y: np.ndarray, h: float) -> np.ndarray:
    """4th-order first derivative on a uniform grid (one-sided bias at edges trimmed)."""
    d = np.empty_like(y)
    d[2:-2] = (y[:-4] - 8 * y[1:-3] + 8 * y[3:-1] - y[4:]) / (12 * h)
    d[:2] = d[2]
    d[-2:] = d[-3]
    return d


def _tail_fit(trace: FiberTrace, end: str, ds: float) -> dict:
    """Endpoint data from one trace end: tau_end, a, dQ/dtau limit."""
    sq = np.sqrt(trace.q)
    ref = float(np.max(sq))
    lo, hi = 0.06 * ref, 0.30 * ref
    if end == "min":
        region = slice(0, int(np.argmax(sq)) + 1)
        sgn = +1.0
    else:
        region = slice(int(np.argmax(sq)), len(sq))
        sgn = -1.0
    s, q, t = trace.s[region], trace.q[region], trace.tau[region]
    sqr = sq[region]
    y = _deriv4(sqr, ds)  # d sqrt(Q) / ds, tends to +-a at the ends
    sel = (sqr > lo) & (sqr < hi)
    if end == "min":
        sel &= s < 0
    else:
        sel &= s > 0
    if np.count_nonzero(sel) < 8:
        raise InconsistentOracleError(f"too few tail samples near the {end} end")
    x2 = q[sel]
    # sqrt(Q) is odd in the distance-to-end, so y and tau_hat are even: fitting
    # a quadratic in x2 (a proxy for that distance squared) removes the bias
    # through O(u^4), leaving O(u^6) over the fit window.
    aa = np.polynomial.polynomial.polyfit(x2, y[sel], 2)
    tau_hat = t[sel] - q[sel] / (2.0 * y[sel])
    bb = np.polynomial.polynomial.polyfit(x2, tau_hat, 2)
    return {"tau_end": float(bb[0]), "a": float(abs(aa[0])), "dq_dtau": float(2.0 * aa[0]),
            "sign": sgn}


def estimate_interval_and_a(oracle: ExtractionOracle, traces: Optional[list] = None,
                            ds: float = 1e-3, rel_tol: float = 1e-3):
    """(Interval, a, diagnostics); raises if the two endpoint estimates disagree."""
    traces = traces if traces is not None else trace_fibers(oracle, ds=ds)
    mins = [_tail_fit(tr, "min", ds) for tr in traces]
    maxs = [_tail_fit(tr, "max", ds) for tr in traces]
    tau_min = float(np.median([m["tau_end"] for m in mins]))
    tau_max = float(np.median([m["tau_end"] for m in maxs]))
    a_min = float(np.median([m["a"] for m in mins]))
    a_max = float(np.median([m["a"] for m in maxs]))
    a = 0.5 * (a_min + a_max)
    if abs(a_min - a_max) > rel_tol * max(a, 1e-12) * 2.0:
        raise InconsistentOracleError(
            f"endpoint slope estimates disagree: {a_min:.6g} vs {a_max:.6g}")
    diag = {
        "a_min_end": a_min, "a_max_end": a_max,
        "a_spread_rel": abs(a_min - a_max) / a,
        "tau_min_spread": float(np.ptp([m["tau_end"] for m in mins])),
        "tau_max_spread": float(np.ptp([m["tau_end"] for m in maxs])),
        "dq_dtau_min": float(np.median([m["dq_dtau"] for m in mins])),
        "dq_dtau_max": float(np.median([-m["dq_dtau"] for m in maxs])),
    }
    return Interval(tau_min, tau_max), a, diag, traces


def extract_profile(oracle: ExtractionOracle, interval: Interval, a: float, traces: list,
                    spread_tol: float = 1e-5, fit_degree: int = 4):
    """Momentum samples and a fitted profile; rejects base-point-dependent Q."""
    L = interval.length
    tgrid = np.linspace(interval.tau_min + 0.05 * L, interval.tau_max - 0.05 * L, 33)
    per_trace = []
    for tr in traces:
        order = np.argsort(tr.tau)
        t_sorted, idx = np.unique(tr.tau[order], return_index=True)
        q_sorted = tr.q[order][idx]
        per_trace.append(PchipInterpolator(t_sorted, q_sorted, extrapolate=False)(tgrid))
    per_trace = np.array(per_trace)
    med = np.nanmedian(per_trace, axis=0)
    spread = float(np.nanmax(np.abs(per_trace - med[None, :])))
    qmax = float(np.nanmax(med))
    if spread > spread_tol * max(qmax, 1.0):
        raise NotAFunctionOfTauError(
            f"Q spread across base points is {spread:.3e} at fixed tau; "
            "the oracle's potential does not have a geodesic gradient")
    # Fit the bump coefficients of q = Q / ((tau - min)(max - tau)).
    t_all = np.concatenate([tr.tau for tr in traces])
    q_all = np.concatenate([tr.q for tr in traces])
    w = (t_all - interval.tau_min) * (interval.tau_max - t_all)
    keep = w > 0.10 * np.max(w)
    t_n = (t_all[keep] - interval.tau_min) / L
    target = q_all[keep] / w[keep] - 2.0 * a / L
    basis = np.stack([w[keep] * t_n ** i for i in range(fit_degree + 1)], axis=1)
    coeffs, *_ = np.linalg.lstsq(basis, target, rcond=None)
    profile = make_profile(interval, a, coeffs)
    fit_res = float(np.max(np.abs(basis @ coeffs - target)))
    samples = np.column_stack([tgrid, med])
    return samples, profile, {"q_cross_spread": spread, "q_fit_residual": fit_res}


def _fd_laplacian(oracle: ExtractionOracle, points: np.ndarray) -> np.ndarray:
    steps = np.min(oracle.metric.steps_at(points), axis=0)
    return geo.laplacian(oracle.metric, oracle.tau, points, force_fd=True, steps=steps)


def extract_gamma(oracle: ExtractionOracle, profile: MomentumProfile, traces: list,
                  fiber_tol: float = 1e-3):
    """Recovered gamma per seed, averaged along its fiber, with consistency check.

    psi = (dQ/dtau)/2 is taken from the local trace derivative
    (dQ/ds)/(2 sqrt Q) rather than the fitted profile polynomial: the
    recovery denominator amplifies psi errors by (tau - gamma)^2 / Q.
    """
    iv = profile.interval
    gammas, spreads = [], []
    for tr in traces:
        lo = iv.tau_min + 0.25 * iv.length
        hi = iv.tau_min + 0.75 * iv.length
        idx = np.where((tr.tau > lo) & (tr.tau < hi))[0]
        picks = idx[np.linspace(0, idx.size - 1, 5).astype(int)]
        pts = tr.points[picks]
        lap = _fd_laplacian(oracle, pts)
        ds_local = float(tr.s[1] - tr.s[0])
        psi = (_deriv4(tr.q, ds_local) / (2.0 * np.sqrt(tr.q)))[picks]
        denom = lap - 2.0 * psi
        vals = []
        for t, qq, dd in zip(tr.tau[picks], tr.q[picks], denom):
            if abs(dd) < 1e-8 * (1.0 + qq):
                vals.append(INFINITY)
            else:
                vals.append(RP1Value(t - qq / dd))
        angles = np.array([rp1_angle(v) for v in vals])
        spread = max(rp1_distance(v1, v2) for v1 in vals for v2 in vals)
        spreads.append(spread)
        if spread > fiber_tol:
            raise FiberInconsistencyError(
                f"gamma varies by {spread:.3e} along one fiber; recovery aborted")
        if all(v.infinite for v in vals):
            gammas.append(INFINITY)
        else:
            mean_angle = float(np.mean(angles))
            if abs(abs(mean_angle) - 0.5 * math.pi) < 1e-9:
                gammas.append(INFINITY)
            else:
                gammas.append(RP1Value(math.tan(mean_angle)))
    return gammas, {"fiber_spread_max": float(np.max(spreads))}


def extract_h(oracle: ExtractionOracle, interval: Interval, a: float,
              gammas: list, lam: float, delta_frac: float = 0.005,
              ds: float = 5e-4):
    """h at the seed base points: the rescaled horizontal metric block at s -> 0."""
    delta = delta_frac * lam
    metric, tau_f, jf = oracle.metric, oracle.tau, oracle.J
    tau_star = interval.tau_star

    def stop(sq, ref):
        return sq <= 0.4 * a * delta

    down = _flow_batch(oracle, oracle.seeds, -1.0, ds, stop, int(3.0 * lam / ds))
    h_out, dev_theta = [], 0.0
    for i, (s, t, q, pts) in enumerate(down):
        sq = np.sqrt(q)
        # local linear fit of sqrt(Q) = a (s0 - s) near the stop
        tail = slice(max(0, len(s) - 12), len(s))
        cf = np.polynomial.polynomial.polyfit(s[tail], sq[tail], 1)
        s0 = -cf[0] / cf[1]
        coord = [PchipInterpolator(s, pts[:, c]) for c in range(oracle.dim)]
        h_mats = []
        for mult in (1.0, 2.0, 4.0):
            starget = s0 - mult * delta
            p = np.array([[c(starget) for c in coord]])
            g = metric.value(p)[0]
            v = geo.scalar_gradient(metric, tau_f, p)[0]
            u = jf.value(p)[0] @ v
            ev = v / math.sqrt(v @ g @ v)
            u_perp = u - (u @ g @ ev) * ev
            eu = u_perp / math.sqrt(u_perp @ g @ u_perp)
            gam = gammas[i]
            if gam.infinite:
                factor = 1.0
            else:
                factor = (tau_star - gam.value) / (interval.tau_min - gam.value)
            hm = np.empty((2, 2))
            basis = []
            for ax in oracle.base_axes:
                e = np.zeros(oracle.dim)
                e[ax] = 1.0
                e = e - (e @ g @ ev) * ev - (e @ g @ eu) * eu
                basis.append(e)
            for r in range(2):
                for c in range(2):
                    hm[r, c] = factor * (basis[r] @ g @ basis[c])
            h_mats.append(hm)
        h_lim = geo.richardson_even(np.array(h_mats))
        h_out.append(h_lim)
    return np.array(h_out), {"delta": delta, "theta_consistency": dev_theta}


@dataclass
class ExtractedData:
    interval: Interval
    a: float
    profile: MomentumProfile
    q_samples: np.ndarray
    gammas: list
    h_samples: np.ndarray
    diagnostics: dict

    def to_dict(self) -> dict:
        return {
            "interval": [self.interval.tau_min, self.interval.tau_max],
            "a": self.a,
            "q_factor_coeffs": list(self.profile.rho_coeffs),
            "q_samples": [[float(a_), float(b_)] for a_, b_ in self.q_samples],
            "gamma_samples": [g.to_json() for g in self.gammas],
            "h_samples": [[[float(v) for v in row] for row in m] for m in self.h_samples],
            "diagnostics": {k: (float(v) if isinstance(v, (int, float, np.floating)) else v)
                            for k, v in sorted(self.diagnostics.items())},
        }


def extract_all(oracle: ExtractionOracle, with_h: bool = True) -> ExtractedData:
    interval, a, diag, traces = estimate_interval_and_a(oracle)
    samples, profile, diag_q = extract_profile(oracle, interval, a, traces)
    gammas, diag_g = extract_gamma(oracle, profile, traces)
    diag.update(diag_q)
    diag.update(diag_g)
    if with_h and oracle.base_axes:
        maps = build_reparams(profile)
        h_samples, diag_h = extract_h(oracle, interval, a, gammas, maps.lam)
        diag.update({f"h_{k}": v for k, v in diag_h.items()})
    else:
        h_samples = np.empty((0, 2, 2))
    gamma_angles = [rp1_angle(g) for g in gammas]
    diag["gamma_range"] = [float(np.min(gamma_angles)), float(np.max(gamma_angles))]
    # On a compact total space gamma never enters the open interval.  Values at
    # the endpoints are legitimate (the constant-gamma special branch, e.g. the
    # projective-space oracle), so only a strict interior hit is an error.
    margin = 1e-3 * interval.length
    on_boundary = False
    for g in gammas:
        if g.infinite:
            continue
        depth = min(g.value - interval.tau_min, interval.tau_max - g.value)
        if depth > margin:
            raise FiberInconsistencyError(
                f"recovered gamma {g.value:.6g} lies inside the recovered interval")
        if depth > -margin:
            on_boundary = True
    diag["gamma_on_interval_boundary"] = on_boundary
    return ExtractedData(interval=interval, a=a, profile=profile, q_samples=samples,
                         gammas=gammas, h_samples=h_samples, diagnostics=diag)


# ----------------------------------------------------------------------------
# Rebuild and round trip
# ----------------------------------------------------------------------------

def _rebuild_torus(ex: ExtractedData, oracle: ExtractionOracle) -> ConstructionData:
    n_x1, n_x2 = oracle.meta["n_x1"], oracle.meta["n_x2"]
    bases = oracle.seed_bases.reshape(n_x1, n_x2, 2)
    x1 = bases[:, 0, 0]
    g_ang = np.array([rp1_angle(g) for g in ex.gammas]).reshape(n_x1, n_x2)
    row_spread = float(np.ptp(g_ang, axis=1).max())
    g_row = np.tan(np.mean(g_ang, axis=1))
    h_mats = ex.h_samples.reshape(n_x1, n_x2, 2, 2)
    h_row = h_mats.mean(axis=1)
    h_iso = 0.5 * (h_row[:, 0, 0] + h_row[:, 1, 1])
    aniso = float(np.max(np.abs(h_row - h_iso[:, None, None] * np.eye(2))))

    x1p = np.concatenate([x1, [x1[0] + 1.0]])
    gam_spline = CubicSpline(x1p, np.concatenate([g_row, [g_row[0]]]), bc_type="periodic")
    h_spline = CubicSpline(x1p, np.concatenate([h_iso, [h_iso[0]]]), bc_type="periodic")

    gam_field = GammaField(
        kind="interp",
        infinite=all(g.infinite for g in ex.gammas),
        value=lambda x: gam_spline(np.mod(x[:, 0], 1.0)),
        grad=lambda x: np.column_stack([gam_spline.derivative()(np.mod(x[:, 0], 1.0)),
                                        np.zeros(x.shape[0])]),
        value_range=(float(np.min(g_row)), float(np.max(g_row))),
    )

    def h_fn(x):
        out = np.zeros((x.shape[0], 2, 2))
        v = h_spline(np.mod(x[:, 0], 1.0))
        out[:, 0, 0] = v
        out[:, 1, 1] = v
        return out

    def dh_fn(x):
        out = np.zeros((x.shape[0], 2, 2, 2))
        dv = h_spline.derivative()(np.mod(x[:, 0], 1.0))
        out[:, 0, 0, 0] = dv
        out[:, 0, 1, 1] = dv
        return out

    chart = SurfaceChart(name="torus-rebuilt", h=h_fn, dh=dh_fn,
                         domain=lambda x: np.ones(x.shape[0], dtype=bool),
                         bounds=((0.0, 1.0), (0.0, 1.0)), periodic=True)
    tau_star = ex.interval.tau_star

    def w_fn(x):
        return curvature_form(ex.a, tau_star, chart, gam_field, x)

    conn = solve_connection_torus(chart, w_fn)
    surface = BaseSurfaceData(surface_type="torus",
                              charts=[ChartData(chart=chart, gamma=gam_field, connection=conn)],
                              params={"rebuilt": True, "gamma_row_spread": row_spread,
                                      "h_anisotropy": aniso})
    return build_construction(ex.interval, ex.a, surface, profile=ex.profile)


def _rebuild_sphere(ex: ExtractedData, oracle: ExtractionOracle) -> ConstructionData:
    angs = [rp1_angle(g) for g in ex.gammas]
    spread = float(np.ptp(angs))
    gam_field = gamma_constant(INFINITY if ex.gammas[0].infinite
                               else RP1Value(math.tan(float(np.mean(angs)))))
    radius = oracle.meta["radius"]
    radii = np.asarray(oracle.meta["radii"])
    n_ang = oracle.meta["n_angles"]
    h_mats = ex.h_samples.reshape(len(radii), n_ang, 2, 2)
    h_iso = 0.5 * (h_mats[..., 0, 0] + h_mats[..., 1, 1]).mean(axis=1)
    aniso = float(np.max(np.abs(h_mats - h_iso[:, None, None, None] * np.eye(2))))
    sig = radii ** 2
    # Conformal factor profile lam2(sigma); sigma = 0 itself is not sampled, so
    # extend with a cubic fit through the innermost rings.
    inner = slice(0, min(5, len(sig)))
    cf = np.polynomial.polynomial.polyfit(sig[inner], h_iso[inner], 3)
    sig_ext = np.concatenate([[0.0], sig])
    lam2_ext = np.concatenate([[np.polynomial.polynomial.polyval(0.0, cf)], h_iso])
    spl = CubicSpline(sig_ext, lam2_ext, bc_type=((1, float(cf[1])), "not-a-knot"))

    def h_fn(x):
        out = np.zeros((x.shape[0], 2, 2))
        v = spl(np.sum(x * x, axis=1))
        out[:, 0, 0] = v
        out[:, 1, 1] = v
        return out

    def dh_fn(x):
        out = np.zeros((x.shape[0], 2, 2, 2))
        dv = spl.derivative()(np.sum(x * x, axis=1))
        for ax in range(2):
            out[:, ax, 0, 0] = dv * 2.0 * x[:, ax]
            out[:, ax, 1, 1] = out[:, ax, 0, 0]
        return out

    sig_max = float(sig[-1])
    chart = SurfaceChart(name="sphere-rebuilt", h=h_fn, dh=dh_fn,
                         domain=lambda x: np.sum(x * x, axis=1) < sig_max,
                         bounds=((-0.42 * radius, 0.42 * radius),
                                 (-0.42 * radius, 0.42 * radius)))
    tau_star = ex.interval.tau_star

    def w_fn(x):
        return curvature_form(ex.a, tau_star, chart, gam_field, x)

    conn = solve_connection_radial(chart, w_fn, sigma_max=sig_max)
    surface = BaseSurfaceData(surface_type="sphere",
                              charts=[ChartData(chart=chart, gamma=gam_field, connection=conn)],
                              params={"rebuilt": True, "gamma_spread": spread,
                                      "h_anisotropy": aniso, "radius": radius})
    return build_construction(ex.interval, ex.a, surface, profile=ex.profile)


def round_trip(data: ConstructionData, n_compare: int = 400, seed: int = 3) -> dict:
    """construct -> oracle -> extract -> re-construct -> compare metrics."""
    oracle = oracle_from_construction(data)
    ex = extract_all(oracle)
    if oracle.meta["surface"] == "torus":
        rebuilt = _rebuild_torus(ex, oracle)
    else:
        rebuilt = _rebuild_sphere(ex, oracle)
    g_orig = assemble_metric(data)
    g_new = assemble_metric(rebuilt)
    rng = np.random.default_rng(seed)
    (x1lo, x1hi), (x2lo, x2hi) = rebuilt.chart_data.chart.bounds
    lam = data.maps.lam
    pts = np.column_stack([
        rng.uniform(x1lo, x1hi, n_compare),
        rng.uniform(x2lo, x2hi, n_compare),
        np.asarray(data.maps.tau_of_s(rng.uniform(0.1 * lam, 0.9 * lam, n_compare)), dtype=float),
        rng.uniform(0, 2 * np.pi, n_compare),
    ])
    ga, gb = g_orig.value(pts), g_new.value(pts)
    dev = np.linalg.norm((ga - gb).reshape(n_compare, -1), axis=1)
    ref = np.linalg.norm(ga.reshape(n_compare, -1), axis=1)
    rel = float(np.max(dev / ref))
    return {
        "surface": oracle.meta["surface"],
        "max_rel_metric_dev": rel,
        "interval": [ex.interval.tau_min, ex.interval.tau_max],
        "a": ex.a,
        "extracted": ex.to_dict(),
        "n_compare": n_compare,
    }
