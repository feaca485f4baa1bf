"""Chart-local numerical Riemannian calculus over arbitrary metric fields.

Everything here is batch-first: points are arrays of shape (N, n), metric
evaluators return (N, n, n), and finite-difference stencils are evaluated
for all points and axes in one call.  Index conventions used throughout:

    dg[p, a, i, j]   = d_a g_ij
    Gamma[p, k, i, j] = Christoffel symbol with upper index k
    gradX[p, k, i]   = (nabla X)^k_i = d_i X^k + Gamma^k_il X^l

Derivatives use 4th-order central stencils.  Steps may vary per point and
per axis; metric fields can install a limiter so stencils never cross a
domain boundary (the fiber coordinate of the constructed metrics lives on
an open interval).  Analytic first derivatives are used whenever a field
carries them; ``force_fd`` switches the Christoffel computation to pure
finite differences where an independent route is required.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np


class BoundaryError(ValueError):
    """A finite-difference stencil would leave the field's domain."""


class NumericalFailure(RuntimeError):
    """An integrator or solver failed to converge."""


_OFFSETS4 = np.array([-2.0, -1.0, 1.0, 2.0])
_WEIGHTS4 = np.array([1.0, -8.0, 8.0, -1.0]) / 12.0

DEFAULT_STEP = 5e-3


@dataclass
class MetricField:
    """A metric given by a pointwise evaluator, with optional analytic d(g)."""

    dim: int
    value: Callable[[np.ndarray], np.ndarray]
    dvalue: Optional[Callable[[np.ndarray], np.ndarray]] = None
    domain: Optional[Callable[[np.ndarray], np.ndarray]] = None
    step: "float | np.ndarray" = DEFAULT_STEP
    step_limiter: Optional[Callable[[np.ndarray], np.ndarray]] = None
    name: str = ""

    def steps_at(self, points: np.ndarray) -> np.ndarray:
        h = np.broadcast_to(np.asarray(self.step, dtype=float), (points.shape[0], self.dim)).copy()
        if self.step_limiter is not None:
            h = np.minimum(h, self.step_limiter(points))
        return h

    def check_domain(self, points: np.ndarray) -> None:
        if self.domain is not None and not bool(np.all(self.domain(points))):
            raise BoundaryError(f"points outside the domain of metric '{self.name}'")


@dataclass
class ScalarField:
    value: Callable[[np.ndarray], np.ndarray]
    grad: Optional[Callable[[np.ndarray], np.ndarray]] = None
    name: str = ""


@dataclass
class VectorField:
    value: Callable[[np.ndarray], np.ndarray]
    jac: Optional[Callable[[np.ndarray], np.ndarray]] = None  # (N, a, k) = d_a X^k
    name: str = ""


@dataclass
class MatrixField:
    """A (1,1)-tensor field, e.g. an almost-complex structure J."""

    value: Callable[[np.ndarray], np.ndarray]
    jac: Optional[Callable[[np.ndarray], np.ndarray]] = None  # (N, a, k, j) = d_a J^k_j
    name: str = ""


def fd_jet(f: Callable, points: np.ndarray, steps) -> np.ndarray:
    """All first partials of f at each point: output (N, axis, *value_shape).

    f maps (M, n) -> (M, *value_shape); steps broadcastable to (N, n).
    """
    points = np.asarray(points, dtype=float)
    npts, n = points.shape
    h = np.broadcast_to(np.asarray(steps, dtype=float), (npts, n))
    stencil = np.repeat(points[None, None], 4, axis=1)
    stencil = np.repeat(stencil, n, axis=0).copy()  # (n, 4, N, n)
    for axis in range(n):
        for o, off in enumerate(_OFFSETS4):
            stencil[axis, o, :, axis] += off * h[:, axis]
    vals = np.asarray(f(stencil.reshape(4 * n * npts, n)))
    vals = vals.reshape((n, 4, npts) + vals.shape[1:])
    deriv = np.einsum("o,aop...->ap...", _WEIGHTS4, vals)
    deriv /= h.T.reshape((n, npts) + (1,) * (deriv.ndim - 2))
    return np.moveaxis(deriv, 0, 1)


def fd_hessian_scalar(f: Callable, points: np.ndarray, steps) -> np.ndarray:
    """Nested 4th-order stencil Hessian of a scalar evaluator, symmetrized.

    Steps must be a scalar or per-axis (n,): the inner stencil is re-applied
    at shifted points, so per-point steps would not line up.
    """
    inner = np.asarray(steps, dtype=float)
    if inner.ndim not in (0, 1):
        raise ValueError("nested Hessian stencils need scalar or per-axis steps")

    def jet(pp):
        return fd_jet(f, pp, inner)

    hess = fd_jet(jet, points, inner)  # (N, a, b)
    return 0.5 * (hess + np.swapaxes(hess, 1, 2))


def metric_dvalue(metric: MetricField, points: np.ndarray, force_fd: bool = False,
                  steps=None) -> np.ndarray:
    if metric.dvalue is not None and not force_fd:
        return metric.dvalue(points)
    h = metric.steps_at(points) if steps is None else steps
    return fd_jet(metric.value, points, h)


def dvalue_residual(metric: MetricField, points: np.ndarray) -> float:
    """Max deviation between analytic and finite-difference metric derivatives."""
    if metric.dvalue is None:
        return 0.0
    ana = metric.dvalue(points)
    num = fd_jet(metric.value, points, metric.steps_at(points))
    return float(np.max(np.abs(ana - num)))


def christoffel(metric: MetricField, points: np.ndarray, force_fd: bool = False,
                steps=None) -> np.ndarray:
    """Levi-Civita symbols Gamma[p,k,i,j] from g and its (analytic or FD) derivatives."""
    points = np.asarray(points, dtype=float)
    g = metric.value(points)
    dg = metric_dvalue(metric, points, force_fd=force_fd, steps=steps)
    ginv = np.linalg.inv(g)
    # Cheap infinity-norm condition estimate; SVD per point would dominate runtime.
    cond = np.max(np.sum(np.abs(g), axis=2), axis=1) * np.max(np.sum(np.abs(ginv), axis=2), axis=1)
    if np.any(~np.isfinite(cond)) or np.max(cond) > 1e14:
        raise NumericalFailure(f"metric '{metric.name}' is numerically singular (cond~{np.max(cond):.2e})")
    t = dg + np.swapaxes(dg, 1, 2) - dg.transpose(0, 2, 3, 1)
    return 0.5 * np.einsum("pkl,pijl->pkij", ginv, t)


def christoffel_fn(metric: MetricField, force_fd: bool = False) -> Callable:
    def fn(points):
        return christoffel(metric, points, force_fd=force_fd)
    return fn


def scalar_gradient(metric: MetricField, f: ScalarField, points: np.ndarray,
                    steps=None) -> np.ndarray:
    df = f.grad(points) if f.grad is not None else fd_jet(
        f.value, points, metric.steps_at(points) if steps is None else steps)
    ginv = np.linalg.inv(metric.value(points))
    return np.einsum("pij,pj->pi", ginv, df)


def hessian(metric: MetricField, f: ScalarField, points: np.ndarray, force_fd: bool = False,
            steps=None) -> np.ndarray:
    """Covariant Hessian (nabla d f)_ij = d_i d_j f - Gamma^k_ij d_k f."""
    h = metric.steps_at(points) if steps is None else steps
    if f.grad is not None and not force_fd:
        d2 = fd_jet(f.grad, points, h)  # (N, a, j) = d_a (d_j f)
        d2 = 0.5 * (d2 + np.swapaxes(d2, 1, 2))
        df = f.grad(points)
    else:
        d2 = fd_hessian_scalar(f.value, points, h)
        df = fd_jet(f.value, points, h)
    gamma = christoffel(metric, points, force_fd=force_fd, steps=steps)
    return d2 - np.einsum("pkij,pk->pij", gamma, df)


def laplacian(metric: MetricField, f: ScalarField, points: np.ndarray, force_fd: bool = False,
              steps=None) -> np.ndarray:
    hess = hessian(metric, f, points, force_fd=force_fd, steps=steps)
    ginv = np.linalg.inv(metric.value(points))
    return np.einsum("pij,pij->p", ginv, hess)


def grad_vector(metric: MetricField, x: VectorField, points: np.ndarray,
                steps=None, gamma: Optional[np.ndarray] = None) -> np.ndarray:
    """(nabla X)[p,k,i] = d_i X^k + Gamma^k_il X^l."""
    if x.jac is not None:
        dx = x.jac(points)
    else:
        dx = fd_jet(x.value, points, metric.steps_at(points) if steps is None else steps)
    if gamma is None:
        gamma = christoffel(metric, points, steps=steps)
    xv = x.value(points)
    return np.swapaxes(dx, 1, 2) + np.einsum("pkil,pl->pki", gamma, xv)


def covariant_derivative(metric: MetricField, x: VectorField, y: np.ndarray,
                         points: np.ndarray, steps=None) -> np.ndarray:
    """(nabla_Y X)^k at each point, Y given as an array (N, n) of vectors."""
    gx = grad_vector(metric, x, points, steps=steps)
    return np.einsum("pki,pi->pk", gx, y)


def lie_derivative_metric(metric: MetricField, u: VectorField, points: np.ndarray,
                          steps=None) -> np.ndarray:
    """(L_u g)_ij = g(nabla_i u, d_j) + g(d_i, nabla_j u)."""
    gu = grad_vector(metric, u, points, steps=steps)
    g = metric.value(points)
    m = np.einsum("pkj,pki->pij", g, gu)  # g_kj (nabla u)^k_i
    return m + np.swapaxes(m, 1, 2)


def divergence_vector(metric: MetricField, x: VectorField, points: np.ndarray,
                      steps=None) -> np.ndarray:
    gx = grad_vector(metric, x, points, steps=steps)
    return np.einsum("pkk->p", gx)


def divergence_endomorphism(metric: MetricField, t_fn: Callable, points: np.ndarray,
                            steps) -> np.ndarray:
    """(div T)_j = d_k T^k_j + Gamma^k_kl T^l_j - Gamma^l_kj T^k_l for T[p,k,j]."""
    dt = fd_jet(t_fn, points, steps)  # (N, a, k, j)
    gamma = christoffel(metric, points, steps=steps)
    tv = t_fn(points)
    out = np.einsum("pkkj->pj", dt)
    out += np.einsum("pkkl,plj->pj", gamma, tv)
    out -= np.einsum("plkj,pkl->pj", gamma, tv)
    return out


def nabla_J(metric: MetricField, j: MatrixField, points: np.ndarray,
            steps=None, gamma: Optional[np.ndarray] = None) -> np.ndarray:
    """(nabla_a J)^k_j = d_a J^k_j + Gamma^k_al J^l_j - Gamma^l_aj J^k_l."""
    if j.jac is not None:
        dj = j.jac(points)
    else:
        dj = fd_jet(j.value, points, metric.steps_at(points) if steps is None else steps)
    if gamma is None:
        gamma = christoffel(metric, points, steps=steps)
    jv = j.value(points)
    out = dj + np.einsum("pkal,plj->pakj", gamma, jv) - np.einsum("plaj,pkl->pakj", gamma, jv)
    return out


def ricci(metric: MetricField, points: np.ndarray, force_fd: bool = False,
          outer_step: "float | np.ndarray" = 1e-2, richardson: bool = True) -> np.ndarray:
    """Ricci tensor by finite differences of the Christoffel field.

    ``outer_step`` controls the stencil applied to Gamma; optionally a
    two-level Richardson extrapolation (4th-order in the outer step) is
    applied, which matters for the loose third-derivative identities.
    """
    points = np.asarray(points, dtype=float)
    gfn = christoffel_fn(metric, force_fd=force_fd)

    def ric_at(hmul: float) -> np.ndarray:
        h = np.broadcast_to(np.asarray(outer_step, dtype=float) * hmul,
                            (points.shape[0], metric.dim)).copy()
        if metric.step_limiter is not None:
            h = np.minimum(h, metric.step_limiter(points))
        dgam = fd_jet(gfn, points, h)  # (N, a, k, i, j)
        gam = gfn(points)
        ric = np.einsum("piijk->pjk", dgam)
        ric -= np.einsum("pjiik->pjk", dgam)
        ric += np.einsum("pm,pmjk->pjk", np.einsum("piim->pm", gam), gam)
        ric -= np.einsum("pijm,pmik->pjk", gam, gam)
        return 0.5 * (ric + np.swapaxes(ric, 1, 2))

    r1 = ric_at(1.0)
    if not richardson:
        return r1
    r2 = ric_at(0.5)
    return (16.0 * r2 - r1) / 15.0


def commutator(metric: MetricField, x: VectorField, y: VectorField, points: np.ndarray,
               steps=None) -> np.ndarray:
    """[X, Y]^k = X^j d_j Y^k - Y^j d_j X^k (finite differences of the evaluators)."""
    h = metric.steps_at(points) if steps is None else steps
    dx = x.jac(points) if x.jac is not None else fd_jet(x.value, points, h)
    dy = y.jac(points) if y.jac is not None else fd_jet(y.value, points, h)
    xv, yv = x.value(points), y.value(points)
    return np.einsum("pj,pjk->pk", xv, dy) - np.einsum("pj,pjk->pk", yv, dx)


# ----------------------------------------------------------------------------
# Integrators
# ----------------------------------------------------------------------------

@dataclass
class PathResult:
    points: np.ndarray          # (M, n)
    params: np.ndarray          # (M,) integration parameter
    arclength: np.ndarray       # (M,) cumulative g-arclength
    status: str
    velocities: Optional[np.ndarray] = None
    speed_drift: float = 0.0
    reason: str = ""


def _rk4(field: Callable, y: np.ndarray, h: float) -> np.ndarray:
    k1 = field(y)
    k2 = field(y + 0.5 * h * k1)
    k3 = field(y + 0.5 * h * k2)
    k4 = field(y + h * k3)
    return y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def _speed(metric: MetricField, x: np.ndarray, v: np.ndarray) -> np.ndarray:
    g = metric.value(x)
    return np.sqrt(np.einsum("pij,pi,pj->p", g, v, v))


def integrate_geodesic(metric: MetricField, p0: np.ndarray, v0: np.ndarray, length: float,
                       n_steps: int = 2000) -> PathResult:
    """Geodesic from (p0, v0), run for the given g-arclength.

    The initial velocity is normalized to unit g-speed, so the affine
    parameter is arclength.  Conservation of g(xdot, xdot) along the way is
    reported as ``speed_drift``.
    """
    n = metric.dim
    x = np.asarray(p0, dtype=float).reshape(1, n)
    v = np.asarray(v0, dtype=float).reshape(1, n)
    sp0 = _speed(metric, x, v)[0]
    if sp0 <= 0:
        raise NumericalFailure("zero initial velocity")
    v = v / sp0

    def field(state):
        xx, vv = state[:, :n], state[:, n:]
        gam = christoffel(metric, xx)
        acc = -np.einsum("pkij,pi,pj->pk", gam, vv, vv)
        return np.concatenate([vv, acc], axis=1)

    h = length / n_steps
    ys = np.empty((n_steps + 1, 2 * n))
    ys[0] = np.concatenate([x, v], axis=1)[0]
    state = ys[0].reshape(1, 2 * n)
    status = "completed"
    for k in range(n_steps):
        nxt = _rk4(field, state, h)
        if metric.domain is not None and not bool(np.all(metric.domain(nxt[:, :n]))):
            ys = ys[: k + 1]
            status = "left-domain"
            break
        state = nxt
        ys[k + 1] = state[0]
    pts, vel = ys[:, :n], ys[:, n:]
    speeds = _speed(metric, pts, vel)
    arclen = np.concatenate([[0.0], np.cumsum(0.5 * (speeds[1:] + speeds[:-1]) * h)])
    drift = float(np.max(np.abs(speeds - 1.0)))
    return PathResult(points=pts, params=np.arange(len(pts)) * h, arclength=arclen,
                      status=status, velocities=vel, speed_drift=drift)


def integrate_gradient_flow(metric: MetricField, f: ScalarField, p0: np.ndarray, *,
                            target_value: Optional[float] = None,
                            max_arclength: Optional[float] = None,
                            step: float = 1e-3, unit_speed: bool = False,
                            max_steps: int = 200000) -> PathResult:
    """Integrate xdot = grad f (or its unit-speed reparametrization) from p0.

    In plain mode the true gradient ODE in t is integrated with steps scaled
    so each advances roughly ``step`` in arclength; the cumulative arclength
    is accumulated with Simpson weights on the RK4 stage speeds.  Stops when
    f crosses ``target_value`` (the final partial step is bisected to land
    on it), when ``max_arclength`` is exhausted, or at the domain boundary.
    """
    n = metric.dim
    x = np.asarray(p0, dtype=float).reshape(1, n)

    def vfield(pp):
        v = scalar_gradient(metric, f, pp)
        if unit_speed:
            sp = _speed(metric, pp, v)
            v = v / sp[:, None]
        return v

    pts = [x[0].copy()]
    params = [0.0]
    arcs = [0.0]
    status = "max-steps"
    t = 0.0
    arc = 0.0
    for _ in range(max_steps):
        v = vfield(x)
        sp = _speed(metric, x, v)[0]
        if sp <= 1e-15:
            status = "stationary"
            break
        h = step / sp
        mid = _rk4(vfield, x, 0.5 * h)
        xn = _rk4(vfield, x, h)
        if metric.domain is not None and not bool(np.all(metric.domain(xn))):
            status = "left-domain"
            break
        seg = (h / 6.0) * (sp + 4.0 * _speed(metric, mid, vfield(mid))[0]
                           + _speed(metric, xn, vfield(xn))[0])
        crossed = target_value is not None and (
            (f.value(xn)[0] - target_value) * (f.value(x)[0] - target_value) <= 0.0
            and f.value(x)[0] != target_value)
        if crossed:
            lo, hi = 0.0, h
            for _ in range(60):
                mid_h = 0.5 * (lo + hi)
                xm = _rk4(vfield, x, mid_h)
                if (f.value(xm)[0] - target_value) * (f.value(x)[0] - target_value) <= 0.0:
                    hi = mid_h
                else:
                    lo = mid_h
            xn = _rk4(vfield, x, hi)
            xm = _rk4(vfield, x, 0.5 * hi)
            seg = (hi / 6.0) * (sp + 4.0 * _speed(metric, xm, vfield(xm))[0]
                                + _speed(metric, xn, vfield(xn))[0])
            h = hi
            status = "target"
        t += h
        arc += seg
        x = xn
        pts.append(x[0].copy())
        params.append(t)
        arcs.append(arc)
        if status == "target":
            break
        if max_arclength is not None and arc >= max_arclength:
            status = "max-arclength"
            break
    return PathResult(points=np.array(pts), params=np.array(params),
                      arclength=np.array(arcs), status=status)


def richardson_even(values: np.ndarray) -> np.ndarray:
    """Limit h -> 0 of f(h) = f0 + c1 h^2 + c2 h^4, sampled at (h, 2h, 4h).

    ``values`` has shape (3, ...) ordered (f(h), f(2h), f(4h)).
    """
    fh, f2h, f4h = values[0], values[1], values[2]
    return (64.0 * fh - 20.0 * f2h + f4h) / 45.0
