"""Fubini-Study oracle: CP^m in an affine chart, with its quadratic-ratio potential.

The chart normalizes one homogeneous coordinate to 1 and uses the remaining
m complex coordinates w as 2m real ones, packed (Re w_0, Im w_0, Re w_1, ...).
The metric comes from the Kahler potential (1/2) log(1 + |w|^2); that
normalization is pinned by requiring

    Q = g(grad tau, grad tau) = 4 tau (1 - tau)

for tau([x, y]) = |y|^2 / (|x|^2 + |y|^2), and it makes Ric = 2(m+1) g
(Ric = 6 g on CP^2).  The critical sets of tau are the linear varieties
CP^k (tau = 0) and CP^l (tau = 1); radial rays w = tan(s) * w_hat are
unit-speed gradient-flow lines, which the boundary checks exploit.

Everything is independent of the bundle construction: this module supplies
the external cross-check for the identity suite and the extraction round
trip (the recovered gamma must come out constant, the special branch of
the classification).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import MatrixField, MetricField, ScalarField
from .profiles import Interval, build_reparams, make_profile


@dataclass(frozen=True)
class FSChart:
    m: int = 2
    k: int = 0
    l: int = 1
    norm_index: int = 0

    def __post_init__(self) -> None:
        if self.k < 0 or self.l < 0 or self.m != self.k + self.l + 1 or self.m < 2:
            raise ValueError(f"need k,l >= 0 and m = k+l+1 >= 2, got (k,l,m)=({self.k},{self.l},{self.m})")
        if not 0 <= self.norm_index <= self.m:
            raise ValueError("normalized homogeneous index out of range")

    @property
    def dim(self) -> int:
        return 2 * self.m

    def homogeneous_positions(self) -> np.ndarray:
        """Homogeneous index of each free complex coordinate."""
        return np.array([a if a < self.norm_index else a + 1 for a in range(self.m)])


def _to_complex(p: np.ndarray, m: int) -> np.ndarray:
    return p[:, 0::2] + 1j * p[:, 1::2]


def _hermitian_to_real(h: np.ndarray) -> np.ndarray:
    """Real symmetric metric of the Hermitian form: ds^2 = 2 Re(h_ab w^a conj(w^b))."""
    n, m, _ = h.shape
    out = np.empty((n, 2 * m, 2 * m))
    re, im = 2.0 * h.real, 2.0 * h.imag
    out[:, 0::2, 0::2] = re
    out[:, 1::2, 1::2] = re
    out[:, 0::2, 1::2] = im
    out[:, 1::2, 0::2] = -im
    return out


def fs_metric(chart: FSChart) -> MetricField:
    m = chart.m

    def hermitian(p: np.ndarray):
        w = _to_complex(p, m)
        d = 1.0 + np.sum(p * p, axis=1)
        outer = np.conj(w)[:, :, None] * w[:, None, :]
        return 0.5 * (np.eye(m)[None] * d[:, None, None] - outer) / d[:, None, None] ** 2, w, d

    def value(p: np.ndarray) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        h, _, _ = hermitian(p)
        return _hermitian_to_real(h)

    # d w_b / d p_r as a (2m, m) complex table.
    e = np.zeros((2 * m, m), dtype=complex)
    for b in range(m):
        e[2 * b, b] = 1.0
        e[2 * b + 1, b] = 1.0j

    def dvalue(p: np.ndarray) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        n = p.shape[0]
        w = _to_complex(p, m)
        d = 1.0 + np.sum(p * p, axis=1)
        wbar = np.conj(w)
        outer = wbar[:, :, None] * w[:, None, :]
        dd = 2.0 * p  # (n, 2m)
        dh = np.empty((n, 2 * m, m, m), dtype=complex)
        for r in range(2 * m):
            douter = (np.conj(e[r])[None, :, None] * w[:, None, :]
                      + wbar[:, :, None] * e[r][None, None, :])
            dh[:, r] = 0.5 * (
                -np.eye(m)[None] * (dd[:, r] / d ** 2)[:, None, None]
                - douter / d[:, None, None] ** 2
                + 2.0 * outer * (dd[:, r] / d ** 3)[:, None, None])
        out = np.empty((n, 2 * m, 2 * m, 2 * m))
        for r in range(2 * m):
            out[:, r] = _hermitian_to_real(dh[:, r])
        return out

    return MetricField(dim=2 * m, value=value, dvalue=dvalue,
                       domain=lambda p: np.ones(p.shape[0], dtype=bool),
                       step=3e-3, name=f"fubini-study[m={m}]")


def fs_tau(chart: FSChart) -> ScalarField:
    m, k = chart.m, chart.k
    pos = chart.homogeneous_positions()
    in_y = pos > k  # free coordinates contributing to |y|^2
    norm_in_y = chart.norm_index > k

    def value(p: np.ndarray) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        sq = p * p
        y2 = sq[:, 0::2][:, in_y].sum(axis=1) + sq[:, 1::2][:, in_y].sum(axis=1)
        if norm_in_y:
            y2 = y2 + 1.0
        s = 1.0 + np.sum(sq, axis=1)
        return y2 / s

    def grad(p: np.ndarray) -> np.ndarray:
        p = np.asarray(p, dtype=float)
        s = 1.0 + np.sum(p * p, axis=1)
        tau = value(p)
        dy = np.zeros_like(p)
        mask = np.repeat(in_y, 2)
        dy[:, mask] = 2.0 * p[:, mask]
        ds = 2.0 * p
        return (dy - tau[:, None] * ds) / s[:, None]

    return ScalarField(value=value, grad=grad, name="fs-tau")


def fs_J(chart: FSChart) -> MatrixField:
    m = chart.m
    j0 = np.zeros((2 * m, 2 * m))
    for b in range(m):
        j0[2 * b + 1, 2 * b] = 1.0
        j0[2 * b, 2 * b + 1] = -1.0

    def value(p: np.ndarray) -> np.ndarray:
        return np.broadcast_to(j0, (p.shape[0], 2 * m, 2 * m)).copy()

    def jac(p: np.ndarray) -> np.ndarray:
        return np.zeros((p.shape[0], 2 * m, 2 * m, 2 * m))

    return MatrixField(value=value, jac=jac, name="fs-J")


def fs_profile():
    """The momentum data Q = 4 tau (1 - tau): interval [0,1], slope constant a = 2."""
    prof = make_profile(Interval(0.0, 1.0), 2.0)
    return prof, build_reparams(prof)


def fs_ray_point(chart: FSChart, direction: np.ndarray, s) -> np.ndarray:
    """Point(s) at arclength s from the tau = 0 variety along a radial ray.

    Valid on the default chart (k = 0, normalized x-coordinate): all free
    coordinates are y-coordinates, tau = |w|^2/(1+|w|^2), and w = tan(s) w_hat
    is a unit-speed gradient-flow line with tau = sin^2 s.
    """
    if chart.k != 0 or chart.norm_index != 0:
        raise ValueError("radial rays are set up for the chart normalizing the x-coordinate")
    s = np.atleast_1d(np.asarray(s, dtype=float))
    return np.tan(s)[:, None] * np.asarray(direction, dtype=float)[None, :]


def fs_random_directions(chart: FSChart, n: int, rng: np.random.Generator) -> np.ndarray:
    """Unit directions in R^(2m), uniform on the sphere."""
    d = rng.normal(size=(n, chart.dim))
    return d / np.linalg.norm(d, axis=1, keepdims=True)


def fs_verify(chart: FSChart = None, seed: int = 0):
    """The full cross-check suite on the projective-space oracle.

    Runs every applicable identity check plus the constant-gamma extraction
    and returns the list of reports (the last one summarizes the extraction).
    """
    from .extract import extract_all, oracle_from_fs
    from .verify import GridSpec, make_report, run_suite, subject_from_fs

    chart = chart or FSChart()
    subject = subject_from_fs(chart)
    reports = run_suite(subject, GridSpec(seed=seed))
    ex = extract_all(oracle_from_fs(chart), with_h=False)
    vals = np.array([g.value for g in ex.gammas if not g.infinite])
    std = float(np.std(vals)) if len(vals) == len(ex.gammas) else float("inf")
    reports.append(make_report(
        "gamma_constant_extraction", f"{len(ex.gammas)} fibers, seed {seed}",
        np.zeros((1, chart.dim)), np.array([std]), 1e-5,
        {"gamma_mean": float(np.mean(vals)) if len(vals) else float("nan"),
         "interval": [ex.interval.tau_min, ex.interval.tau_max], "a": ex.a}))
    return reports
