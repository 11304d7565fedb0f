"""Planar curves, expanded curves, n-chains and elementary geometric oracles."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.special import gamma as gamma_fn

from .errors import (
    ClosureMismatch,
    DegenerateTangent,
    OddChainOnClosedCurve,
    OrderViolation,
    RangeViolation,
    SelfIntersection,
)

ARC_TABLE_SIZE = 4096
SPLINE_FD_STEP = 1e-5
TANGENT_TOL = 1e-10


class Curve:
    """A C^2 planar curve gamma: [0, 1] -> R^2 with arc-length bookkeeping.

    Use :func:`make_curve` to build one; it validates immersion, closure and
    self-intersection.  Evaluators accept scalars or arrays of parameters.
    """

    def __init__(self, kind: str, closed: bool, params: dict, resolution: int = ARC_TABLE_SIZE):
        self.kind = kind
        self.closed = closed
        self.params = dict(params)
        self.dim = 2
        self.resolution = resolution
        if kind == "circle":
            self._center = np.asarray(params.get("center", (0.0, 0.0)), dtype=float)
            self._radius = float(params.get("radius", 1.0))
        elif kind == "segment":
            self._p0 = np.asarray(params.get("start", (0.0, 0.0)), dtype=float)
            self._p1 = np.asarray(params.get("end", (1.0, 0.0)), dtype=float)
        elif kind == "cubic-spline":
            pts = np.asarray(params["points"], dtype=float)
            if closed and np.linalg.norm(pts[0] - pts[-1]) > 1e-12:
                pts = np.vstack([pts, pts[:1]])
            chord = np.r_[0.0, np.cumsum(np.linalg.norm(np.diff(pts, axis=0), axis=1))]
            if np.any(np.diff(chord) <= 0):
                raise DegenerateTangent("spline knots must be distinct")
            knots = chord / chord[-1]
            self._spline = CubicSpline(knots, pts, axis=0, bc_type="periodic" if closed else "natural")
        else:
            raise ValueError(f"unknown curve kind {kind!r}")
        self._build_arc_table()

    # evaluators -----------------------------------------------------------
    def point(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "circle":
            a = 2 * np.pi * t
            return self._center + self._radius * np.stack([np.cos(a), np.sin(a)], axis=-1)
        if self.kind == "segment":
            return self._p0 + t[..., None] * (self._p1 - self._p0)
        return self._spline(self._wrap(t))

    def d1(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "circle":
            a = 2 * np.pi * t
            return 2 * np.pi * self._radius * np.stack([-np.sin(a), np.cos(a)], axis=-1)
        if self.kind == "segment":
            return np.broadcast_to(self._p1 - self._p0, t.shape + (2,)).copy()
        hs = SPLINE_FD_STEP
        return (self._fd_point(t + hs) - self._fd_point(t - hs)) / (2 * hs)

    def d2(self, t):
        t = np.asarray(t, dtype=float)
        if self.kind == "circle":
            a = 2 * np.pi * t
            return -((2 * np.pi) ** 2) * self._radius * np.stack([np.cos(a), np.sin(a)], axis=-1)
        if self.kind == "segment":
            return np.zeros(t.shape + (2,))
        hs = SPLINE_FD_STEP
        return (self._fd_point(t + hs) - 2 * self._fd_point(t) + self._fd_point(t - hs)) / hs**2

    def _fd_point(self, t):
        # open splines are extended by their end polynomials for the stencil
        return self._spline(self._wrap(t)) if self.closed else self._spline(t)

    def _wrap(self, t):
        return np.mod(t, 1.0) if self.closed else t

    def curvature(self, t):
        """Signed curvature (positive when turning left)."""
        if self.kind == "circle":
            return np.full(np.shape(t), 1.0 / self._radius)
        if self.kind == "segment":
            return np.zeros(np.shape(t))
        g1, g2 = self.d1(t), self.d2(t)
        cross = g1[..., 0] * g2[..., 1] - g1[..., 1] * g2[..., 0]
        return cross / np.linalg.norm(g1, axis=-1) ** 3

    def tangent(self, t):
        g1 = self.d1(t)
        return g1 / np.linalg.norm(g1, axis=-1, keepdims=True)

    def normal(self, t):
        """Left unit normal (tangent rotated by +90 degrees)."""
        tau = self.tangent(t)
        return np.stack([-tau[..., 1], tau[..., 0]], axis=-1)

    # arc length -----------------------------------------------------------
    def _build_arc_table(self):
        n = self.resolution
        self._t_table = np.linspace(0.0, 1.0, n + 1)
        if self.kind in ("circle", "segment"):
            speed = float(np.linalg.norm(self.d1(np.array(0.0))))
            self.length = speed
            self._s_table = self._t_table * speed
            self._speed_const = speed
            return
        self._speed_const = None
        # 5-point Gauss-Legendre on every table cell
        xg, wg = np.polynomial.legendre.leggauss(5)
        a, b = self._t_table[:-1], self._t_table[1:]
        mid, half = (a + b) / 2, (b - a) / 2
        tq = mid[:, None] + half[:, None] * xg[None, :]
        speed = np.linalg.norm(self.d1(tq), axis=-1)
        cell = (speed * wg[None, :]).sum(axis=1) * half
        self._s_table = np.r_[0.0, np.cumsum(cell)]
        self.length = float(self._s_table[-1])
        self._s_of_t = CubicSpline(self._t_table, self._s_table)
        self._t_of_s = CubicSpline(self._s_table, self._t_table)

    def arclength(self, t):
        """Arc length of gamma from 0 to t (unit-curve scale)."""
        t = np.asarray(t, dtype=float)
        if self._speed_const is not None:
            return t * self._speed_const
        return self._s_of_t(t)

    def param_at(self, s):
        """Inverse of :meth:`arclength`."""
        s = np.asarray(s, dtype=float)
        if self._speed_const is not None:
            return s / self._speed_const
        return self._t_of_s(s)

    def kappa_max(self, samples: int | None = None) -> float:
        n = samples or self.resolution
        t = np.linspace(0.0, 1.0, n + 1)
        return float(np.max(np.abs(self.curvature(t))))

    def to_dict(self) -> dict:
        return {"kind": self.kind, "closed": self.closed, **self.params}

    def __repr__(self):
        return f"Curve({self.kind!r}, closed={self.closed}, length={self.length:.6g})"


def make_curve(kind: str, closed: bool | None = None, *, resolution: int = ARC_TABLE_SIZE,
               separation_delta: float = 0.05, **params) -> Curve:
    """Build and validate a curve.

    ``kind`` is ``"circle"`` (``center``, ``radius``), ``"segment"`` (``start``,
    ``end``) or ``"cubic-spline"`` (``points``).  Raises
    :class:`DegenerateTangent`, :class:`ClosureMismatch` or
    :class:`SelfIntersection` when the curve hypotheses fail.
    """
    if closed is None:
        closed = kind == "circle"
    if kind == "circle" and not closed:
        raise ClosureMismatch("a full circle is always closed")
    if kind == "segment" and closed:
        raise ClosureMismatch("segment endpoints differ but closed=True")
    curve = Curve(kind, closed, params, resolution=resolution)

    t = np.linspace(0.0, 1.0, 2001)
    speed = np.linalg.norm(curve.d1(t), axis=-1)
    if np.min(speed) < TANGENT_TOL:
        raise DegenerateTangent(f"|gamma'| = {np.min(speed):.3g} below tolerance")
    if closed:
        p0, p1 = curve.point(np.array(0.0)), curve.point(np.array(1.0))
        if np.linalg.norm(p0 - p1) > 1e-9 * max(1.0, curve.length):
            raise ClosureMismatch("closed curve with gamma(0) != gamma(1)")
        g0, g1 = curve.d1(np.array(0.0)), curve.d1(np.array(1.0))
        if np.linalg.norm(g0 - g1) > 1e-6 * np.linalg.norm(g0):
            raise ClosureMismatch("closed curve with gamma'(0) != gamma'(1)")
    _check_simple(curve, separation_delta)
    curve.kmax = curve.kappa_max()
    return curve


def _check_simple(curve: Curve, delta: float, n: int = 1500):
    t = np.linspace(0.0, 1.0, n, endpoint=not curve.closed)
    pts = curve.point(t)
    dt = np.abs(t[:, None] - t[None, :])
    if curve.closed:
        dt = np.minimum(dt, 1.0 - dt)
    far = dt > delta
    dist = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=-1)
    if far.any() and np.min(dist[far]) <= 1e-9 * max(1.0, curve.length):
        raise SelfIntersection("curve touches itself away from the diagonal")


# chains -------------------------------------------------------------------
def chain_distance(n: int, i: int, j: int) -> int:
    """Cyclic index distance min{|i-j|, |i-j+n|, |i-j-n|}."""
    return min(abs(i - j), abs(i - j + n), abs(i - j - n))


def sign_pattern(n: int) -> tuple[int, ...]:
    return tuple(1 if i % 2 == 0 else -1 for i in range(n))


@dataclass(frozen=True)
class Chain:
    """Ordered points x_i = R gamma(t_i) with alternating signs +, -, +, ..."""

    curve: Curve
    R: float
    t: tuple[float, ...]
    signs: tuple[int, ...]
    points: np.ndarray = field(repr=False)
    distances: np.ndarray = field(repr=False)
    boundary_distances: np.ndarray | None = field(repr=False, default=None)

    @property
    def n(self) -> int:
        return len(self.t)

    @property
    def k(self) -> int:
        return self.n // 2

    def min_separation(self) -> float:
        if self.n < 2:
            return math.inf
        iu = np.triu_indices(self.n, 1)
        return float(np.min(self.distances[iu]))

    def arc_positions(self) -> np.ndarray:
        """Arc-length coordinates of the points along the expanded curve."""
        return self.R * self.curve.arclength(np.asarray(self.t))


def chain_from_params(curve: Curve, R: float, t: Sequence[float]) -> Chain:
    t = tuple(float(v) for v in t)
    n = len(t)
    if R <= 0:
        raise ValueError("R must be positive")
    if any(not (0.0 <= v < 1.0) for v in t):
        raise OrderViolation("chain parameters must lie in [0, 1)")
    if curve.closed and n % 2:
        raise OddChainOnClosedCurve(f"closed curves carry an even number of bumps, got n={n}")
    if n > 1:
        drops = sum(1 for a, b in zip(t, t[1:]) if b <= a)
        if curve.closed:
            # a circular shift of an increasing list is allowed
            wrap_ok = drops == 0 or (drops == 1 and t[-1] < t[0])
            if not wrap_ok or len(set(t)) != n:
                raise OrderViolation(f"parameters not cyclically ordered: {t}")
        elif drops:
            raise OrderViolation(f"parameters not strictly increasing: {t}")
    pts = R * curve.point(np.asarray(t)) if n else np.zeros((0, 2))
    dist = np.linalg.norm(pts[:, None, :] - pts[None, :, :], axis=-1) if n else np.zeros((0, 0))
    bd = None
    if not curve.closed:
        ends = R * curve.point(np.array([0.0, 1.0]))
        bd = np.min(np.linalg.norm(pts[:, None, :] - ends[None, :, :], axis=-1), axis=1) if n else np.zeros(0)
    return Chain(curve, float(R), t, sign_pattern(n), pts, dist, bd)


@dataclass(frozen=True)
class SeparationScales:
    """Logarithmic separation scales g1(R) = log(R)/(2 mu), g2 = (1/2 + 1/(4 alpha')) g1."""

    mu: float
    alpha_prime: float

    def __post_init__(self):
        if self.mu <= 0:
            raise ValueError("mu must be positive")
        if self.alpha_prime <= 0.5:
            raise ValueError("alpha' must exceed 1/2")

    def g1(self, R: float) -> float:
        return math.log(R) / (2.0 * self.mu)

    def g2(self, R: float) -> float:
        return (0.5 + 0.25 / self.alpha_prime) * self.g1(R)

    def g(self, m: int, R: float) -> float:
        return self.g1(R) if m == 1 else self.g2(R)


@dataclass
class AdmissibilityReport:
    admissible: bool
    margin: float
    pair_margin: float
    boundary_margin: float

    def __bool__(self):
        return self.admissible


def chain_admissible(chain: Chain, scales: SeparationScales | float, m: int = 1,
                     open: bool | None = None) -> AdmissibilityReport:
    """Membership in the admissible chain set for scale index ``m``.

    ``scales`` may also be a bare separation length.  The margin is the
    smallest slack over all pair and (open case) boundary constraints; it is
    non-positive exactly when the chain is inadmissible.
    """
    if open is None:
        open = not chain.curve.closed
    g = scales if isinstance(scales, (int, float)) else scales.g(m, chain.R)
    pair = chain.min_separation() - g
    bnd = math.inf
    if open and chain.boundary_distances is not None and chain.n:
        bnd = float(np.min(2.0 * chain.boundary_distances)) - g
    margin = min(pair, bnd)
    if margin == math.inf:
        margin = math.inf
    return AdmissibilityReport(margin > 0, margin, pair, bnd)


# Fermat point ---------------------------------------------------------------
def _total_distance(x, pts):
    return float(np.sum(np.linalg.norm(pts - x, axis=1)))


def fermat_point(x1, x2, x3, tol: float = 1e-13, max_iter: int = 20000):
    """Minimizer of x -> sum_k |x - x_k| for three points and the minimum value.

    Vertices whose interior angle is at least 2pi/3 are returned directly.
    Otherwise Weiszfeld iteration is run and then polished by Newton steps,
    which converge quadratically at the (interior) minimizer.
    """
    pts = np.array([x1, x2, x3], dtype=float)
    # vertex shortcut: the angle at x_k is >= 120 deg iff the unit vectors to
    # the other two vertices have dot product <= -1/2
    for k in range(3):
        a, b = pts[(k + 1) % 3] - pts[k], pts[(k + 2) % 3] - pts[k]
        na, nb = np.linalg.norm(a), np.linalg.norm(b)
        if na == 0 or nb == 0:
            return pts[k].copy(), _total_distance(pts[k], pts)
        if np.dot(a, b) / (na * nb) <= -0.5:
            return pts[k].copy(), na + nb
    x = pts.mean(axis=0)
    for _ in range(max_iter):
        d = np.linalg.norm(pts - x, axis=1)
        if np.any(d < 1e-300):
            break
        w = 1.0 / d
        x_new = (w[:, None] * pts).sum(axis=0) / w.sum()
        step = np.linalg.norm(x_new - x)
        x = x_new
        if step < tol * max(1.0, np.abs(pts).max()):
            break
    x = _newton_polish(x, pts)
    return x, _total_distance(x, pts)


def _newton_polish(x, pts, iters: int = 8):
    best, fbest = x, _total_distance(x, pts)
    for _ in range(iters):
        diff = x - pts
        d = np.linalg.norm(diff, axis=1)
        if np.any(d < 1e-12):
            break
        u = diff / d[:, None]
        grad = u.sum(axis=0)
        hess = sum((np.eye(2) - np.outer(ui, ui)) / di for ui, di in zip(u, d))
        try:
            step = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            break
        # guard: golden-section line search keeps the step monotone
        trial = x - step
        ft = _total_distance(trial, pts)
        if ft > fbest:
            trial = _golden_line(x, -step, pts)
            ft = _total_distance(trial, pts)
        if ft <= fbest:
            best, fbest = trial, ft
        x = best
        if np.linalg.norm(step) < 1e-15 * max(1.0, np.abs(pts).max()):
            break
    return best


def _golden_line(x, direction, pts, iters: int = 80):
    phi = (math.sqrt(5) - 1) / 2
    a, b = 0.0, 1.0
    c, d = b - phi * (b - a), a + phi * (b - a)
    fc = _total_distance(x + c * direction, pts)
    fd = _total_distance(x + d * direction, pts)
    for _ in range(iters):
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - phi * (b - a)
            fc = _total_distance(x + c * direction, pts)
        else:
            a, c, fc = c, d, fd
            d = a + phi * (b - a)
            fd = _total_distance(x + d * direction, pts)
    return x + 0.5 * (a + b) * direction


def fermat_distance_closed_form(x1, x2, x3) -> float:
    """Classical formula for triangles with all angles below 2pi/3."""
    p = np.array([x1, x2, x3], dtype=float)
    a = np.linalg.norm(p[1] - p[2])
    b = np.linalg.norm(p[0] - p[2])
    c = np.linalg.norm(p[0] - p[1])
    v1, v2 = p[1] - p[0], p[2] - p[0]
    area = 0.5 * abs(v1[0] * v2[1] - v1[1] * v2[0])
    return math.sqrt((a * a + b * b + c * c) / 2 + 2 * math.sqrt(3) * area)


# ball difference volume ----------------------------------------------------
@dataclass
class VolumeEstimate:
    value: float
    ci_low: float
    ci_high: float
    samples: int

    def contains(self, x: float) -> bool:
        return self.ci_low <= x <= self.ci_high


def unit_ball_volume(dim: int) -> float:
    return math.pi ** (dim / 2) / gamma_fn(dim / 2 + 1)


def ball_difference_volume(x1, x2, r: float, dim: int = 2, samples: int = 100_000,
                           seed: int = 0) -> VolumeEstimate:
    """Monte-Carlo estimate of vol(B_r(x2) minus B_1(x1)) with a 99% interval.

    Points are drawn uniformly in B_r(x2), so the estimate is
    vol(B_r) * P(|y - x1| >= 1) with a binomial (Wilson) interval.
    """
    x1 = np.asarray(x1, dtype=float).reshape(dim)
    x2 = np.asarray(x2, dtype=float).reshape(dim)
    d = float(np.linalg.norm(x1 - x2))
    if not d < 1.0:
        raise RangeViolation(f"|x1 - x2| = {d} must be < 1")
    if not (1.0 <= r <= d + 1.0 + 1e-15):
        raise RangeViolation(f"r = {r} outside [1, |x1-x2| + 1]")
    if samples < 10_000:
        raise RangeViolation("at least 1e4 samples are required")
    rng = np.random.default_rng(seed)
    g = rng.standard_normal((samples, dim))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    rad = r * rng.random(samples) ** (1.0 / dim)
    y = x2 + g * rad[:, None]
    hits = int(np.count_nonzero(np.linalg.norm(y - x1, axis=1) >= 1.0))
    vball = unit_ball_volume(dim) * r**dim
    z = 2.5758293035489004  # two-sided 99%
    p = hits / samples
    denom = 1 + z * z / samples
    centre = (p + z * z / (2 * samples)) / denom
    half = z * math.sqrt(p * (1 - p) / samples + z * z / (4 * samples**2)) / denom
    return VolumeEstimate(vball * p, vball * max(0.0, centre - half), vball * min(1.0, centre + half), samples)


def circle_lens_area(r1: float, r2: float, d: float) -> float:
    """Area of the intersection of two discs with radii r1, r2 at distance d.

    Half-angles come from atan2 on factored terms, which stays accurate
    near internal and external tangency where acos loses half the digits.
    """
    if d >= r1 + r2:
        return 0.0
    if d <= abs(r1 - r2):
        return math.pi * min(r1, r2) ** 2
    # everything divided by d, so tiny distances neither cancel nor underflow
    S, rho = r1 + r2, (r1 - r2) / d
    q = math.sqrt((S - d) * (S + d)) * math.sqrt((1 - rho) * (1 + rho))
    a1 = math.atan2(q, d + rho * S)
    a2 = math.atan2(q, d - rho * S)
    return r1 * r1 * a1 + r2 * r2 * a2 - 0.5 * d * q


def ball_difference_area_exact(d: float, r: float) -> float:
    """Closed-form area of B_r(x2) minus B_1(x1) in the plane, |x1 - x2| = d."""
    return math.pi * r * r - circle_lens_area(r, 1.0, d)
