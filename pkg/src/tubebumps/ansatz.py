"""Bumps placed on a tube, their linear projections, and the multibump ansatz."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import RectBivariateSpline
from scipy.optimize import brentq

from .discrete import GridField, TubeGrid, WindowGrid, apply_operator, solve_linear
from .errors import (
    IndefiniteOperator,
    IndefiniteWindow,
    PreconditionError,
    ResolutionError,
    SignPatternBroken,
    SignViolation,
    WindowOverflow,
)
from .profile import BumpProfile, truncated_projection

SNAP_TOL = 1e-9


def default_half_width(profile: BumpProfile) -> float:
    """Support cutoff min(L_xi - 1, 14/mu) of a placed bump."""
    return min(profile.L_xi - 1.0, 14.0 / profile.mu)


def anchor_arc(tube: TubeGrid, t: float) -> float:
    """Arc position s0 = R * arc(t), snapped onto a node when within 1e-9 cells."""
    s0 = float(tube.R * tube.curve.arclength(t))
    q = s0 / tube.h1
    if abs(q - round(q)) < SNAP_TOL:
        s0 = round(q) * tube.h1
    return s0


def window_rows(tube: TubeGrid, s0: float, half_width: float, clip: bool = False):
    """Interior-array row range [i0, i1) of nodes with |s - s0| <= half_width.

    On closed tubes the range is unwrapped (indices taken modulo the node
    count).  On open tubes a range crossing an end raises WindowOverflow
    unless ``clip`` is set; the second return value reports clipping.
    """
    h = tube.h1
    k_lo = math.ceil((s0 - half_width) / h - 1e-9)
    k_hi = math.floor((s0 + half_width) / h + 1e-9)
    if tube.periodic:
        if k_hi - k_lo + 1 > tube.shape[0]:
            raise WindowOverflow("bump window longer than the closed tube")
        return (k_lo, k_hi + 1), False
    n_s = tube.n_s
    clipped = k_lo < 1 or k_hi > n_s - 1
    if clipped and not clip:
        raise WindowOverflow(f"bump window [{s0 - half_width:.4g}, {s0 + half_width:.4g}] "
                             f"crosses an end of the open tube of length {tube.length:.4g}")
    k_lo, k_hi = max(k_lo, 1), min(k_hi, n_s - 1)
    return (k_lo - 1, k_hi), clipped


def _profile_rows(profile: BumpProfile, offsets: np.ndarray, h_tube: float) -> np.ndarray:
    """Profile rows at the given xi offsets; exact lookup when nodes align."""
    if abs(h_tube - profile.h) < 1e-12:
        q = offsets / profile.h
        k = np.rint(q)
        if np.all(np.abs(q - k) < SNAP_TOL):
            idx = profile.center_index + k.astype(int)
            out = np.zeros((len(offsets), profile.grid.shape[1]))
            ok = (idx >= 0) & (idx < profile.grid.shape[0])
            out[ok] = profile.values[idx[ok]]
            return out
    return profile.rows_at(offsets)


@dataclass
class PlacedBump:
    """A profile copy U(s - s0, eta) on a window of the tube grid."""

    profile: BumpProfile
    tube: TubeGrid
    t: float
    s0: float
    sign: int
    half_width: float
    window: WindowGrid
    values: np.ndarray = field(repr=False)
    clipped: bool = False

    @property
    def rows(self) -> tuple[int, int]:
        return (self.window.i0, self.window.i1)

    @property
    def anchor_row(self) -> int:
        """Window row nearest to the anchor."""
        return int(np.argmin(np.abs(self.window.x1 - self.s0)))

    def embedded(self) -> np.ndarray:
        return self.tube.embed(self.values, self.window)

    def as_field(self) -> GridField:
        return GridField(self.window, self.values)


def _check_sign(profile: BumpProfile, sign: int) -> BumpProfile:
    if profile.sign == sign:
        return profile
    if profile.nl.odd:
        return profile.with_fields(sign=sign, U=-profile.U)
    raise PreconditionError("profile sign does not match and f is not odd")


def place_bump(profile: BumpProfile, tube: TubeGrid, t: float, sign: int | None = None,
               half_width: float | None = None, clip: bool = False,
               rows: tuple[int, int] | None = None) -> PlacedBump:
    """Copy the profile to the tube at parameter ``t``: value U(s - s0, eta).

    ``rows`` fixes the window row range explicitly (used for finite
    differences in t, which must not change the support).
    """
    if sign is None:
        sign = profile.sign
    profile = _check_sign(profile, sign)
    if abs(tube.h2 - profile.h) > 1e-12:
        raise ResolutionError("profile and tube must share the cross-section spacing")
    w = default_half_width(profile) if half_width is None else float(half_width)
    s0 = anchor_arc(tube, t)
    clipped = False
    if rows is None:
        rows, clipped = window_rows(tube, s0, w, clip=clip)
    win = WindowGrid(tube, rows[0], rows[1])
    if tube.periodic:
        # unwrapped window coordinates: move s0 next to the window centre
        centre = 0.5 * (win.x1[0] + win.x1[-1])
        s0 += tube.length * round((centre - s0) / tube.length)
    offsets = win.x1 - s0
    q = (s0 - tube.x1[0]) / tube.h1
    if abs(q - round(q)) < SNAP_TOL:
        # node-aligned anchor: integer offsets, so rotations are exact index shifts
        offsets = tube.h1 * (np.arange(win.i0, win.i1) - round(q))
    vals = _profile_rows(profile, offsets, tube.h1)
    return PlacedBump(profile, tube, float(t), s0, sign, w, win, vals, clipped)


@dataclass
class ProjectedBump:
    """Solution V of the linear Dirichlet problem with source f(U) on the window."""

    placed: PlacedBump
    V: np.ndarray = field(repr=False)
    residual: float
    widen: float = 1.0
    a: float | None = None
    b: float | None = None
    W: np.ndarray | None = field(default=None, repr=False)

    @property
    def window(self) -> WindowGrid:
        return self.placed.window

    @property
    def sign(self) -> int:
        return self.placed.sign

    def embedded(self) -> np.ndarray:
        return self.placed.tube.embed(self.V, self.window)

    def as_field(self) -> GridField:
        return GridField(self.window, self.V)


def project_bump(placed: PlacedBump, widen: float = 1.0, open: bool | None = None,
                 with_W: bool = True, check_sign: bool = True) -> ProjectedBump:
    """Solve -Delta V + lambda V = f(U_placed) on the bump window.

    On open tubes ``a`` and ``b`` are the distances from the anchor to the
    two curve ends; when both are at least 1 the comparison field W (the
    truncated projection on (-a, b), placed like U) is also returned.
    """
    if widen != 1.0:
        raise ValueError("only the unwidened cross-section (widen = 1) is discretized")
    prof = placed.profile
    tube = placed.tube
    if open is None:
        open = not tube.curve.closed
    rhs = prof.nl.f(placed.values)
    try:
        V = solve_linear(placed.window, prof.lam, rhs)
    except IndefiniteOperator as exc:
        raise IndefiniteWindow(str(exc)) from exc
    vals = V.values
    if check_sign and rhs.any() and not np.all(placed.sign * vals > 0):
        raise SignViolation("projected bump changes sign; R is too small for this window")
    res = float(np.max(np.abs(apply_operator(placed.window, prof.lam, vals) - rhs))) if rhs.any() else 0.0
    a = b = W = None
    if open:
        ends = tube.R * tube.curve.point(np.array([0.0, 1.0]))
        x = tube.R * tube.curve.point(np.array(placed.t))
        a, b = (float(np.linalg.norm(x - e)) for e in ends)
        if with_W and min(a, b) >= 1.0:
            W = comparison_field(placed, a, b)
    return ProjectedBump(placed, vals, res, widen, a, b, W)


def comparison_field(placed: PlacedBump, a: float, b: float) -> np.ndarray:
    """Truncated projection on (-a, b) placed on the window like U."""
    prof = placed.profile
    cap = prof.L_xi - 1.0
    h = prof.h
    aa = min(math.floor(a / h + 1e-9) * h, cap)
    bb = min(math.floor(b / h + 1e-9) * h, cap)
    Ut = truncated_projection(prof, aa, bb)
    trunc = prof.with_fields(U=Ut)
    return _profile_rows(trunc, placed.window.x1 - placed.s0, placed.tube.h1)


def anchor_value(tube: TubeGrid, values: np.ndarray, s0: float) -> float:
    """Field value at the node nearest to (s0, 0)."""
    s = tube.x1
    if tube.periodic:
        d = np.abs((s - s0 + tube.length / 2) % tube.length - tube.length / 2)
    else:
        d = np.abs(s - s0)
    i = int(np.argmin(d))
    j = int(np.argmin(np.abs(tube.eta)))
    return float(values[i, j])


def assemble_multibump(chain, projected: list, tube: TubeGrid | None = None) -> GridField:
    """Sum of the projected bumps on the full tube, with an anchor sign check."""
    if len(projected) != chain.n:
        raise ValueError("one projected bump per chain point is required")
    if tube is None:
        if not projected:
            raise ValueError("tube grid required for an empty chain")
        tube = projected[0].placed.tube
    phi = np.zeros(tube.shape)
    for pb, sg in zip(projected, chain.signs):
        if pb.sign != sg:
            raise SignPatternBroken("projected bump sign differs from the chain pattern")
        phi[pb.window.parent_rows] += pb.V
    for pb, sg in zip(projected, chain.signs):
        if np.sign(anchor_value(tube, phi, pb.placed.s0)) != sg:
            raise SignPatternBroken(f"bump at s0 = {pb.placed.s0:.4g} swamped by its neighbours")
    return GridField(tube, phi)


class Ansatz:
    """Evaluates phi_R(X) and its parameter derivatives on a fixed tube.

    ``profiles`` maps +1 and -1 to the corresponding ground states.  On open
    tubes the bump windows are clipped at the curve ends, which is where the
    tube itself carries its Dirichlet data.
    """

    def __init__(self, tube: TubeGrid, profiles: dict, half_width: float | None = None,
                 clip: bool | None = None):
        self.tube = tube
        self.profiles = {s: _check_sign(profiles.get(s) or profiles[-s], s) for s in (1, -1)}
        p = self.profiles[1]
        self.lam = p.lam
        self.nl = p.nl
        self.half_width = default_half_width(p) if half_width is None else float(half_width)
        self.clip = (not tube.curve.closed) if clip is None else clip

    def signs(self, n: int) -> tuple[int, ...]:
        return tuple(1 if i % 2 == 0 else -1 for i in range(n))

    def bump(self, t: float, sign: int, rows=None) -> ProjectedBump:
        pl = place_bump(self.profiles[sign], self.tube, t, sign, self.half_width, clip=self.clip, rows=rows)
        return project_bump(pl, with_W=False)

    def bumps(self, t, rows=None) -> list:
        rows = rows or [None] * len(t)
        return [self.bump(ti, sg, r) for ti, sg, r in zip(t, self.signs(len(t)), rows)]

    def phi(self, t, rows=None) -> np.ndarray:
        out = np.zeros(self.tube.shape)
        for pb in self.bumps(t, rows):
            out[pb.window.parent_rows] += pb.V
        return out

    def rows_of(self, t) -> list:
        return [self.bump_rows(ti) for ti in t]

    def bump_rows(self, t: float):
        s0 = anchor_arc(self.tube, t)
        return window_rows(self.tube, s0, self.half_width, clip=self.clip)[0]

    def tangent(self, t, rows=None, delta_s: float = 1e-4) -> np.ndarray:
        """Central differences d phi / d t_i with frozen window rows; (n, N) array."""
        rows = rows or self.rows_of(t)
        out = np.zeros((len(t), self.tube.size))
        curve = self.tube.curve
        for i, (ti, sg, r) in enumerate(zip(t, self.signs(len(t)), rows)):
            speed = float(np.linalg.norm(curve.d1(np.array(ti)))) * self.tube.R
            dt = delta_s / speed
            vp = self.bump(self._wrap(ti + dt), sg, r)
            vm = self.bump(self._wrap(ti - dt), sg, r)
            d = np.zeros(self.tube.shape)
            d[vp.window.parent_rows] += vp.V
            d[vm.window.parent_rows] -= vm.V
            out[i] = (d / (2 * dt)).ravel()
        return out

    def _wrap(self, t: float) -> float:
        return t % 1.0 if self.tube.curve.closed else t


# ambient-space comparison -----------------------------------------------------
def to_tube_coords(tube: TubeGrid, y: np.ndarray):
    """Arc length s in [0, length) and signed normal distance eta of points y."""
    curve = tube.curve
    R = tube.R
    y = np.asarray(y, dtype=float)
    if curve.kind == "circle":
        c = R * curve._center
        rho = R * curve._radius
        d = y - c
        ang = np.mod(np.arctan2(d[..., 1], d[..., 0]), 2 * np.pi)
        return rho * ang, rho - np.linalg.norm(d, axis=-1)
    if curve.kind == "segment":
        p0, p1 = R * curve._p0, R * curve._p1
        L = np.linalg.norm(p1 - p0)
        T = (p1 - p0) / L
        n = np.array([-T[1], T[0]])
        d = y - p0
        return d @ T, d @ n
    return _project_generic(tube, y)


def _project_generic(tube: TubeGrid, y: np.ndarray):
    curve, R = tube.curve, tube.R
    flat = y.reshape(-1, 2)
    tt = np.linspace(0, 1, 2049)
    pts = R * curve.point(tt)
    s_out = np.empty(len(flat))
    e_out = np.empty(len(flat))
    for k, q in enumerate(flat):
        t = tt[int(np.argmin(np.linalg.norm(pts - q, axis=1)))]
        for _ in range(30):
            g = R * curve.point(np.array(t)) - q
            g1 = R * curve.d1(np.array(t))
            g2 = R * curve.d2(np.array(t))
            step = np.dot(g, g1) / (np.dot(g1, g1) + np.dot(g, g2))
            t = t - step
            if curve.closed:
                t %= 1.0
            else:
                t = min(max(t, 0.0), 1.0)
            if abs(step) < 1e-14:
                break
        base = R * curve.point(np.array(t))
        s_out[k] = R * curve.arclength(t)
        e_out[k] = np.dot(q - base, curve.normal(np.array(t)))
    return s_out.reshape(y.shape[:-1]), e_out.reshape(y.shape[:-1])


def _tube_frame(tube: TubeGrid, s):
    t = tube.curve.param_at(np.asarray(s) / tube.R)
    if tube.curve.closed:
        t = np.mod(t, 1.0)
    return tube.curve.tangent(t), tube.curve.normal(t), tube.kappa_at(s)


@dataclass
class AmbientComparison:
    h1_distance: float
    l2_distance: float
    grad_distance: float
    tube_h1_distance: float


def ambient_h1_distance(pb: ProjectedBump, panels_per_unit: int = 8, order: int = 10,
                        values: np.ndarray | None = None) -> AmbientComparison:
    """H^1(R^2) distance between V (zero outside the tube window) and the
    straight placed copy U(A_x(y - x)) (zero outside the tangent strip).

    Integration runs in the straight frame (xi', eta') at the anchor,
    column by column, with Gauss-Legendre pieces split at eta' = +-1 and at
    the two tube walls, so that the gradient jumps are resolved.
    """
    pl = pb.placed
    tube = pl.tube
    prof = pl.profile
    V = pb.V if values is None else values
    win = pl.window
    # V interpolant in tube coordinates, Dirichlet rows included
    s_full = np.r_[win.x1[0] - win.h1, win.x1, win.x1[-1] + win.h1]
    eta_full = np.r_[-1.0, win.eta, 1.0]
    Vsp = RectBivariateSpline(s_full, eta_full, np.pad(V, ((1, 1), (1, 1))), kx=3, ky=3)
    Usp = prof.surface
    s_lo, s_hi = s_full[0], s_full[-1]

    t0 = pl.t
    x0 = tube.R * tube.curve.point(np.array(t0))
    T0 = tube.curve.tangent(np.array(t0))
    N0 = tube.curve.normal(np.array(t0))
    X = prof.L_xi
    xg, wg = np.polynomial.legendre.leggauss(order)
    n_pan = int(math.ceil(2 * X * panels_per_unit))
    edges = np.linspace(-X, X, n_pan + 1)
    xi_nodes = ((edges[:-1, None] + edges[1:, None]) / 2 + (edges[1:, None] - edges[:-1, None]) / 2 * xg).ravel()
    xi_w = ((edges[1:, None] - edges[:-1, None]) / 2 * wg).ravel()

    def eta_of(xi, e):
        y = x0 + xi * T0 + e * N0
        return to_tube_coords(tube, y[None, :])[1][0]

    total_l2 = total_gr = 0.0
    for xi, wx in zip(xi_nodes, xi_w):
        walls = []
        for side in (-1.0, 1.0):
            f = lambda e: eta_of(xi, e) - side  # noqa: E731
            lo, hi = side - 0.5, side + 0.5
            try:
                walls.append(brentq(f, lo, hi, xtol=1e-14))
            except ValueError:
                walls.append(side)
        bps = sorted({-1.0, 1.0, walls[0], walls[1]})
        e_nodes, e_w = [], []
        for a, b in zip(bps[:-1], bps[1:]):
            if b - a < 1e-15:
                continue
            e_nodes.append((a + b) / 2 + (b - a) / 2 * xg)
            e_w.append((b - a) / 2 * wg)
        e_nodes = np.concatenate(e_nodes)
        e_w = np.concatenate(e_w)
        y = x0 + xi * T0 + e_nodes[:, None] * N0
        # straight copy
        inside_u = (np.abs(e_nodes) < 1.0) & (abs(xi) < X)
        u = np.where(inside_u, Usp.ev(np.full_like(e_nodes, xi), e_nodes), 0.0)
        ux = np.where(inside_u, Usp.ev(np.full_like(e_nodes, xi), e_nodes, dx=1), 0.0)
        ue = np.where(inside_u, Usp.ev(np.full_like(e_nodes, xi), e_nodes, dy=1), 0.0)
        gu = ux[:, None] * T0 + ue[:, None] * N0
        # projected bump
        s, eta = to_tube_coords(tube, y)
        if tube.periodic:
            s = pl.s0 + (s - pl.s0 + tube.length / 2) % tube.length - tube.length / 2
        inside_v = (np.abs(eta) < 1.0) & (s > s_lo) & (s < s_hi)
        v = np.where(inside_v, Vsp.ev(s, eta), 0.0)
        vs = np.where(inside_v, Vsp.ev(s, eta, dx=1), 0.0)
        ve = np.where(inside_v, Vsp.ev(s, eta, dy=1), 0.0)
        Ts, Ns, kap = _tube_frame(tube, s)
        J = 1.0 - kap * eta / tube.R
        gv = (vs / J)[:, None] * Ts + ve[:, None] * Ns
        total_l2 += wx * np.sum(e_w * (v - u) ** 2)
        total_gr += wx * np.sum(e_w * np.sum((gv - gu) ** 2, axis=1))
    diff = V - pl.values
    tube_h1 = math.sqrt(win.kinetic(diff) + win.integrate(diff * diff))
    return AmbientComparison(math.sqrt(total_l2 + total_gr), math.sqrt(total_l2), math.sqrt(total_gr), tube_h1)
