"""Energy, a-gradient, interactions, the normal-space reduction and chain minimization."""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.optimize import minimize

from .ansatz import Ansatz, ProjectedBump
from .discrete import Grid, GridField, _vals
from .errors import (
    ContractionFailure,
    IndefiniteOperator,
    LeftTrustRegion,
    StuckOnBoundary,
)
from .geometry import SeparationScales, chain_admissible, chain_from_params

TOL_REDUCE = 1e-8


# energy and gradient ----------------------------------------------------------
def energy(u, grid: Grid, lam: float, nl) -> float:
    """J(u) = 1/2 int (|grad u|^2 + lam u^2) - int F(u) (grid quadrature)."""
    v = _vals(u)
    return 0.5 * grid.a_inner(v, v, lam) - grid.integrate(nl.F(v))


def energy_parts(u, grid: Grid, lam: float, nl) -> dict:
    v = _vals(u)
    kin = grid.kinetic(v)
    mass = grid.integrate(v * v)
    pot = grid.integrate(nl.F(v))
    return {"kinetic": 0.5 * kin, "mass": 0.5 * lam * mass, "potential": pot,
            "J": 0.5 * (kin + lam * mass) - pot}


def gradient(u, grid: Grid, lam: float, nl) -> GridField:
    """a-Riesz representative of DJ(u): g = u - (K + lam M)^-1 M f(u)."""
    v = _vals(u)
    if lam <= -math.pi**2 / 4:
        raise IndefiniteOperator("a is not positive definite for lambda <= -pi^2/4")
    if not v.any():
        return grid.zeros()
    q = grid.factor(lam).solve(grid.mass * nl.f(v).ravel())
    return GridField(grid, v - q.reshape(grid.shape))


def gradient_norm(u, grid: Grid, lam: float, nl) -> float:
    """||grad J(u)||_a computed from the residual: sqrt(rho^T K_lam^-1 rho)."""
    v = _vals(u).ravel()
    rho = grid.operator(lam) @ v - grid.mass * nl.f(v)
    if not rho.any():
        return 0.0
    q = grid.factor(lam).solve(rho)
    return math.sqrt(max(float(rho @ q), 0.0))


def hessian_apply(u, z, grid: Grid, lam: float, nl) -> np.ndarray:
    """a-representative of D^2 J(u)[z]: z - (K + lam M)^-1 M f'(u) z."""
    v = _vals(u).ravel()
    zz = _vals(z).ravel()
    q = grid.factor(lam).solve(grid.mass * nl.df(v) * zz)
    return (zz - q).reshape(grid.shape)


# interactions -------------------------------------------------------------------
def _bump_full(bump, grid: Grid | None = None) -> tuple[np.ndarray, Grid]:
    """Values of a placed/projected bump (or a plain field) on its parent grid."""
    if isinstance(bump, ProjectedBump):
        return bump.placed.tube.embed(bump.placed.values, bump.window), bump.placed.tube
    if hasattr(bump, "embedded") and hasattr(bump, "tube"):
        return bump.embedded(), bump.tube
    if isinstance(bump, GridField):
        return bump.values, bump.grid
    return np.asarray(bump, dtype=float), grid


def interaction_integral(bump_i, bump_j, nl, grid: Grid | None = None) -> float:
    """I_ij = int f(U_i) U_j over the common grid."""
    ui, g = _bump_full(bump_i, grid)
    uj, _ = _bump_full(bump_j, grid)
    g = g or grid
    return g.integrate(nl.f(ui) * uj)


def cross_energy(vi, vj, grid: Grid, lam: float, nl) -> float:
    """J(vi + vj) - J(vi) - J(vj) without forming the large energies."""
    a = _vals(vi)
    b = _vals(vj)
    dF = nl.F(a + b) - nl.F(a) - nl.F(b)
    return grid.a_inner(a, b, lam) - grid.integrate(dF)


def chain_reference_energy(n: int, closed: bool, e_plus: float, e_minus: float) -> float:
    """E_n = k (J(U+) + J(U-)) + (n - 2k) J(U+)."""
    k = n // 2
    return k * (e_plus + e_minus) + (n - 2 * k) * e_plus


# reduction ------------------------------------------------------------------------
@dataclass
class ReductionResult:
    t: tuple
    u: np.ndarray = field(repr=False)
    v: np.ndarray = field(repr=False)
    tangent: np.ndarray = field(repr=False)
    history: list
    step_norms: list
    contraction: float
    iterations: int
    J_phi: float
    G_R: float
    grad_norm: float
    projected_grad_norm: float
    w_norm: float
    phi_norm: float
    trust_radius: float
    orthonormality_error: float
    runtime: float

    @property
    def relative_correction(self) -> float:
        return self.w_norm / self.phi_norm if self.phi_norm else 0.0

    @property
    def gap(self) -> float:
        return abs(self.J_phi - self.G_R)


def a_orthonormalize(T: np.ndarray, K: sp.spmatrix) -> tuple[np.ndarray, float]:
    """Rows of T orthonormalized in the a-product; returns basis and the
    largest deviation of the resulting Gram matrix from the identity."""
    if T.shape[0] == 0:
        return T, 0.0
    G = T @ (K @ T.T)
    L = np.linalg.cholesky(0.5 * (G + G.T))
    Q = np.linalg.solve(L, T)
    # one re-orthonormalization pass for accuracy
    G2 = Q @ (K @ Q.T)
    L2 = np.linalg.cholesky(0.5 * (G2 + G2.T))
    Q = np.linalg.solve(L2, Q)
    err = float(np.max(np.abs(Q @ (K @ Q.T) - np.eye(T.shape[0]))))
    return Q, err


def normal_refine(ansatz: Ansatz, t, tol: float = TOL_REDUCE, max_iter: int = 200,
                  trust_radius: float | None = None, delta_s: float = 1e-4) -> ReductionResult:
    """Solve P_perp grad J(phi + w) = 0 for w a-orthogonal to the tangent space.

    Iterates w <- w - L^-1 P_perp grad J(phi + w) with L the normal-space
    Hessian frozen at phi.  L^-1 is applied through a sparse LU of the
    bordered system [[H, -K T], [-(K T)^T, 0]], H = K_lam - M f'(phi).
    """
    t0 = time.perf_counter()
    t = tuple(float(x) for x in t)
    tube = ansatz.tube
    lam, nl = ansatz.lam, ansatz.nl
    N = tube.size
    n = len(t)
    K = tube.operator(lam)
    luK = tube.factor(lam)
    mass = tube.mass
    if trust_radius is None:
        trust_radius = 0.5 * ansatz.profiles[1].a_norm
    if n == 0:
        z = np.zeros(tube.shape)
        return ReductionResult(t, z, z, np.zeros((0, N)), [0.0], [], 0.0, 0, 0.0, 0.0, 0.0, 0.0,
                               0.0, 0.0, trust_radius, 0.0, time.perf_counter() - t0)
    rows = ansatz.rows_of(t)
    u = ansatz.phi(t, rows).ravel()
    T, ortho = a_orthonormalize(ansatz.tangent(t, rows, delta_s=delta_s), K)
    KT = (K @ T.T)  # N x n

    H = (K - sp.diags(mass * nl.df(u))).tocsc()
    B = sp.bmat([[H, sp.csc_matrix(-KT)], [sp.csc_matrix(-KT.T), None]], format="csc")
    luB = spla.splu(B, permc_spec="MMD_AT_PLUS_A")

    def projected(w):
        x = u + w
        rho = K @ x - mass * nl.f(x)
        q = luK.solve(rho)
        r = q - T.T @ (T @ rho)
        return rho, math.sqrt(max(float(r @ (K @ r)), 0.0))

    def a_norm(x):
        return math.sqrt(max(float(x @ (K @ x)), 0.0))

    grad_phi = math.sqrt(max(float(np.dot(K @ u - mass * nl.f(u), luK.solve(K @ u - mass * nl.f(u)))), 0.0))
    w = np.zeros(N)
    rho, pg = projected(w)
    history = [pg]
    steps: list = []
    factors: list = []
    it = 0
    while pg > tol:
        if it >= max_iter:
            raise ContractionFailure(f"no convergence in {max_iter} iterations (|P grad| = {pg:.3g})")
        sol = luB.solve(np.r_[rho, np.zeros(n)])
        z = sol[:N]
        w = w - z
        it += 1
        zn = a_norm(z)
        if steps:
            factors.append(zn / steps[-1] if steps[-1] > 0 else 0.0)
            if factors[-1] >= 1.0 and pg > 1e3 * tol:
                raise ContractionFailure(f"contraction factor {factors[-1]:.3g} >= 1 at iteration {it}")
        steps.append(zn)
        wn = a_norm(w)
        if wn > trust_radius:
            raise LeftTrustRegion(f"||w||_a = {wn:.3g} exceeds the trust radius {trust_radius:.3g}")
        rho, pg = projected(w)
        history.append(pg)
        if not np.isfinite(pg):
            raise ContractionFailure("iteration produced non-finite values")
    v = u + w
    J_phi = energy(u.reshape(tube.shape), tube, lam, nl)
    G = energy(v.reshape(tube.shape), tube, lam, nl)
    contraction = max(factors) if factors else 0.0
    return ReductionResult(t, u.reshape(tube.shape), v.reshape(tube.shape), T, history, steps, contraction, it,
                           J_phi, G, grad_phi, history[-1], a_norm(w), a_norm(u), trust_radius, ortho,
                           time.perf_counter() - t0)


@dataclass
class EnergyReport:
    R: float
    n: int
    E_n: float
    J_phi: float
    G_R: float | None
    kinetic: float
    potential: float
    interactions: np.ndarray = field(repr=False)
    remainder: float
    grad_norm: float
    gap: float | None

    @property
    def max_interaction(self) -> float:
        I = self.interactions
        off = I[~np.eye(len(I), dtype=bool)] if len(I) > 1 else np.zeros(0)
        return float(np.max(np.abs(off))) if off.size else 0.0

    def row(self) -> list:
        return [self.R, self.n, self.E_n, self.J_phi, self.G_R if self.G_R is not None else float("nan"),
                self.remainder, self.grad_norm]


ENERGY_HEADER = ["R", "n", "E_n", "J_phi", "G_R", "remainder", "grad_norm"]


def normal_min_eigenvalue(ansatz: Ansatz, result: ReductionResult) -> float:
    """Smallest |theta| of the normal-space Hessian: K^-1 H z = theta z on T^perp.

    Bounds the inverse of L_{u,R} (||L^-1||_a = 1 / |theta|).  The bordered
    solve gives (P S P)^-1 P, which is a-selfadjoint, so its largest
    eigenvalue in modulus is found by Lanczos in the pencil (K C, K).
    """
    tube = ansatz.tube
    T = result.tangent
    n = T.shape[0]
    if n == 0:
        return 1.0
    N = tube.size
    K = tube.operator(ansatz.lam)
    luK = tube.factor(ansatz.lam)
    u = result.u.ravel()
    KT = K @ T.T
    H = (K - sp.diags(tube.mass * ansatz.nl.df(u))).tocsc()
    B = sp.bmat([[H, sp.csc_matrix(-KT)], [sp.csc_matrix(-KT.T), None]], format="csc")
    luB = spla.splu(B, permc_spec="MMD_AT_PLUS_A")

    def kc(b):
        return K @ luB.solve(np.r_[K @ b, np.zeros(n)])[:N]

    A = spla.LinearOperator((N, N), matvec=kc, dtype=float)
    Minv = spla.LinearOperator((N, N), matvec=luK.solve, dtype=float)
    v0 = np.ones(N)
    nu = spla.eigsh(A, k=1, M=K, Minv=Minv, which="LM", v0=v0, return_eigenvectors=False, tol=1e-8)
    return float(1.0 / abs(nu[0]))


def energy_report(ansatz: Ansatz, t, refine: bool = True, result: ReductionResult | None = None) -> EnergyReport:
    """Energy bookkeeping of phi_R(X) and, with ``refine``, of v_u."""
    tube = ansatz.tube
    lam, nl = ansatz.lam, ansatz.nl
    t = tuple(t)
    n = len(t)
    e_plus = ansatz.profiles[1].energy
    e_minus = ansatz.profiles[-1].energy
    E_n = chain_reference_energy(n, tube.curve.closed, e_plus, e_minus)
    if n == 0:
        return EnergyReport(tube.R, 0, 0.0, 0.0, 0.0, 0.0, 0.0, np.zeros((0, 0)), 0.0, 0.0, 0.0)
    if refine and result is None:
        result = normal_refine(ansatz, t)
    rows = ansatz.rows_of(t)
    bumps = ansatz.bumps(t, rows)
    phi = result.u if result is not None else ansatz.phi(t, rows)
    placed = [tube.embed(b.placed.values, b.window) for b in bumps]
    I = np.array([[tube.integrate(nl.f(pi) * pj) for pj in placed] for pi in placed])
    parts = energy_parts(phi, tube, lam, nl)
    off = I.sum() - np.trace(I)
    remainder = parts["J"] - (E_n - 0.5 * off)
    grad = result.grad_norm if result is not None else gradient_norm(phi, tube, lam, nl)
    G = result.G_R if result is not None else None
    gap = result.gap if result is not None else None
    return EnergyReport(tube.R, n, E_n, parts["J"], G, parts["kinetic"] + parts["mass"], parts["potential"],
                        I, remainder, grad, gap)


def reduced_energy(ansatz: Ansatz, t, tol: float = TOL_REDUCE) -> tuple[float, EnergyReport, ReductionResult]:
    """G_R(phi_R(X)) = J(v_u) with the full energy report."""
    res = normal_refine(ansatz, t, tol=tol)
    rep = energy_report(ansatz, t, result=res)
    return res.G_R, rep, res


# interaction model for the minimization ---------------------------------------
@dataclass(frozen=True)
class InteractionModel:
    """Leading-order excess energy of a chain over E_n.

    pair terms  beta * sigma_ij * exp(-mu d_ij)   (sigma = +1 for opposite signs)
    end terms   c_end * (exp(-2 mu a_i) + exp(-2 mu b_i))   (open curves)

    d_ij is the distance along the expanded curve (both ways round on closed
    curves), a_i and b_i the arc distances to the ends.  ``beta`` and
    ``c_end`` are fitted from field computations by :func:`calibrate_interactions`.
    """

    mu: float
    beta: float
    c_end: float
    beta_rate: float | None = None
    end_rate: float | None = None

    def excess(self, s: np.ndarray, signs, length: float, closed: bool) -> float:
        s = np.asarray(s, dtype=float)
        n = len(s)
        total = 0.0
        for i in range(n):
            for j in range(i + 1, n):
                d = abs(s[j] - s[i])
                sig = 1.0 if signs[i] != signs[j] else -1.0
                if closed:
                    d = d % length
                    total += sig * self.beta * (math.exp(-self.mu * d) + math.exp(-self.mu * (length - d)))
                else:
                    total += sig * self.beta * math.exp(-self.mu * d)
        if not closed:
            for si in s:
                total += self.c_end * (math.exp(-2 * self.mu * si) + math.exp(-2 * self.mu * (length - si)))
        return total


def calibrate_interactions(profiles: dict, h: float | None = None, distances=(4.0, 5.0, 6.0, 7.0),
                           end_distances=(2.0, 2.5, 3.0, 3.5, 4.0), half_width: float | None = None,
                           R: float = 60.0) -> InteractionModel:
    """Fit the amplitudes of the pair and end interaction laws on a straight tube.

    Pair: cross energies J(V1 + V2) - J(V1) - J(V2) of a (+, -) pair at
    distance d.  End: J(V_a) - J(V_mid) for a bump at distance a from an end.
    The rates are fixed at mu and 2 mu; the fitted free rates are stored for
    diagnostics.
    """
    from .discrete import build_tube_grid
    from .geometry import make_curve

    pp = profiles[1]
    mu = pp.mu
    seg = make_curve("segment", start=(0.0, 0.0), end=(1.0, 0.0))
    tube = build_tube_grid(seg, R, h or pp.h)
    # the partner bump must cover the peak of the other one
    if half_width is None:
        half_width = pp.L_xi - 1.0
    if max(distances) > half_width:
        raise ValueError("calibration distances must not exceed the window half-width")
    anz = Ansatz(tube, profiles, half_width=half_width, clip=True)
    mid = 0.5 * R
    cross = []
    for d in distances:
        b1 = anz.bump((mid - d / 2) / R, 1)
        b2 = anz.bump((mid + d / 2) / R, -1)
        cross.append(cross_energy(b1.embedded(), b2.embedded(), tube, pp.lam, pp.nl))
    cross = np.array(cross)
    d = np.asarray(distances)
    beta = float(np.exp(np.mean(np.log(cross) + mu * d)))
    beta_rate = -float(np.polyfit(d, np.log(cross), 1)[0])
    ref = energy(anz.bump(0.5, 1).embedded(), tube, pp.lam, pp.nl)
    ends = []
    for a in end_distances:
        ends.append(energy(anz.bump(a / R, 1).embedded(), tube, pp.lam, pp.nl) - ref)
    ends = np.array(ends)
    a = np.asarray(end_distances)
    c_end = float(np.exp(np.mean(np.log(ends) + 2 * mu * a)))
    end_rate = -float(np.polyfit(a, np.log(ends), 1)[0])
    return InteractionModel(mu, beta, c_end, beta_rate, end_rate)


# minimization --------------------------------------------------------------------
@dataclass
class MinimizationResult:
    chain: object
    t: tuple
    objective: float
    trace: list
    header: list
    nfev: int
    converged: bool
    margin: float
    G_R: float | None = None
    report: EnergyReport | None = None
    reduction: ReductionResult | None = None


def _chain_slack(curve, R, t, g1):
    ch = chain_from_params(curve, R, t)
    return ch, chain_admissible(ch, g1)


def minimize_chain(ansatz: Ansatz, initial, scales: SeparationScales, model: InteractionModel | None = None,
                   objective: str = "model", xatol: float = 1e-5, max_iter: int = 20000,
                   barrier: float = 1e3, rescore: bool = True, boundary_tol: float = 1e-4) -> MinimizationResult:
    """Nelder-Mead over (t_1, ..., t_n) with the penalty barrier*max(0, g1 - sep)^2.

    ``objective="model"`` minimizes the interaction model (excess energy over
    E_n); ``objective="field"`` evaluates J(phi_R(X)) on the grid.  The final
    chain is re-scored with the reduced energy G_R when ``rescore`` is set.
    """
    tube = ansatz.tube
    curve = tube.curve
    R = tube.R
    closed = curve.closed
    g1 = scales.g1(R)
    t_init = tuple(initial.t) if hasattr(initial, "t") else tuple(initial)
    n = len(t_init)
    ch0, adm0 = _chain_slack(curve, R, t_init, g1)
    if not adm0.admissible:
        raise ValueError(f"initial chain not inside the admissible set (margin {adm0.margin:.3g})")
    signs = ch0.signs
    length = tube.length
    if objective == "model" and model is None:
        model = calibrate_interactions(ansatz.profiles)
    e_ref = chain_reference_energy(n, closed, ansatz.profiles[1].energy, ansatz.profiles[-1].energy)

    # closed curves: work with unwrapped parameters relative to t_1
    base = np.array(t_init, dtype=float)
    if closed:
        base = base.copy()
        for i in range(1, n):
            while base[i] <= base[i - 1]:
                base[i] += 1.0
    trace: list = []

    def params(x):
        x = np.asarray(x, dtype=float)
        if closed:
            return tuple(float(v % 1.0) for v in x)
        return tuple(float(v) for v in x)

    def penalty_and_chain(x):
        x = np.asarray(x, dtype=float)
        pen = 0.0
        if closed:
            gaps = np.diff(np.r_[x, x[0] + 1.0])
            if np.any(gaps <= 0):
                return None, 1e6 * (1.0 + float(np.sum(np.maximum(-gaps, 0.0)))), -math.inf
        else:
            ext = np.r_[0.0, x, 1.0]
            if np.any(np.diff(ext) <= 0):
                return None, 1e6 * (1.0 + float(np.sum(np.maximum(-np.diff(ext), 0.0)))), -math.inf
        ch = chain_from_params(curve, R, params(x))
        rep = chain_admissible(ch, g1)
        if ch.n > 1:
            pen += barrier * max(0.0, g1 - ch.min_separation()) ** 2
        if not closed and ch.boundary_distances is not None and ch.n:
            pen += barrier * max(0.0, g1 - 2 * float(np.min(ch.boundary_distances))) ** 2
        return ch, pen, rep.margin

    def value(x):
        ch, pen, margin = penalty_and_chain(x)
        if ch is None:
            return pen, math.nan, math.nan, math.nan
        x = np.asarray(x, dtype=float)
        if objective == "model":
            whole = np.floor(x)
            s = R * (curve.arclength(x - whole) + whole * curve.length)
            obj = model.excess(s, signs, length, closed)
            J = e_ref + obj
        else:
            J = energy(ansatz.phi(params(x)), tube, ansatz.lam, ansatz.nl)
            obj = J
        bd = float(np.min(ch.boundary_distances)) if (ch.boundary_distances is not None and ch.n) else math.inf
        return obj + pen, J, ch.min_separation(), bd

    def fun(x):
        f, J, sep, bd = value(x)
        trace.append([len(trace), *params(x), J, sep, bd, f])
        return f

    x0 = base
    simplex = [x0]
    step = 0.02 if n <= 2 else 0.01
    for i in range(n):
        e = x0.copy()
        e[i] += step
        simplex.append(e)
    res = minimize(fun, x0, method="Nelder-Mead",
                   options={"xatol": xatol, "fatol": math.inf, "maxiter": max_iter, "maxfev": max_iter,
                            "initial_simplex": np.array(simplex)})
    # one restart from the best point removes premature simplex collapse
    res = minimize(fun, res.x, method="Nelder-Mead",
                   options={"xatol": xatol, "fatol": math.inf, "maxiter": max_iter, "maxfev": max_iter})
    t_best = params(res.x)
    ch, adm = _chain_slack(curve, R, t_best, g1)
    header = ["iter", *[f"t{i + 1}" for i in range(n)], "J_phi", "min_sep", "boundary_dist", "excess"]
    out = MinimizationResult(ch, t_best, float(res.fun), trace, header, int(res.nfev), bool(res.success), adm.margin)
    if adm.margin < boundary_tol:
        raise StuckOnBoundary(f"minimizer within {adm.margin:.3g} of the admissibility boundary")
    if rescore:
        G, rep, red = reduced_energy(ansatz, t_best)
        out.G_R, out.report, out.reduction = G, rep, red
    return out


def grid_search_gap(model: InteractionModel, R: float, length: float, step: float = 1e-3) -> float:
    """Oracle for two bumps on a closed curve: best t2 - t1 on a uniform grid."""
    gaps = np.arange(step, 1.0, step)
    vals = [model.excess(np.array([0.0, g * length]), (1, -1), length, True) for g in gaps]
    return float(gaps[int(np.argmin(vals))])
