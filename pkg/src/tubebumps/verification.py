"""Property checks with quantitative targets, one record per check.

Every check returns a :class:`CheckRecord`; :func:`verify` runs them all and
writes ``verification.csv`` plus a plain-text summary.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.optimize import minimize

from .ansatz import Ansatz, ambient_h1_distance
from .config import RunConfig
from .discrete import build_tube_grid, cross_section_eigenvalue, strip_spectrum_bottom
from .errors import TubeBumpsError
from .geometry import (
    ball_difference_area_exact,
    ball_difference_volume,
    chain_from_params,
    fermat_point,
    make_curve,
)
from .io_utils import atomic_write_text, write_csv
from .pipeline import loglog_slope, run_pipeline, separation_scales, solve_profiles
from .profile import (
    check_nondegeneracy,
    decay_rate,
    h1_norm,
    solve_ground_state,
    truncated_projection,
)
from .reduction import (
    calibrate_interactions,
    cross_energy,
    energy,
    grid_search_gap,
    interaction_integral,
    normal_refine,
)

SPECTRUM_TOL = 0.0055
DECAY_TOL = 0.03
NONDEG_EPS = 1e-2
NONDEG_COS = 0.999
NONDEG_GAP = 0.1
FERMAT_TOL = 1e-7
SEMIPERIMETER_TOL = 1e-9
RATE_TOL = 0.05
PROJECTION_SLOPE = (-0.8, -0.3)
REDUCTION_TOL = 1e-8
GAP_FACTOR = 2.0
ANTIPODAL_TOL = 5e-3
SAFETY = 1.1


@dataclass
class CheckRecord:
    id: str
    status: str
    measured: float
    target: str
    tolerance: str
    runtime: float
    detail: str = ""

    @property
    def passed(self) -> bool:
        return self.status == "pass"

    def line(self) -> str:
        return (f"{self.id}: {self.status.upper()} measured={self.measured:.6g} target={self.target} "
                f"tol={self.tolerance} ({self.runtime:.1f}s) {self.detail}").rstrip()


@dataclass
class VerificationReport:
    records: list = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.records)

    def __getitem__(self, cid: str) -> CheckRecord:
        for r in self.records:
            if r.id == cid:
                return r
        raise KeyError(cid)

    def summary(self) -> str:
        n_pass = sum(r.passed for r in self.records)
        lines = [r.line() for r in self.records]
        lines.append(f"{n_pass}/{len(self.records)} checks passed")
        return "\n".join(lines) + "\n"

    def write(self, out_dir) -> tuple[Path, Path]:
        out = Path(out_dir)
        csv = out / "verification.csv"
        write_csv(csv, ["id", "status", "measured", "target", "tolerance", "runtime", "detail"],
                  [[r.id, r.status, r.measured, r.target, r.tolerance, r.runtime, r.detail.replace(",", ";")]
                   for r in self.records])
        txt = out / "verification.txt"
        atomic_write_text(txt, self.summary())
        return csv, txt


def _record(cid, ok, measured, target, tol, t0, detail=""):
    return CheckRecord(cid, "pass" if ok else "fail", float(measured), str(target), str(tol),
                       time.perf_counter() - t0, detail)


def _rel(a, b):
    return abs(a - b) / abs(b)


def _profiles(cfg: RunConfig, cache: dict | None, L_xi: float | None = None, h: float | None = None) -> dict:
    key = (L_xi, h)
    if cache is not None and key in cache:
        return cache[key]
    c = cfg.with_(L_xi=L_xi if L_xi is not None else cfg.L_xi, h=h if h is not None else cfg.h)
    prof = solve_profiles(c)
    if cache is not None:
        cache[key] = prof
    return prof


# limit problem ---------------------------------------------------------------
def check_strip_spectrum(cfg: RunConfig, L_xi: float = 10.0) -> CheckRecord:
    """Bottom of the discrete strip spectrum against pi^2/4, monotone in h."""
    t0 = time.perf_counter()
    target = math.pi ** 2 / 4
    hc = cfg.check_spectrum_h
    ladder = [5 * hc, 2.5 * hc, hc]
    vals = [strip_spectrum_bottom(h, L_xi, "periodic") for h in ladder]
    errs = [_rel(v, target) for v in vals]
    monotone = all(b < a for a, b in zip(errs, errs[1:]))
    exact = abs(vals[-1] - cross_section_eigenvalue(hc)) < 1e-8
    ok = errs[-1] <= SPECTRUM_TOL and monotone
    detail = (f"h={hc:g} lambda1={vals[-1]:.7f} rel_err={errs[-1]:.3g} gap_to_tol={errs[-1] - SPECTRUM_TOL:+.3g}; "
              f"ladder h={ladder} errors={[f'{e:.3g}' for e in errs]} monotone={monotone} "
              f"matches_closed_form={exact}")
    return _record("strip-spectrum", ok, vals[-1], f"{target:.6f}", f"rel {SPECTRUM_TOL}", t0, detail)


def check_decay_rate(cfg: RunConfig, cache: dict | None = None) -> CheckRecord:
    t0 = time.perf_counter()
    p = _profiles(cfg, cache)[1]
    fit = decay_rate(p, cfg.fit_window)
    fine = solve_ground_state(p.nl, cfg.lam, 1, h=cfg.h / 2, L_xi=p.L_xi)
    fit2 = decay_rate(fine, cfg.fit_window)
    ok = fit.rel_error <= DECAY_TOL and fit2.rel_error < fit.rel_error
    detail = (f"mu={p.mu:.7f} mu_fit(h)={fit.mu_fit:.7f} err={fit.rel_error:.3g} "
              f"mu_fit(h/2)={fit2.mu_fit:.7f} err={fit2.rel_error:.3g}")
    return _record("decay-rate", ok, fit.mu_fit, f"{p.mu:.6f}", f"rel {DECAY_TOL}; improves under h/2", t0, detail)


def check_nondegeneracy_record(cfg: RunConfig, cache: dict | None = None) -> CheckRecord:
    t0 = time.perf_counter()
    eps = cfg.eps0 if cfg.eps0 is not None else NONDEG_EPS
    oks, parts, worst_cos = [], [], 1.0
    for sign in (1, -1):
        prof = _profiles(cfg, cache)[sign]
        try:
            rep = check_nondegeneracy(prof, eps0=eps)
        except TubeBumpsError as exc:
            oks.append(False)
            parts.append(f"U{'+' if sign > 0 else '-'}: {exc}")
            continue
        ok = rep.kernel_dimension == 1 and rep.cosine >= NONDEG_COS and rep.gap >= NONDEG_GAP
        oks.append(ok)
        worst_cos = min(worst_cos, rep.cosine)
        parts.append(f"U{'+' if sign > 0 else '-'}: theta={[f'{x:.4g}' for x in rep.eigenvalues]} "
                     f"near_zero={len(rep.near_zero)} cos={rep.cosine:.7f} next={rep.gap:.4g}")
    return _record("nondegeneracy", all(oks), worst_cos, f"one eigenvalue in (-{eps:g}, {eps:g})",
                   f"cos >= {NONDEG_COS}; next >= {NONDEG_GAP}", t0, "; ".join(parts))


# geometric and algebraic oracles ---------------------------------------------
def _random_triangle(rng, obtuse: bool):
    if obtuse:
        ang = rng.uniform(2 * math.pi / 3, 0.97 * math.pi)
        a, b = rng.uniform(0.2, 5.0, 2)
        rot = rng.uniform(0, 2 * math.pi)
        x1 = rng.uniform(-5, 5, 2)
        u1 = np.array([math.cos(rot), math.sin(rot)])
        u2 = np.array([math.cos(rot + ang), math.sin(rot + ang)])
        return x1, x1 + a * u1, x1 + b * u2
    return tuple(rng.uniform(-5, 5, 2) for _ in range(3))


def _sides(x1, x2, x3):
    return sorted([np.linalg.norm(x2 - x3), np.linalg.norm(x1 - x3), np.linalg.norm(x1 - x2)])


def check_geometric_oracles(cfg: RunConfig, n_triangles: int = 1000, n_balls: int = 500,
                            samples: int = 100_000) -> CheckRecord:
    """Fermat-point facts on random triangles and the ball-difference bound."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(cfg.seed)
    # obtuse triangles: s = v + w, and no point does better than the vertex
    err_a, undercut = 0.0, 0.0
    for _ in range(n_triangles):
        x1, x2, x3 = _random_triangle(rng, True)
        w, v, _u = _sides(x1, x2, x3)
        _, s = fermat_point(x1, x2, x3)
        err_a = max(err_a, abs(s - (v + w)))
        pts = np.array([x1, x2, x3])
        res = minimize(lambda x: float(np.sum(np.linalg.norm(pts - x, axis=1))), pts.mean(axis=0),
                       method="Nelder-Mead", options={"xatol": 1e-12, "fatol": 1e-14, "maxiter": 4000})
        undercut = max(undercut, (v + w) - res.fun)
    # generic triangles: s >= semiperimeter
    worst_b = math.inf
    for _ in range(n_triangles):
        x1, x2, x3 = _random_triangle(rng, False)
        _, s = fermat_point(x1, x2, x3)
        worst_b = min(worst_b, s - 0.5 * sum(_sides(x1, x2, x3)))
    # ball difference: calibrate C on one sweep, check it on a fresh sweep
    def configs(k):
        out = []
        for _ in range(k):
            d = rng.uniform(0.0, 1.0)
            r = rng.uniform(1.0, 1.0 + d)
            phi = rng.uniform(0, 2 * math.pi)
            out.append((d, r, np.array([d * math.cos(phi), d * math.sin(phi)]), int(rng.integers(2**31))))
        return out

    def estimates(cs):
        return [(ball_difference_volume(np.zeros(2), x2, r, 2, samples, seed), d, r) for d, r, x2, seed in cs]

    calib = estimates(configs(n_balls))
    C = SAFETY * max(e.ci_high / (d + r - 1) for e, d, r in calib if d + r - 1 > 0)
    fresh = estimates(configs(n_balls))
    viol = sum(e.ci_low > C * (d + r - 1) for e, d, r in fresh)
    covered = sum(e.contains(ball_difference_area_exact(d, r)) for e, d, r in calib + fresh) / (2 * n_balls)
    ok = err_a <= FERMAT_TOL and undercut <= FERMAT_TOL and worst_b >= -SEMIPERIMETER_TOL and viol == 0
    detail = (f"obtuse max|s-(v+w)|={err_a:.3g} nm_undercut={undercut:.3g}; "
              f"min(s-semiperimeter)={worst_b:.4g}; ball C={C:.4f} violations={viol}/{n_balls} "
              f"exact_in_99ci={covered:.3f}")
    return _record("geometric-oracles", ok, max(err_a, undercut), "0", f"{FERMAT_TOL}; {SEMIPERIMETER_TOL}; 0 violations",
                   t0, detail)


def splitting_sides(nl, u: np.ndarray, alpha: float):
    """Left and right sides (without constant) of both splitting inequalities.

    ``u`` has shape (m, n).  Returns (lhs1, rhs1, lhs2, rhs2) arrays of length m.
    """
    u = np.asarray(u, dtype=float)
    n = u.shape[1]
    S = u.sum(axis=1)
    fu = nl.f(u)
    lhs1 = np.abs(nl.f(S) - fu.sum(axis=1))
    cross = fu.sum(axis=1) * S - np.sum(fu * u, axis=1)  # sum_{i != j} f(u_i) u_j
    lhs2 = np.abs(nl.F(S) - nl.F(u).sum(axis=1) - cross)
    rhs1 = np.zeros(len(u))
    rhs2 = np.zeros(len(u))
    for i in range(n):
        for j in range(i + 1, n):
            pij = np.abs(u[:, i] * u[:, j])
            rhs1 += pij ** alpha
            rhs2 += pij ** (2 * alpha)
            for k in range(j + 1, n):
                rhs2 += np.abs(u[:, i] * u[:, j] * u[:, k]) ** (2.0 / 3.0)
    return lhs1, rhs1, lhs2, rhs2


def _ratio_max(nl, alpha, n, rng, m, which):
    """Largest lhs/rhs over random tuples, the {-1,0,1}^n corners and local ascent."""
    pts = np.vstack([rng.uniform(-1, 1, (m, n)),
                     np.array(np.meshgrid(*[[-1.0, 0.0, 1.0]] * n)).reshape(n, -1).T])

    def ratio(u):
        l1, r1, l2, r2 = splitting_sides(nl, np.atleast_2d(u), alpha)
        lhs, rhs = (l1, r1) if which == 1 else (l2, r2)
        return np.where(rhs > 0, lhs / np.where(rhs > 0, rhs, 1.0), 0.0)

    r = ratio(pts)
    best = float(r.max())
    for k in np.argsort(r)[-10:]:
        res = minimize(lambda x: -float(ratio(np.clip(x, -1, 1))[0]), pts[k], method="Nelder-Mead",
                       options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 2000})
        best = max(best, -float(res.fun))
    return best


def check_splitting(cfg: RunConfig, n_values=(2, 3, 4), samples: int = 100_000, calib: int = 20_000) -> CheckRecord:
    """Both splitting inequalities with one calibrated constant per (n, inequality)."""
    t0 = time.perf_counter()
    nl = cfg.nonlinearity_spec()
    alpha = nl.alpha
    rng = np.random.default_rng(cfg.seed + 1)
    viol, parts = 0, []
    for n in n_values:
        C1 = SAFETY * _ratio_max(nl, alpha, n, rng, calib, 1)
        C2 = SAFETY * _ratio_max(nl, alpha, n, rng, calib, 2)
        u = rng.uniform(-1, 1, (samples, n))
        l1, r1, l2, r2 = splitting_sides(nl, u, alpha)
        v1 = int(np.count_nonzero(l1 > C1 * r1 + 1e-14))
        v2 = int(np.count_nonzero(l2 > C2 * r2 + 1e-14))
        viol += v1 + v2
        parts.append(f"n={n}: C_f={C1:.4g} viol={v1} C_F={C2:.4g} viol={v2}")
    return _record("splitting-inequalities", viol == 0, viol, "0 violations", f"alpha={alpha:g}", t0,
                   f"{samples} tuples per n; " + "; ".join(parts))


# projections -------------------------------------------------------------------
def check_truncation_rate(cfg: RunConfig, cache: dict | None = None, a_values=(3, 4, 5, 6, 7, 8)) -> CheckRecord:
    t0 = time.perf_counter()
    p = _profiles(cfg, cache)[1]
    errs = []
    for a in a_values:
        Ut = truncated_projection(p, a, a)
        errs.append(h1_norm(p.grid, p.values - Ut.values))
    slope = float(np.polyfit(np.asarray(a_values, float), np.log(errs), 1)[0])
    ok = abs(slope / -p.mu - 1) <= RATE_TOL
    detail = f"a={list(a_values)} H1 errors={[f'{e:.3g}' for e in errs]} slope={slope:.5f}"
    return _record("truncation-rate", ok, slope, f"{-p.mu:.6f}", f"rel {RATE_TOL}", t0, detail)


def check_projection_rate(cfg: RunConfig, cache: dict | None = None, R_values=(20.0, 40.0, 80.0)) -> CheckRecord:
    """H^1 distance of V to the ambient bump on a circle tube along R."""
    t0 = time.perf_counter()
    prof = _profiles(cfg, cache)
    circle = make_curve("circle", radius=1.0)
    dist, tube_dist = [], []
    for R in R_values:
        anz = Ansatz(build_tube_grid(circle, R, cfg.h), prof, half_width=cfg.window)
        amb = ambient_h1_distance(anz.bump(0.0, 1))
        dist.append(amb.h1_distance)
        tube_dist.append(amb.tube_h1_distance)
    slope = loglog_slope(R_values, dist)
    decreasing = all(b < a for a, b in zip(dist, dist[1:]))
    ok = decreasing and PROJECTION_SLOPE[0] <= slope <= PROJECTION_SLOPE[1]
    ratios = [b / a for a, b in zip(dist, dist[1:])]
    detail = (f"R={list(R_values)} H1={[f'{d:.4g}' for d in dist]} ratios={[f'{r:.4f}' for r in ratios]} "
              f"tube-coordinate H1={[f'{d:.3g}' for d in tube_dist]}")
    return _record("projection-rate", ok, slope, "strictly decreasing; slope in [-0.8, -0.3]",
                   f"{PROJECTION_SLOPE}", t0, detail)


# interactions --------------------------------------------------------------------
def interaction_sweep(cfg: RunConfig, cache: dict | None = None, distances=tuple(range(4, 11)),
                      R: float = 60.0, L_xi: float = 16.0) -> dict:
    """I_12, (+,-) and (+,+) cross energies of two bumps at distance d on a segment tube."""
    prof = _profiles(cfg, cache, L_xi=L_xi)
    p = prof[1]
    seg = make_curve("segment", start=(0.0, 0.0), end=(1.0, 0.0))
    tube = build_tube_grid(seg, R, cfg.h)
    anz = Ansatz(tube, prof, half_width=L_xi - 1.0, clip=True)
    mid = R / 2
    I, cpm, cpp = [], [], []
    for d in distances:
        b1 = anz.bump((mid - d / 2) / R, 1)
        b2 = anz.bump((mid + d / 2) / R, -1)
        b3 = anz.bump((mid + d / 2) / R, 1)
        I.append(interaction_integral(b1, b2, p.nl))
        cpm.append(cross_energy(b1.embedded(), b2.embedded(), tube, p.lam, p.nl))
        cpp.append(cross_energy(b1.embedded(), b3.embedded(), tube, p.lam, p.nl))
    return {"d": np.asarray(distances, float), "I": np.array(I), "cross_pm": np.array(cpm),
            "cross_pp": np.array(cpp), "mu": p.mu}


def _slope(d, y):
    return float(np.polyfit(d, np.log(np.abs(y)), 1)[0])


def check_interaction_scaling(cfg: RunConfig, cache: dict | None = None, sweep: dict | None = None) -> CheckRecord:
    t0 = time.perf_counter()
    sw = sweep or interaction_sweep(cfg, cache)
    slope = _slope(sw["d"], sw["I"])
    ok = abs(slope / -sw["mu"] - 1) <= RATE_TOL
    detail = f"d={sw['d'].tolist()} |I12|={[f'{x:.4g}' for x in np.abs(sw['I'])]} slope={slope:.5f}"
    return _record("interaction-scaling", ok, slope, f"{-sw['mu']:.6f}", f"rel {RATE_TOL}", t0, detail)


def random_boundary_chain(curve, R: float, n: int, g1: float, rng) -> tuple:
    """Random chain on a circle whose smallest pair distance equals g1."""
    rho = curve._radius
    theta = 2 * math.asin(min(1.0, g1 / (2 * R * rho))) / (2 * math.pi)
    while True:
        rest = rng.dirichlet(np.ones(n - 1)) * (1 - theta)
        if np.all(rest > theta):
            break
    gaps = np.insert(rest, int(rng.integers(n)), theta)
    t = (rng.random() + np.r_[0.0, np.cumsum(gaps[:-1])]) % 1.0
    return tuple(float(x) for x in np.sort(t))


def check_alternating_sign(cfg: RunConfig, cache: dict | None = None, sweep: dict | None = None,
                           R: float = 80.0, n_values=(2, 4), n_chains: int = 50) -> CheckRecord:
    t0 = time.perf_counter()
    sw = sweep or interaction_sweep(cfg, cache)
    mu = sw["mu"]
    pm_pos = bool(np.all(sw["cross_pm"] > 0))
    pp_neg = bool(np.all(sw["cross_pp"] < 0))
    s_pm = _slope(sw["d"], sw["cross_pm"])
    s_pp = _slope(sw["d"], sw["cross_pp"])
    rates_ok = abs(s_pm / -mu - 1) <= RATE_TOL and abs(s_pp / -mu - 1) <= RATE_TOL
    prof = _profiles(cfg, cache)
    circle = make_curve("circle", radius=1.0)
    anz = Ansatz(build_tube_grid(circle, R, cfg.h), prof, half_width=cfg.window)
    g1 = separation_scales(cfg, prof).g1(R)
    rng = np.random.default_rng(cfg.seed + 2)
    margins, parts = [], []
    for n in n_values:
        t_in = tuple(i / n for i in range(n))
        J_in = energy(anz.phi(t_in), anz.tube, anz.lam, anz.nl)
        J_bd = [energy(anz.phi(random_boundary_chain(circle, R, n, g1, rng)), anz.tube, anz.lam, anz.nl)
                for _ in range(n_chains)]
        margins.append(min(J_bd) - J_in)
        parts.append(f"n={n}: J_interior={J_in:.9g} min J_boundary={min(J_bd):.9g}")
    ordering = all(m > 0 for m in margins)
    ok = pm_pos and pp_neg and rates_ok and ordering
    detail = (f"(+,-) positive={pm_pos} slope={s_pm:.5f}; (+,+) negative={pp_neg} slope={s_pp:.5f}; "
              f"g1={g1:.4f}; " + "; ".join(parts))
    return _record("alternating-sign", ok, min(margins), "boundary J > interior J; cross-energy signs",
                   f"slopes rel {RATE_TOL}; strict ordering", t0, detail)


# reduction ----------------------------------------------------------------------
def check_reduction(cfg: RunConfig, cache: dict | None = None, R_values=(20.0, 40.0, 80.0),
                    t=(0.1, 0.6)) -> CheckRecord:
    t0 = time.perf_counter()
    prof = _profiles(cfg, cache)
    circle = make_curve("circle", radius=1.0)
    res = []
    for R in R_values:
        anz = Ansatz(build_tube_grid(circle, R, cfg.h), prof, half_width=cfg.window)
        res.append(normal_refine(anz, t, tol=REDUCTION_TOL))
    C = res[0].gap / res[0].grad_norm ** 2
    factors = [r.gap / (C * r.grad_norm ** 2) for r in res[1:]]
    contraction = max(r.contraction for r in res)
    pg = max(r.projected_grad_norm for r in res)
    ok = contraction < 1 and pg <= REDUCTION_TOL and all(f <= GAP_FACTOR for f in factors)
    detail = (f"contraction={[f'{r.contraction:.3g}' for r in res]} iterations={[r.iterations for r in res]} "
              f"|P grad|={[f'{r.projected_grad_norm:.2g}' for r in res]} C={C:.5f} "
              f"gap/(C|grad|^2) at R>{R_values[0]:g}={[f'{f:.4f}' for f in factors]} "
              f"|grad J(phi)|={[f'{r.grad_norm:.4g}' for r in res]}")
    return _record("reduction", ok, max(factors), f"contraction < 1; |P grad| <= {REDUCTION_TOL}",
                   f"gap factor <= {GAP_FACTOR}", t0, detail)


THEOREM_CASES = (("circle", 2), ("circle", 4), ("segment", 2), ("segment", 3))


def check_theorem_shape(cfg: RunConfig, cache: dict | None = None, R_values=(20.0, 40.0, 80.0),
                        out_dir=None) -> CheckRecord:
    """End-to-end runs: signs, interior minimizers, shrinking corrections, antipodal pair."""
    t0 = time.perf_counter()
    prof = _profiles(cfg, cache)
    model = calibrate_interactions(prof)
    ok_all, parts = True, []
    antipodal_err = math.nan
    for kind, n in THEOREM_CASES:
        params = {"center": (0.0, 0.0), "radius": 1.0} if kind == "circle" else {"start": (0.0, 0.0),
                                                                                  "end": (1.0, 0.0)}
        rel, ok_case, msg = [], True, []
        for R in R_values:
            c = cfg.with_(curve_kind=kind, curve_params=params, closed=(kind == "circle"), n=n, t=None, R=R)
            sub = Path(out_dir) / f"{kind}_n{n}_R{R:g}" if out_dir is not None else Path(cfg.out) / "theorem"
            try:
                art = run_pipeline(c, sub, model=model, profiles=prof, write_fields=False)
            except TubeBumpsError as exc:
                ok_case = False
                msg.append(f"R={R:g}: {type(exc).__name__}")
                continue
            interior = art.minimization.margin > 0
            ok_case &= interior
            rel.append(art.reduction.relative_correction)
            if kind == "circle" and n == 2 and R == 40.0:
                oracle = grid_search_gap(model, R, R * c.make_curve().length)
                gap = (art.t[1] - art.t[0]) % 1.0
                antipodal_err = abs(gap - oracle)
                ok_case &= antipodal_err <= ANTIPODAL_TOL
                msg.append(f"t={tuple(round(x, 5) for x in art.t)} oracle gap={oracle:.3f} err={antipodal_err:.2g}")
        decreasing = len(rel) == len(R_values) and all(b < a for a, b in zip(rel, rel[1:]))
        ok_case &= decreasing
        ok_all &= ok_case
        parts.append(f"{kind} n={n}: {'pass' if ok_case else 'FAIL'} rel_corr={[f'{x:.3g}' for x in rel]} "
                     + " ".join(msg))
    return _record("theorem-shape", ok_all, antipodal_err, "alternating signs; interior; decreasing corrections",
                   f"antipodal {ANTIPODAL_TOL}", t0, "; ".join(parts))


CHECKS = ("strip-spectrum", "decay-rate", "nondegeneracy", "geometric-oracles", "splitting-inequalities",
          "truncation-rate", "projection-rate", "interaction-scaling", "alternating-sign", "reduction",
          "theorem-shape")


def run_check(cid: str, cfg: RunConfig, cache: dict, state: dict) -> CheckRecord:
    if cid == "strip-spectrum":
        return check_strip_spectrum(cfg)
    if cid == "decay-rate":
        return check_decay_rate(cfg, cache)
    if cid == "nondegeneracy":
        return check_nondegeneracy_record(cfg, cache)
    if cid == "geometric-oracles":
        return check_geometric_oracles(cfg)
    if cid == "splitting-inequalities":
        return check_splitting(cfg)
    if cid == "truncation-rate":
        return check_truncation_rate(cfg, cache)
    if cid == "projection-rate":
        return check_projection_rate(cfg, cache)
    if cid in ("interaction-scaling", "alternating-sign"):
        if "sweep" not in state:
            state["sweep"] = interaction_sweep(cfg, cache)
        if cid == "interaction-scaling":
            return check_interaction_scaling(cfg, cache, state["sweep"])
        return check_alternating_sign(cfg, cache, state["sweep"])
    if cid == "reduction":
        return check_reduction(cfg, cache)
    if cid == "theorem-shape":
        return check_theorem_shape(cfg, cache, out_dir=state.get("out_dir"))
    raise KeyError(f"unknown check {cid!r}")


def verify(cfg: RunConfig, out_dir=None, only=None, log=None) -> VerificationReport:
    """Run the checks (all, or those in ``only``) and write the report files."""
    ids = list(CHECKS) if not only else list(only)
    unknown = [c for c in ids if c not in CHECKS]
    if unknown:
        raise KeyError(f"unknown checks {unknown}; known: {', '.join(CHECKS)}")
    out = Path(out_dir if out_dir is not None else cfg.out)
    cache: dict = {}
    state = {"out_dir": out / "theorem"}
    report = VerificationReport()
    for cid in ids:
        t0 = time.perf_counter()
        try:
            rec = run_check(cid, cfg, cache, state)
        except TubeBumpsError as exc:
            rec = _record(cid, False, math.nan, "-", "-", t0, f"{type(exc).__name__}: {exc}")
        rec.runtime = time.perf_counter() - t0
        report.records.append(rec)
        if log is not None:
            log(rec.line())
    report.write(out)
    return report
