"""Orchestration: profile cache, ansatz, minimization, reduction, sweeps and
their CSV artifacts.  Every artifact is a pure function of the config."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .ansatz import Ansatz, ambient_h1_distance, anchor_arc, anchor_value
from .config import RunConfig
from .discrete import GridField, build_tube_grid, write_field_csv
from .errors import PreconditionError, SignPatternBroken, TubeBumpsError
from .geometry import SeparationScales, chain_from_params
from .io_utils import atomic_write_text, write_csv, write_keyvalue
from .profile import (
    decay_constant,
    decay_rate,
    default_strip_length,
    load_profile,
    profile_stem,
    save_profile,
    solve_ground_state,
)
from .reduction import (
    ENERGY_HEADER,
    InteractionModel,
    calibrate_interactions,
    energy_report,
    minimize_chain,
    normal_min_eigenvalue,
    normal_refine,
)


def solve_profiles(cfg: RunConfig, cache_dir=None) -> dict:
    """U+ and U- on the strip, with decay fits attached.

    With ``cache_dir`` the profiles are read from (or written to) the cache;
    the cache stores 17 significant digits, so a reload is exact.
    """
    nl = cfg.nonlinearity_spec()
    mu = decay_constant(cfg.lam)
    L = cfg.L_xi if cfg.L_xi is not None else default_strip_length(mu)
    out = {}
    for sign in (1, -1):
        stem = profile_stem(nl, cfg.lam, sign, cfg.h, L)
        path = Path(cache_dir) / f"{stem}.csv" if cache_dir is not None else None
        if path is not None and path.exists() and path.with_suffix(".meta").exists():
            prof = load_profile(path)
        else:
            prof = solve_ground_state(nl, cfg.lam, sign, h=cfg.h, L_xi=L)
            prof = prof.with_fields(mu_fit=decay_rate(prof, cfg.fit_window).mu_fit)
            if path is not None:
                save_profile(prof, cache_dir, stem)
        out[sign] = prof
    return out


def build_ansatz(cfg: RunConfig, R: float, profiles: dict) -> Ansatz:
    tube = build_tube_grid(cfg.make_curve(), R, cfg.h)
    return Ansatz(tube, profiles, half_width=cfg.window)


def separation_scales(cfg: RunConfig, profiles: dict) -> SeparationScales:
    p = profiles[1]
    return SeparationScales(p.mu, p.nl.alpha_prime)


def anchor_signs(ansatz: Ansatz, t, values: np.ndarray) -> tuple:
    """Sign of the field at each chain anchor (node nearest to (s0, 0))."""
    tube = ansatz.tube
    return tuple(int(np.sign(anchor_value(tube, values, anchor_arc(tube, ti)))) for ti in t)


@dataclass
class Artifacts:
    out_dir: Path
    files: dict
    profiles: dict = field(repr=False)
    t: tuple = ()
    signs: tuple = ()
    minimization: object = field(default=None, repr=False)
    reduction: object = field(default=None, repr=False)
    report: object = field(default=None, repr=False)
    model: InteractionModel | None = None


def run_pipeline(cfg: RunConfig, out_dir=None, minimize: bool = True, model: InteractionModel | None = None,
                 profiles: dict | None = None, write_fields: bool = True) -> Artifacts:
    """Profiles, chain minimization at R, normal refinement and all artifacts.

    Raises SignPatternBroken when v_u loses the alternating anchor signs and
    ContractionFailure when the normal equation does not contract.
    """
    out = Path(out_dir if out_dir is not None else cfg.out)
    files = {}
    profiles = profiles or solve_profiles(cfg, out / "profiles")
    for sign, tag in ((1, "p"), (-1, "m")):
        stem = profile_stem(profiles[sign].nl, cfg.lam, sign, cfg.h, profiles[sign].L_xi)
        files[f"profile_{tag}"] = out / "profiles" / f"{stem}.csv"
    ansatz = build_ansatz(cfg, cfg.R, profiles)
    tube = ansatz.tube
    t0 = cfg.initial_t()
    mres = None
    if minimize:
        if cfg.objective == "model" and model is None:
            model = calibrate_interactions(profiles)
        mres = minimize_chain(ansatz, t0, separation_scales(cfg, profiles), model, objective=cfg.objective,
                              rescore=False)
        t = mres.t
        files["trace"] = out / "trace.csv"
        write_csv(files["trace"], mres.header, mres.trace)
    else:
        t = t0
    red = normal_refine(ansatz, t, tol=cfg.tol_reduce)
    rep = energy_report(ansatz, t, result=red)
    chain = chain_from_params(tube.curve, tube.R, t)
    signs = anchor_signs(ansatz, t, red.v)
    files["energy_report"] = out / "energy_report.csv"
    write_csv(files["energy_report"], ENERGY_HEADER + ["gap", "rel_correction", "iterations", "contraction"],
              [rep.row() + [red.gap, red.relative_correction, red.iterations, red.contraction]])
    files["chain"] = out / "chain.csv"
    write_csv(files["chain"], ["i", "t", "s", "x", "y", "sign", "anchor_value"],
              [[i + 1, ti, anchor_arc(tube, ti), *chain.points[i], chain.signs[i],
                anchor_value(tube, red.v, anchor_arc(tube, ti))] for i, ti in enumerate(t)])
    if write_fields:
        files["phi"] = out / "phi.csv"
        files["v_u"] = out / "v_u.csv"
        write_field_csv(GridField(tube, red.u), files["phi"])
        write_field_csv(GridField(tube, red.v), files["v_u"])
    summary = {
        "curve": cfg.curve_kind, "R": float(cfg.R), "n": len(t), "h": cfg.h, "lambda": cfg.lam,
        "t": " ".join(f"{x:.9g}" for x in t), "signs": " ".join(str(s) for s in signs),
        "E_n": rep.E_n, "J_phi": rep.J_phi, "G_R": rep.G_R, "grad_norm": rep.grad_norm,
        "projected_grad_norm": red.projected_grad_norm, "rel_correction": red.relative_correction,
        "contraction": red.contraction, "iterations": red.iterations,
        "mu": profiles[1].mu, "mu_fit": profiles[1].mu_fit,
    }
    if model is not None:
        summary.update({"beta": model.beta, "c_end": model.c_end})
    if mres is not None:
        summary.update({"nfev": mres.nfev, "margin": mres.margin})
    files["summary"] = out / "summary.txt"
    write_keyvalue(files["summary"], summary)
    art = Artifacts(out, files, profiles, tuple(t), signs, mres, red, rep, model)
    if signs != ansatz.signs(len(t)):
        raise SignPatternBroken(f"anchor signs {signs} differ from the alternating pattern "
                                f"{ansatz.signs(len(t))}")
    return art


# sweeps ---------------------------------------------------------------------
SWEEP_HEADER = ENERGY_HEADER + ["gap", "rel_correction", "V_U_h1", "V_U_tube_h1", "normal_min_eig", "iterations",
                               "status"]
SLOPE_COLUMNS = ("grad_norm", "gap", "rel_correction", "V_U_h1", "V_U_tube_h1")


@dataclass
class SweepResult:
    rows: list
    header: list
    slopes: dict
    path: Path | None

    def column(self, name: str) -> np.ndarray:
        j = self.header.index(name)
        return np.array([float(r[j]) for r in self.rows])


def loglog_slope(x, y) -> float:
    x, y = np.asarray(x, float), np.abs(np.asarray(y, float))
    ok = np.isfinite(x) & np.isfinite(y) & (x > 0) & (y > 0)
    if ok.sum() < 2:
        return math.nan
    return float(np.polyfit(np.log(x[ok]), np.log(y[ok]), 1)[0])


def _sweep_row(cfg: RunConfig, R: float, profiles: dict, t) -> list:
    try:
        ansatz = build_ansatz(cfg, R, profiles)
        red = normal_refine(ansatz, t, tol=cfg.tol_reduce)
        rep = energy_report(ansatz, t, result=red)
        amb = ambient_h1_distance(ansatz.bump(t[0], 1))
        return rep.row() + [red.gap, red.relative_correction, amb.h1_distance, amb.tube_h1_distance,
                            normal_min_eigenvalue(ansatz, red), red.iterations, "ok"]
    except TubeBumpsError as exc:
        return [float(R), len(t)] + [math.nan] * (len(SWEEP_HEADER) - 3) + [f"{type(exc).__name__}: {exc}"]


def sweep_R(cfg: RunConfig, R_list=None, out_dir=None, profiles: dict | None = None,
            t=None) -> SweepResult:
    """One energy-report row per R for the configured chain, then log-log slopes.

    A failing R is recorded in the status column and the sweep continues.
    """
    R_list = tuple(float(r) for r in (cfg.R_list if R_list is None else R_list))
    if len(R_list) < 3:
        raise PreconditionError(f"a sweep needs at least 3 R values, got {len(R_list)}")
    if any(b <= a for a, b in zip(R_list, R_list[1:])):
        raise PreconditionError("R values must be strictly ascending")
    out = Path(out_dir if out_dir is not None else cfg.out)
    profiles = profiles or solve_profiles(cfg, out / "profiles")
    t = tuple(t) if t is not None else cfg.initial_t()
    with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
        rows = list(pool.map(lambda R: _sweep_row(cfg, R, profiles, t), R_list))
    res = SweepResult(rows, list(SWEEP_HEADER), {}, None)
    Rs = res.column("R")
    for name in SLOPE_COLUMNS:
        res.slopes[name] = loglog_slope(Rs, res.column(name))
    path = out / "sweep.csv"
    write_csv(path, SWEEP_HEADER, rows)
    tail = "".join(f"# slope log({name}) vs log(R) = {res.slopes[name]:.6g}\n" for name in SLOPE_COLUMNS)
    atomic_write_text(path, path.read_text() + tail)
    res.path = path
    return res

