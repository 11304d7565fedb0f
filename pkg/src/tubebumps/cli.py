"""Command line entry point.

Exit codes: 0 success, 2 configuration or input error, 3 numerical failure,
4 verification failure.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from .config import DEFAULT_CONFIG_TEXT, RunConfig, load_config, parse_config
from .errors import (
    ChainError,
    ConfigError,
    CurvatureTooLarge,
    CurveError,
    NumericalFailure,
    PreconditionError,
    RangeViolation,
    ResolutionError,
    TubeBumpsError,
    WindowOverflow,
)

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL, EXIT_VERIFY = 0, 2, 3, 4
INPUT_ERRORS = (ConfigError, PreconditionError, ChainError, CurveError, CurvatureTooLarge, WindowOverflow,
                RangeViolation, ResolutionError)

log = logging.getLogger("tubebumps")


def _floats(text: str) -> tuple:
    return tuple(float(x) for x in text.split(",") if x.strip())


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tubebumps", description="Multibump solutions in thin tubes around curves.")
    p.add_argument("--config", type=Path, help="INI run configuration (defaults apply when omitted)")
    p.add_argument("--out", type=Path, help="output directory (overrides run.out)")
    p.add_argument("--seed", type=int, help="seed for Monte-Carlo checks (overrides run.seed)")
    p.add_argument("--threads", type=int, help="worker threads for sweeps (overrides run.threads)")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    sub.add_parser("limit-solve", help="ground states U+ and U- on the strip, with decay and kernel checks")
    sp = sub.add_parser("project", help="place and project one bump on the tube")
    sp.add_argument("--R", type=float)
    sp.add_argument("--t", type=float, default=0.5, help="curve parameter of the anchor")
    sp.add_argument("--sign", type=int, choices=(1, -1), default=1)
    for name, text in (("assemble", "assemble phi_R(X) for a chain"),
                       ("reduce", "normal refinement v_u at a chain")):
        s = sub.add_parser(name, help=text)
        s.add_argument("--R", type=float)
        s.add_argument("--t", type=_floats, help="comma separated chain parameters")
    sm = sub.add_parser("minimize", help="full pipeline: minimize the chain, refine, write artifacts")
    sm.add_argument("--R", type=float)
    ss = sub.add_parser("sweep", help="energy reports along a list of R values")
    ss.add_argument("--R", type=_floats, help="comma separated R values (overrides sweep.R)")
    sv = sub.add_parser("verify", help="run the property checks")
    sv.add_argument("--only", type=lambda s: [x.strip() for x in s.split(",") if x.strip()],
                    help="comma separated check ids")
    sub.add_parser("default-config", help="print the default configuration")
    return p


def _config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else parse_config(DEFAULT_CONFIG_TEXT)
    kw = {}
    if args.out is not None:
        kw["out"] = str(args.out)
    if args.seed is not None:
        kw["seed"] = args.seed
    if args.threads is not None:
        kw["threads"] = args.threads
    R = getattr(args, "R", None)
    if isinstance(R, float):
        kw["R"] = R
    t = getattr(args, "t", None)
    if isinstance(t, tuple):
        kw["t"] = t
        kw["n"] = len(t)
    return cfg.with_(**kw) if kw else cfg


def _cmd_limit_solve(cfg: RunConfig) -> int:
    from .io_utils import write_keyvalue
    from .pipeline import solve_profiles
    from .profile import check_nondegeneracy

    out = Path(cfg.out)
    prof = solve_profiles(cfg, out / "profiles")
    info = {}
    for sign, tag in ((1, "plus"), (-1, "minus")):
        p = prof[sign]
        rep = check_nondegeneracy(p, eps0=cfg.eps0)
        info.update({f"{tag}_peak": p.peak, f"{tag}_energy": p.energy, f"{tag}_residual": p.residual,
                     f"{tag}_mu_fit": p.mu_fit, f"{tag}_kernel_dimension": rep.kernel_dimension,
                     f"{tag}_translation_eigenvalue": rep.translation_eigenvalue,
                     f"{tag}_cosine": rep.cosine, f"{tag}_gap": rep.gap})
    info["mu"] = prof[1].mu
    write_keyvalue(out / "profiles" / "summary.txt", info)
    log.info("profiles: peak %.6f energy %.9f mu_fit %.6f (mu %.6f)", prof[1].peak, prof[1].energy,
             prof[1].mu_fit, prof[1].mu)
    return EXIT_OK


def _cmd_project(cfg: RunConfig, t: float, sign: int) -> int:
    from .ansatz import ambient_h1_distance
    from .discrete import GridField, write_field_csv
    from .io_utils import write_keyvalue
    from .pipeline import build_ansatz, solve_profiles

    out = Path(cfg.out)
    prof = solve_profiles(cfg, out / "profiles")
    anz = build_ansatz(cfg, cfg.R, prof)
    pb = anz.bump(t, sign)
    write_field_csv(GridField(anz.tube, pb.embedded()), out / "projected_bump.csv")
    amb = ambient_h1_distance(pb)
    write_keyvalue(out / "projection.txt", {"R": cfg.R, "t": t, "sign": sign, "s0": pb.placed.s0,
                                            "residual": pb.residual, "V_U_h1": amb.h1_distance,
                                            "V_U_tube_h1": amb.tube_h1_distance})
    log.info("projected bump at s0=%.6g: ||V - U||_H1 = %.6g", pb.placed.s0, amb.h1_distance)
    return EXIT_OK


def _cmd_assemble(cfg: RunConfig) -> int:
    from .ansatz import assemble_multibump
    from .discrete import write_field_csv
    from .geometry import chain_from_params
    from .pipeline import build_ansatz, solve_profiles

    out = Path(cfg.out)
    prof = solve_profiles(cfg, out / "profiles")
    anz = build_ansatz(cfg, cfg.R, prof)
    t = cfg.initial_t()
    chain = chain_from_params(anz.tube.curve, cfg.R, t)
    phi = assemble_multibump(chain, anz.bumps(t), anz.tube)
    write_field_csv(phi, out / "phi.csv")
    log.info("assembled %d bumps at t=%s", len(t), t)
    return EXIT_OK


def _cmd_reduce(cfg: RunConfig) -> int:
    from .pipeline import run_pipeline

    art = run_pipeline(cfg, minimize=False)
    log.info("G_R=%.12g J_phi=%.12g |P grad|=%.3g contraction=%.3g", art.reduction.G_R, art.reduction.J_phi,
             art.reduction.projected_grad_norm, art.reduction.contraction)
    return EXIT_OK


def _cmd_minimize(cfg: RunConfig) -> int:
    from .pipeline import run_pipeline

    art = run_pipeline(cfg)
    log.info("minimizer t=%s signs=%s G_R=%.12g", art.t, art.signs, art.reduction.G_R)
    return EXIT_OK


def _cmd_sweep(cfg: RunConfig, R_list) -> int:
    from .pipeline import sweep_R

    res = sweep_R(cfg, R_list)
    failed = [r for r in res.rows if r[-1] != "ok"]
    for name, val in res.slopes.items():
        log.info("slope %s: %.4f", name, val)
    if failed:
        log.error("%d of %d sweep entries failed", len(failed), len(res.rows))
        return EXIT_NUMERICAL
    return EXIT_OK


def _cmd_verify(cfg: RunConfig, only) -> int:
    from .verification import verify

    rep = verify(cfg, only=only, log=lambda line: print(line, flush=True))
    print(f"{sum(r.passed for r in rep.records)}/{len(rep.records)} checks passed")
    return EXIT_OK if rep.passed else EXIT_VERIFY


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    if args.command == "default-config":
        sys.stdout.write(DEFAULT_CONFIG_TEXT)
        return EXIT_OK
    try:
        cfg = _config(args)
        if cfg.threads > 1:
            os.environ.setdefault("OMP_NUM_THREADS", "1")
        Path(cfg.out).mkdir(parents=True, exist_ok=True)
        if args.command == "limit-solve":
            return _cmd_limit_solve(cfg)
        if args.command == "project":
            return _cmd_project(cfg, args.t, args.sign)
        if args.command == "assemble":
            return _cmd_assemble(cfg)
        if args.command == "reduce":
            return _cmd_reduce(cfg)
        if args.command == "minimize":
            return _cmd_minimize(cfg)
        if args.command == "sweep":
            return _cmd_sweep(cfg, args.R)
        if args.command == "verify":
            return _cmd_verify(cfg, args.only)
    except INPUT_ERRORS as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return EXIT_CONFIG
    except KeyError as exc:
        log.error("%s", exc)
        return EXIT_CONFIG
    except NumericalFailure as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return EXIT_NUMERICAL
    except TubeBumpsError as exc:
        log.error("%s: %s", type(exc).__name__, exc)
        return EXIT_NUMERICAL
    return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
