"""Run configuration: INI file with sections curve, physics, discretization,
chain, sweep, tolerance and run.  Every validation error names section.key."""
from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, field, replace
from pathlib import Path

from .errors import ConfigError, TubeBumpsError
from .geometry import Curve, make_curve
from .profile import NonlinearitySpec

LAMBDA_MIN = -math.pi ** 2 / 4
CURVE_KINDS = ("circle", "segment", "cubic-spline")


@dataclass(frozen=True)
class RunConfig:
    curve_kind: str = "circle"
    curve_params: dict = field(default_factory=lambda: {"center": (0.0, 0.0), "radius": 1.0})
    closed: bool = True
    lam: float = 1.0
    nonlinearity: str = "power"
    p: float = 3.0
    p_plus: float | None = None
    p_minus: float | None = None
    alpha_prime: float | None = None
    h: float = 0.05
    L_xi: float | None = None
    window: float | None = None
    spectrum_h: float | None = None
    n: int = 2
    t: tuple | None = None
    R_list: tuple = (20.0, 40.0, 80.0)
    R: float = 40.0
    tol_reduce: float = 1e-8
    fit_window: tuple = (4.0, 8.0)
    eps0: float | None = None
    seed: int = 0
    out: str = "out"
    threads: int = 1
    objective: str = "model"

    def nonlinearity_spec(self) -> NonlinearitySpec:
        kw = {} if self.alpha_prime is None else {"alpha_prime": self.alpha_prime}
        if self.nonlinearity == "two-power":
            return NonlinearitySpec.two_power(self.p_plus, self.p_minus, **kw)
        return NonlinearitySpec.power(self.p, **kw)

    def make_curve(self) -> Curve:
        try:
            return make_curve(self.curve_kind, self.closed, **self.curve_params)
        except TubeBumpsError as exc:
            raise ConfigError(str(exc), "curve") from exc

    def initial_t(self, n: int | None = None) -> tuple:
        """Explicit t-list, or equispaced parameters (interior points on open curves)."""
        n = self.n if n is None else n
        if self.t is not None and n == self.n:
            return tuple(self.t)
        if self.closed:
            return tuple(i / n for i in range(n))
        return tuple((i + 1) / (n + 1) for i in range(n))

    @property
    def check_spectrum_h(self) -> float:
        return self.spectrum_h if self.spectrum_h is not None else 0.4 * self.h

    def with_(self, **kw) -> "RunConfig":
        cfg = replace(self, **kw)
        cfg.validate()
        return cfg

    def validate(self):
        if self.curve_kind not in CURVE_KINDS:
            raise ConfigError(f"unknown curve kind {self.curve_kind!r}", "curve.kind")
        if self.curve_kind == "circle" and not self.closed:
            raise ConfigError("a circle is closed", "curve.closed")
        if self.curve_kind == "segment" and self.closed:
            raise ConfigError("a segment cannot be closed", "curve.closed")
        if not self.lam > LAMBDA_MIN:
            raise ConfigError(f"lambda = {self.lam} must exceed -pi^2/4 = {LAMBDA_MIN:.6f} "
                              "(the operator -Laplace + lambda must be coercive on the strip)",
                              "physics.lambda")
        if self.nonlinearity not in ("power", "two-power"):
            raise ConfigError(f"unknown nonlinearity {self.nonlinearity!r}", "physics.nonlinearity")
        try:
            self.nonlinearity_spec()
        except (ValueError, TypeError) as exc:
            raise ConfigError(str(exc), "physics") from exc
        for key, val in (("discretization.h", self.h), ("tolerance.tol_reduce", self.tol_reduce)):
            if not val > 0:
                raise ConfigError(f"{val} must be positive", key)
        for key, val in (("discretization.L_xi", self.L_xi), ("discretization.window", self.window),
                         ("discretization.spectrum_h", self.spectrum_h), ("tolerance.eps0", self.eps0),
                         ("physics.alpha_prime", self.alpha_prime)):
            if val is not None and not val > 0:
                raise ConfigError(f"{val} must be positive", key)
        if self.n < 1:
            raise ConfigError("at least one bump is required", "chain.n")
        if self.closed and self.n % 2:
            raise ConfigError(f"closed curves carry an even number of alternating bumps, got n = {self.n}",
                              "chain.n")
        if self.t is not None:
            if len(self.t) != self.n:
                raise ConfigError(f"{len(self.t)} parameters given for n = {self.n}", "chain.t")
            if any(not 0.0 <= x <= 1.0 for x in self.t):
                raise ConfigError("chain parameters lie in [0, 1]", "chain.t")
        if not self.R_list or any(r <= 0 for r in self.R_list):
            raise ConfigError("R values must be positive", "sweep.R")
        if any(b <= a for a, b in zip(self.R_list, self.R_list[1:])):
            raise ConfigError("R list must be strictly ascending", "sweep.R")
        if not self.R > 0:
            raise ConfigError("R must be positive", "run.R")
        a, b = self.fit_window
        if not 0 < a < b:
            raise ConfigError("fit window needs 0 < a < b", "tolerance.fit_window")
        if self.threads < 1:
            raise ConfigError("threads must be at least 1", "run.threads")
        if self.objective not in ("model", "field"):
            raise ConfigError(f"unknown objective {self.objective!r}", "run.objective")


def _floats(text: str, where: str) -> tuple:
    try:
        return tuple(float(x) for x in text.replace(";", ",").split(",") if x.strip())
    except ValueError as exc:
        raise ConfigError(f"expected a comma separated list of numbers, got {text!r}", where) from exc


def _points(text: str, where: str) -> tuple:
    pts = []
    for chunk in text.split(";"):
        if chunk.strip():
            xy = _floats(chunk, where)
            if len(xy) != 2:
                raise ConfigError(f"points are x, y pairs separated by ';', got {chunk!r}", where)
            pts.append(xy)
    return tuple(pts)


def _get(cp, section, key, conv, default):
    if not cp.has_option(section, key):
        return default
    raw = cp.get(section, key).strip()
    where = f"{section}.{key}"
    if raw.lower() in ("auto", "none", ""):
        return default
    try:
        return conv(raw)
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"cannot parse {raw!r}", where) from exc


def _bool(raw: str) -> bool:
    v = raw.lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(raw)


KNOWN = {
    "curve": {"kind", "closed", "center", "radius", "start", "end", "points"},
    "physics": {"lambda", "nonlinearity", "p", "p_plus", "p_minus", "alpha_prime"},
    "discretization": {"h", "l_xi", "window", "spectrum_h"},
    "chain": {"n", "t"},
    "sweep": {"r"},
    "tolerance": {"tol_reduce", "fit_window", "eps0"},
    "run": {"seed", "out", "r", "threads", "objective"},
}


def parse_config(text: str, source: str = "<config>") -> RunConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#",))
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(str(exc).replace("\n", " "), source) from exc
    for sec in cp.sections():
        if sec not in KNOWN:
            raise ConfigError(f"unknown section [{sec}]", sec)
        for key in cp.options(sec):
            if key not in KNOWN[sec]:
                raise ConfigError("unknown key", f"{sec}.{key}")
    d = RunConfig()
    kind = _get(cp, "curve", "kind", str, d.curve_kind)
    if kind == "circle":
        params = {"center": _get(cp, "curve", "center", lambda s: _floats(s, "curve.center"), (0.0, 0.0)),
                  "radius": _get(cp, "curve", "radius", float, 1.0)}
        default_closed = True
    elif kind == "segment":
        params = {"start": _get(cp, "curve", "start", lambda s: _floats(s, "curve.start"), (0.0, 0.0)),
                  "end": _get(cp, "curve", "end", lambda s: _floats(s, "curve.end"), (1.0, 0.0))}
        default_closed = False
    else:
        pts = _get(cp, "curve", "points", lambda s: _points(s, "curve.points"), None)
        if not pts:
            raise ConfigError("cubic-spline curves need points", "curve.points")
        params = {"points": pts}
        default_closed = False
    closed = _get(cp, "curve", "closed", _bool, None)
    closed = default_closed if closed is None else closed
    t = _get(cp, "chain", "t", lambda s: _floats(s, "chain.t"), None)
    fw = _get(cp, "tolerance", "fit_window", lambda s: _floats(s, "tolerance.fit_window"), d.fit_window)
    if len(fw) != 2:
        raise ConfigError("fit window is a pair a, b", "tolerance.fit_window")
    R_list = _get(cp, "sweep", "r", lambda s: _floats(s, "sweep.R"), d.R_list)
    cfg = RunConfig(
        curve_kind=kind, curve_params=params, closed=closed,
        lam=_get(cp, "physics", "lambda", float, d.lam),
        nonlinearity=_get(cp, "physics", "nonlinearity", str, d.nonlinearity),
        p=_get(cp, "physics", "p", float, d.p),
        p_plus=_get(cp, "physics", "p_plus", float, None),
        p_minus=_get(cp, "physics", "p_minus", float, None),
        alpha_prime=_get(cp, "physics", "alpha_prime", float, None),
        h=_get(cp, "discretization", "h", float, d.h),
        L_xi=_get(cp, "discretization", "l_xi", float, None),
        window=_get(cp, "discretization", "window", float, None),
        spectrum_h=_get(cp, "discretization", "spectrum_h", float, None),
        n=_get(cp, "chain", "n", int, d.n),
        t=t,
        R_list=tuple(R_list),
        R=_get(cp, "run", "r", float, d.R),
        tol_reduce=_get(cp, "tolerance", "tol_reduce", float, d.tol_reduce),
        fit_window=tuple(fw),
        eps0=_get(cp, "tolerance", "eps0", float, None),
        seed=_get(cp, "run", "seed", int, d.seed),
        out=_get(cp, "run", "out", str, d.out),
        threads=_get(cp, "run", "threads", int, d.threads),
        objective=_get(cp, "run", "objective", str, d.objective),
    )
    cfg.validate()
    return cfg


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc.strerror}", str(path)) from exc
    return parse_config(text, str(path))


DEFAULT_CONFIG_TEXT = """\
[curve]
kind = circle
center = 0, 0
radius = 1

[physics]
lambda = 1
nonlinearity = power
p = 3

[discretization]
h = 0.05
L_xi = auto
window = auto

[chain]
n = 2
t = auto

[sweep]
R = 20, 40, 80

[tolerance]
tol_reduce = 1e-8
fit_window = 4, 8

[run]
seed = 0
R = 40
out = out
"""
