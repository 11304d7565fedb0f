"""Ground states of the strip limit problem -Delta U + lambda U = f(U)."""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.interpolate import CubicSpline, RectBivariateSpline

from .discrete import (
    LAMBDA_11,
    GridField,
    StripGrid,
    apply_operator,
    read_field_csv,
    smallest_eigenpairs,
    solve_linear,
    write_field_csv,
)
from .errors import (
    CollapseToZero,
    DegeneracySuspected,
    NewtonDivergence,
    PreconditionError,
    WindowUnderflow,
)
from .io_utils import read_keyvalue, write_keyvalue

PROFILE_RESIDUAL_TOL = 1e-9


@dataclass(frozen=True)
class NonlinearitySpec:
    """f(u) = |u|^(p-1) u (``kind="power"``) or u_+^p_plus - u_-^p_minus.

    For the two-power kind ``p`` is ignored.  ``alpha_prime`` defaults to the
    midpoint of its admissible interval (1/2, min{alpha, p1/2, 1}).
    """

    kind: str = "power"
    p: float = 3.0
    p_plus: float | None = None
    p_minus: float | None = None
    alpha_prime: float | None = None

    def __post_init__(self):
        if self.kind not in ("power", "two-power"):
            raise ValueError(f"unknown nonlinearity kind {self.kind!r}")
        for q in self.exponents:
            if not q > 1:
                raise ValueError(f"exponent {q} must exceed 1")
        lo, hi = 0.5, self.alpha_prime_max
        if self.alpha_prime is None:
            object.__setattr__(self, "alpha_prime", 0.5 * (lo + hi))
        elif not lo < self.alpha_prime < hi:
            raise ValueError(f"alpha' = {self.alpha_prime} outside ({lo}, {hi})")

    @classmethod
    def power(cls, p: float = 3.0, **kw) -> "NonlinearitySpec":
        return cls("power", p=p, **kw)

    @classmethod
    def two_power(cls, p_plus: float, p_minus: float, **kw) -> "NonlinearitySpec":
        return cls("two-power", p=min(p_plus, p_minus), p_plus=p_plus, p_minus=p_minus, **kw)

    @property
    def exponents(self) -> tuple[float, float]:
        if self.kind == "power":
            return (self.p, self.p)
        return (self.p_plus, self.p_minus)

    @property
    def odd(self) -> bool:
        a, b = self.exponents
        return a == b

    @property
    def p1(self) -> float:
        return min(self.exponents)

    @property
    def p2(self) -> float:
        return max(self.exponents)

    @property
    def alpha(self) -> float:
        return min((self.p1 + 1) / 4, 1.0)

    @property
    def alpha_prime_max(self) -> float:
        return min(self.alpha, self.p1 / 2, 1.0)

    def exponent_for(self, sign: int) -> float:
        return self.exponents[0] if sign > 0 else self.exponents[1]

    def f(self, u):
        u = np.asarray(u, dtype=float)
        a, b = self.exponents
        up, um = np.maximum(u, 0.0), np.maximum(-u, 0.0)
        return up**a - um**b

    def F(self, u):
        u = np.asarray(u, dtype=float)
        a, b = self.exponents
        up, um = np.maximum(u, 0.0), np.maximum(-u, 0.0)
        return up ** (a + 1) / (a + 1) + um ** (b + 1) / (b + 1)

    def df(self, u):
        u = np.asarray(u, dtype=float)
        a, b = self.exponents
        up, um = np.maximum(u, 0.0), np.maximum(-u, 0.0)
        return a * up ** (a - 1) + b * um ** (b - 1)

    def describe(self) -> str:
        if self.kind == "power":
            return f"power p={self.p:g}"
        return f"two-power p+={self.p_plus:g} p-={self.p_minus:g}"


def decay_constant(lam: float) -> float:
    """mu = sqrt(lambda + pi^2/4)."""
    if lam <= -LAMBDA_11:
        raise PreconditionError(f"lambda = {lam} <= -pi^2/4")
    return math.sqrt(lam + LAMBDA_11)


def default_strip_length(mu: float) -> float:
    return max(12.0 / mu, 10.0)


@dataclass(frozen=True)
class BumpProfile:
    """Discrete ground state U of the strip problem for one sign."""

    sign: int
    grid: StripGrid
    U: GridField = field(repr=False)
    lam: float
    nl: NonlinearitySpec
    mu: float
    energy: float
    residual: float
    mu_fit: float | None = None
    nondegeneracy: "NondegeneracyReport | None" = field(default=None, repr=False)

    @property
    def h(self) -> float:
        return self.grid.h

    @property
    def L_xi(self) -> float:
        return self.grid.L_xi

    @property
    def values(self) -> np.ndarray:
        return self.U.values

    @property
    def peak(self) -> float:
        return float(self.values[np.unravel_index(np.argmax(np.abs(self.values)), self.grid.shape)])

    @property
    def center_index(self) -> int:
        return int(np.argmin(np.abs(self.grid.xi)))

    @property
    def a_norm(self) -> float:
        return self.grid.a_norm(self.U, self.lam)

    @cached_property
    def xi_spline(self) -> CubicSpline:
        """Cubic spline in xi through every eta-row (Dirichlet zeros included)."""
        xi, _ = self.grid.full_coordinates()
        full = np.pad(self.values, ((1, 1), (0, 0)))
        return CubicSpline(xi, full, axis=0, bc_type="not-a-knot")

    @cached_property
    def surface(self) -> RectBivariateSpline:
        """Bicubic interpolant of U on the full node lattice."""
        xi, eta = self.grid.full_coordinates()
        return RectBivariateSpline(xi, eta, self.grid.pad(self.values), kx=3, ky=3)

    def rows_at(self, offsets) -> np.ndarray:
        """Profile rows at xi = offsets (zero beyond the truncation)."""
        offsets = np.asarray(offsets, dtype=float)
        out = self.xi_spline(offsets)
        out[np.abs(offsets) >= self.L_xi] = 0.0
        return out

    def with_fields(self, **kw) -> "BumpProfile":
        return replace(self, **kw)


def _symmetrize(u: np.ndarray) -> np.ndarray:
    u = 0.5 * (u + u[::-1, :])
    return 0.5 * (u + u[:, ::-1])


def _residual(grid, lam, nl, u) -> np.ndarray:
    return apply_operator(grid, lam, u) - nl.f(u)


def _initial_guess(grid: StripGrid, mu: float, p: float, lam: float) -> np.ndarray:
    X, E = np.meshgrid(grid.xi, grid.eta, indexing="ij")
    w = np.cos(np.pi * E / 2) * np.exp(-mu * X**2 / 2)
    aw = grid.a_inner(w, w, lam)
    # Nehari scaling: a(Aw, Aw) = int f(Aw) Aw for f(u) = u^p
    A = (aw / grid.integrate(w ** (p + 1))) ** (1.0 / (p - 1))
    return A * w


def _positive_power_state(grid, lam, p, mu, tol, max_petv=400, max_newton=30):
    """Positive ground state of -Delta u + lam u = u^p on the grid."""
    nl = NonlinearitySpec.power(p)
    u = _initial_guess(grid, mu, p, lam)
    lu = grid.factor(lam)
    mass = grid.mass
    gam = p / (p - 1)
    scale0 = np.max(np.abs(u))
    # Petviashvili iteration: u <- S^gam K^-1 M f(u), S = a(u,u)/<f(u),u>
    for _ in range(max_petv):
        fu = nl.f(u).ravel()
        num = grid.a_inner(u, u, lam)
        den = float(np.dot(mass * fu, u.ravel()))
        if den <= 0 or not np.isfinite(den):
            raise CollapseToZero("Petviashvili iterate lost positivity")
        S = num / den
        u_new = _symmetrize((S**gam) * lu.solve(mass * fu).reshape(grid.shape))
        if np.max(np.abs(u_new)) < 1e-8 * scale0:
            raise CollapseToZero("iterate collapsed to zero")
        diff = np.max(np.abs(u_new - u))
        u = u_new
        if diff < 1e-7 * np.max(np.abs(u)):
            break
    # Newton polish on the symmetric subspace
    K = grid.operator(lam)
    res = np.max(np.abs(_residual(grid, lam, nl, u)))
    for it in range(max_newton):
        if res <= tol * 0.1:
            break
        H = (K - sp.diags(mass * nl.df(u).ravel())).tocsc()
        rhs = -(K @ u.ravel() - mass * nl.f(u).ravel())
        du = spla.splu(H, permc_spec="MMD_AT_PLUS_A").solve(rhs).reshape(grid.shape)
        step = 1.0
        while True:
            trial = _symmetrize(u + step * du)
            r_new = np.max(np.abs(_residual(grid, lam, nl, trial)))
            if r_new < res or step < 1e-3:
                break
            step *= 0.5
        if r_new >= res and step < 1e-3:
            raise NewtonDivergence(f"Newton stalled at residual {res:.3g}")
        u, res = trial, r_new
    if res > tol:
        raise NewtonDivergence(f"Newton residual {res:.3g} above {tol:.1g}")
    if np.max(u) < 1e-6:
        raise CollapseToZero("converged to the trivial solution")
    return u


def _gradient_flow_state(grid, lam, p, mu, tol, dt=0.5, steps=4000):
    """Normalized gradient flow followed by Newton (independent cross-check).

    Each step is a semi-implicit heat step (1 + dt A) u = u + dt f(u),
    rescaled onto the Nehari manifold a(u, u) = <f(u), u>.
    """
    nl = NonlinearitySpec.power(p)
    u = _initial_guess(grid, mu, p, lam)
    mass = grid.mass
    A = (sp.identity(grid.size) * 1.0 + dt * sp.diags(1.0 / mass) @ grid.operator(lam)).tocsc()
    lu = spla.splu(A)
    for _ in range(steps):
        u_new = lu.solve((u + dt * nl.f(u)).ravel()).reshape(grid.shape)
        aw = grid.a_inner(u_new, u_new, lam)
        t = (aw / float(np.dot(mass * nl.f(u_new).ravel(), u_new.ravel()))) ** (1.0 / (p - 1))
        u_new = _symmetrize(t * u_new)
        if np.max(np.abs(u_new - u)) < 1e-5 * np.max(np.abs(u_new)):
            u = u_new
            break
        u = u_new
    K = grid.operator(lam)
    for _ in range(30):
        r = K @ u.ravel() - mass * nl.f(u).ravel()
        if np.max(np.abs(r / mass)) < 0.1 * tol:
            break
        H = (K - sp.diags(mass * nl.df(u).ravel())).tocsc()
        u = _symmetrize(u - spla.splu(H).solve(r).reshape(grid.shape))
    return u


def profile_energy(grid, lam, nl, u) -> float:
    """J(u) = 1/2 a(u, u) - int F(u) with the grid quadrature."""
    return 0.5 * grid.a_inner(u, u, lam) - grid.integrate(nl.F(_v(u)))


def profile_energy_identity(grid, nl, u) -> float:
    """Critical-point form of the energy: int [f(u) u / 2 - F(u)]."""
    v = _v(u)
    return grid.integrate(0.5 * nl.f(v) * v - nl.F(v))


def _v(u):
    return u.values if isinstance(u, GridField) else np.asarray(u)


def solve_ground_state(nl: NonlinearitySpec, lam: float, sign: int = 1, grid: StripGrid | None = None,
                       h: float = 0.05, L_xi: float | None = None, method: str = "petviashvili",
                       tol: float = PROFILE_RESIDUAL_TOL) -> BumpProfile:
    """Even, sign-definite ground state U (sign +1) or U (sign -1) on the strip.

    The negative state is minus the positive ground state of the branch
    exponent: for u < 0 the equation only involves u_-^p_minus.
    ``method="gradient-flow"`` runs the independent cross-check solver.
    """
    if sign not in (1, -1):
        raise ValueError("sign must be +1 or -1")
    mu = decay_constant(lam)
    if grid is None:
        grid = StripGrid(L_xi if L_xi is not None else default_strip_length(mu), h)
    p = nl.exponent_for(sign)
    if method == "petviashvili":
        w = _positive_power_state(grid, lam, p, mu, tol)
    elif method == "gradient-flow":
        w = _gradient_flow_state(grid, lam, p, mu, tol)
    else:
        raise ValueError(f"unknown method {method!r}")
    u = sign * w
    res = float(np.max(np.abs(_residual(grid, lam, nl, u))))
    if res > tol:
        raise NewtonDivergence(f"residual {res:.3g} above {tol:.1g}")
    if np.any(sign * u <= 0):
        raise NewtonDivergence("ground state is not sign-definite")
    U = GridField(grid, u)
    return BumpProfile(sign, grid, U, float(lam), nl, mu, profile_energy(grid, lam, nl, U), res)


# decay ----------------------------------------------------------------------
@dataclass
class DecayFit:
    mu_fit: float
    mu: float
    rel_error: float
    window: tuple[float, float]
    log_amplitude: float
    rms: float
    points: int


def decay_rate(profile: BumpProfile, window: tuple[float, float] = (4.0, 8.0), floor: float = 1e-12) -> DecayFit:
    """Least-squares slope of log|U(xi, 0)| over xi in ``window``."""
    xa, xb = window
    if not (0 < xa < xb < profile.L_xi - 2 + 1e-12):
        raise WindowUnderflow(f"fit window {window} not inside (0, L_xi - 2)")
    j0 = int(np.argmin(np.abs(profile.grid.eta)))
    xi = profile.grid.xi
    sel = (xi >= xa - 1e-12) & (xi <= xb + 1e-12)
    vals = np.abs(profile.values[sel, j0])
    if vals.size < 3 or np.min(vals) < floor:
        raise WindowUnderflow("profile at the noise floor inside the fit window")
    slope, icpt = np.polyfit(xi[sel], np.log(vals), 1)
    resid = np.log(vals) - (slope * xi[sel] + icpt)
    mu_fit = -float(slope)
    return DecayFit(mu_fit, profile.mu, abs(mu_fit - profile.mu) / profile.mu, (xa, xb), float(icpt),
                    float(np.sqrt(np.mean(resid**2))), int(vals.size))


# nondegeneracy --------------------------------------------------------------
@dataclass
class NondegeneracyReport:
    eigenvalues: list
    eps0: float
    near_zero: list
    translation_eigenvalue: float
    cosine: float
    gap: float
    kernel_dimension: int

    @property
    def passed(self) -> bool:
        return self.kernel_dimension == 1 and self.cosine >= 0.999 and self.gap >= 10 * self.eps0


def translation_mode(profile: BumpProfile) -> np.ndarray:
    """Central-difference d/dxi of U with Dirichlet zeros at the ends."""
    full = np.pad(profile.values, ((1, 1), (0, 0)))
    return (full[2:] - full[:-2]) / (2 * profile.grid.h1)


def linearized_eigenpairs(profile: BumpProfile, k: int = 4, potential=None):
    if potential is None:
        potential = profile.lam - profile.nl.df(profile.values)
    return smallest_eigenpairs(profile.grid, potential, k)


def check_nondegeneracy(profile: BumpProfile, eps0: float | None = None, k: int = 4,
                        potential=None) -> NondegeneracyReport:
    """Count eigenvalues of -Delta_h + lambda - f'(U) in (-eps0, eps0).

    With the default ``eps0`` the threshold is max(1e-2, 5 |theta_t|) where
    theta_t is the eigenvalue whose field best matches d/dxi U.
    """
    pairs = linearized_eigenpairs(profile, k, potential)
    mass = profile.grid.mass
    d = translation_mode(profile).ravel()
    dn = math.sqrt(np.dot(mass * d, d)) or 1.0
    cos = []
    for th, v in pairs:
        vv = v.values.ravel()
        cos.append(abs(np.dot(mass * vv, d)) / dn)
    jt = int(np.argmax(cos))
    theta_t = pairs[jt][0]
    if eps0 is None:
        eps0 = max(1e-2, 5 * abs(theta_t))
    thetas = [th for th, _ in pairs]
    near = [th for th in thetas if abs(th) < eps0]
    others = [abs(th) for i, th in enumerate(thetas) if i != jt and thetas[i] > theta_t]
    gap = min(others) if others else math.inf
    rep = NondegeneracyReport(thetas, eps0, near, theta_t, float(cos[jt]), gap, len(near))
    if len(near) > 1:
        raise DegeneracySuspected(f"{len(near)} eigenvalues in (-{eps0:g}, {eps0:g}): {near}")
    return rep


# truncation -----------------------------------------------------------------
def truncated_projection(profile: BumpProfile, a: float, b: float) -> GridField:
    """Solve -Delta u + lambda u = f(U) on (-a, b) x (-1, 1), zero outside."""
    L = profile.L_xi
    if not (1 - 1e-12 <= a <= L - 1 + 1e-12 and 1 - 1e-12 <= b <= L - 1 + 1e-12):
        raise PreconditionError(f"need 1 <= a, b <= L_xi - 1, got a={a}, b={b}")
    grid = profile.grid
    sub = grid.sub_window(a, b)
    rows = grid.embed_indices(sub)
    rhs = profile.nl.f(profile.values[rows])
    u = solve_linear(sub, profile.lam, rhs)
    out = np.zeros(grid.shape)
    out[rows] = u.values
    return GridField(grid, out)


def h1_norm(grid, u) -> float:
    """Discrete H^1 norm sqrt(int |grad u|^2 + u^2)."""
    v = _v(u)
    return math.sqrt(grid.kinetic(v) + grid.integrate(v * v))


# cache ----------------------------------------------------------------------
def save_profile(profile: BumpProfile, directory, stem: str | None = None) -> Path:
    """Write ``<stem>.csv`` and the ``<stem>.meta`` sidecar; return the CSV path."""
    directory = Path(directory)
    stem = stem or profile_stem(profile.nl, profile.lam, profile.sign, profile.h, profile.L_xi)
    csv = directory / f"{stem}.csv"
    write_field_csv(profile.U, csv, digits=17)
    a, b = profile.nl.exponents
    write_keyvalue(directory / f"{stem}.meta", {
        "lambda": profile.lam,
        "p": profile.nl.exponent_for(profile.sign),
        "h": profile.h,
        "L_xi": profile.L_xi,
        "mu": profile.mu,
        "mu_fit": profile.mu_fit if profile.mu_fit is not None else float("nan"),
        "energy": profile.energy,
        "residual": profile.residual,
        "sign": profile.sign,
        "kind": profile.nl.kind,
        "p_plus": a,
        "p_minus": b,
    })
    return csv


def load_profile(csv_path) -> BumpProfile:
    csv_path = Path(csv_path)
    meta = read_keyvalue(csv_path.with_suffix(".meta"))
    lam, h, L = float(meta["lambda"]), float(meta["h"]), float(meta["L_xi"])
    a, b = float(meta["p_plus"]), float(meta["p_minus"])
    nl = NonlinearitySpec.power(a) if meta.get("kind", "power") == "power" else NonlinearitySpec.two_power(a, b)
    grid = StripGrid(L, h)
    _, _, vals = read_field_csv(csv_path)
    U = GridField(grid, vals[1:-1, 1:-1])
    mu_fit = float(meta["mu_fit"])
    return BumpProfile(int(meta["sign"]), grid, U, lam, nl, float(meta["mu"]),
                       profile_energy(grid, lam, nl, U),
                       float(np.max(np.abs(_residual(grid, lam, nl, U.values)))),
                       None if math.isnan(mu_fit) else mu_fit)


def profile_stem(nl: NonlinearitySpec, lam: float, sign: int, h: float, L_xi: float) -> str:
    a, b = nl.exponents
    tag = "p" if sign > 0 else "m"
    return f"profile_{tag}_lam{lam:g}_p{a:g}-{b:g}_h{h:g}_L{L_xi:g}"
