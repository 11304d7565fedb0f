"""Finite-difference Dirichlet operators on the strip and on tube domains.

All grids are logically rectangular in coordinates (x1, eta) where x1 is
either the strip variable xi or the arc length s along the expanded curve,
and eta in (-1, 1) is the signed normal distance (left normal).  The
discrete bilinear form is

    a(u, v) = sum_s-edges (h_eta/h_s) / J_half (D_s u)(D_s v)
            + sum_eta-edges (h_s/h_eta) J_half (D_eta u)(D_eta v)
            + lambda sum_nodes h_s h_eta J u v

which is the divergence-form discretization of
-(1/J) d_s(J^-1 d_s u) - (1/J) d_eta(J d_eta u) + lambda u
weighted by the area element J ds deta.  Only interior (unknown) nodes are
stored; Dirichlet nodes are implicit zeros.
"""
from __future__ import annotations

import hashlib
import math
import threading
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import (
    ConvergenceFailure,
    CurvatureTooLarge,
    IndefiniteOperator,
    ResolutionError,
    SolverDivergence,
)

LAMBDA_11 = math.pi**2 / 4
SHARED_LU_SIZE = 24
SHARED_LU_MAX_NODES = 60_000
_SHARED_LU: OrderedDict = OrderedDict()
_SHARED_LOCK = threading.Lock()
RESIDUAL_TOL = 1e-10
EIG_RESIDUAL_TOL = 1e-8


def cross_section_eigenvalue(h: float) -> float:
    """Smallest eigenvalue of the 3-point Dirichlet Laplacian on (-1, 1)."""
    return 4.0 / h**2 * math.sin(math.pi * h / 4) ** 2


def _divides(total: float, h: float) -> int:
    q = total / h
    n = int(round(q))
    if n < 1 or abs(q - n) > 1e-9 * max(1.0, q):
        raise ResolutionError(f"h = {h} does not divide {total}")
    return n


class Grid:
    """Common data of strip, tube and window grids.

    Attributes
    ----------
    x1 : (n1,) coordinates of interior nodes along the long axis
    eta : (n2,) interior cross-section coordinates
    h1, h2 : spacings
    periodic : whether the long axis wraps around
    J : (n1, n2) metric factor at nodes
    Js : (n1 + 1, n2) (or (n1, n2) when periodic) metric at long-axis edges;
         edge i joins node i-1 and node i (non-periodic) or node i and i+1
    Je : (n1, n2 + 1) metric at cross-section edges
    """

    kind = "grid"
    axis_name = "x1"

    def __init__(self, x1, h1, h2, periodic, J, Js, Je):
        self.x1 = np.asarray(x1, dtype=float)
        self.h1 = float(h1)
        self.h2 = float(h2)
        self.periodic = bool(periodic)
        n2 = int(round(2.0 / h2)) - 1
        self.eta = -1.0 + h2 * np.arange(1, n2 + 1)
        self.J = np.asarray(J, dtype=float)
        self.Js = np.asarray(Js, dtype=float)
        self.Je = np.asarray(Je, dtype=float)
        self.shape = (len(self.x1), n2)
        if np.min(self.J) <= 0 or np.min(self.Js) <= 0 or np.min(self.Je) <= 0:
            raise CurvatureTooLarge("metric factor J <= 0 somewhere on the grid")
        self._K = None
        self._lu_cache: dict = {}
        self._metric_key = None

    # sizes ----------------------------------------------------------------
    @property
    def size(self) -> int:
        return self.shape[0] * self.shape[1]

    @property
    def h(self) -> float:
        return self.h2

    # matrices -------------------------------------------------------------
    @property
    def mass(self) -> np.ndarray:
        """Diagonal quadrature weights h1 h2 J, flattened row-major."""
        return (self.h1 * self.h2 * self.J).ravel()

    @property
    def K(self) -> sp.csc_matrix:
        if self._K is None:
            self._K = assemble_stiffness(self)
        return self._K

    def operator(self, lam: float) -> sp.csc_matrix:
        """K + lam M, the matrix of the bilinear form a."""
        return (self.K + sp.diags(lam * self.mass)).tocsc()

    def factor(self, lam: float):
        """Sparse LU of K + lam M, cached per grid and shared between grids
        whose metric data coincide bitwise (e.g. rotated circle windows)."""
        key = float(lam)
        lu = self._lu_cache.get(key)
        if lu is None:
            if self.size > SHARED_LU_MAX_NODES:
                check_coercive(self, lam)
                lu = spla.splu(self.operator(lam), permc_spec="MMD_AT_PLUS_A")
                self._lu_cache[key] = lu
                return lu
            shared = (self.metric_key, key)
            with _SHARED_LOCK:
                lu = _SHARED_LU.get(shared)
                if lu is not None:
                    _SHARED_LU.move_to_end(shared)
            if lu is None:
                check_coercive(self, lam)
                lu = spla.splu(self.operator(lam), permc_spec="MMD_AT_PLUS_A")
                with _SHARED_LOCK:
                    _SHARED_LU[shared] = lu
                    while len(_SHARED_LU) > SHARED_LU_SIZE:
                        _SHARED_LU.popitem(last=False)
            self._lu_cache[key] = lu
        return lu

    @property
    def metric_key(self) -> tuple:
        if self._metric_key is None:
            dig = hashlib.sha1()
            for arr in (self.J, self.Js, self.Je):
                dig.update(np.ascontiguousarray(arr).tobytes())
            self._metric_key = (self.shape, self.h1, self.h2, self.periodic, dig.hexdigest())
        return self._metric_key

    # fields ---------------------------------------------------------------
    def zeros(self) -> "GridField":
        return GridField(self, np.zeros(self.shape))

    def field(self, values) -> "GridField":
        return GridField(self, np.asarray(values, dtype=float).reshape(self.shape))

    def integrate(self, values) -> float:
        return float(np.dot(self.mass, np.asarray(values, dtype=float).ravel()))

    def a_inner(self, u, v, lam: float) -> float:
        u = _vals(u).ravel()
        v = _vals(v).ravel()
        return float(u @ (self.K @ v) + lam * np.dot(self.mass * u, v))

    def a_norm(self, u, lam: float) -> float:
        return math.sqrt(max(self.a_inner(u, u, lam), 0.0))

    def kinetic(self, u) -> float:
        """Discrete integral of |grad u|^2 (with the metric)."""
        u = _vals(u).ravel()
        return float(u @ (self.K @ u))

    def full_coordinates(self):
        """Node coordinates including Dirichlet rows (non-periodic axis padded)."""
        eta = np.r_[-1.0, self.eta, 1.0]
        if self.periodic:
            x1 = self.x1
        else:
            x1 = np.r_[self.x1[0] - self.h1, self.x1, self.x1[-1] + self.h1]
        return x1, eta

    def pad(self, values) -> np.ndarray:
        """Values with the Dirichlet zeros restored."""
        v = _vals(values)
        if self.periodic:
            return np.pad(v, ((0, 0), (1, 1)))
        return np.pad(v, ((1, 1), (1, 1)))


def _vals(u) -> np.ndarray:
    return u.values if isinstance(u, GridField) else np.asarray(u, dtype=float)


def assemble_stiffness(grid: Grid) -> sp.csc_matrix:
    """Symmetric 5-point divergence-form stiffness matrix (no mass term)."""
    n1, n2 = grid.shape
    idx = np.arange(n1 * n2).reshape(n1, n2)
    diag = np.zeros((n1, n2))
    rows, cols, vals = [], [], []

    ws = (grid.h2 / grid.h1) / grid.Js
    if grid.periodic:
        # edge i joins node i and node (i+1) mod n1
        w = ws
        a, b = idx, np.roll(idx, -1, axis=0)
        diag += w + np.roll(w, 1, axis=0)
        rows += [a.ravel(), b.ravel()]
        cols += [b.ravel(), a.ravel()]
        vals += [-w.ravel(), -w.ravel()]
    else:
        # edge i joins node i-1 and node i; edges 0 and n1 touch the boundary
        diag += ws[:-1] + ws[1:]
        w = ws[1:-1]
        a, b = idx[:-1], idx[1:]
        rows += [a.ravel(), b.ravel()]
        cols += [b.ravel(), a.ravel()]
        vals += [-w.ravel(), -w.ravel()]

    we = (grid.h1 / grid.h2) * grid.Je
    diag += we[:, :-1] + we[:, 1:]
    w = we[:, 1:-1]
    a, b = idx[:, :-1], idx[:, 1:]
    rows += [a.ravel(), b.ravel()]
    cols += [b.ravel(), a.ravel()]
    vals += [-w.ravel(), -w.ravel()]

    rows.append(idx.ravel())
    cols.append(idx.ravel())
    vals.append(diag.ravel())
    K = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(n1 * n2, n1 * n2))
    return K.tocsc()


def check_coercive(grid: Grid, lam: float):
    """Raise IndefiniteOperator unless K + lam M is positive definite.

    The cross-section floor below is a lower bound for the discrete
    spectrum of every grid here up to the O(1/R^2) curvature correction;
    for lam < 0 the smallest eigenvalue is computed explicitly.
    """
    if lam <= -LAMBDA_11:
        raise IndefiniteOperator(f"lambda = {lam} <= -pi^2/4")
    if lam < 0:
        theta = smallest_eigenpairs(grid, None, 1)[0][0]
        if theta + lam <= 0:
            raise IndefiniteOperator(f"lambda + theta_1 = {theta + lam:.3g} <= 0")


# grids ----------------------------------------------------------------------
class StripGrid(Grid):
    """Truncated strip (-L_xi, L_xi) x (-1, 1) with Dirichlet data on all sides.

    With ``periodic=True`` the xi direction wraps instead; this closure has
    no end effects and is used to measure the bottom of the strip spectrum.
    """

    kind = "strip"
    axis_name = "xi"

    def __init__(self, L_xi: float, h: float, periodic: bool = False, mu: float | None = None):
        n_eta = _divides(2.0, h)
        n_xi = _divides(2.0 * L_xi, h)
        self.L_xi = float(L_xi)
        if periodic:
            x1 = -L_xi + h * np.arange(n_xi)
        else:
            x1 = -L_xi + h * np.arange(1, n_xi)
        n1, n2 = len(x1), n_eta - 1
        if n1 * n2 < 9 or n2 < 1:
            raise ResolutionError("fewer than 9 interior nodes")
        if mu is not None and L_xi < 8.0 / mu:
            raise ResolutionError(f"L_xi = {L_xi} < 8/mu = {8.0 / mu:.4g}")
        ones = np.ones((n1, n2))
        Js = np.ones((n1 if periodic else n1 + 1, n2))
        Je = np.ones((n1, n2 + 1))
        super().__init__(x1, h, h, periodic, ones, Js, Je)

    @property
    def xi(self) -> np.ndarray:
        return self.x1

    def sub_window(self, a: float, b: float) -> "StripGrid":
        """Sub-strip (-a, b) x (-1, 1) on the same node lattice."""
        if self.periodic:
            raise ValueError("sub-windows of a periodic strip are not defined")
        ia = int(round(a / self.h1))
        ib = int(round(b / self.h1))
        if abs(ia * self.h1 - a) > 1e-9 or abs(ib * self.h1 - b) > 1e-9:
            raise ResolutionError("window ends must lie on grid nodes")
        sub = StripGrid.__new__(StripGrid)
        x1 = self.h1 * np.arange(-ia + 1, ib)
        sub.L_xi = max(a, b)
        n1, n2 = len(x1), self.shape[1]
        Grid.__init__(sub, x1, self.h1, self.h2, False, np.ones((n1, n2)),
                      np.ones((n1 + 1, n2)), np.ones((n1, n2 + 1)))
        return sub

    def embed_indices(self, sub: "StripGrid") -> np.ndarray:
        """Row indices of this grid that carry the nodes of ``sub``."""
        i0 = int(round((sub.x1[0] - self.x1[0]) / self.h1))
        return np.arange(i0, i0 + sub.shape[0])


class TubeGrid(Grid):
    """Tube of normal radius 1 around R*gamma in (s, eta) coordinates.

    The arc-length spacing h_s is the closest value to h that divides the
    tube length; h_eta = h.  Closed curves wrap in s, open curves carry
    Dirichlet data at both s-ends.
    """

    kind = "tube"
    axis_name = "s"

    def __init__(self, curve, R: float, h: float, kappa_margin: float = 0.0):
        n_eta = _divides(2.0, h)
        self.curve = curve
        self.R = float(R)
        kmax = getattr(curve, "kmax", None) or curve.kappa_max()
        if R <= kmax * (1.0 + kappa_margin):
            raise CurvatureTooLarge(f"R = {R} <= kappa_max = {kmax:.4g}: J <= 0 at |eta| = 1")
        self.length = R * curve.length
        n_s = max(int(round(self.length / h)), 2)
        hs = self.length / n_s
        if curve.closed:
            s = hs * np.arange(n_s)
        else:
            s = hs * np.arange(1, n_s)
        self.s_all = hs * np.arange(n_s + 1)
        n2 = n_eta - 1
        eta = -1.0 + h * np.arange(1, n2 + 1)
        eta_half = -1.0 + h * (np.arange(n2 + 1) + 0.5)
        self._kappa_node = self.kappa_at(s)
        J = 1.0 - np.outer(self._kappa_node, eta) / R
        if curve.closed:
            s_half = s + 0.5 * hs
        else:
            s_half = hs * (np.arange(n_s) + 0.5)
        Js = 1.0 - np.outer(self.kappa_at(s_half), eta) / R
        Je = 1.0 - np.outer(self._kappa_node, eta_half) / R
        super().__init__(s, hs, h, curve.closed, J, Js, Je)

    def kappa_at(self, s) -> np.ndarray:
        """Signed curvature of the unit curve at arc position s/R (tube scale s)."""
        s = np.asarray(s, dtype=float)
        if self.curve.kind == "circle":
            return np.full(s.shape, 1.0 / self.curve._radius)
        if self.curve.kind == "segment":
            return np.zeros(s.shape)
        return self.curve.curvature(self.curve.param_at(s / self.R))

    @property
    def s(self) -> np.ndarray:
        return self.x1

    @property
    def n_s(self) -> int:
        """Number of arc-length cells (equals node count when closed)."""
        return len(self.s_all) - 1

    def window(self, center_index: int, half: int) -> "WindowGrid":
        """Sub-grid of 2*half+1 consecutive s-nodes around ``center_index``.

        Index arithmetic wraps on closed tubes.  The window inherits the
        parent's metric values, so its operator is exactly the parent
        operator restricted to the window with zero data outside.
        """
        return WindowGrid(self, center_index - half, center_index + half + 1)

    def embed(self, values, window: "WindowGrid") -> np.ndarray:
        out = np.zeros(self.shape)
        out[window.parent_rows] = _vals(values)
        return out


class WindowGrid(Grid):
    """Consecutive s-rows [i0, i1) of a tube grid with Dirichlet rows around."""

    kind = "window"
    axis_name = "s"

    def __init__(self, parent: TubeGrid, i0: int, i1: int):
        n_par = parent.shape[0]
        if i1 - i0 < 3:
            raise ResolutionError("window must hold at least 3 rows")
        if parent.periodic:
            if i1 - i0 > n_par:
                raise ResolutionError("window longer than the closed tube")
            rows = np.arange(i0, i1) % n_par
            edges = np.arange(i0 - 1, i1) % n_par
            # parent edge k joins nodes k and k+1
            Js = parent.Js[edges]
            x1 = parent.s_all[0] + parent.h1 * np.arange(i0, i1)
        else:
            if i0 < 0 or i1 > n_par:
                raise ResolutionError("window leaves the open tube")
            rows = np.arange(i0, i1)
            Js = parent.Js[i0:i1 + 1]
            x1 = parent.x1[i0:i1]
        self.parent = parent
        self.parent_rows = rows
        self.i0, self.i1 = i0, i1
        self.R = parent.R
        self.curve = parent.curve
        super().__init__(x1, parent.h1, parent.h2, False, parent.J[rows], Js, parent.Je[rows])


def build_strip_grid(L_xi: float, h: float, periodic: bool = False, mu: float | None = None) -> StripGrid:
    return StripGrid(L_xi, h, periodic=periodic, mu=mu)


def build_tube_grid(curve, R: float, h: float, kappa_margin: float = 0.0) -> TubeGrid:
    return TubeGrid(curve, R, h, kappa_margin=kappa_margin)


# fields ---------------------------------------------------------------------
@dataclass(frozen=True)
class GridField:
    """Values at the interior nodes of a grid; Dirichlet nodes are zero."""

    grid: Grid
    values: np.ndarray = field(repr=False)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.shape != self.grid.shape:
            v = v.reshape(self.grid.shape)
        if not np.all(np.isfinite(v)):
            raise ValueError("field values must be finite")
        v = v.copy()
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __add__(self, other):
        return GridField(self.grid, self.values + _vals(other))

    def __sub__(self, other):
        return GridField(self.grid, self.values - _vals(other))

    def __mul__(self, c: float):
        return GridField(self.grid, self.values * c)

    __rmul__ = __mul__

    def __neg__(self):
        return GridField(self.grid, -self.values)

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0

    def to_csv(self, path, digits: int = 9):
        write_field_csv(self, path, digits=digits)


# solves ---------------------------------------------------------------------
def apply_operator(grid: Grid, lam: float, u) -> np.ndarray:
    """(-Delta_h + lam) u as nodal values, i.e. M^-1 (K + lam M) u."""
    u = _vals(u).ravel()
    return ((grid.K @ u) / grid.mass + lam * u).reshape(grid.shape)


def solve_linear(grid: Grid, lam: float, rhs) -> GridField:
    """Solve (-Delta_h + lam) u = rhs with homogeneous Dirichlet data."""
    f = _vals(rhs)
    scale = float(np.max(np.abs(f))) if f.size else 0.0
    if scale == 0.0:
        return grid.zeros()
    lu = grid.factor(lam)
    b = (grid.mass * f.ravel())
    u = lu.solve(b)
    res = np.max(np.abs(apply_operator(grid, lam, u) - f))
    if res > RESIDUAL_TOL * scale:
        # one step of iterative refinement before giving up
        r = b - grid.operator(lam) @ u
        u = u + lu.solve(r)
        res = np.max(np.abs(apply_operator(grid, lam, u) - f))
        if res > RESIDUAL_TOL * scale:
            raise SolverDivergence(f"linear residual {res:.3g} exceeds {RESIDUAL_TOL * scale:.3g}")
    return GridField(grid, u.reshape(grid.shape))


def solve_mass_rhs(grid: Grid, lam: float, weighted_rhs: np.ndarray) -> np.ndarray:
    """Solve (K + lam M) u = b for a raw right-hand side b (flattened)."""
    return grid.factor(lam).solve(np.asarray(weighted_rhs, dtype=float).ravel())


def smallest_eigenpairs(grid: Grid, potential=None, k: int = 1, tol: float = EIG_RESIDUAL_TOL,
                        sigma: float | None = None):
    """The k smallest eigenpairs of -Delta_h + potential.

    Solves K v = theta M v (plus the potential) by shift-invert Lanczos with a
    shift below the spectrum.  Without a potential the shift sits just under
    the cross-section eigenvalue, which keeps the clustered low spectrum of
    long tubes well separated after inversion.  Eigenfields are normalized in
    the discrete L2 product with weights M; residuals are measured in that
    norm.
    """
    if not 1 <= k <= 10:
        raise ValueError("k must be in 1..10")
    mass = grid.mass
    A = grid.K.copy()
    V = np.zeros(grid.size) if potential is None else _vals(potential).ravel()
    if potential is not None:
        A = A + sp.diags(mass * V)
    A = A.tocsc()
    if sigma is None:
        if potential is None:
            sigma = cross_section_eigenvalue(grid.h2) - 0.1
        else:
            sigma = float(min(V.min(), 0.0)) - 1.0
    Mm = sp.diags(mass).tocsc()
    n = grid.size
    kk = min(k, n - 2)
    try:
        theta, vecs = spla.eigsh(A, k=kk, M=Mm, sigma=sigma, which="LM", tol=0.0,
                                 maxiter=5000, v0=np.ones(n))
    except spla.ArpackNoConvergence as exc:
        raise ConvergenceFailure(str(exc)) from exc
    order = np.argsort(theta)
    theta, vecs = theta[order], vecs[:, order]
    out = []
    for j in range(kk):
        v = vecs[:, j]
        v = v / math.sqrt(np.dot(mass * v, v))
        # fix the sign so that the largest-magnitude entry is positive
        if v[np.argmax(np.abs(v))] < 0:
            v = -v
        th = float(np.dot(v, A @ v))
        r = (A @ v) / mass - th * v
        res = math.sqrt(np.dot(mass * r, r))
        if res > tol * max(1.0, abs(th)):
            raise ConvergenceFailure(f"eigen residual {res:.3g} for theta = {th:.6g}")
        out.append((th, GridField(grid, v.reshape(grid.shape)), res))
    return [(th, vf) for th, vf, _ in out]


def eigen_residual(grid: Grid, potential, theta: float, v) -> float:
    """||A v - theta v||_M for the operator of :func:`smallest_eigenpairs`."""
    mass = grid.mass
    vv = _vals(v).ravel()
    Av = grid.K @ vv / mass
    if potential is not None:
        Av = Av + _vals(potential).ravel() * vv
    r = Av - theta * vv
    return math.sqrt(np.dot(mass * r, r))


def strip_spectrum_bottom(h: float, L_xi: float = 10.0, closure: str = "periodic") -> float:
    """Smallest eigenvalue of the discrete Laplacian of the strip.

    ``closure="periodic"`` closes the xi direction periodically, giving the
    bottom of the spectrum of the (untruncated) discrete strip operator;
    ``closure="dirichlet"`` uses the truncated box, which adds the
    longitudinal ground energy (pi / 2 L_xi)^2.
    """
    grid = StripGrid(L_xi, h, periodic=(closure == "periodic"))
    return smallest_eigenpairs(grid, None, 1)[0][0]


# csv ------------------------------------------------------------------------
def write_field_csv(field: GridField, path, digits: int = 9):
    """Row-major CSV (including Dirichlet nodes) with header ``s|xi,eta,value``."""
    from .io_utils import atomic_write_text

    grid = field.grid
    x1, eta = grid.full_coordinates()
    vals = grid.pad(field.values)
    X, E = np.meshgrid(x1, eta, indexing="ij")
    name = "xi" if grid.kind == "strip" else "s"
    fmt = f"%.{digits}g"
    lines = [f"{name},eta,value"]
    for a, b, c in zip(X.ravel(), E.ravel(), vals.ravel()):
        lines.append(f"{fmt % a},{fmt % b},{fmt % c}")
    atomic_write_text(path, "\n".join(lines) + "\n")


def read_field_csv(path):
    """Return (x1, eta, values) arrays of a field CSV in full-grid layout."""
    data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    x1 = np.unique(data[:, 0])
    eta = np.unique(data[:, 1])
    return x1, eta, data[:, 2].reshape(len(x1), len(eta))

