"""Rotationally symmetric surfaces dr^2 + h(r)^2 dtheta^2 and radial fields on them.

The radial Laplacian f'' + (h'/h) f' is discretized in finite-volume form on a
cell-centred grid,

    (Lap f)_i = [h_{i+1/2}(f_{i+1} - f_i) - h_{i-1/2}(f_i - f_{i-1})] / (dr V_i),

with V_i the exact cell volume int_cell h dr. The stiffness part is a symmetric
tridiagonal matrix, so the operator is self-adjoint in the V-weighted inner
product, and the flux through a pole face vanishes because h = 0 there.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.integrate import trapezoid
from scipy.linalg import eigh_tridiagonal, solve_banded

from .errors import (AdmissibilityViolation, GridMismatch, GridTooCoarse,
                     ParameterOutOfRange, SupportViolation)

KINDS = ("euclidean-plane", "round-sphere", "hyperbolic-plane", "custom")
BOUNDARY_TYPES = ("pole", "dirichlet", "neumann", "extrapolate")

_GL_X, _GL_W = np.polynomial.legendre.leggauss(5)


@dataclass(frozen=True)
class SurfaceMetric:
    kind: str
    h: Callable
    h_prime: Callable
    rho: float
    growth_C: float
    cell_volume: Optional[Callable] = field(default=None, repr=False)

    def volume(self, a, b) -> np.ndarray:
        """int_a^b h(r) dr for arrays of cell faces."""
        a = np.asarray(a, float)
        b = np.asarray(b, float)
        if self.cell_volume is not None:
            return self.cell_volume(a, b)
        mid, half = 0.5 * (a + b), 0.5 * (b - a)
        nodes = mid[..., None] + half[..., None] * _GL_X
        return half * (self.h(nodes) @ _GL_W)

    def growth_window(self):
        top = self.rho if math.isfinite(self.rho) else 10.0
        return top / 100.0, 0.99 * top

    def check_growth(self, r) -> None:
        lo, hi = self.growth_window()
        r = np.asarray(r, float)
        r = r[(r >= lo) & (r <= hi)]
        bad = np.nonzero(self.h_prime(r) > self.growth_C * self.h(r) * (1 + 1e-12))[0]
        if bad.size:
            raise AdmissibilityViolation(
                f"growth condition h' <= C h fails at r={r[bad[0]]:.6g}", r=float(r[bad[0]]))


def _fd_slope(h, x, step, sign=1):
    # one-sided second-order estimate of h'(x), stencil pointing into the domain
    return sign * (-3 * h(x) + 4 * h(x + sign * step) - h(x + 2 * sign * step)) / (2 * step)


def _check_admissible(h, h_prime, rho, tol=1e-6):
    step = 1e-4
    h0 = float(h(0.0))
    if abs(h0) > 1e-12:
        raise AdmissibilityViolation(f"h(0) = {h0:.3g}, expected 0", sample=0.0)
    d0 = _fd_slope(h, 0.0, step)
    if abs(d0 - 1.0) > tol:
        raise AdmissibilityViolation(f"h'(0) = {d0:.8g}, expected 1", sample=0.0)
    top = rho if math.isfinite(rho) else 20.0
    r = np.linspace(0.0, top, 4001)[1:-1] if math.isfinite(rho) else np.linspace(0.0, top, 4001)[1:]
    vals = h(r)
    bad = np.nonzero(~(vals > 0))[0]
    if bad.size:
        raise AdmissibilityViolation(f"h <= 0 at interior sample r={r[bad[0]]:.6g}", sample=float(r[bad[0]]))
    if math.isfinite(rho):
        hr = float(h(rho))
        if abs(hr) > tol:
            raise AdmissibilityViolation(f"h(rho) = {hr:.3g}, expected 0", sample=rho)
        dr = _fd_slope(h, rho, step, sign=-1)
        if abs(dr + 1.0) > tol:
            raise AdmissibilityViolation(f"h'(rho) = {dr:.8g}, expected -1", sample=rho)
    if h_prime is not None:
        fd = (h(r[1:-1] + 1e-6) - h(r[1:-1] - 1e-6)) / 2e-6
        err = np.abs(h_prime(r[1:-1]) - fd) / np.maximum(1.0, np.abs(fd))
        if err.max() > 1e-5:
            i = int(np.argmax(err))
            raise AdmissibilityViolation(f"h_prime disagrees with h at r={r[1 + i]:.6g}", sample=float(r[1 + i]))


def _default_growth_C(h, h_prime, rho):
    top = rho if math.isfinite(rho) else 10.0
    r = np.linspace(top / 100.0, 0.99 * top, 2000)
    return float(2.0 * max(np.max(h_prime(r) / h(r)), 1e-12))


def make_metric(kind: str, custom_h=None, rho=None, custom_h_prime=None,
                growth_C: Optional[float] = None) -> SurfaceMetric:
    """Build an admissible warped-product metric."""
    if kind == "euclidean-plane":
        h, hp, rho_ = (lambda r: np.asarray(r, float) * 1.0), (lambda r: np.ones_like(np.asarray(r, float))), math.inf
        vol = lambda a, b: 0.5 * (b - a) * (b + a)
    elif kind == "round-sphere":
        h, hp, rho_ = np.sin, np.cos, math.pi
        vol = lambda a, b: 2.0 * np.sin(0.5 * (a + b)) * np.sin(0.5 * (b - a))
    elif kind == "hyperbolic-plane":
        h, hp, rho_ = np.sinh, np.cosh, math.inf
        vol = lambda a, b: 2.0 * np.sinh(0.5 * (a + b)) * np.sinh(0.5 * (b - a))
    elif kind == "custom":
        if custom_h is None or rho is None:
            raise ParameterOutOfRange("custom metric needs both h and rho")
        rho_ = float(rho)
        if not rho_ > 0:
            raise ParameterOutOfRange("rho must be positive")
        h = custom_h
        if custom_h_prime is None:
            hp = lambda r: (h(np.asarray(r, float) + 1e-6) - h(np.asarray(r, float) - 1e-6)) / 2e-6
            checked_hp = None
        else:
            hp = checked_hp = custom_h_prime
        _check_admissible(h, checked_hp, rho_)
        vol = None
    else:
        raise ParameterOutOfRange(f"unknown metric kind {kind!r}")
    if kind != "custom":
        _check_admissible(h, hp, rho_)
    C = _default_growth_C(h, hp, rho_) if growth_C is None else float(growth_C)
    metric = SurfaceMetric(kind, h, hp, rho_, C, vol)
    lo, hi = metric.growth_window()
    metric.check_growth(np.linspace(lo, hi, 1000))
    return metric


def metric_from_table(r, h, h_prime) -> SurfaceMetric:
    """Custom metric from tabulated samples (r, h, h'), interpolated by
    cubic Hermite pieces."""
    from scipy.interpolate import CubicHermiteSpline
    r = np.asarray(r, float)
    spline = CubicHermiteSpline(r, np.asarray(h, float), np.asarray(h_prime, float))
    deriv = spline.derivative()
    return make_metric("custom", custom_h=lambda x: spline(np.asarray(x, float)),
                       rho=float(r[-1]) if abs(h[-1]) < 1e-6 else math.inf,
                       custom_h_prime=lambda x: deriv(np.asarray(x, float)))


class RadialGrid:
    """Uniform cell-centred grid on [r_lo, r_hi] with boundary rules.

    A boundary sitting on a pole (r = 0, or r = rho for compact surfaces)
    is treated as a pole automatically; otherwise Dirichlet (zero at the face).
    """

    def __init__(self, metric: SurfaceMetric, r_lo: float, r_hi: float, n: int,
                 bc_lo: Optional[str] = None, bc_hi: Optional[str] = None):
        if n < 16:
            raise GridTooCoarse(f"need at least 16 nodes, got {n}")
        if not (0.0 <= r_lo < r_hi <= metric.rho):
            raise ParameterOutOfRange(f"grid [{r_lo}, {r_hi}] not inside [0, {metric.rho}]")
        self.metric = metric
        self.r_lo, self.r_hi, self.n = float(r_lo), float(r_hi), int(n)
        self.dr = (self.r_hi - self.r_lo) / n
        self.faces = self.r_lo + self.dr * np.arange(n + 1)
        self.faces[-1] = self.r_hi
        self.nodes = self.r_lo + self.dr * (np.arange(n) + 0.5)
        self.bc_lo = bc_lo or ("pole" if self.r_lo == 0.0 else "dirichlet")
        self.bc_hi = bc_hi or ("pole" if self.r_hi == metric.rho else "dirichlet")
        for bc in (self.bc_lo, self.bc_hi):
            if bc not in BOUNDARY_TYPES:
                raise ParameterOutOfRange(f"unknown boundary type {bc!r}")
        self.h_faces = metric.h(self.faces)
        if self.bc_lo == "pole":
            self.h_faces[0] = 0.0
        if self.bc_hi == "pole":
            self.h_faces[-1] = 0.0
        self.volumes = metric.volume(self.faces[:-1], self.faces[1:])
        self._assemble()

    def _assemble(self):
        hf, dr = self.h_faces, self.dr
        self.off = hf[1:-1] / dr
        diag = -(hf[1:] + hf[:-1]) / dr
        # ghost-value rules that keep the matrix symmetric
        for end, bc, k in ((0, self.bc_lo, 0), (-1, self.bc_hi, -1)):
            if bc == "dirichlet":
                diag[end] -= hf[k] / dr
            elif bc == "neumann":
                diag[end] += hf[k] / dr
        self.diag = diag

    def same_as(self, other: "RadialGrid") -> bool:
        return (self.metric is other.metric and self.n == other.n
                and self.r_lo == other.r_lo and self.r_hi == other.r_hi
                and self.bc_lo == other.bc_lo and self.bc_hi == other.bc_hi)

    def stiffness_apply(self, f: np.ndarray) -> np.ndarray:
        """Symmetric part S f (so that Lap f = S f / V)."""
        out = self.diag * f
        out[:-1] += self.off * f[1:]
        out[1:] += self.off * f[:-1]
        hf, dr = self.h_faces, self.dr
        if self.bc_lo == "extrapolate":
            ghost = 4 * f[0] - 6 * f[1] + 4 * f[2] - f[3]
            out[0] += hf[0] * ghost / dr
        if self.bc_hi == "extrapolate":
            ghost = 4 * f[-1] - 6 * f[-2] + 4 * f[-3] - f[-4]
            out[-1] += hf[-1] * ghost / dr
        return out

    def banded(self, a: complex, c: complex) -> np.ndarray:
        """Banded storage of a*V + c*S for scipy.linalg.solve_banded."""
        if "extrapolate" in (self.bc_lo, self.bc_hi):
            raise ParameterOutOfRange("extrapolate boundaries are for apply only")
        ab = np.zeros((3, self.n), dtype=complex)
        ab[0, 1:] = c * self.off
        ab[1] = a * self.volumes + c * self.diag
        ab[2, :-1] = c * self.off
        return ab

    def check_growth(self):
        self.metric.check_growth(self.nodes)


class RadialField:
    """Complex samples of a radial function on a RadialGrid."""

    def __init__(self, grid: RadialGrid, values):
        values = np.asarray(values, dtype=complex)
        if values.shape != (grid.n,):
            raise GridMismatch(f"{values.size} values for {grid.n} nodes")
        if not np.all(np.isfinite(values)):
            raise ParameterOutOfRange("field contains NaN or Inf")
        self.grid = grid
        self.values = values

    @classmethod
    def from_function(cls, grid: RadialGrid, fn) -> "RadialField":
        return cls(grid, fn(grid.nodes))

    @property
    def r(self):
        return self.grid.nodes


def laplacian_apply(f: RadialField) -> RadialField:
    """Discrete f'' + (h'/h) f'."""
    g = f.grid
    if g.n < 3:
        raise GridTooCoarse("laplacian needs at least 3 nodes")
    return RadialField(g, g.stiffness_apply(f.values) / g.volumes)


def integrate(f: RadialField, power: int = 2) -> float:
    """2 pi int |f|^power h dr with exact cell volumes."""
    if power not in (2, 4, 6, 8):
        raise ParameterOutOfRange(f"power must be one of 2, 4, 6, 8; got {power}")
    return float(2 * np.pi * np.sum(f.grid.volumes * np.abs(f.values) ** power))


def lp_norm(f: RadialField, p: float) -> float:
    return float((2 * np.pi * np.sum(f.grid.volumes * np.abs(f.values) ** p)) ** (1.0 / p))


def inner(f: RadialField, g: RadialField) -> complex:
    if not f.grid.same_as(g.grid):
        raise GridMismatch("fields live on different grids")
    return complex(2 * np.pi * np.sum(f.grid.volumes * f.values * np.conj(g.values)))


def _sym_one_minus_lap(grid: RadialGrid):
    """Diagonal and off-diagonal of V^{-1/2}(V - S)V^{-1/2}."""
    sv = np.sqrt(grid.volumes)
    d = 1.0 - grid.diag / grid.volumes
    e = -grid.off / (sv[:-1] * sv[1:])
    return d, e


def hs_norm(f: RadialField, s: float, method: str = "auto") -> float:
    """Spectral H^s norm <f, (I - Lap)^s f>^{1/2} on the grid, s >= 0.

    Dense eigen-decomposition for n <= 4096. Otherwise s = m + sigma is split
    into an integer power, applied directly, and a fractional power from the
    Balakrishnan integral A^sigma = sin(pi sigma)/pi int_0^inf t^{sigma-1}
    A (t + A)^{-1} dt evaluated with tridiagonal solves.
    """
    grid = f.grid
    if not s >= 0.0:
        raise ParameterOutOfRange("hs_norm needs s >= 0")
    g = np.sqrt(grid.volumes) * f.values
    gg = float(np.vdot(g, g).real)
    if s == 0.0 or gg == 0.0:
        return math.sqrt(2 * np.pi * gg)
    d, e = _sym_one_minus_lap(grid)
    if method == "auto":
        method = "dense" if grid.n <= 4096 else "resolvent"
    if method == "dense":
        w, U = eigh_tridiagonal(d, e)
        c = U.T @ g
        val = float(np.sum(w**s * np.abs(c) ** 2))
        return math.sqrt(2 * np.pi * val)
    if method != "resolvent":
        raise ParameterOutOfRange(f"unknown method {method!r}")

    def apply(v):
        out = d * v
        out[:-1] += e * v[1:]
        out[1:] += e * v[:-1]
        return out

    m = int(math.floor(s))
    sig = s - m
    x = g.copy()
    for _ in range(m):
        x = apply(x)
    gx = float(np.vdot(g, x).real)
    if sig == 0.0:
        return math.sqrt(2 * np.pi * gx)
    lam_max = float(np.max(d) + 2 * np.max(np.abs(e)))
    x_lo, x_hi = -40.0, math.log(lam_max) + 40.0
    xs = np.arange(x_lo, x_hi + 0.1, 0.1)
    ab = np.zeros((3, grid.n))
    ab[0, 1:] = e
    ab[2, :-1] = e
    vals = np.empty(xs.size)
    for k, xk in enumerate(xs):
        t = math.exp(xk)
        ab[1] = d + t
        sol = solve_banded((1, 1), ab, x)
        vals[k] = math.exp(sig * xk) * (gx - t * float(np.vdot(g, sol).real))
    body = trapezoid(vals, xs)
    # tails: bracket -> <g, x> on the left, -> <g, A x>/t on the right
    gAx = float(np.vdot(g, apply(x)).real)
    tails = gx * math.exp(sig * x_lo) / sig + gAx * math.exp((sig - 1) * xs[-1]) / (1 - sig)
    val = math.sin(math.pi * sig) / math.pi * (body + tails)
    return math.sqrt(2 * np.pi * val)


@dataclass
class SobolevReport:
    s: float
    p: float
    lp: float
    hs: float
    ratio: float


def radial_sobolev_check(f: RadialField, s: float, support_window=None, eta: float = 0.05,
                         method: str = "auto") -> SobolevReport:
    """Ratio ||f||_{L^p} / ||f||_{H^s} with p = 2/(1 - 2s)."""
    if not (0.0 < s < 0.5):
        raise ParameterOutOfRange(f"s must lie in (0, 1/2), got {s}")
    rho = f.grid.metric.rho
    top = rho if math.isfinite(rho) else math.inf
    a, b = support_window if support_window is not None else (eta, top - eta)
    if a < eta or b > top - eta:
        raise SupportViolation(f"support window [{a}, {b}] reaches within {eta} of a pole")
    r = f.grid.nodes
    amp = np.abs(f.values)
    outside = (r < a) | (r > b)
    if amp.max() > 0 and outside.any() and amp[outside].max() > 1e-8 * amp.max():
        raise SupportViolation("field is not negligible outside the declared support window")
    p = 2.0 / (1.0 - 2.0 * s)
    lp = lp_norm(f, p)
    hs = hs_norm(f, s, method)
    return SobolevReport(s, p, lp, hs, lp / hs if hs > 0 else math.nan)


def sobolev_family(metric: SurfaceMetric, profile, lambdas, s: float = 0.25, r0: float = 1.0,
                   points_per_width: int = 40, width: float = 15.0):
    """Ratios for f_lam(r) = lam^{-1/4} g((r - r0)/lam) over a scaling family."""
    out = []
    for lam in lambdas:
        half = min(width * lam, 0.9 * min(r0, metric.rho - r0) if math.isfinite(metric.rho) else width * lam)
        half = min(half, 0.9 * r0)
        n = max(64, int(math.ceil(2 * half * points_per_width / lam)))
        grid = RadialGrid(metric, r0 - half, r0 + half, n)
        f = RadialField(grid, lam ** -0.25 * profile((grid.nodes - r0) / lam))
        out.append(radial_sobolev_check(f, s, support_window=(r0 - half, r0 + half), eta=0.0))
    return out
