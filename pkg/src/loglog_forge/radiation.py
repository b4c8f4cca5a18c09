"""Linear radiation zeta_b and its flux constant Gamma_b.

Writing zeta_b = Z(r) e^{-i b r^2/4}, the amplitude solves

    Z'' - Z + (b^2 r^2/4) Z = psi_hat_b,   Z'(0) = 0,   Z outgoing at infinity,

with psi_hat_b the real amplitude of Psi_b. The homogeneous equation is
integrated by Taylor stepping in mpmath (the equation has polynomial
coefficients, so the series recurrence is exact); the outgoing solution is
seeded at Y_max = 8/b from its Langer-Airy form and integrated backwards.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import mpmath as mp
import numpy as np
from scipy.special import airy

from .errors import (InsufficientSamples, ParameterOutOfRange, PlateauNotFlat,
                     SupportViolation, WronskianDegenerate)
from .profiles import TruncatedProfile, solve_profile, truncate

B_RANGE = (0.1, 0.4)
DPS = 34
TAYLOR_STEP = 0.25
PLATEAU_TOL = 0.05
_GL_X, _GL_W = np.polynomial.legendre.leggauss(16)


# ---------------------------------------------------------------- Airy pair

def paper_airy(t):
    """A(t) = Bi(t) + i Ai(t) and A'(t).

    Grows like pi^{-1/2} t^{-1/4} exp((2/3) t^{3/2}) as t -> +inf and
    oscillates with modulus ~ pi^{-1/2} |t|^{-1/4} as t -> -inf, never
    vanishing on the real line."""
    ai, aip, bi, bip = airy(t)
    return bi + 1j * ai, bip + 1j * aip


@dataclass(frozen=True)
class AiryPair:
    realization: str = "Bi + i Ai (scipy.special.airy)"

    def __call__(self, t):
        return paper_airy(t)

    def wronskian(self, t):
        """W(A, conj A) = A conj(A)' - A' conj(A); equals 2i/pi."""
        A, Ap = paper_airy(t)
        return A * np.conj(Ap) - Ap * np.conj(A)


def _airy_mp(t):
    A = mp.airybi(t) + 1j * mp.airyai(t)
    Ap = mp.airybi(t, derivative=1) + 1j * mp.airyai(t, derivative=1)
    return A, Ap


# ------------------------------------------------------------- Langer map

def _langer_scalar(x, lib=math):
    if x >= 0:
        th = lib.asin(lib.sqrt(x) / 2)
        integral = 2 * th - lib.sin(4 * th) / 2
        return (1.5 * integral) ** (mp.mpf(2) / 3 if lib is mp else 2.0 / 3.0)
    th = lib.asinh(lib.sqrt(-x) / 2)
    integral = lib.sinh(4 * th) / 2 - 2 * th
    return -((1.5 * integral) ** (mp.mpf(2) / 3 if lib is mp else 2.0 / 3.0))


def langer_map(x):
    """s(x) with (2/3) s^{3/2} = int_0^x sqrt(xi) sqrt(1 - xi/4) d xi for x >= 0,
    continued to x < 0 with the sign flipped. Requires x <= 2."""
    xa = np.asarray(x, dtype=float)
    if np.any(xa > 2.0):
        raise ParameterOutOfRange("langer_map needs x <= 2")
    out = np.vectorize(_langer_scalar, otypes=[float])(xa)
    return out if out.ndim else float(out)


def _langer_derivs(x, lib=math):
    """s, s', s'' at x (s' = 1, s'' = -1/10 at x = 0 by continuity)."""
    s = _langer_scalar(x, lib)
    if abs(x) < 1e-6:
        # s = x - x^2/20 + O(x^3)
        return s, 1 - x / 10, -0.1 + 0 * x
    sp = lib.sqrt(abs(x)) * lib.sqrt(1 - x / 4) / lib.sqrt(abs(s))
    spp = (1 - x / 2 - sp**3) / (2 * s * sp)
    return s, sp, spp


def airy_outgoing(r, b, lib=math):
    """Leading Langer-Airy outgoing solution s'^{-1/2} A(s / b^{2/3}) with
    x = 2 - b r, and its r-derivative."""
    x = 2 - b * r
    s, sp, spp = _langer_derivs(x, lib)
    c = b ** (mp.mpf(2) / 3) if lib is mp else b ** (2.0 / 3.0)
    if lib is mp:
        A, Ap = _airy_mp(s / c)
    else:
        A, Ap = paper_airy(s / c)
    Z = A / lib.sqrt(sp)
    dZdx = -0.5 * spp * A / (sp * lib.sqrt(sp)) + lib.sqrt(sp) * Ap / c
    return Z, -b * dZdx


# ------------------------------------------------------ Taylor integrator

class TaylorSolution:
    """Homogeneous solution of Z'' = (1 - b^2 r^2/4) Z stored as local Taylor
    series at equally spaced nodes on [0, r_max]."""

    def __init__(self, b, r_max, z_start, dz_start, backward=False,
                 step=TAYLOR_STEP, dps=DPS):
        self.dps = dps
        with mp.workdps(dps):
            self.b = mp.mpf(b)
            n = int(math.ceil(r_max / step))
            self.h = mp.mpf(r_max) / n
            self.nodes = [self.h * k for k in range(n + 1)]
            self.coef = [None] * (n + 1)
            order = range(n, -1, -1) if backward else range(n + 1)
            sgn = -1 if backward else 1
            z, dz = mp.mpmathify(z_start), mp.mpmathify(dz_start)
            tol = mp.mpf(10) ** (-dps - 2)
            for k in order:
                a = self._series(self.nodes[k], z, dz, tol)
                self.coef[k] = a
                t = sgn * self.h
                z = mp.polyval(a[::-1], t)
                dz = mp.polyval([j * a[j] for j in range(len(a) - 1, 0, -1)], t)
        self._coef_d = [np.array([complex(c) for c in a]) for a in self.coef]
        self._nodes_d = np.array([float(x) for x in self.nodes])
        self._h_d = float(self.h)

    def _series(self, r0, z, dz, tol):
        b2 = self.b**2 / 4
        c0, c1, c2 = 1 - b2 * r0**2, -2 * b2 * r0, -b2
        a = [z, dz]
        hn = self.h**2
        scale = abs(z) + abs(dz) * self.h
        n = 0
        small = 0
        while True:
            an2 = c0 * a[n]
            if n >= 1:
                an2 += c1 * a[n - 1]
            if n >= 2:
                an2 += c2 * a[n - 2]
            an2 /= (n + 2) * (n + 1)
            a.append(an2)
            small = small + 1 if abs(an2) * hn <= tol * scale else 0
            if small >= 3 or n > 400:
                return a
            hn *= self.h
            n += 1

    def _node_index(self, r):
        return int(min(max(round(r / self._h_d), 0), len(self._nodes_d) - 1))

    def eval_mp(self, r):
        """(Z, Z') at r in extended precision."""
        with mp.workdps(self.dps):
            r = mp.mpf(r)
            k = self._node_index(float(r))
            a = self.coef[k]
            t = r - self.nodes[k]
            z = mp.polyval(a[::-1], t)
            dz = mp.polyval([j * a[j] for j in range(len(a) - 1, 0, -1)], t)
            return z, dz

    def eval(self, r, deriv: int = 0):
        """Z (or its deriv-th derivative) at float r, in double precision."""
        r = np.atleast_1d(np.asarray(r, dtype=float))
        idx = np.clip(np.rint(r / self._h_d).astype(int), 0, len(self._nodes_d) - 1)
        out = np.empty(r.shape, dtype=complex)
        for k in np.unique(idx):
            m = idx == k
            a = self._coef_d[k]
            if deriv:
                j = np.arange(a.size)
                fac = np.ones(a.size)
                for d in range(deriv):
                    fac *= np.maximum(j - d, 0)
                a = (a * fac)[deriv:]
            out[m] = np.polyval(a[::-1], r[m] - self._nodes_d[k])
        return out

    def residual(self) -> float:
        """sup |Z'' - (1 - b^2 r^2/4) Z| / sup |Z|, with Z'' and Z taken from the
        series of neighbouring nodes at the midpoints between them."""
        b = float(self.b)
        worst, zmax = 0.0, 0.0
        for k in range(len(self._nodes_d) - 1):
            rm = self._nodes_d[k] + 0.5 * self._h_d
            a, c = self._coef_d[k], self._coef_d[k + 1]
            j = np.arange(a.size)
            d2 = np.polyval((a * j * np.maximum(j - 1, 0))[2:][::-1], 0.5 * self._h_d)
            z = np.polyval(c[::-1], -0.5 * self._h_d)
            worst = max(worst, abs(d2 - (1 - b * b * rm * rm / 4) * z))
            zmax = max(zmax, abs(z))
        return worst / zmax


# -------------------------------------------------------------- solutions

@dataclass
class RadiationSolution:
    b: float
    r: np.ndarray
    Z: np.ndarray                 # Ztilde(r), the amplitude of zeta_b e^{i b r^2/4}
    zeta: np.ndarray
    Gamma_b: float
    method: str
    plateau_window: tuple
    plateau_variation: float      # raw r|Z|^2 over the window
    corrected_variation: float    # r|Z|^2 sqrt(1 - 4/(b r)^2) over the window
    plateau_mean: float
    overlap: float                # int Z_1 psi_hat
    wronskian: complex
    flux: float
    dZ0: complex
    homogeneous_residual: float
    extras: dict = field(default_factory=dict)

    def dzeta_norm2(self) -> float:
        """int over the line of |d zeta/dy|^2 (both half-lines, up to Y_max)."""
        z1 = self.extras["dZ"] - 0.5j * self.b * self.r * self.Z
        f = np.abs(z1) ** 2
        return float(2.0 * np.trapezoid(f, self.r))


def _check_b(b):
    if not B_RANGE[0] <= b <= B_RANGE[1]:
        raise ParameterOutOfRange(f"b = {b} outside [{B_RANGE[0]}, {B_RANGE[1]}]")


def _annulus_nodes(tp: TruncatedProfile, lo=None, hi=None, panels=8):
    lo = tp.R_b_minus if lo is None else lo
    hi = tp.R_b if hi is None else hi
    e = np.linspace(lo, hi, panels + 1)
    mid, half = 0.5 * (e[:-1] + e[1:]), 0.5 * (e[1:] - e[:-1])
    x = (mid[:, None] + half[:, None] * _GL_X).ravel()
    w = (half[:, None] * _GL_W).ravel()
    return x, w


def _mp_quad(sol: TaylorSolution, x, w, psi_hat):
    with mp.workdps(sol.dps):
        return mp.fsum(mp.mpf(wi) * mp.mpf(pi) * sol.eval_mp(xi)[0]
                       for xi, wi, pi in zip(x, w, psi_hat))


def _as_profile(b, psi, eta):
    if psi is None:
        return truncate(solve_profile(b, eta), half_width=0.0)
    if isinstance(psi, TruncatedProfile):
        if abs(psi.b - b) > 1e-14:
            raise ParameterOutOfRange("profile b does not match")
        return psi
    raise ParameterOutOfRange("psi must be a TruncatedProfile or None")


def solve_zeta(b: float, psi: TruncatedProfile | None = None, eta: float = 0.01,
               y_max: float | None = None, dr: float = 1.0 / 64.0, dps: int = DPS,
               seed_perturbation: float = 0.0, check_plateau: bool = True) -> RadiationSolution:
    """Direct boundary-value construction of Ztilde and Gamma_b.

    Gamma_b is the conserved outgoing flux (2/b) |I/W|^2 Im(conj(Z) Z'),
    which is the r -> infinity limit of r|Ztilde|^2. The raw plateau of
    r|Ztilde|^2 on [3/b, 6/b] carries the WKB factor 1/sqrt(1 - 4/(b r)^2),
    so flatness is judged on the corrected plateau."""
    _check_b(b)
    tp = _as_profile(b, psi, eta)
    x_ann, w_ann = _annulus_nodes(tp)
    ph = tp.psi_hat(x_ann)
    if np.max(np.abs(tp.psi_hat(np.linspace(0.0, tp.R_b_minus, 200)))) > 1e-10:
        raise SupportViolation("psi_hat is not confined to [R_b^-, R_b]")
    Y = y_max or 8.0 / b
    with mp.workdps(dps):
        zs, dzs = airy_outgoing(mp.mpf(Y), mp.mpf(b), lib=mp)
        dzs = dzs * (1 + mp.mpf(seed_perturbation))
    z1 = TaylorSolution(b, Y, 1, 0, dps=dps)
    zo = TaylorSolution(b, Y, zs, dzs, backward=True, dps=dps)
    with mp.workdps(dps):
        a1, d1 = z1.eval_mp(Y)
        a2, d2 = zo.eval_mp(Y)
        W = a1 * d2 - d1 * a2
        flux = mp.im(mp.conj(a2) * d2)
        I = _mp_quad(z1, x_ann, w_ann, ph)
        J = _mp_quad(zo, x_ann, w_ann, ph)
        if abs(W) < mp.mpf(10) ** (-dps // 2) * abs(a1) * abs(d2):
            raise WronskianDegenerate(f"|W| = {mp.nstr(abs(W), 5)}")
        gamma = 2 / mp.mpf(b) * abs(I / W) ** 2 * flux
    Wc, Ic, Jc = complex(W), float(I), complex(J)

    r = dr * np.arange(int(math.floor(Y / dr)) + 1)
    Z1, Z1p = z1.eval(r).real, z1.eval(r, 1).real
    Zo, Zop = zo.eval(r), zo.eval(r, 1)
    # variation of constants: Z1 int_r^inf Zo psi/W + Zo int_0^r Z1 psi/W
    lower = np.zeros(r.size)
    upper = np.full(r.size, Jc)
    inside = (r > tp.R_b_minus) & (r < tp.R_b)
    for i in np.flatnonzero(inside):
        x, w = _annulus_nodes(tp, tp.R_b_minus, r[i], panels=2)
        p = tp.psi_hat(x)
        lower[i] = np.sum(w * z1.eval(x).real * p)
        upper[i] = Jc - np.sum(w * zo.eval(x) * p)
    lower[r >= tp.R_b] = Ic
    upper[r >= tp.R_b] = 0.0
    Zt = (Z1 * upper + Zo * lower) / Wc
    dZt = (Z1p * upper + Zop * lower) / Wc
    zeta = Zt * np.exp(-0.25j * b * r * r)

    win = (3.0 / b, 6.0 / b)
    m = (r >= win[0]) & (r <= win[1])
    raw = r[m] * np.abs(Zt[m]) ** 2
    corr = raw * np.sqrt(1.0 - 4.0 / (b * r[m]) ** 2)
    var_raw = float((raw.max() - raw.min()) / raw.mean())
    var_corr = float((corr.max() - corr.min()) / corr.mean())
    if check_plateau and var_corr > PLATEAU_TOL:
        raise PlateauNotFlat(f"corrected plateau varies by {var_corr:.3g}")
    res = max(z1.residual(), zo.residual())
    return RadiationSolution(
        b=b, r=r, Z=Zt, zeta=zeta, Gamma_b=float(gamma), method="direct-bvp",
        plateau_window=win, plateau_variation=var_raw, corrected_variation=var_corr,
        plateau_mean=float(raw.mean()), overlap=Ic, wronskian=Wc, flux=float(flux),
        dZ0=complex(dZt[0]), homogeneous_residual=res,
        extras={"dZ": dZt, "Z1": Z1, "Zout": Zo, "profile": tp, "J": Jc},
    )


def semiclassical_gamma(b: float, psi: TruncatedProfile | None = None,
                        eta: float = 0.01, dps: int = DPS) -> float:
    """Gamma_b from the leading Airy form alone: the outgoing solution is
    replaced by its Langer-Airy approximation, whose flux is b^{1/3}/pi, and
    the Wronskian by its derivative at r = 0, giving

        Gamma_b = (2/pi) |int Z_1 psi_hat|^2 / (|Z_airy'(0)|^2 b^{2/3})."""
    _check_b(b)
    tp = _as_profile(b, psi, eta)
    x, w = _annulus_nodes(tp)
    z1 = TaylorSolution(b, tp.R_b + 1.0, 1, 0, dps=dps)
    with mp.workdps(dps):
        I = _mp_quad(z1, x, w, tp.psi_hat(x))
        _, dz0 = airy_outgoing(mp.mpf(0), mp.mpf(b), lib=mp)
        g = 2 / mp.pi * I**2 / (abs(dz0) ** 2 * mp.mpf(b) ** (mp.mpf(2) / 3))
    return float(g)


def radiation_row(sol: RadiationSolution):
    return [sol.b, sol.Gamma_b, sol.plateau_window[0], sol.plateau_window[1], sol.method]


RADIATION_HEADER = ["b", "Gamma_b", "plateau_low", "plateau_high", "method"]


# ---------------------------------------------------------------- the law

@dataclass
class SlopeReport:
    slope: float
    intercept: float      # log D
    residuals: np.ndarray
    b: np.ndarray
    gamma: np.ndarray


def gamma_slope_fit(points) -> SlopeReport:
    """Least-squares line through (1/b, log(b Gamma_b))."""
    pts = sorted({float(b): float(g) for b, g in points}.items())
    if len(pts) < 3:
        raise InsufficientSamples(f"need at least 3 distinct b values, got {len(pts)}")
    b = np.array([p[0] for p in pts])
    g = np.array([p[1] for p in pts])
    x, y = 1.0 / b, np.log(b * g)
    slope, intercept = np.polyfit(x, y, 1)
    return SlopeReport(float(slope), float(intercept), y - (slope * x + intercept), b, g)


def asymptotic_ratio(b1: float, b2: float) -> float:
    """Gamma_{b1}/Gamma_{b2} predicted by Gamma_b ~ (D/b) e^{-pi/b}."""
    return (b2 / b1) * math.exp(-math.pi * (1.0 / b1 - 1.0 / b2))
