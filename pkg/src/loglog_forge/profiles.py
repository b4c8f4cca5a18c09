"""Self-similar profiles Q_b = P_b e^{-i b y^2/4}, where

    P'' - P + (b^2 y^2 / 4) P + P^5 = 0,   P'(0) = 0,   P(R_b) = 0,

with R_b = 2 sqrt(1 - eta) / b; plus the truncated profile phi_b Q_b and
its remainder Psi_b.

Shooting runs backwards from R_b: start from P(R_b) = 0, P'(R_b) = -kappa
and solve P'(0; kappa) = 0 for log(kappa). Forward shooting on P(0) needs
P(0) to about e^{-pi/b} relative accuracy, which double precision cannot
deliver for small b.
"""
from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

from ._fd import derivative
from .errors import (BTooLarge, InsufficientSamples, NegativeSlope, NoBracket,
                     ParameterOutOfRange)
from .groundstate import Q0, Q_MASS, q_eval

B_MAX = 0.5
ETA_MAX = 0.05
RTOL = 1e-13
_GL_X, _GL_W = np.polynomial.legendre.leggauss(12)


def _rhs(y, z, b):
    P, dP = z
    return [dP, P - 0.25 * b * b * y * y * P - P**5]


def _overshoot(y, z, b):
    return z[0] - 3.0


_overshoot.terminal = True


def _shoot(log_kappa, b, Rb, dense=False):
    k = math.exp(log_kappa)
    sol = solve_ivp(_rhs, (Rb, 0.0), [0.0, -k], args=(b,), method="DOP853",
                    rtol=RTOL, atol=1e-14 * k, events=_overshoot, dense_output=dense)
    if sol.status == 1:
        return math.inf, math.inf, sol
    return float(sol.y[1, -1]), float(sol.y[0, -1]), sol


def _decay_exponent(b, eta):
    # int_0^{R_b} sqrt(1 - b^2 y^2/4) dy in closed form
    u = math.sqrt(1.0 - eta)
    return (1.0 / b) * (u * math.sqrt(1.0 - u * u) + math.asin(u))


def smoothstep_cutoff(a, Rm, Rb):
    """phi, phi', phi'' for a quintic smoothstep: 1 on [0, Rm], 0 beyond Rb,
    C^2 at both ends. ``a`` is |y|."""
    a = np.asarray(a, dtype=float)
    d = Rb - Rm
    t = np.clip((a - Rm) / d, 0.0, 1.0)
    phi = 1.0 - t**3 * (10.0 - 15.0 * t + 6.0 * t * t)
    phi1 = -30.0 * t * t * (1.0 - t) ** 2 / d
    phi2 = -60.0 * t * (1.0 - t) * (1.0 - 2.0 * t) / d**2
    return phi, phi1, phi2


@dataclass
class SelfSimilarProfile:
    b: float
    eta: float
    R_b: float
    R_b_minus: float
    y: np.ndarray
    P: np.ndarray
    P_prime: np.ndarray
    shoot_value: float
    log_kappa: float
    _sol: object = field(repr=False, default=None)

    def eval(self, a):
        """P, P', P'' at |y| = a (zero beyond R_b)."""
        a = np.asarray(a, dtype=float)
        inside = a < self.R_b
        P = np.zeros_like(a)
        dP = np.zeros_like(a)
        if np.any(inside):
            z = self._sol.sol(a[inside])
            P[inside], dP[inside] = z[0], z[1]
        ddP = P - 0.25 * self.b**2 * a * a * P - P**5
        return P, dP, ddP


def _check_params(b, eta):
    if not (math.isfinite(b) and b > 0):
        raise ParameterOutOfRange(f"b must be positive, got {b}")
    if b > B_MAX:
        raise BTooLarge(f"b = {b} exceeds {B_MAX}")
    if not (0 < eta <= ETA_MAX):
        raise ParameterOutOfRange(f"eta must lie in (0, {ETA_MAX}], got {eta}")


def _bracket(b, eta, Rb):
    c = math.log(2.0 * math.sqrt(2.0) * Q0) - _decay_exponent(b, eta)
    lin = c - 4.0
    for _ in range(10):
        g, p0, _ = _shoot(lin, b, Rb)
        if math.isfinite(p0) and abs(p0) < 0.05:
            break
        lin -= 4.0
    else:
        raise NoBracket("could not reach the linear regime", scanned=(lin, c))
    start = lin + math.log(Q0 / abs(p0)) - 1.5 if p0 != 0 else c
    lo, g_lo = start, _shoot(start, b, Rb)[0]
    if g_lo >= 0:
        lo, g_lo = lin, g
    step = 0.25
    for _ in range(80):
        hi = lo + step
        g_hi = _shoot(hi, b, Rb)[0]
        if g_hi >= 0 and g_lo < 0:
            return lo, hi, g_hi
        lo, g_lo = hi, g_hi
    raise NoBracket(f"no sign change of P'(0) for log kappa in [{start:.3f}, {lo:.3f}]",
                    scanned=(start, lo))


def solve_profile(b: float, eta: float = 0.01) -> SelfSimilarProfile:
    _check_params(b, eta)
    Rb = 2.0 * math.sqrt(1.0 - eta) / b
    Rm = 2.0 * (1.0 - eta) / b
    lo, hi, g_hi = _bracket(b, eta, Rb)
    if not math.isfinite(g_hi):
        # the overshoot event fires at the top of the bracket: tighten it
        f = lambda l: _shoot(l, b, Rb)[0]
        for _ in range(60):
            mid = 0.5 * (lo + hi)
            if f(mid) < 0:
                lo = mid
            else:
                hi = mid
            if math.isfinite(f(hi)):
                break
        if not math.isfinite(f(hi)):
            raise BTooLarge("profile amplitude blows up before the first zero reaches R_b")
    lk = brentq(lambda l: _shoot(l, b, Rb)[0], lo, hi, xtol=1e-15, rtol=1e-15, maxiter=200)
    _, p0, sol = _shoot(lk, b, Rb, dense=True)
    if not (0.9 * Q0 <= p0 <= 1.1 * Q0):
        raise NoBracket(f"shooting converged to P(0) = {p0:.6g}, outside [0.9, 1.1] Q(0)")
    dy = min(1.0 / 64.0, (Rb - Rm) / 64.0)
    n = int(math.ceil(Rb / dy))
    y = np.linspace(0.0, Rb, n + 1)
    z = sol.sol(y)
    P, dP = z[0].copy(), z[1].copy()
    P[-1] = 0.0
    if np.any(P[:-1] <= 0):
        raise NoBracket("profile is not positive on [0, R_b)")
    return SelfSimilarProfile(b, eta, Rb, Rm, y, P, dP, p0, lk, sol)


def profile_residual(p: SelfSimilarProfile) -> float:
    """sup over [0, R_b^-] of |P'' - P + b^2 y^2 P/4 + P^5| with P'' obtained by
    differencing the sampled P' (equal to the complex profile-equation residual)."""
    y = p.y
    dy = y[1] - y[0]
    ext = np.concatenate([-p.P_prime[8:0:-1], p.P_prime])  # P' is odd
    ddP = derivative(ext, dy, 1, 8)[8:]
    res = ddP - p.P + 0.25 * p.b**2 * y * y * p.P + p.P**5
    inner = (y <= p.R_b_minus) & (y <= y[-1] - 8 * dy)
    return float(np.max(np.abs(res[inner])))


class TruncatedProfile:
    """phi_b Q_b with its remainder Psi_b, sampled on a symmetric grid and
    available at arbitrary y through ``fields``."""

    def __init__(self, base: SelfSimilarProfile, half_width: float | None = None,
                 dy: float | None = None):
        self.base = base
        self.b = base.b
        self.R_b, self.R_b_minus = base.R_b, base.R_b_minus
        self.phi_spec = {"interval": (self.R_b_minus, self.R_b), "order": 5}
        dy = dy or min(1.0 / 64.0, (self.R_b - self.R_b_minus) / 64.0)
        Y = half_width if half_width is not None else self.R_b + 2.0
        n = int(math.ceil(Y / dy))
        self.y = dy * np.arange(-n, n + 1)
        self.dy = dy
        self.Qtilde, _, _ = self.fields(self.y, derivatives=0)
        self.Psi = self.psi(self.y)
        self.Sigma = self.Qtilde.real
        self.Theta = self.Qtilde.imag

    def _real_parts(self, a):
        P, dP, ddP = self.base.eval(a)
        phi, phi1, phi2 = smoothstep_cutoff(a, self.R_b_minus, self.R_b)
        g = phi * P
        g1 = phi1 * P + phi * dP
        g2 = phi2 * P + 2.0 * phi1 * dP + phi * ddP
        return g, g1, g2, (phi, phi1, phi2, P, dP)

    def fields(self, y, derivatives: int = 2):
        """Qtilde and, if asked, its first two y-derivatives at arbitrary y."""
        y = np.asarray(y, dtype=float)
        a = np.abs(y)
        g, g1, g2, _ = self._real_parts(a)
        b = self.b
        e = np.exp(-0.25j * b * a * a)
        q = g * e
        if derivatives == 0:
            return q, None, None
        q1 = np.sign(y) * (g1 - 0.5j * b * a * g) * e
        q2 = (g2 - 1j * b * a * g1 - 0.5j * b * g - 0.25 * b * b * a * a * g) * e
        return q, q1, q2

    def psi_hat(self, a):
        """Real amplitude of the remainder: Psi_b = psi_hat e^{-i b y^2/4}."""
        a = np.asarray(a, dtype=float)
        _, _, _, (phi, phi1, phi2, P, dP) = self._real_parts(a)
        return -(phi2 * P + 2.0 * phi1 * dP + (phi**5 - phi) * P**5)

    def psi(self, y):
        y = np.asarray(y, dtype=float)
        a = np.abs(y)
        return self.psi_hat(a) * np.exp(-0.25j * self.b * a * a)

    def gl_nodes(self, panels_core: int | None = None, panels_annulus: int = 16):
        """Gauss-Legendre nodes/weights on [0, R_b^-] and [R_b^-, R_b]."""
        pc = panels_core or max(8, int(math.ceil(self.R_b_minus / 0.5)))
        edges = np.concatenate([np.linspace(0.0, self.R_b_minus, pc + 1),
                                np.linspace(self.R_b_minus, self.R_b, panels_annulus + 1)[1:]])
        a, c = edges[:-1], edges[1:]
        mid, half = 0.5 * (a + c), 0.5 * (c - a)
        x = (mid[:, None] + half[:, None] * _GL_X).ravel()
        w = (half[:, None] * _GL_W).ravel()
        return x, w


def truncate(p: SelfSimilarProfile, half_width: float | None = None,
             dy: float | None = None) -> TruncatedProfile:
    return TruncatedProfile(p, half_width, dy)


class ProfileCache:
    """Small LRU cache of truncated profiles keyed by (|b|, eta)."""

    def __init__(self, maxsize: int = 32):
        self.maxsize = maxsize
        self._store: OrderedDict = OrderedDict()

    def get(self, b: float, eta: float = 0.01) -> TruncatedProfile:
        key = (float(b), float(eta))
        tp = self._store.get(key)
        if tp is None:
            tp = TruncatedProfile(solve_profile(key[0], eta), half_width=0.0)
            self._store[key] = tp
            if len(self._store) > self.maxsize:
                self._store.popitem(last=False)
        else:
            self._store.move_to_end(key)
        return tp

    def fields(self, b: float, y, eta: float = 0.01):
        """Qtilde_b and two derivatives; negative b handled by conjugation."""
        tp = self.get(abs(b), eta)
        q, q1, q2 = tp.fields(y)
        if b < 0:
            return np.conj(q), np.conj(q1), np.conj(q2)
        return q, q1, q2

    def psi(self, b: float, y, eta: float = 0.01):
        tp = self.get(abs(b), eta)
        v = tp.psi(y)
        return np.conj(v) if b < 0 else v


DEFAULT_CACHE = ProfileCache()


@dataclass
class ProfileInvariants:
    b: float
    mass_excess: float
    energy_1d: float
    momentum: float
    closeness: float


def profile_invariants(tp: TruncatedProfile, C: float = 10.0) -> ProfileInvariants:
    x, w = tp.gl_nodes()
    g, g1, _, _ = tp._real_parts(x)
    b = tp.b
    # even integrands: int over R = 2 int over [0, R_b]
    mass = 2.0 * np.sum(w * g * g)
    kinetic = 2.0 * np.sum(w * (g1 * g1 + 0.25 * b * b * x * x * g * g))
    sextic = 2.0 * np.sum(w * g**6)
    energy = 0.5 * kinetic - sextic / 6.0
    q, q1, _ = tp.fields(tp.y, derivatives=1)
    momentum = float(np.imag(np.sum(q1 * np.conj(q))) * tp.dy)
    a = np.linspace(0.0, tp.R_b + 30.0, int((tp.R_b + 30.0) * 64) + 1)
    qa, _, _ = tp.fields(a, derivatives=0)
    weight = np.exp((1.0 - C * tp.base.eta) * math.pi * a / 4.0)
    closeness = float(np.max(weight * np.abs(qa - q_eval(a))))
    return ProfileInvariants(b, float(mass - Q_MASS), float(energy), momentum, closeness)


def _solve_one(args):
    b, eta = args
    return profile_invariants(truncate(solve_profile(b, eta)))


def d0_estimate(bs, eta: float = 0.01, invariants=None) -> float:
    """Least-squares slope (through the origin) of the mass excess against b^2."""
    bs = sorted(set(float(b) for b in bs))
    if len(bs) < 2:
        raise InsufficientSamples(f"need at least 2 distinct b values, got {len(bs)}")
    if invariants is None:
        invariants = [_solve_one((b, eta)) for b in bs]
    else:
        invariants = [invariants[b] for b in bs]
    x = np.array(bs) ** 2
    m = np.array([inv.mass_excess for inv in invariants])
    d0 = float(np.dot(x, m) / np.dot(x, x))
    if not d0 > 0:
        raise NegativeSlope(f"mass excess slope {d0:.4g} is not positive")
    return d0
