"""Conserved functionals, the rescaled clock s, law monitors, the log-log
rate fit and the mass-concentration window."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import (InsufficientSamples, NoBlowUpTrend, NonpositiveLambda, TrackingMissing,
                     WindowExceedsGrid)
from .geometry import RadialField, integrate, laplacian_apply
from .groundstate import Q_MASS

CONCENTRATION_TARGET = 2 * math.pi * Q_MASS   # 2 pi ||Q||^2, h = 1 on the curve


# ---------------------------------------------------------- conserved

def psi_cutoff(r):
    """1 on [1/2, 3/2], 0 off [1/4, 2], quintic smoothstep in between; and psi'."""
    r = np.asarray(r, dtype=float)

    def s(t):
        t = np.clip(t, 0.0, 1.0)
        return t**3 * (10 - 15 * t + 6 * t * t), 30 * t * t * (1 - t) ** 2

    up, dup = s((r - 0.25) / 0.25)
    down, ddown = s((2.0 - r) / 0.5)
    psi = up * down
    dpsi = dup / 0.25 * down - up * ddown / 0.5
    return psi, dpsi


@dataclass
class ConservedReport:
    mass: float
    energy: float
    momentum_loc: float
    E2: float


def _grad_nodes(u: RadialField):
    return np.gradient(u.values, u.grid.dr)


def conserved_report(u: RadialField, psi=psi_cutoff) -> ConservedReport:
    g = u.grid
    v = u.values
    mass = integrate(u, 2)
    dirichlet = -float(np.real(np.vdot(v, g.stiffness_apply(v)))) * 2 * math.pi
    energy = 0.5 * dirichlet - integrate(u, 6) / 6.0
    du = _grad_nodes(u)
    _, dpsi = psi(u.r)
    momentum = float(2 * math.pi * np.sum(g.volumes * dpsi * np.imag(du * np.conj(v))))
    lap = laplacian_apply(u).values
    a2 = np.abs(v) ** 2
    e2_density = (np.abs(lap) ** 2 - 3 * np.abs(du) ** 2 * a2 * a2
                  - 2 * np.real(du * du * a2 * np.conj(v) ** 2))
    E2 = float(2 * math.pi * np.sum(g.volumes * e2_density))
    return ConservedReport(mass, energy, momentum, E2)


# ------------------------------------------------------------- clock

def s_zero(b0: float) -> float:
    return math.exp(3 * math.pi / (4 * b0))


def s_clock(traj=None, b0: float | None = None, times=None, lams=None) -> np.ndarray:
    """s(t) = s0 + int_0^t lambda^{-2}, trapezoidal over the given samples."""
    if traj is not None:
        times = np.asarray(traj.times, dtype=float)
        lams = traj.lam
        if b0 is None:
            st = next((x for x in traj.states if x is not None), None)
            b0 = st.b if st is not None else None
    times = np.asarray(times, dtype=float)
    lams = np.asarray(lams, dtype=float)
    if np.any(~(lams > 0)):
        raise NonpositiveLambda("lambda series must be positive")
    s0 = s_zero(b0) if b0 is not None else 0.0
    f = lams ** -2.0
    inc = 0.5 * (f[1:] + f[:-1]) * np.diff(times)
    return s0 + np.concatenate([[0.0], np.cumsum(inc)])


# -------------------------------------------------------------- laws

def smoothed_derivative(x, y, width: int = 7, order: int = 2) -> np.ndarray:
    """Derivative of a local least-squares polynomial over a sliding window
    (window shrinks to fit at the ends)."""
    x, y = np.asarray(x, float), np.asarray(y, float)
    n = x.size
    half = width // 2
    out = np.empty(n)
    for i in range(n):
        lo, hi = max(0, i - half), min(n, i + half + 1)
        if hi - lo < order + 1:
            out[i] = math.nan
            continue
        c = np.polyfit(x[lo:hi] - x[i], y[lo:hi], order)
        out[i] = c[-2]
    return out


@dataclass
class LawReport:
    s: np.ndarray
    b: np.ndarray
    b_log_s: np.ndarray
    lam: np.ndarray
    log_lambda_bound: np.ndarray
    bs_smoothed: np.ndarray
    E_local: np.ndarray
    gamma_proxy: np.ndarray
    band: tuple
    band_ok: np.ndarray
    lambda_ok: np.ndarray
    virial_ok: np.ndarray
    window: tuple             # s-range of the final decade

    @property
    def band_fraction(self) -> float:
        m = self.s >= self.window[0]
        return float(np.mean(self.band_ok[m]))

    @property
    def virial_fraction(self) -> float:
        ok = self.virial_ok[np.isfinite(self.bs_smoothed)]
        return float(np.mean(ok)) if ok.size else math.nan

    header = ["s", "b", "b_log_s", "lambda", "lambda_bound", "bs_smoothed", "E_local",
              "gamma_proxy", "flags"]

    def rows(self):
        out = []
        for k in range(self.s.size):
            flags = (("B" if self.band_ok[k] else "b") + ("L" if self.lambda_ok[k] else "l")
                     + ("V" if self.virial_ok[k] else "v"))
            out.append([self.s[k], self.b[k], self.b_log_s[k], self.lam[k],
                        self.log_lambda_bound[k], self.bs_smoothed[k], self.E_local[k],
                        self.gamma_proxy[k], flags])
        return out


def law_monitor(traj=None, s_series=None, delta: float = 0.25, slack=(1.0, 1.0),
                gamma_fn=None, b=None, lam=None, E_local=None, width: int = 7) -> LawReport:
    """Band check 3pi/4 <= b log s <= 4pi/3 (scaled by slack), the bound
    log lambda <= log(lambda0)/2 - (pi/2) s/log s, and the virial pair
    b_s >= delta E - Gamma_b with Gamma_b = e^{-pi/b} unless gamma_fn is given.

    Either a tracked trajectory or explicit (b, lam, E_local) series."""
    if traj is not None:
        keep = [k for k, st in enumerate(traj.states) if st is not None]
        if not keep:
            raise TrackingMissing("trajectory carries no modulation states")
        b = np.array([traj.states[k].b for k in keep])
        lam = np.array([traj.states[k].lam for k in keep])
        E_local = np.array([traj.local_energy[k] for k in keep])
        if s_series is None:
            s_series = s_clock(traj)
        s = np.asarray(s_series, dtype=float)[keep]
    else:
        if b is None or len(b) == 0:
            raise TrackingMissing("no modulation series supplied")
        s = np.asarray(s_series, dtype=float)
        b, lam = np.asarray(b, float), np.asarray(lam, float)
        E_local = np.zeros_like(b) if E_local is None else np.asarray(E_local, float)
    logs = np.log(s)
    bls = b * logs
    lo, hi = slack[0] * 3 * math.pi / 4, slack[1] * 4 * math.pi / 3
    band_ok = (bls >= lo) & (bls <= hi)
    log_bound = 0.5 * math.log(lam[0]) - 0.5 * math.pi * s / logs
    lambda_ok = np.log(lam) <= log_bound
    g = np.array([gamma_fn(x) for x in b]) if gamma_fn else np.exp(-math.pi / np.abs(b))
    bs = smoothed_derivative(s, b, width) if b.size >= 3 else np.full(b.size, math.nan)
    virial_ok = bs >= delta * E_local - g
    return LawReport(s, b, bls, lam, log_bound, bs, E_local, g, (lo, hi), band_ok,
                     lambda_ok, virial_ok, (s[-1] / 10.0, s[-1]))


# ----------------------------------------------------------- rate fit

@dataclass
class LoglogFit:
    T_hat: float
    exponent: float
    ratio_band: tuple
    loglog: bool
    residual_loglog: float
    residual_power: float
    T_power: float
    T_loglog: float


def _proportionality(d, y):
    """Relative residual of the best fit y = c d (a line vanishing at t = T)."""
    c = float(np.dot(d, y) / np.dot(d, d))
    r = y - c * d
    return float(np.sum(r * r) / np.sum((y - y.mean()) ** 2))


def _best_T(t, g, loglog: bool):
    span = t[-1] - t[0]
    tl = t[-1]

    def obj(z):
        d = span * math.exp(z) + (tl - t)   # T - t
        if loglog:
            with np.errstate(invalid="ignore", divide="ignore"):
                L = np.log(np.abs(np.log(d)))
            if not np.all(np.isfinite(L)) or np.any(L <= 0):
                return 1e3
            y = L / g**2
        else:
            y = 1.0 / g**2
        return _proportionality(d, y)

    grid = np.linspace(-25.0, 3.0, 113)
    vals = [obj(z) for z in grid]
    k = int(np.argmin(vals))
    lo, hi = grid[max(k - 1, 0)], grid[min(k + 1, grid.size - 1)]
    res = minimize_scalar(obj, bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-12, "maxiter": 500})
    z = res.x if res.fun <= vals[k] else grid[k]
    return tl + span * math.exp(z), min(res.fun, vals[k])


def loglog_fit(t, g, tail: float = 0.5, min_samples: int = 30) -> LoglogFit:
    """Fit the blow-up time on the growing tail (the last ``tail`` fraction of
    the samples) under both the log-log law and the pure (T - t)^{-1/2} law;
    report the local exponent d log g / d log(1/(T - t)) at the better T."""
    t, g = np.asarray(t, float), np.asarray(g, float)
    n0 = int(math.floor((1 - tail) * t.size))
    t, g = t[n0:], g[n0:]
    if t.size < min_samples:
        raise InsufficientSamples(f"need {min_samples} tail samples, got {t.size}")
    if np.any(np.diff(g) <= 0):
        raise NoBlowUpTrend("gradient norm is not increasing on the tail")
    T_pow, r_pow = _best_T(t, g, loglog=False)
    T_ll, r_ll = _best_T(t, g, loglog=True)
    use_ll = r_ll < r_pow
    T = T_ll if use_ll else T_pow
    x = np.log(1.0 / (T - t))
    expo = float(np.polyfit(x - x.mean(), np.log(g), 1)[0])
    with np.errstate(invalid="ignore", divide="ignore"):
        ref = np.sqrt(np.log(np.abs(np.log(T - t))) / (T - t))
    ratio = g / ref
    ratio = ratio[np.isfinite(ratio)]
    band = (float(ratio.min()), float(ratio.max())) if ratio.size else (math.nan, math.nan)
    return LoglogFit(float(T), expo, band, bool(use_ll), r_ll, r_pow, T_pow, T_ll)


# ------------------------------------------------- mass concentration

@dataclass
class ConcentrationReport:
    t: np.ndarray
    R: np.ndarray
    window: np.ndarray
    total: np.ndarray
    remainder: np.ndarray      # total - window
    eps_mass: np.ndarray       # ||u - bubble||^2
    bubble_outside: np.ndarray  # bubble mass outside the window
    target: float
    target_local: np.ndarray   # 2 pi h(r_center) ||Q||^2

    @property
    def final_gap(self) -> float:
        return abs(self.window[-1] - self.target) / self.target


def window_mass(u: RadialField, rc: float, R: float) -> float:
    """2 pi int_{|r - rc| < R} |u|^2 h dr with cells cut exactly at the edges."""
    g = u.grid
    if rc - R < g.r_lo or rc + R > g.r_hi:
        raise WindowExceedsGrid(f"window [{rc - R}, {rc + R}] leaves the grid")
    lo = np.maximum(g.faces[:-1], rc - R)
    hi = np.minimum(g.faces[1:], rc + R)
    m = hi > lo
    vol = np.zeros(g.n)
    vol[m] = g.metric.volume(lo[m], hi[m])
    return float(2 * math.pi * np.sum(vol * np.abs(u.values) ** 2))


def mass_concentration(traj, a_param: float = 0.3, cache=None) -> ConcentrationReport:
    """Window mass with R(t) = lambda(t) A(t), A = exp(a/(pi b(t)))."""
    from .geometry import lp_norm
    from .modulation import recompose
    keep = [k for k, st in enumerate(traj.states) if st is not None]
    if not keep:
        raise TrackingMissing("trajectory carries no modulation states")
    if not traj.fields:
        raise TrackingMissing("trajectory kept no fields")
    rows = []
    for k in keep:
        st = traj.states[k]
        u = traj.field_at(k)
        R = st.lam * math.exp(a_param / (math.pi * abs(st.b)))
        w = window_mass(u, st.r_center, R)
        tot = integrate(u, 2)
        bub = recompose(st, None, u.grid, cache)
        em = lp_norm(RadialField(u.grid, u.values - bub.values), 2) ** 2
        bo = integrate(bub, 2) - window_mass(bub, st.r_center, R)
        rows.append((traj.times[k], R, w, tot, tot - w, em, bo,
                     2 * math.pi * float(traj.grid.metric.h(st.r_center)) * Q_MASS))
    a = np.array(rows)
    return ConcentrationReport(a[:, 0], a[:, 1], a[:, 2], a[:, 3], a[:, 4], a[:, 5], a[:, 6],
                               CONCENTRATION_TARGET, a[:, 7])


def e2_drift_constant(traj, power: float = 6.1) -> float:
    """max |dE2/dt| lambda_est^{power} over the recorded series."""
    t = np.asarray(traj.times, float)
    e2 = np.asarray(traj.E2, float)
    lam = np.asarray(traj.lam_est, float)
    if t.size < 2:
        raise InsufficientSamples("need two records")
    d = np.abs(np.diff(e2) / np.diff(t))
    lm = 0.5 * (lam[1:] + lam[:-1])
    return float(np.max(d * lm**power))
