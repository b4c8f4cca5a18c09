"""Modulation decomposition

    u(r) = lambda^{-1/2} (Qtilde_b + eps)((r - r_c)/lambda) e^{i gamma},

with eps fixed by four orthogonality conditions, plus the linearized
operators, the eps-equation residual, the local energy and the A/B/C regime
checkers.

eps lives on the run grid expressed in y = (r - r_c)/lambda, so no
resampling is needed for a single decomposition. All pairings in the
orthogonality conditions use the flat measure dy.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.interpolate import make_interp_spline

from ._fd import derivative
from .errors import (GridMismatch, InsufficientHistory, NoConvergence, OutOfNeighborhood,
                     ParameterOutOfRange)
from .geometry import RadialField, RadialGrid, SurfaceMetric
from .groundstate import Q0
from .profiles import B_MAX, DEFAULT_CACHE, ProfileCache

B_TRUST = (0.02, B_MAX)
NEIGHBORHOOD = 1.0


@dataclass(frozen=True)
class ModulationState:
    lam: float
    r_center: float
    gamma: float
    b: float
    metric: SurfaceMetric | None = None

    def __post_init__(self):
        if not self.lam > 0:
            raise ParameterOutOfRange(f"lambda must be positive, got {self.lam}")
        if not math.isfinite(self.b):
            raise ParameterOutOfRange("b must be finite")
        rho = self.metric.rho if self.metric is not None else math.inf
        if not 0.0 < self.r_center < rho:
            raise ParameterOutOfRange(f"r_center = {self.r_center} not inside (0, {rho})")

    def as_array(self):
        return np.array([self.lam, self.r_center, self.gamma, self.b])

    def with_params(self, p) -> "ModulationState":
        return replace(self, lam=float(p[0]), r_center=float(p[1]), gamma=float(p[2]),
                       b=float(p[3]))

    def y_of(self, r):
        return (np.asarray(r, dtype=float) - self.r_center) / self.lam

    def w(self, y):
        """w(y) = h'(lam y + r) / h(lam y + r)."""
        x = self.lam * np.asarray(y, dtype=float) + self.r_center
        m = self.metric
        return m.h_prime(x) / m.h(x)

    def mu(self, y):
        """mu(y) = h(lam y + r) for y >= -r/lam, 0 below."""
        x = self.lam * np.asarray(y, dtype=float) + self.r_center
        out = np.zeros_like(x)
        ok = x >= 0.0
        out[ok] = self.metric.h(x[ok])
        return out


@dataclass
class EpsilonField:
    """eps samples on y = (r - r_center)/lambda for the nodes of a run grid."""
    y: np.ndarray
    values: np.ndarray
    state: ModulationState
    grid: RadialGrid | None = None
    info: dict = field(default_factory=dict)

    @property
    def dy(self) -> float:
        return float(self.y[1] - self.y[0])

    @property
    def cutoff(self) -> float:
        return -self.state.r_center / self.state.lam

    @classmethod
    def zeros(cls, grid: RadialGrid, state: ModulationState) -> "EpsilonField":
        y = state.y_of(grid.nodes)
        return cls(y, np.zeros(grid.n, dtype=complex), state, grid)

    def __call__(self, y):
        """eps at arbitrary y by quintic interpolation, zero off the samples and
        below the cutoff."""
        y = np.asarray(y, dtype=float)
        out = np.zeros(y.shape, dtype=complex)
        inside = (y >= self.y[0]) & (y <= self.y[-1]) & (y >= self.cutoff)
        if inside.any():
            sr = make_interp_spline(self.y, self.values.real, k=5)
            si = make_interp_spline(self.y, self.values.imag, k=5)
            out[inside] = sr(y[inside]) + 1j * si(y[inside])
        return out


def _lambda_ops(q, q1, q2, y):
    """Lambda f = f/2 + y f' and Lambda^2 f = f/4 + 2 y f' + y^2 f''."""
    return 0.5 * q + y * q1, 0.25 * q + 2.0 * y * q1 + y * y * q2


def orthogonality(eps, y, dy, q, q1, q2):
    """The four orthogonality residuals, flat dy pairing."""
    e1, e2 = eps.real, eps.imag
    S, T = q.real, q.imag
    L1, L2 = _lambda_ops(q, q1, q2, y)
    y2 = y * y
    return np.array([
        np.sum(e1 * y2 * S + e2 * y2 * T) * dy,
        np.sum(e1 * y * S + e2 * y * T) * dy,
        np.sum(e1 * L1.imag - e2 * L1.real) * dy,
        np.sum(e1 * L2.imag - e2 * L2.real) * dy,
    ])


def _check_support(grid: RadialGrid, state: ModulationState, cache: ProfileCache):
    tp = cache.get(abs(state.b))
    reach = state.lam * tp.R_b
    if state.r_center - reach < grid.r_lo or state.r_center + reach > grid.r_hi:
        raise GridMismatch("bubble support reaches past the grid")


def _residual(p, r, u, cache, dr):
    lam, rc, gam, b = p
    y = (r - rc) / lam
    q, q1, q2 = cache.fields(b, y)
    eps = math.sqrt(lam) * np.exp(-1j * gam) * u - q
    return orthogonality(eps, y, dr / lam, q, q1, q2), eps, y


def _in_trust(p, grid):
    # the bubble must span at least two cells to be resolved at all
    lam, rc, _, b = p
    return (lam >= 2 * grid.dr and grid.r_lo < rc < grid.r_hi
            and B_TRUST[0] <= abs(b) <= B_TRUST[1])


def seed_state(u: RadialField) -> ModulationState:
    """lambda from the peak height, r_center and gamma from the peak, b from
    the quadratic phase curvature near the peak."""
    r, v = u.r, u.values
    k = int(np.argmax(np.abs(v)))
    peak = float(np.abs(v[k]))
    if peak == 0.0:
        raise NoConvergence("field vanishes identically")
    lam = (Q0 / peak) ** 2
    half = np.abs(v) > 0.5 * peak
    idx = np.flatnonzero(half)
    b = 0.0
    if idx.size >= 5:
        ph = np.unwrap(np.angle(v[idx]))
        c2 = np.polyfit(r[idx] - r[k], ph, 2)[0]
        b = -4.0 * lam * lam * c2
    if abs(b) < B_TRUST[0]:
        b = math.copysign(B_TRUST[0], b if b != 0 else 1.0)
    b = max(-B_TRUST[1], min(B_TRUST[1], b))
    return ModulationState(lam, float(r[k]), float(np.angle(v[k])), b, u.grid.metric)


def local_energy(state: ModulationState, eps: EpsilonField) -> float:
    """int |d_y eps|^2 mu dy + int_{|y| <= 10/b} |eps|^2 e^{-|y|} dy."""
    if not state.b > 0:
        raise ParameterOutOfRange("local energy needs b > 0")
    y, v, dy = eps.y, eps.values, eps.dy
    d = derivative(v, dy, 1, 8)
    mu = state.mu(y)
    core = np.abs(y) <= 10.0 / state.b
    return float(np.sum(np.abs(d) ** 2 * mu) * dy
                 + np.sum(np.abs(v[core]) ** 2 * np.exp(-np.abs(y[core]))) * dy)


def decompose(u: RadialField, guess: ModulationState | None = None, tol: float = 1e-12,
              maxit: int = 50, cache: ProfileCache | None = None, jacobian=None,
              neighborhood: float = NEIGHBORHOOD):
    """Solve the four orthogonality conditions for (lambda, r_center, gamma, b)
    by damped Newton with a finite-difference Jacobian (refreshed when the
    contraction stalls). Returns (state, eps)."""
    cache = cache or DEFAULT_CACHE
    grid = u.grid
    r, dr = grid.nodes, grid.dr
    st = guess if guess is not None else seed_state(u)
    if st.metric is None:
        st = replace(st, metric=grid.metric)
    p = st.as_array()
    if not _in_trust(p, grid):
        raise NoConvergence("initial guess outside the trust region")
    vals = u.values
    F, eps, y = _residual(p, r, vals, cache, dr)
    scale = max(1.0, float(np.max(np.abs(F))))
    J = None if jacobian is None else np.array(jacobian, dtype=float)
    fresh = False
    it = 0
    for it in range(1, maxit + 1):
        if np.max(np.abs(F)) < tol:
            it -= 1
            break
        if J is None:
            J = np.empty((4, 4))
            steps = (1e-6 * p[0], 1e-6 * p[0], 1e-6, 1e-6 * max(abs(p[3]), 0.1))
            for k in range(4):
                pk = p.copy()
                pk[k] += steps[k]
                J[:, k] = (_residual(pk, r, vals, cache, dr)[0] - F) / steps[k]
            fresh = True
        try:
            dp = np.linalg.solve(J, -F)
        except np.linalg.LinAlgError as exc:
            raise NoConvergence(f"singular Jacobian: {exc}") from exc
        t = 1.0
        while True:
            pn = p + t * dp
            if _in_trust(pn, grid):
                Fn, eps_n, y_n = _residual(pn, r, vals, cache, dr)
                if np.max(np.abs(Fn)) < np.max(np.abs(F)) or t < 1e-3:
                    break
            t *= 0.5
            if t < 1e-3:
                break
        if t < 1e-3 and not _in_trust(pn, grid):
            if fresh:
                raise NoConvergence("Newton step left the trust region")
            # a reused Jacobian can be stale; rebuild it and retry
            J = None
            continue
        ratio = np.max(np.abs(Fn)) / max(np.max(np.abs(F)), 1e-300)
        p, F, eps, y = pn, Fn, eps_n, y_n
        if ratio > 0.3 and not fresh:
            J = None
        fresh = False
    else:
        if np.max(np.abs(F)) >= tol:
            raise NoConvergence(f"no convergence in {maxit} iterations "
                                f"(residual {np.max(np.abs(F)):.3g})")
    state = st.with_params(p)
    # gamma is reported mod 2 pi in (-pi, pi]
    state = replace(state, gamma=float(np.angle(np.exp(1j * state.gamma))))
    out = EpsilonField(y, eps, state, grid,
                       info={"iterations": it, "orthogonality": F.copy(), "jacobian": J,
                             "scale": scale})
    if state.b > 0:
        size = local_energy(state, out)
    else:
        size = local_energy(replace(state, b=-state.b), out)
    out.info["local_energy"] = size
    if size > neighborhood:
        raise OutOfNeighborhood(f"weighted eps norm {size:.3g} exceeds {neighborhood}")
    return state, out


def recompose(state: ModulationState, eps: EpsilonField | None = None,
              grid: RadialGrid | None = None, cache: ProfileCache | None = None) -> RadialField:
    """lambda^{-1/2} (Qtilde_b + eps)((r - r_c)/lambda) e^{i gamma} on the grid."""
    cache = cache or DEFAULT_CACHE
    if grid is None:
        if eps is None or eps.grid is None:
            raise GridMismatch("no grid to recompose on")
        grid = eps.grid
    y = state.y_of(grid.nodes)
    q, _, _ = cache.fields(state.b, y)
    v = q
    if eps is not None:
        same = (eps.y.shape == y.shape and np.array_equal(eps.y, y))
        if same:
            v = v + eps.values
        else:
            if eps.grid is not None and eps.grid.metric is not grid.metric:
                raise GridMismatch("eps and target grid use different metrics")
            v = v + eps(y)
    return RadialField(grid, v * np.exp(1j * state.gamma) / math.sqrt(state.lam))


def orthogonalize(state: ModulationState, eps: EpsilonField,
                  cache: ProfileCache | None = None) -> EpsilonField:
    """Remove from eps its components along the four directions (least-norm
    correction in the flat dy pairing), so all four residuals vanish."""
    cache = cache or DEFAULT_CACHE
    y, dy = eps.y, eps.dy
    q, q1, q2 = cache.fields(state.b, y)
    L1, L2 = _lambda_ops(q, q1, q2, y)
    # each condition is Re(eps conj(d_k)) dy for a complex direction d_k
    D = np.array([y * y * q, y * q, L1.imag - 1j * L1.real, L2.imag - 1j * L2.real])
    G = np.real(D @ np.conj(D).T) * dy
    F = np.array([np.sum(eps.values.real * d.real + eps.values.imag * d.imag) * dy for d in D])
    c = np.linalg.solve(G, F)
    new = eps.values - c @ D
    return EpsilonField(y, new, state, eps.grid, info=dict(eps.info))


# ------------------------------------------------------- linearized pieces

@dataclass
class LinearizedTerms:
    M_plus: np.ndarray
    M_minus: np.ndarray
    R1: np.ndarray
    R2: np.ndarray


def _potentials(q):
    S, T = q.real, q.imag
    a2 = S * S + T * T
    return S, T, a2


def nonlinear_terms(q, eps):
    """R1, R2 with (4 Sigma^2/|Q|^2 + 1)|Q|^4 written as 4 Sigma^2 |Q|^2 + |Q|^4."""
    S, T, a2 = _potentials(q)
    e1, e2 = eps.real, eps.imag
    full = np.abs(eps + q) ** 4
    R1 = ((e1 + S) * full - S * a2 * a2 - (4 * S * S * a2 + a2 * a2) * e1
          - 4 * S * T * a2 * e2)
    R2 = ((e2 + T) * full - T * a2 * a2 - (4 * T * T * a2 + a2 * a2) * e2
          - 4 * S * T * a2 * e1)
    return R1, R2


def linear_terms(q, eps, y, dy, lam_w):
    S, T, a2 = _potentials(q)
    e1, e2 = eps.real, eps.imag
    d1 = derivative(eps, dy, 1, 8)
    d2 = derivative(eps, dy, 2, 8)
    Mp = (-d2.real - lam_w * d1.real + e1 - (4 * S * S * a2 + a2 * a2) * e1
          - 4 * S * T * a2 * e2)
    Mm = (-d2.imag - lam_w * d1.imag + e2 - (4 * T * T * a2 + a2 * a2) * e2
          - 4 * S * T * a2 * e1)
    return Mp, Mm


def linearized_apply(state: ModulationState, eps: EpsilonField,
                     cache: ProfileCache | None = None) -> LinearizedTerms:
    cache = cache or DEFAULT_CACHE
    if eps.y.size < 9:
        raise GridMismatch("eps grid too short for the derivative stencil")
    q, _, _ = cache.fields(state.b, eps.y)
    lam_w = state.lam * state.w(eps.y) if state.metric is not None else 0.0 * eps.y
    Mp, Mm = linear_terms(q, eps.values, eps.y, eps.dy, lam_w)
    R1, R2 = nonlinear_terms(q, eps.values)
    return LinearizedTerms(Mp, Mm, R1, R2)


# ------------------------------------------------------- eps-equation check

@dataclass
class EpsilonResidual:
    eq1: float
    eq2: float
    terms: dict


def _weighted_norm(f, mu, dy):
    return float(math.sqrt(np.sum(np.abs(f) ** 2 * mu) * dy))


def epsilon_residual(traj, index: int, s=None, cache: ProfileCache | None = None
                     ) -> EpsilonResidual:
    """Left minus right side of the two eps-equations at record ``index``,
    with s-derivatives by central differences over the neighbouring records.
    Norms are L^2(mu dy) over the run grid."""
    cache = cache or DEFAULT_CACHE
    states, epss = traj.states, traj.eps
    if index < 1 or index + 1 >= len(states):
        raise InsufficientHistory("need records on both sides of the index")
    trio = [(states[k], epss[k]) for k in (index - 1, index, index + 1)]
    if any(st is None or ep is None for st, ep in trio):
        raise InsufficientHistory("missing decomposition near the index")
    grids = [ep.grid for _, ep in trio]
    if any(g is None or not g.same_as(grids[1]) for g in grids):
        raise GridMismatch("records live on different grids")
    if s is None:
        from .diagnostics import s_clock
        s = s_clock(traj)
    s = np.asarray(s, dtype=float)
    ds = s[index + 1] - s[index - 1]
    (sa, ea), (st, ep), (sb, eb) = trio
    y, dy = ep.y, ep.dy
    q, q1, q2 = cache.fields(st.b, y)
    Sg, Th = q.real, q.imag
    lam_s = (math.log(sb.lam) - math.log(sa.lam)) / ds
    r_s = (sb.r_center - sa.r_center) / ds / st.lam
    gam = np.unwrap([sa.gamma, st.gamma, sb.gamma])
    gt_s = (gam[2] - gam[0]) / ds - 1.0
    b_s = (sb.b - sa.b) / ds
    qa = cache.fields(sa.b, y)[0]
    qb = cache.fields(sb.b, y)[0]
    dq_s = (qb - qa) / ds
    de_s = (eb(y) - ea(y)) / ds
    e = ep.values
    e1, e2 = e.real, e.imag
    lam_w = st.lam * st.w(y)
    Mp, Mm = linear_terms(q, e, y, dy, lam_w)
    R1, R2 = nonlinear_terms(q, e)
    Lq = 0.5 * q + y * q1
    de = derivative(e, dy, 1, 8)
    Le = 0.5 * e + y * de
    psi_t = cache.psi(st.b, y) - lam_w * q1
    a = lam_s + st.b
    lhs1 = dq_s.real + de_s.real - Mm + st.b * Le.real
    rhs1 = (a * Lq.real + gt_s * Th + r_s * q1.real + a * Le.real + gt_s * e2
            + r_s * de.real + psi_t.imag - R2)
    lhs2 = dq_s.imag + de_s.imag + Mp + st.b * Le.imag
    rhs2 = (a * Lq.imag - gt_s * Sg + r_s * q1.imag + a * Le.imag - gt_s * e1
            + r_s * de.imag - psi_t.real + R1)
    mu = st.mu(y)
    terms = {
        "d_s_profile": _weighted_norm(dq_s, mu, dy),
        "d_s_eps": _weighted_norm(de_s, mu, dy),
        "M": _weighted_norm(Mp + 1j * Mm, mu, dy),
        "modulation": _weighted_norm(a * Lq + gt_s * q + r_s * q1, mu, dy),
        "psi_tilde": _weighted_norm(psi_t, mu, dy),
        "R": _weighted_norm(R1 + 1j * R2, mu, dy),
        "params": {"lam_s/lam": lam_s, "r_s/lam": r_s, "gamma_tilde_s": gt_s, "b_s": b_s},
    }
    return EpsilonResidual(_weighted_norm(lhs1 - rhs1, mu, dy),
                           _weighted_norm(lhs2 - rhs2, mu, dy), terms)


# ---------------------------------------------------------- regime checks

@dataclass
class Condition:
    name: str
    passed: bool | None      # None = skipped
    value: float
    threshold: float
    note: str = ""


@dataclass
class RegimeLedger:
    which: str
    conditions: list

    def __getitem__(self, name):
        for c in self.conditions:
            if c.name == name:
                return c
        raise KeyError(name)

    @property
    def all_checked_pass(self) -> bool:
        return all(c.passed for c in self.conditions if c.passed is not None)


def gamma_proxy(b: float) -> float:
    return math.exp(-math.pi / abs(b))


def _loglog_gap(lam: float, c: float, b: float):
    """lam < exp(-exp(c/b)) compared as log(-log lam) > c/b."""
    if not 0 < lam < 1:
        return math.nan, c / b, False
    v = math.log(-math.log(lam))
    return v, c / b, v > c / b


def _regional_norm(u: RadialField, s: float, inner_half: float, ramp: float = 0.05):
    """||chi u||_{H^s} with chi = 0 for |r - 1| < inner_half and 1 beyond
    inner_half + ramp (smoothstep between). None if the region misses the grid."""
    r = u.r
    far = np.abs(r - 1.0) > inner_half
    if not far.any():
        return None
    from .geometry import hs_norm
    t = np.clip((np.abs(r - 1.0) - inner_half) / ramp, 0.0, 1.0)
    chi = t**3 * (10 - 15 * t + 6 * t * t)
    return hs_norm(RadialField(u.grid, chi * u.values), s)


def regime_check(state: ModulationState, eps: EpsilonField, u: RadialField, which: str = "A",
                 alpha_star: float = 1e-2, delta: float = 0.01, E0: float | None = None,
                 gamma_fn=gamma_proxy, cache: ProfileCache | None = None) -> RegimeLedger:
    from .diagnostics import conserved_report
    from .geometry import lp_norm
    cache = cache or DEFAULT_CACHE
    if which not in ("A", "B", "C"):
        raise ParameterOutOfRange(f"unknown regime {which!r}")
    a = alpha_star
    lam, r, b = state.lam, state.r_center, state.b
    G = gamma_fn(b) if b != 0 else 0.0
    rep = conserved_report(u)
    E = rep.energy if E0 is None else E0
    mom = rep.momentum_loc
    bubble = recompose(state, None, u.grid, cache)
    tail = lp_norm(RadialField(u.grid, u.values - bubble.values), 2)
    ener = local_energy(state, eps) if b > 0 else math.nan
    out = []

    def add(name, value, thr, ok, note=""):
        out.append(Condition(name, None if ok is None else bool(ok), float(value), float(thr), note))

    if which == "A":
        add("A1", abs(r - 1), a, abs(r - 1) < a)
        add("A2", b, a, 0 < b < a)
        add("A3", ener, G ** (6 / 7), ener < G ** (6 / 7))
        v = lam**2 * abs(E) + lam * mom**2
        add("A4", v, G**10, v < G**10)
        val, thr, ok = _loglog_gap(lam, 8 * math.pi / 9, b) if b > 0 else (math.nan, math.inf, False)
        add("A5", val, thr, ok, "log(-log lambda) vs 8 pi/(9 b)")
        add("A6", tail, a, tail < a)
        n = _regional_norm(u, 0.5, 0.5)
        add("A7.1/2", math.nan if n is None else n, a**0.25, None if n is None else n < a**0.25,
            "region off grid" if n is None else "")
        for k in (2, 3, 4):
            n = _regional_norm(u, k / 2, 0.5)
            thr = lam ** -(k - 2)
            add(f"A7.{k}/2", math.nan if n is None else n, thr, None if n is None else n < thr,
                "region off grid" if n is None else "")
        n = _regional_norm(u, 2.0, 1.0 / 32.0)
        add("A8", math.nan if n is None else n, a, None if n is None else n < a,
            "region off grid" if n is None else "")
        return RegimeLedger("A", out)

    strict = which == "B"
    p = {"B": dict(r=1 / 2, b=1 / 8, E=3 / 4, G=2, lam=10, tail=1 / 10, h=1 / 10, k=1.0),
         "C": dict(r=2 / 3, b=1 / 5, E=4 / 5, G=4, lam=5, tail=1 / 5, h=1 / 5, k=0.5)}[which]
    cmp = (lambda x, y: x < y) if strict else (lambda x, y: x <= y)
    add(f"{which}1", abs(r - 1), a ** p["r"], cmp(abs(r - 1), a ** p["r"]))
    add(f"{which}2", b, a ** p["b"], 0 < b and cmp(b, a ** p["b"]))
    add(f"{which}3", ener, G ** p["E"], cmp(ener, G ** p["E"]))
    v = lam**2 * abs(E)
    add(f"{which}4", v, G ** p["G"], cmp(v, G ** p["G"]))
    v = lam * abs(mom)
    add(f"{which}4'", v, G ** p["G"], cmp(v, G ** p["G"]))
    val, thr, ok = _loglog_gap(lam, math.pi / p["lam"], b) if b > 0 else (math.nan, math.inf, False)
    add(f"{which}5", val, thr, ok, f"log(-log lambda) vs pi/({p['lam']} b)")
    add(f"{which}6", tail, a ** p["tail"], cmp(tail, a ** p["tail"]))
    n = _regional_norm(u, 0.5, 0.5)
    add(f"{which}7.1/2", math.nan if n is None else n, a ** p["h"],
        None if n is None else cmp(n, a ** p["h"]), "region off grid" if n is None else "")
    for k in (2, 3, 4):
        n = _regional_norm(u, k / 2, 0.5)
        thr = p["k"] * lam ** -(k - 2 + (5 - k) * delta)
        add(f"{which}7.{k}/2", math.nan if n is None else n, thr,
            None if n is None else cmp(n, thr), "region off grid" if n is None else "")
    return RegimeLedger(which, out)
