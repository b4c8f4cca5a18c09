"""Radial evolution of i u_t + u_rr + (h'/h) u_r = -sigma |u|^4 u (sigma = +1
focusing, -1 defocusing), initial-data synthesis, and the run driver.

The step is a Strang composition: exact half-step of the nonlinear phase,
a trapezoidal (Crank-Nicolson) linear step on the finite-volume Laplacian,
then another nonlinear half-step. Both pieces are unitary in the discrete
mass and the composition is time-symmetric.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_banded

from .errors import (ConditionUnsatisfiable, ForgeError, LinearSolveFailure, NanDetected,
                     ParameterOutOfRange)
from .geometry import RadialField, RadialGrid
from .groundstate import Q_MASS
from .modulation import (EpsilonField, ModulationState, decompose, local_energy, orthogonalize,
                         recompose)
from .profiles import DEFAULT_CACHE

# ||Q'||_{L^2(R)} = (int Q^2 / 2)^{1/2} by the Pohozaev identity
Q_PRIME_NORM = math.sqrt(0.5 * Q_MASS)


@dataclass
class SimConfig:
    c_dt: float = 0.01
    t_max: float = 1.0
    lam_floor_cells: float = 4.0      # stop when lambda < lam_floor_cells * dr
    grad_ceiling: float = 1e3         # stop when ||grad u|| exceeds this multiple of the start
    max_steps: int = 10_000_000
    dt_max: float = 1e-2
    record_every: int = 10
    snapshot_every: int = 0           # 0 = no snapshots besides the records
    tracking: bool = True
    keep_fields: bool = True
    focusing: bool = True

    def __post_init__(self):
        if not self.c_dt > 0:
            raise ParameterOutOfRange("c_dt must be positive")
        if self.lam_floor_cells < 2.0:
            raise ParameterOutOfRange("lambda floor must be at least 2 cells")
        if self.record_every < 1:
            raise ParameterOutOfRange("record_every must be >= 1")


@dataclass
class TrajectoryRecord:
    grid: RadialGrid
    config: SimConfig
    steps: list = field(default_factory=list)
    times: list = field(default_factory=list)
    grad: list = field(default_factory=list)
    lam_est: list = field(default_factory=list)
    states: list = field(default_factory=list)
    eps: list = field(default_factory=list)
    local_energy: list = field(default_factory=list)
    mass: list = field(default_factory=list)
    energy: list = field(default_factory=list)
    momentum: list = field(default_factory=list)
    E2: list = field(default_factory=list)
    fields: list = field(default_factory=list)
    snapshots: list = field(default_factory=list)
    step_times: list = field(default_factory=list)   # every step: (t, lambda used)
    step_lams: list = field(default_factory=list)
    stop_reason: str = ""
    flags: list = field(default_factory=list)

    @property
    def lam(self) -> np.ndarray:
        """Modulation lambda where tracked, else the gradient estimate."""
        return np.array([st.lam if st is not None else le
                         for st, le in zip(self.states, self.lam_est)])

    @property
    def tracked(self) -> bool:
        return any(st is not None for st in self.states)

    def field_at(self, k: int) -> RadialField:
        return RadialField(self.grid, self.fields[k])

    def rows(self):
        out = []
        for k, t in enumerate(self.times):
            st = self.states[k]
            lam = st.lam if st is not None else self.lam_est[k]
            b, rc, g = (st.b, st.r_center, st.gamma) if st is not None else (math.nan,) * 3
            out.append([t, lam, b, rc, g, self.mass[k], self.energy[k], self.momentum[k],
                        self.E2[k]])
        return out

    header = ["t", "lambda", "b", "r_center", "gamma", "mass", "energy", "momentum_loc", "E2"]


def _nonlinear(v, dt, sign):
    return v * np.exp(0.5j * sign * dt * np.abs(v) ** 4)


def step(u: RadialField, dt: float, focusing: bool = True) -> RadialField:
    if dt == 0:
        return RadialField(u.grid, u.values.copy())
    g = u.grid
    sign = 1.0 if focusing else -1.0
    v = _nonlinear(u.values, dt, sign)
    rhs = g.volumes * v + 0.5j * dt * g.stiffness_apply(v)
    try:
        v = solve_banded((1, 1), g.banded(1.0, -0.5j * dt), rhs)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise LinearSolveFailure(str(exc)) from exc
    v = _nonlinear(v, dt, sign)
    if not np.all(np.isfinite(v)):
        raise NanDetected("non-finite values after the step")
    return RadialField(g, v)


def grad_norm(u: RadialField) -> float:
    """||grad u||_{L^2(M)} from the discrete Dirichlet form."""
    g = u.grid
    val = -float(np.real(np.vdot(u.values, g.stiffness_apply(u.values))))
    return math.sqrt(2 * math.pi * max(val, 0.0))


def lambda_estimate(u: RadialField) -> float:
    """||Q'||_{L^2} (2 pi h(r_peak))^{1/2} / ||grad u||."""
    gn = grad_norm(u)
    if gn == 0.0:
        return math.inf
    rp = u.r[int(np.argmax(np.abs(u.values)))]
    return Q_PRIME_NORM * math.sqrt(2 * math.pi * float(u.grid.metric.h(rp))) / gn


def synthesize_initial(grid: RadialGrid, lambda0: float, r0: float, gamma0: float, b0: float,
                       eps0_spec: dict | None = None, alpha_star: float = 1e-2,
                       strict: bool = True, cache=None) -> RadialField:
    """Bubble lambda0^{-1/2} Qtilde_b0((r - r0)/lambda0) e^{i gamma0} plus an
    optional small even eps0 = nu f(y) (Gaussian of the given width),
    projected onto the orthogonality constraints.

    With strict=True the conditions that depend only on (lambda0, r0, b0)
    are checked first and condition-unsatisfiable is raised if any fails."""
    cache = cache or DEFAULT_CACHE
    if strict:
        bad = []
        if not abs(r0 - 1.0) < alpha_star:
            bad.append("A1")
        if not 0 < b0 < alpha_star:
            bad.append("A2")
        if not (0 < lambda0 < 1 and b0 > 0
                and math.log(-math.log(lambda0)) > 8 * math.pi / (9 * b0)):
            bad.append("A5")
        if bad:
            raise ConditionUnsatisfiable(
                f"{', '.join(bad)} fail for lambda0={lambda0}, r0={r0}, b0={b0}",
                conditions=bad)
    state = ModulationState(lambda0, r0, gamma0, b0, grid.metric)
    eps = EpsilonField.zeros(grid, state)
    if eps0_spec:
        nu = float(eps0_spec.get("nu", 0.0))
        width = float(eps0_spec.get("width", 1.0))
        y = eps.y
        eps.values = nu * np.exp(-(y / width) ** 2) + 0j
        eps = orthogonalize(state, eps, cache)
    return recompose(state, eps, grid, cache)


def _guesses(state, prev):
    """Newton starting points: linear extrapolation from the last two
    records, then the last state, then the unseeded default."""
    if state is not None and prev is not None:
        d = state.as_array() - prev.as_array()
        d[2] = math.remainder(d[2], 2 * math.pi)
        p = state.as_array() + d
        if p[0] > 0:
            yield state.with_params(p)
    if state is not None:
        yield state
    yield None


def run(config: SimConfig, u0: RadialField, guess: ModulationState | None = None,
        cache=None, progress=None) -> TrajectoryRecord:
    from .diagnostics import conserved_report
    cache = cache or DEFAULT_CACHE
    grid = u0.grid
    traj = TrajectoryRecord(grid, config)
    u = u0
    t = 0.0
    g0 = grad_norm(u0)
    tracking = config.tracking and g0 > 0
    state, prev_state = guess, None
    lam_mod = None
    lam_floor = config.lam_floor_cells * grid.dr
    n = 0
    last_good = u0

    def record(n, t, u):
        nonlocal state, prev_state, tracking, lam_mod
        rep = conserved_report(u)
        st = ep = None
        if tracking:
            err = None
            for g in _guesses(state, prev_state):
                try:
                    st, ep = decompose(u, g, cache=cache, maxit=25)
                    break
                except ForgeError as exc:
                    err = err or exc
            if st is not None:
                prev_state, state, lam_mod = state, st, st.lam
            else:
                tracking = False
                lam_mod = None
                traj.flags.append(("modulation-lost", n, t, str(err)))
        traj.steps.append(n)
        traj.times.append(t)
        traj.grad.append(grad_norm(u))
        traj.lam_est.append(lambda_estimate(u))
        traj.states.append(st)
        traj.eps.append(ep)
        traj.local_energy.append(ep.info["local_energy"] if ep is not None else math.nan)
        traj.mass.append(rep.mass)
        traj.energy.append(rep.energy)
        traj.momentum.append(rep.momentum_loc)
        traj.E2.append(rep.E2)
        if config.keep_fields:
            traj.fields.append(u.values.copy())
        if progress is not None:
            progress(n, t, st)

    record(0, 0.0, u)
    while True:
        lam = lam_mod if (tracking and lam_mod is not None) else lambda_estimate(u)
        gn = grad_norm(u)
        if lam < lam_floor:
            traj.stop_reason = "lambda-floor"
            break
        if g0 > 0 and gn > config.grad_ceiling * g0:
            traj.stop_reason = "grad-ceiling"
            break
        if t >= config.t_max * (1 - 1e-14):
            traj.stop_reason = "max-time"
            break
        if n >= config.max_steps:
            traj.stop_reason = "max-steps"
            break
        dt = min(config.c_dt * lam * lam, config.dt_max, config.t_max - t)
        try:
            u = step(u, dt, config.focusing)
        except NanDetected as exc:
            traj.stop_reason = "nan-detected"
            raise NanDetected(str(exc), trajectory=traj, last_good=last_good) from exc
        last_good = u
        traj.step_times.append(t)
        traj.step_lams.append(lam)
        t += dt
        n += 1
        if n % config.record_every == 0:
            record(n, t, u)
        if config.snapshot_every and n % config.snapshot_every == 0:
            traj.snapshots.append((t, u.values.copy()))
    if traj.steps[-1] != n:
        record(n, t, u)
    return traj
