import math

import numpy as np
import pytest

from loglog_forge.diagnostics import conserved_report
from loglog_forge.errors import ConditionUnsatisfiable, ParameterOutOfRange
from loglog_forge.evolution import (SimConfig, grad_norm, lambda_estimate, run, step,
                                    synthesize_initial)
from loglog_forge.geometry import RadialField, RadialGrid, integrate, make_metric
from loglog_forge.groundstate import Q_MASS
from loglog_forge.modulation import decompose


@pytest.fixture(scope="module")
def sphere():
    return make_metric("round-sphere")


def _bump(grid, amp=1.0, width=0.1):
    r = grid.nodes
    return RadialField(grid, amp * np.exp(-((r - 1.0) / width) ** 2) * np.exp(0.3j * r))


class TestStep:
    """Strang splitting with a Crank-Nicolson linear part."""

    def test_eigenfunction_phase(self, sphere):
        g = RadialGrid(sphere, 0.0, math.pi, 4000)
        u0 = 1e-6 * np.cos(g.nodes)
        u = RadialField(g, u0)
        for _ in range(10000):
            u = step(u, 1e-4)
        ph = np.angle(np.vdot(u0 * np.exp(-2j), u.values))
        assert abs(ph) < 1e-6

    def test_mass_drift(self, sphere):
        g = RadialGrid(sphere, 0.5, 1.5, 400)
        u = _bump(g, amp=1.2)
        m0 = integrate(u)
        for _ in range(10000):
            u = step(u, 1e-5)
        assert abs(integrate(u) - m0) / m0 < 1e-9

    def test_energy_drift_smooth(self, sphere):
        g = RadialGrid(sphere, 0.5, 1.5, 800)
        u = _bump(g, amp=1.0, width=0.15)
        e0 = conserved_report(u).energy
        dt = 2e-5
        for _ in range(500):
            u = step(u, dt)
        drift = abs(conserved_report(u).energy - e0) / abs(e0)
        assert drift / (500 * dt) < 1e-6

    def test_time_reversal(self, sphere):
        g = RadialGrid(sphere, 0.5, 1.5, 1000)
        u0 = _bump(g, amp=1.5, width=0.05)
        u = step(step(u0, 1e-4), -1e-4)
        assert np.max(np.abs(u.values - u0.values)) < 1e-10

    def test_dt_zero_identity(self, sphere):
        g = RadialGrid(sphere, 0.5, 1.5, 100)
        u0 = _bump(g)
        assert np.array_equal(step(u0, 0.0).values, u0.values)

    def test_convergence_order(self, sphere):
        """Self-convergence of a smooth focusing solution, dt proportional to dr."""
        def solve(n):
            g = RadialGrid(sphere, 0.5, 1.5, n)
            u = _bump(g, amp=1.3, width=0.08)
            nt = n // 4
            for _ in range(nt):
                u = step(u, 2e-3 / nt)
            r = g.nodes
            probe = np.exp(-((r - 1.02) / 0.05) ** 2)
            return np.sum(g.volumes * u.values * probe)
        F = [solve(n) for n in (200, 400, 800, 1600)]
        e = [abs(F[k] - F[k + 1]) for k in range(3)]
        orders = [math.log2(e[k] / e[k + 1]) for k in range(2)]
        assert min(orders) >= 1.9


class TestSynthesis:
    """Initial data built from a profile bubble."""

    def test_round_trip(self, sphere):
        g = RadialGrid(sphere, 0.5, 1.5, 4000)
        u = synthesize_initial(g, 0.02, 1.0, 0.4, 0.2, eps0_spec={"nu": 1e-3, "width": 2.0},
                               strict=False)
        st, _ = decompose(u)
        assert np.max(np.abs(st.as_array() - [0.02, 1.0, 0.4, 0.2])) < 1e-8

    def test_mass_just_above_q(self):
        # flat plane: h(1) = 1, so the bubble carries 2 pi ||Qtilde||^2 exactly
        g = RadialGrid(make_metric("euclidean-plane"), 0.5, 1.5, 4000)
        u = synthesize_initial(g, 0.01, 1.0, 0.0, 0.05, strict=False)
        excess = math.sqrt(integrate(u)) - math.sqrt(2 * math.pi * Q_MASS)
        assert 0 <= excess <= 1e-2

    def test_a5_unsatisfiable(self, sphere):
        g = RadialGrid(sphere, 0.5, 1.5, 1000)
        with pytest.raises(ConditionUnsatisfiable) as exc:
            synthesize_initial(g, 1e-2, 1.0, 0.0, 0.3, alpha_star=1.0)
        assert exc.value.details["conditions"] == ["A5"]

    def test_strict_default_rejects_desk_data(self, sphere):
        g = RadialGrid(sphere, 0.5, 1.5, 1000)
        with pytest.raises(ConditionUnsatisfiable):
            synthesize_initial(g, 0.02, 1.0, 0.0, 0.25)


class TestRun:
    def test_zero_data(self, sphere):
        g = RadialGrid(sphere, 0.5, 1.5, 200)
        tr = run(SimConfig(t_max=0.05, tracking=True), RadialField(g, np.zeros(g.n)))
        assert tr.stop_reason == "max-time"
        assert all(np.all(f == 0) for f in tr.fields)
        assert tr.times[-1] == pytest.approx(0.05)

    def test_defocusing_bounded(self, sphere):
        g = RadialGrid(sphere, 0.5, 1.5, 4000)
        u0 = synthesize_initial(g, 0.02, 1.0, 0.0, 0.25, strict=False)
        tr = run(SimConfig(t_max=8e-4, focusing=False, tracking=False, record_every=20), u0)
        assert tr.stop_reason == "max-time"
        grad = np.array(tr.grad)
        # dispersion raises the gradient once, then it levels off
        assert grad.max() < 2 * grad[0]
        half = grad[grad.size // 2:]
        assert half.max() / half.min() < 1.05
        m = np.array(tr.mass)
        assert np.max(np.abs(m - m[0])) / m[0] < 1e-8

    def test_times_increase_and_lambda_estimate(self, sphere):
        g = RadialGrid(sphere, 0.5, 1.5, 4000)
        u0 = synthesize_initial(g, 0.02, 1.0, 0.0, 0.25, strict=False)
        assert lambda_estimate(u0) == pytest.approx(0.02, rel=0.02)
        tr = run(SimConfig(max_steps=40, record_every=10), u0)
        assert tr.stop_reason == "max-steps"
        assert np.all(np.diff(tr.times) > 0)
        assert tr.tracked and len(tr.rows()) == len(tr.times)
        assert grad_norm(u0) == tr.grad[0]

    def test_bad_config(self):
        with pytest.raises(ParameterOutOfRange):
            SimConfig(lam_floor_cells=1.0)
        with pytest.raises(ParameterOutOfRange):
            SimConfig(c_dt=0.0)
