"""The 1D quintic ground state Q(y) = 3^{1/4} cosh(2y)^{-1/2} and the operators
built around it."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._fd import derivative
from .errors import GridMismatch, ParameterOutOfRange

Q0 = 3.0 ** 0.25
# int Q^2 = sqrt(3) * int sech(2y) dy = sqrt(3) pi / 2
Q_MASS = math.sqrt(3.0) * math.pi / 2.0


def q_eval(y):
    """Q(y), written as 3^{1/4} sqrt(2) e^{-|y|} / sqrt(1 + e^{-4|y|}) so that
    large |y| never overflows."""
    a = np.abs(np.asarray(y, dtype=float))
    e = np.exp(-a)
    return Q0 * math.sqrt(2.0) * e / np.sqrt(1.0 + e**4)


def q_prime(y):
    y = np.asarray(y, dtype=float)
    return -q_eval(y) * np.tanh(2.0 * y)


def q_second(y):
    """Q'' = Q (cosh^2(2y) - 3) / cosh^2(2y), in overflow-free form."""
    y = np.asarray(y, dtype=float)
    s = 1.0 / np.cosh(np.minimum(np.abs(2.0 * y), 700.0))
    return q_eval(y) * (1.0 - 3.0 * s * s)


def lambda_q(y):
    """Lambda Q = Q/2 + y Q'."""
    return 0.5 * q_eval(y) + y * q_prime(y)


def lambda2_q(y):
    """Lambda^2 Q = Q/4 + 2 y Q' + y^2 Q''."""
    return 0.25 * q_eval(y) + 2.0 * y * q_prime(y) + y * y * q_second(y)


@dataclass
class GroundStateTable:
    """Q and Q' sampled on the uniform symmetric grid y_k = -L + k dy."""
    L: float = 40.0
    dy: float = 1.0 / 512.0
    order: int = 8

    def __post_init__(self):
        if self.L <= 0 or self.dy <= 0:
            raise ParameterOutOfRange("L and dy must be positive")
        n = int(round(2 * self.L / self.dy))
        self.y = -self.L + self.dy * np.arange(n + 1)
        self.y = 0.5 * (self.y - self.y[::-1])  # exact symmetry
        self.Q = q_eval(self.y)
        self.Qp = q_prime(self.y)

    @property
    def n(self):
        return self.y.size

    def inner(self, f, g) -> float:
        """Real L^2 pairing Re int f conj(g) dy by the trapezoid rule."""
        return float(np.real(np.sum(np.asarray(f) * np.conj(g))) * self.dy)

    def integral(self, f) -> float:
        return float(np.sum(f) * self.dy)


OPERATORS = ("Lambda", "Lplus", "Lminus", "Script1", "Script2")


def apply_operator(which: str, f, table: GroundStateTable):
    """Apply Lambda, L+, L-, or the spectral-property operators
    -d^2 + 10 y Q^3 Q' and -d^2 + 2 y Q^3 Q' (Dirichlet at +-L)."""
    f = np.asarray(f)
    if f.shape != table.y.shape:
        raise GridMismatch(f"field has {f.size} samples, table has {table.n}")
    y, Q, h, o = table.y, table.Q, table.dy, table.order
    if which == "Lambda":
        return 0.5 * f + y * derivative(f, h, 1, o)
    d2 = derivative(f, h, 2, o)
    if which == "Lplus":
        return -d2 + f - 5 * Q**4 * f
    if which == "Lminus":
        return -d2 + f - Q**4 * f
    if which == "Script1":
        return -d2 + 10 * y * Q**3 * table.Qp * f
    if which == "Script2":
        return -d2 + 2 * y * Q**3 * table.Qp * f
    raise ParameterOutOfRange(f"unknown operator {which!r}")


def ode_residual(table: GroundStateTable) -> float:
    """sup |-Q'' + Q - Q^5| with the closed-form second derivative."""
    y = table.y
    return float(np.max(np.abs(-q_second(y) + table.Q - table.Q**5)))


@dataclass
class PohozaevReport:
    mass: float          # int Q^2
    kinetic: float       # int Q'^2
    sextic: float        # int Q^6
    energy: float        # E(Q)
    mass_error: float
    kinetic_identity: float   # int Q'^2 - int Q^2 / 2
    sextic_identity: float    # int Q^6 - 3/2 int Q^2

    def as_row(self):
        return [self.mass, self.kinetic, self.sextic, self.energy,
                self.mass_error, self.kinetic_identity, self.sextic_identity]

    header = ["mass", "kinetic", "sextic", "energy", "mass_error",
              "kinetic_identity", "sextic_identity"]


def pohozaev_report(table: GroundStateTable | None = None) -> PohozaevReport:
    t = table or GroundStateTable()
    m = t.integral(t.Q**2)
    k = t.integral(t.Qp**2)
    s6 = t.integral(t.Q**6)
    e = 0.5 * k - s6 / 6.0
    return PohozaevReport(m, k, s6, e, m - Q_MASS, k - 0.5 * m, s6 - 1.5 * m)
