"""Coercivity of H(eps, eps) = (L1 eps1, eps1) + (L2 eps2, eps2), where

    L1 = -d^2 + 10 y Q^3 Q',   L2 = -d^2 + 2 y Q^3 Q',

relative to the weight norm int |eps'|^2 + int |eps|^2 e^{-|y|}, once eps1
is made orthogonal to Q, y^2 Q, y Q and eps2 to Lambda Q, Lambda^2 Q, Q'.

Forms are assembled with second-order finite differences on the interior
nodes of [-L, L] (Dirichlet ends) and the constrained generalized problem
is solved densely on an orthonormal basis of the constraint null space.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sl
import scipy.sparse as sp

from .errors import EigensolverNoConvergence, ParameterOutOfRange, ResolutionTooCoarse
from .groundstate import lambda2_q, lambda_q, q_eval, q_prime

REFINE_TOL = 0.05


class CoercivityProblem:
    """Assembled forms and constraint directions on a uniform interior grid."""

    def __init__(self, L: float = 20.0, N: int = 2000):
        if L < 15 or N < 1000:
            raise ParameterOutOfRange("need L >= 15 and N >= 1000")
        self.L, self.N = float(L), int(N)
        self.y = np.linspace(-L, L, N + 2)[1:-1]
        self.h = self.y[1] - self.y[0]
        y, h = self.y, self.h
        q, qp = q_eval(y), q_prime(y)
        main = np.full(N, 2.0 / h)
        off = np.full(N - 1, -1.0 / h)
        self.K = sp.diags([off, main, off], [-1, 0, 1], format="csr")   # int |eps'|^2
        self.weight = (self.K + sp.diags(np.exp(-np.abs(y)) * h)).tocsr()
        self.L1 = (self.K + sp.diags(10.0 * y * q**3 * qp * h)).tocsr()
        self.L2 = (self.K + sp.diags(2.0 * y * q**3 * qp * h)).tocsr()
        self.dirs1 = np.array([q, y * y * q, y * q])
        self.dirs2 = np.array([lambda_q(y), lambda2_q(y), qp])
        self._basis = {}

    def forms(self, k: int):
        return (self.L1, self.dirs1) if k == 1 else (self.L2, self.dirs2)

    def gram_det(self, k: int) -> float:
        d = self.forms(k)[1]
        G = d @ d.T * self.h
        return float(np.linalg.det(G / np.outer(np.sqrt(np.diag(G)), np.sqrt(np.diag(G)))))

    def null_basis(self, k: int) -> np.ndarray:
        """Orthonormal basis of {v : (v, d_j) = 0 for the three directions}."""
        if k not in self._basis:
            C = self.forms(k)[1].T * self.h
            Qf, _ = np.linalg.qr(C, mode="complete")
            self._basis[k] = Qf[:, 3:]
        return self._basis[k]

    def project(self, v: np.ndarray, k: int) -> np.ndarray:
        C = self.forms(k)[1].T
        coef = np.linalg.solve(C.T @ C, C.T @ v)
        return v - C @ coef

    def quadratic(self, v: np.ndarray, k: int) -> float:
        A = self.forms(k)[0]
        return float(v @ (A @ v))

    def weight_norm2(self, v: np.ndarray) -> float:
        return float(v @ (self.weight @ v))

    def symmetry_defect(self) -> float:
        return max(abs(M - M.T).max() for M in (self.K, self.weight, self.L1, self.L2))

    def _min_eig(self, A, B):
        try:
            return float(sl.eigh(A, B, eigvals_only=True, subset_by_index=[0, 0])[0])
        except (np.linalg.LinAlgError, ValueError) as exc:
            raise EigensolverNoConvergence(str(exc)) from exc

    def min_raw(self, k: int) -> float:
        A = self.forms(k)[0]
        return self._min_eig(A.toarray(), self.weight.toarray())

    def min_projected(self, k: int) -> float:
        A = self.forms(k)[0].toarray()
        Z = self.null_basis(k)
        B = self.weight.toarray()
        return self._min_eig(Z.T @ A @ Z, Z.T @ B @ Z)


@dataclass
class CoercivityResult:
    L: float
    N: int
    min_raw_1: float
    min_raw_2: float
    delta_1: float
    delta_2: float

    @property
    def delta_hat(self) -> float:
        return min(self.delta_1, self.delta_2)

    def as_row(self):
        return [self.L, self.N, self.min_raw_1, self.min_raw_2, self.delta_hat]


COERCIVITY_HEADER = ["L", "N", "min_raw_1", "min_raw_2", "delta_hat"]


def coercivity_delta(L: float = 20.0, N: int = 2000, problem: CoercivityProblem | None = None
                     ) -> CoercivityResult:
    p = problem or CoercivityProblem(L, N)
    return CoercivityResult(p.L, p.N, p.min_raw(1), p.min_raw(2),
                            p.min_projected(1), p.min_projected(2))


def refinement_check(L: float = 20.0, N: int = 2000):
    """delta_hat at N and 2N; raises if they differ by more than 5%."""
    a = coercivity_delta(L, N)
    c = coercivity_delta(L, 2 * N)
    rel = abs(a.delta_hat - c.delta_hat) / abs(c.delta_hat)
    if rel > REFINE_TOL:
        raise ResolutionTooCoarse(f"delta_hat moved by {rel:.3g} under N -> 2N")
    return a, c, rel
