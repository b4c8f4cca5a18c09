"""Central finite-difference matrices on uniform grids with zero (Dirichlet)
padding outside the grid."""
from functools import lru_cache

import numpy as np
import scipy.sparse as sp


@lru_cache(maxsize=None)
def central_weights(deriv: int, order: int) -> np.ndarray:
    """Weights of the centered stencil of the given accuracy order."""
    if order % 2 or order < 2:
        raise ValueError("order must be a positive even integer")
    half = (deriv + 1) // 2 - 1 + order // 2
    offsets = np.arange(-half, half + 1, dtype=float)
    n = offsets.size
    A = np.vander(offsets, n, increasing=True).T
    rhs = np.zeros(n)
    rhs[deriv] = float(np.prod(np.arange(1, deriv + 1)))
    w = np.linalg.solve(A, rhs)
    w[np.abs(w) < 1e-14 * np.abs(w).max()] = 0.0
    return w


def diff_matrix(n: int, h: float, deriv: int, order: int = 8) -> sp.csr_matrix:
    w = central_weights(deriv, order)
    half = w.size // 2
    diags = [np.full(n - abs(k), w[k + half]) for k in range(-half, half + 1)]
    M = sp.diags(diags, list(range(-half, half + 1)), shape=(n, n), format="csr")
    return M / h**deriv


def derivative(f: np.ndarray, h: float, deriv: int = 1, order: int = 8) -> np.ndarray:
    """Apply the stencil to samples ``f``; values beyond the ends count as zero."""
    return diff_matrix(f.size, h, deriv, order) @ f
