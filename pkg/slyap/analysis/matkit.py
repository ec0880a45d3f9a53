"""Dense real-matrix kernel: exponentials, integrals of exponentials, norms."""

from __future__ import annotations

from typing import Any

import numpy as np
import scipy.linalg
from scipy.spatial.distance import directed_hausdorff

from slyap.config import DEFAULT_TOLERANCES
from slyap.errors import DimensionError, SingularMatrixError, ValidationError, Violation

Matrix = np.ndarray

# Reciprocal condition number below which a matrix counts as singular.
RCOND_THRESHOLD = DEFAULT_TOLERANCES["rcond"]


# ---------------------------------------------------------------------------
# Coercion
# ---------------------------------------------------------------------------

def as_matrix(obj: Any, role: str = "matrix") -> Matrix:
    """Return *obj* as a finite 2-D float64 array."""
    arr = np.array(obj, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    if arr.ndim != 2 or arr.shape[0] == 0 or arr.shape[1] == 0:
        raise DimensionError(Violation(None, role, f"expected a non-empty 2-D matrix, got shape {arr.shape}"))
    if not np.all(np.isfinite(arr)):
        raise ValidationError(Violation(None, role, "non-finite entry"))
    return arr


def _require_square(M: Matrix, role: str = "matrix") -> Matrix:
    M = as_matrix(M, role)
    if M.shape[0] != M.shape[1]:
        raise DimensionError(Violation(None, role, f"expected a square matrix, got shape {M.shape}"))
    return M


# ---------------------------------------------------------------------------
# Exponentials
# ---------------------------------------------------------------------------

def mat_exp(M: Matrix, t: float = 1.0) -> Matrix:
    """Return e^{Mt}.

    scipy's expm is scaling-and-squaring with a degree-13 Padé approximant.
    """
    M = _require_square(M)
    if not np.isfinite(t):
        raise ValidationError(Violation(None, "t", "duration must be finite"))
    if t == 0.0:
        return np.eye(M.shape[0])
    return scipy.linalg.expm(M * t)


def exp_with_forced_integral(D: Matrix, C: Matrix, h: float) -> tuple[Matrix, Matrix]:
    """Return (e^{Dh}, ∫₀ʰ e^{D(h-s)} C ds) from one augmented exponential."""
    D = _require_square(D, "D")
    C = as_matrix(C, "C")
    if C.shape[0] != D.shape[0]:
        raise DimensionError(Violation(None, "C", f"has {C.shape[0]} rows, D is {D.shape[0]}x{D.shape[0]}"))
    if h < 0:
        raise ValidationError(Violation(None, "h", "duration must be non-negative"))
    m, n = C.shape
    aug = np.zeros((m + n, m + n))
    aug[:m, :m] = D
    aug[:m, m:] = C
    E = mat_exp(aug, h)
    return E[:m, :m], E[:m, m:]


def integrated_exponentials(D: Matrix, C: Matrix, h: float) -> tuple[Matrix, Matrix, Matrix, Matrix]:
    """Return (Φ, J, E, G) for one constant piece of length *h*.

    Φ = e^{Dh},  J = ∫₀ʰ e^{D(h-s)} C ds,  E = ∫₀ʰ e^{Dτ} dτ,  G = ∫₀ʰ J(τ) dτ.

    All four are blocks of exp(h·K) with K = [[0, I, 0], [0, D, C], [0, 0, 0]].
    """
    D = _require_square(D, "D")
    C = as_matrix(C, "C")
    m, n = C.shape
    if m != D.shape[0]:
        raise DimensionError(Violation(None, "C", f"has {m} rows, D is {D.shape[0]}x{D.shape[0]}"))
    K = np.zeros((2 * m + n, 2 * m + n))
    K[:m, m:2 * m] = np.eye(m)
    K[m:2 * m, m:2 * m] = D
    K[m:2 * m, 2 * m:] = C
    X = mat_exp(K, h)
    E = X[:m, m:2 * m]
    G = X[:m, 2 * m:]
    Phi = X[m:2 * m, m:2 * m]
    J = X[m:2 * m, 2 * m:]
    return Phi, J, E, G


def vanloan_integral(N: Matrix, K: Matrix, h: float) -> Matrix:
    """Return ∫₀ʰ e^{N(h-τ)} K e^{Nτ} dτ (top-right block of a doubled exponential)."""
    N = _require_square(N, "N")
    K = _require_square(K, "K")
    d = N.shape[0]
    if K.shape[0] != d:
        raise DimensionError(Violation(None, "K", f"size {K.shape[0]} does not match N size {d}"))
    big = np.zeros((2 * d, 2 * d))
    big[:d, :d] = N
    big[:d, d:] = K
    big[d:, d:] = N
    return mat_exp(big, h)[:d, d:]


# ---------------------------------------------------------------------------
# Spectral quantities
# ---------------------------------------------------------------------------

def spectral_radius(M: Matrix) -> float:
    """Largest eigenvalue modulus."""
    M = _require_square(M)
    return float(np.max(np.abs(scipy.linalg.eigvals(M))))


def max_real_eig(M: Matrix) -> float:
    """Spectral abscissa: largest real part among the eigenvalues."""
    M = _require_square(M)
    return float(np.max(scipy.linalg.eigvals(M).real))


def log_norm(M: Matrix) -> float:
    """Euclidean logarithmic norm: largest eigenvalue of (M + Mᵀ)/2."""
    M = _require_square(M)
    return float(scipy.linalg.eigvalsh(0.5 * (M + M.T))[-1])


def op_norm(M: Matrix) -> float:
    """Spectral norm, sqrt(ρ(MᵀM))."""
    M = as_matrix(M)
    return float(np.sqrt(max(scipy.linalg.eigvalsh(M.T @ M)[-1], 0.0)))


def invert(M: Matrix, role: str = "matrix", rcond_threshold: float = RCOND_THRESHOLD) -> Matrix:
    """Inverse of *M*; near-singular input raises SingularMatrixError naming *role*."""
    M = _require_square(M, role)
    cond = np.linalg.cond(M)
    rcond = 0.0 if not np.isfinite(cond) else 1.0 / cond
    if rcond < rcond_threshold:
        raise SingularMatrixError(role, rcond)
    return scipy.linalg.inv(M)


# ---------------------------------------------------------------------------
# Point sets
# ---------------------------------------------------------------------------

def hausdorff(P: np.ndarray, Q: np.ndarray) -> float:
    """Symmetric Hausdorff distance between two finite point sets (rows)."""
    P = np.atleast_2d(np.asarray(P, dtype=np.float64))
    Q = np.atleast_2d(np.asarray(Q, dtype=np.float64))
    return float(max(directed_hausdorff(P, Q)[0], directed_hausdorff(Q, P)[0]))
