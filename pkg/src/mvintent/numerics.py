"""Dense linear-algebra and statistics kernels shared by every other module.

All kernels work on float64 numpy arrays, are pure and deterministic, and
never return NaN/Inf. Degenerate inputs (zero-norm rows, constant vectors)
are reported back to the caller instead of aborting, so batch pipelines can
keep going.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionMismatchError, EmptyInputError

DOT = "dot"
INVERSE_L2 = "inverse_l2"
SIMILARITY_KINDS = (DOT, INVERSE_L2)

# Regularizer for the inverse-L2 similarity so coincident points score 1e8
# instead of dividing by zero.
INVERSE_L2_EPS = 1e-8

# Rows of P are compared against rows of Q in chunks to bound the transient
# (chunk x rows(Q) x cols) allocation of the inverse-L2 path.
_PAIRWISE_CHUNK = 128


def as_matrix(values, name: str = "matrix") -> np.ndarray:
    """Coerce to a finite float64 2-D array (copies only when needed)."""
    m = np.asarray(values, dtype=np.float64)
    if m.ndim != 2:
        raise DimensionMismatchError(f"{name} must be 2-D, got shape {m.shape}")
    if m.size and not np.isfinite(m).all():
        raise ValueError(f"{name} contains non-finite entries")
    return m


def as_vector(values, name: str = "vector") -> np.ndarray:
    """Coerce to a finite float64 1-D array."""
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 1:
        raise DimensionMismatchError(f"{name} must be 1-D, got shape {v.shape}")
    if v.size and not np.isfinite(v).all():
        raise ValueError(f"{name} contains non-finite entries")
    return v


def row_normalize(matrix, epsilon: float = 1e-12) -> tuple[np.ndarray, list[int]]:
    """Scale each row to unit L2 norm.

    Rows whose norm is <= ``epsilon`` cannot be normalized; they come back as
    all-zeros and their indices are returned so callers can flag them, which
    keeps degenerate rows from silently polluting downstream cosines.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    m = as_matrix(matrix)
    norms = np.linalg.norm(m, axis=1)
    degenerate = np.flatnonzero(norms <= epsilon)
    safe = np.where(norms <= epsilon, 1.0, norms)
    out = m / safe[:, None]
    if degenerate.size:
        out[degenerate] = 0.0
    return out, degenerate.tolist()


def matsim(p, q, kind: str = DOT) -> np.ndarray:
    """Pairwise similarity matrix between rows of ``p`` and rows of ``q``.

    ``dot`` gives inner products; ``inverse_l2`` gives 1 / (eps + ||pi - qj||).
    Output shape is (rows(p), rows(q)).
    """
    pm = as_matrix(p, "p")
    qm = as_matrix(q, "q")
    if pm.shape[1] != qm.shape[1]:
        raise DimensionMismatchError(
            f"column mismatch: {pm.shape[1]} vs {qm.shape[1]}"
        )
    if kind == DOT:
        return pm @ qm.T
    if kind == INVERSE_L2:
        out = np.empty((pm.shape[0], qm.shape[0]))
        for start in range(0, pm.shape[0], _PAIRWISE_CHUNK):
            block = pm[start : start + _PAIRWISE_CHUNK]
            # Direct differences: exact zeros for coincident rows, unlike the
            # expanded (x^2 + y^2 - 2xy) form which can cancel badly.
            diff = block[:, None, :] - qm[None, :, :]
            dist = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
            out[start : start + block.shape[0]] = 1.0 / (INVERSE_L2_EPS + dist)
        return out
    raise ValueError(f"unknown similarity kind: {kind!r}")


def softmax(v) -> np.ndarray:
    """Numerically stable softmax (max subtracted before exponentiation)."""
    x = as_vector(v)
    if x.size == 0:
        raise EmptyInputError("softmax of empty vector")
    e = np.exp(x - x.max())
    return e / e.sum()


def pearson(x, y) -> tuple[float, bool]:
    """Sample Pearson correlation, clamped to [-1, 1].

    Returns ``(r, constant)``. If either input has zero variance the
    correlation is undefined; we return 0.0 with ``constant=True`` so callers
    can skip such pairs instead of crashing on a division by zero.
    """
    xv = as_vector(x, "x")
    yv = as_vector(y, "y")
    if xv.size != yv.size:
        raise DimensionMismatchError(f"length mismatch: {xv.size} vs {yv.size}")
    if xv.size < 2:
        raise ValueError("pearson needs at least 2 samples")
    if np.ptp(xv) == 0.0 or np.ptp(yv) == 0.0:
        return 0.0, True
    xc = xv - xv.mean()
    yc = yv - yv.mean()
    denom = np.sqrt((xc * xc).sum() * (yc * yc).sum())
    if denom == 0.0:
        return 0.0, True
    r = float((xc * yc).sum() / denom)
    return min(1.0, max(-1.0, r)), False


def center_gram(k) -> np.ndarray:
    """Double-center a square Gram matrix: H K H with H = I - (1/n) 11^T.

    Uses the expanded form (subtract row/column means, add grand mean) which
    is algebraically identical to the two matrix products but O(n^2).
    """
    km = as_matrix(k, "K")
    n, m = km.shape
    if n != m:
        raise DimensionMismatchError(f"K must be square, got {km.shape}")
    row_means = km.mean(axis=1, keepdims=True)
    col_means = km.mean(axis=0, keepdims=True)
    return km - row_means - col_means + km.mean()
