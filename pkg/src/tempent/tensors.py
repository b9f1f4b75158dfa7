"""Dense complex tensor algebra used by every engine.

Tensors are plain ``numpy.ndarray`` objects with dtype complex128 in C
(row-major) order; reshapes are metadata-only and transposes are explicit
data permutations.  All numerical tolerances of this layer live in the
constants below so tests have a single source of truth.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

# Single source of truth for the hard-coded tolerances of this layer.
HERMITICITY_TOL = 1e-10   # max |H - H^dag| accepted by hermitian_exp
UNITARITY_TOL = 1e-10     # max |W^dag W - 1| guaranteed by hermitian_exp
RECONSTRUCTION_RTOL = 1e-12  # discarded_weight vs reconstruction error


def as_tensor(data) -> np.ndarray:
    """Coerce to a C-ordered complex128 array."""
    return np.ascontiguousarray(data, dtype=np.complex128)


@dataclass(frozen=True)
class TruncationReport:
    """Outcome of a truncated SVD.

    ``discarded_weight`` is the sum of squared discarded singular values
    divided by the sum of all squared singular values, so it always lies
    in [0, 1].
    """

    kept_rank: int
    discarded_weight: float

    def __post_init__(self):
        if not 0.0 <= self.discarded_weight <= 1.0 + 1e-15:
            raise ValueError(
                f"discarded_weight {self.discarded_weight} outside [0, 1]")


def contract(a: np.ndarray, b: np.ndarray,
             pairs: Sequence[tuple[int, int]]) -> np.ndarray:
    """Contract tensors ``a`` and ``b`` over the given axis pairs.

    The result carries the unpaired axes of ``a`` followed by the unpaired
    axes of ``b``.  ``pairs=[]`` yields the outer product.
    """
    a = as_tensor(a)
    b = as_tensor(b)
    axes_a = [p[0] for p in pairs]
    axes_b = [p[1] for p in pairs]
    if len(set(axes_a)) != len(axes_a) or len(set(axes_b)) != len(axes_b):
        raise ValueError(f"duplicate contraction axis in pairs {list(pairs)}")
    for ax_a, ax_b in pairs:
        if not (0 <= ax_a < a.ndim and 0 <= ax_b < b.ndim):
            raise ValueError(
                f"axis pair ({ax_a}, {ax_b}) out of range for shapes "
                f"{a.shape} and {b.shape}")
        if a.shape[ax_a] != b.shape[ax_b]:
            raise ValueError(
                f"dimension mismatch: axis {ax_a} of a has size "
                f"{a.shape[ax_a]}, axis {ax_b} of b has size {b.shape[ax_b]}")
    if not pairs:
        return np.multiply.outer(a, b)
    return np.tensordot(a, b, axes=(axes_a, axes_b))


def svd_truncate(t: np.ndarray, left_axes: Sequence[int], chi_max: int,
                 cutoff: float) -> tuple[np.ndarray, np.ndarray, np.ndarray,
                                         TruncationReport]:
    """Truncated SVD of ``t`` split between ``left_axes`` and the rest.

    Singular values are kept while ``s_i / s_max > cutoff`` (a relative
    threshold, so truncation is scale invariant) and at most ``chi_max``
    of them.  Returns ``(U, s, Vh, report)`` with ``U`` shaped
    ``left_dims + (k,)`` and ``Vh`` shaped ``(k,) + right_dims``.
    """
    t = as_tensor(t)
    left_axes = list(left_axes)
    right_axes = [ax for ax in range(t.ndim) if ax not in left_axes]
    if not left_axes or not right_axes:
        raise ValueError("split must leave both axis groups non-empty")
    if chi_max < 1:
        raise ValueError(f"chi_max must be >= 1, got {chi_max}")
    if cutoff < 0:
        raise ValueError(f"cutoff must be >= 0, got {cutoff}")

    perm = left_axes + right_axes
    left_dims = tuple(t.shape[ax] for ax in left_axes)
    right_dims = tuple(t.shape[ax] for ax in right_axes)
    mat = t.transpose(perm).reshape(int(np.prod(left_dims)),
                                    int(np.prod(right_dims)))
    u, s, vh = _robust_svd(mat)
    s_max = s[0] if s.size else 0.0
    if s_max == 0.0:
        raise ValueError("zero matrix has no truncated SVD")

    keep = int(np.sum(s / s_max > cutoff))
    keep = max(1, min(chi_max, keep))
    total = float(np.sum(s ** 2))
    discarded = float(np.sum(s[keep:] ** 2))
    report = TruncationReport(kept_rank=keep,
                              discarded_weight=min(discarded / total, 1.0))
    u_t = u[:, :keep].reshape(left_dims + (keep,))
    vh_t = vh[:keep].reshape((keep,) + right_dims)
    return u_t, s[:keep].copy(), vh_t, report


def _robust_svd(mat: np.ndarray):
    """gesdd with a gesvd fallback for the rare non-convergence."""
    try:
        return np.linalg.svd(mat, full_matrices=False)
    except np.linalg.LinAlgError:
        from scipy.linalg import svd as scipy_svd
        return scipy_svd(mat, full_matrices=False, lapack_driver="gesvd")


def hermitian_exp(h: np.ndarray, theta: float) -> np.ndarray:
    """exp(-i * theta * H) for Hermitian ``H`` via eigendecomposition.

    Raises if the Hermiticity deviation max|H - H^dag| exceeds
    ``HERMITICITY_TOL``; the returned matrix is unitary to
    ``UNITARITY_TOL``.
    """
    h = as_tensor(h)
    if h.ndim != 2 or h.shape[0] != h.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {h.shape}")
    deviation = float(np.max(np.abs(h - h.conj().T)))
    if deviation > HERMITICITY_TOL:
        raise ValueError(
            f"matrix is not Hermitian: max |H - H^dag| = {deviation:.3e} "
            f"exceeds {HERMITICITY_TOL:.0e}")
    evals, evecs = np.linalg.eigh(h)
    w = (evecs * np.exp(-1j * theta * evals)) @ evecs.conj().T
    unitarity = float(np.max(np.abs(w.conj().T @ w - np.eye(h.shape[0]))))
    if unitarity > UNITARITY_TOL:
        raise ValueError(
            f"eigendecomposition produced a non-unitary result "
            f"(deviation {unitarity:.3e})")
    return w
