"""Dense complex matrix and 4-way tensor kernels.

All matrices are plain 2-D ``numpy`` arrays. Vectorization is column-major
and the n-mode unfolding orders the remaining modes with the lowest index
varying fastest, so that a CP tensor with factors ``(A1, A2, A3, A4)``
unfolds as::

    [Y]_(1) = A1 (A4 kr A3 kr A2)^T
    [Y]_(2) = A2 (A4 kr A3 kr A1)^T
    [Y]_(3) = A3 (A4 kr A2 kr A1)^T
    [Y]_(4) = A4 (A3 kr A2 kr A1)^T

where ``kr`` is the column-wise Kronecker (Khatri-Rao) product.
"""

from dataclasses import dataclass
from functools import reduce

import numpy as np

__all__ = [
    "SvdResult",
    "kronecker",
    "khatri_rao",
    "vec",
    "unvec",
    "selection_matrices",
    "mode_n_unfold",
    "mode_n_fold",
    "cp_build",
    "ls_solve",
    "svd",
]

NDIM = 4


@dataclass(frozen=True)
class SvdResult:
    """Thin SVD ``a = u @ diag(s) @ v.conj().T`` with ``s`` descending."""

    u: np.ndarray
    s: np.ndarray
    v: np.ndarray

    def reconstruct(self):
        return (self.u * self.s) @ self.v.conj().T


def _as_matrix(a):
    a = np.asarray(a)
    if a.ndim == 1:
        return a[:, None]
    if a.ndim != 2:
        raise ValueError(f"expected a matrix, got array with ndim={a.ndim}")
    return a


def kronecker(a, b):
    """Kronecker product; block ``(i, j)`` of the result is ``a[i, j] * b``."""
    return np.kron(_as_matrix(a), _as_matrix(b))


def khatri_rao(*mats):
    """Column-wise Kronecker product of two or more matrices.

    ``khatri_rao(a, b)[:, m] == kron(a[:, m], b[:, m])``. With more than two
    arguments the product is taken left to right, so the rightmost matrix
    has the fastest-varying row index.
    """
    if len(mats) < 2:
        raise ValueError("khatri_rao needs at least two matrices")
    mats = [_as_matrix(m) for m in mats]
    ncols = mats[0].shape[1]
    for m in mats[1:]:
        if m.shape[1] != ncols:
            raise ValueError(
                f"column-count mismatch in khatri_rao: {[x.shape for x in mats]}"
            )

    def _pair(a, b):
        return (a[:, None, :] * b[None, :, :]).reshape(-1, ncols)

    return reduce(_pair, mats)


def vec(a):
    """Stack the columns of ``a`` into a column vector (shape ``(n, 1)``)."""
    a = _as_matrix(a)
    return a.reshape(-1, 1, order="F")


def unvec(v, rows, cols):
    """Inverse of :func:`vec`."""
    return np.asarray(v).reshape(rows, cols, order="F")


def selection_matrices(l_t, l_r):
    """Column-repetition matrices ``(Omega_T, Omega_R)``.

    ``Omega_T = I_{l_t} kron 1^T_{l_r}`` repeats every column of a matrix
    ``l_r`` times consecutively; ``Omega_R = 1^T_{l_t} kron I_{l_r}`` tiles the
    columns ``l_t`` times. ``khatri_rao(Omega_T, Omega_R)`` is the identity.
    """
    if l_t < 1 or l_r < 1:
        raise ValueError("path counts must be >= 1")
    omega_t = np.kron(np.eye(l_t), np.ones((1, l_r)))
    omega_r = np.kron(np.ones((1, l_t)), np.eye(l_r))
    return omega_t, omega_r


def _check_mode(t, n):
    if n not in (1, 2, 3, 4):
        raise ValueError(f"mode index must be in 1..4, got {n!r}")
    if t.ndim != NDIM:
        raise ValueError(f"expected a 4-way tensor, got ndim={t.ndim}")


def mode_n_unfold(t, n):
    """Mode-``n`` unfolding (``n`` in 1..4) of a 4-way tensor."""
    t = np.asarray(t)
    _check_mode(t, n)
    return np.moveaxis(t, n - 1, 0).reshape(t.shape[n - 1], -1, order="F")


def mode_n_fold(m, n, dims):
    """Inverse of :func:`mode_n_unfold` for a tensor of shape ``dims``."""
    dims = tuple(int(d) for d in dims)
    if len(dims) != NDIM:
        raise ValueError("dims must have four entries")
    if n not in (1, 2, 3, 4):
        raise ValueError(f"mode index must be in 1..4, got {n!r}")
    rest = [d for i, d in enumerate(dims) if i != n - 1]
    full = np.asarray(m).reshape([dims[n - 1]] + rest, order="F")
    return np.moveaxis(full, 0, n - 1)


def cp_build(a1, a2, a3, a4, rank=None):
    """Sum of ``rank`` outer products of the factor columns."""
    factors = [_as_matrix(a) for a in (a1, a2, a3, a4)]
    ranks = {f.shape[1] for f in factors}
    if len(ranks) != 1 or (rank is not None and rank not in ranks):
        raise ValueError(
            f"rank mismatch: factor column counts {[f.shape[1] for f in factors]}, "
            f"rank={rank}"
        )
    dims = tuple(f.shape[0] for f in factors)
    # Fold the mode-1 unfolding A1 (A4 kr A3 kr A2)^T.
    unf = factors[0] @ khatri_rao(factors[3], factors[2], factors[1]).T
    return mode_n_fold(unf, 1, dims)


def ls_solve(a, y, rcond=None):
    """Minimum-norm least-squares solution of ``a @ x ~= y``.

    Singular values below ``max(a.shape) * eps * s_max`` are treated as zero
    (override with ``rcond``). Returns ``(x, rank)``; rank deficiency is
    reported through ``rank`` and never raises.
    """
    a = _as_matrix(a)
    if a.size == 0:
        raise ValueError("ls_solve needs a nonempty coefficient matrix")
    y = np.asarray(y)
    if rcond is None:
        rcond = max(a.shape) * np.finfo(float).eps
    x, _, rank, _ = np.linalg.lstsq(a, y, rcond=rcond)
    return x, int(rank)


def svd(a):
    """Thin SVD of a nonempty matrix.

    Raises ``np.linalg.LinAlgError`` when LAPACK fails to converge.
    """
    a = _as_matrix(a)
    if a.size == 0:
        raise ValueError("svd needs a nonempty matrix")
    u, s, vh = np.linalg.svd(a, full_matrices=False)
    return SvdResult(u=u, s=s, v=vh.conj().T)
