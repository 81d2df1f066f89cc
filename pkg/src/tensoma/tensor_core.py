"""Dense third-order tensor container and multilinear-algebra kernels.

Layout convention
-----------------
A :class:`Tensor3` with dims ``(I, J, K)`` is vectorised with the first
index fastest (Fortran order): ``vec(t)[i + j*I + k*I*J] = t[i, j, k]``.
All unfoldings are defined relative to this single convention, so that row
``i`` of the mode-1 unfolding is ``vec`` of the slice ``t[i, :, :]``, and
``fold(unfold(t, n), n, dims) == t`` holds bit-exactly for every mode.

Factor matrices are plain float64 2-D arrays of shape (rows, rank); the
heavy kernels are dispatched to the compiled backend when available (see
:mod:`tensoma._backend`).
"""

from dataclasses import dataclass

import numpy as np

from . import _backend
from .errors import UsageError

__all__ = [
    "Tensor3",
    "unfold",
    "fold",
    "khatri_rao",
    "cp_reconstruct",
    "frobenius_norm",
]


@dataclass(frozen=True)
class Tensor3:
    """Dense real third-order tensor with all-finite float64 entries."""

    data: np.ndarray

    def __post_init__(self):
        arr = np.ascontiguousarray(self.data, dtype=np.float64)
        if arr.ndim != 3:
            raise UsageError(f"Tensor3 needs 3 dims, got shape {arr.shape}")
        if not np.isfinite(arr).all():
            raise UsageError("Tensor3 entries must be finite")
        object.__setattr__(self, "data", arr)

    @property
    def dims(self):
        return self.data.shape

    def ravel(self):
        """Canonical vectorisation (first index fastest)."""
        return self.data.ravel(order="F")


def _as_factor(a, name="factor"):
    arr = np.ascontiguousarray(a, dtype=np.float64)
    if arr.ndim != 2:
        raise UsageError(f"{name} must be a 2-D matrix, got shape {arr.shape}")
    return arr


def unfold(t: Tensor3, mode: int) -> np.ndarray:
    """Mode-``n`` unfolding; row ``i`` is vec of the complementary slice."""
    if mode not in (1, 2, 3):
        raise UsageError(f"mode must be 1, 2 or 3, got {mode!r}")
    moved = np.moveaxis(t.data, mode - 1, 0)
    return np.reshape(moved, (t.dims[mode - 1], -1), order="F")


def fold(mat: np.ndarray, mode: int, dims) -> Tensor3:
    """Inverse of :func:`unfold` for the given dims; exact round trip."""
    if mode not in (1, 2, 3):
        raise UsageError(f"mode must be 1, 2 or 3, got {mode!r}")
    dims = tuple(int(d) for d in dims)
    if len(dims) != 3:
        raise UsageError(f"dims must have length 3, got {dims}")
    rest = tuple(d for i, d in enumerate(dims) if i != mode - 1)
    arr = np.reshape(np.asarray(mat, dtype=np.float64),
                     (dims[mode - 1],) + rest, order="F")
    return Tensor3(np.moveaxis(arr, 0, mode - 1))


def khatri_rao(a, b) -> np.ndarray:
    """Column-wise Kronecker product of two factor matrices.

    The result has ``a.rows * b.rows`` rows with ``b``'s row index varying
    fastest, matching the layout convention above.
    """
    a = _as_factor(a, "a")
    b = _as_factor(b, "b")
    if a.shape[1] != b.shape[1]:
        raise UsageError(
            f"khatri_rao needs equal column counts, got {a.shape[1]} and {b.shape[1]}")
    return _backend.khatri_rao(a, b)


def cp_reconstruct(a1, a2, rs) -> Tensor3:
    """Tensor Σ_r a1[:, r] ∘ a2[:, r] ∘ rs[:, r]."""
    a1 = _as_factor(a1, "a1")
    a2 = _as_factor(a2, "a2")
    rs = _as_factor(rs, "rs")
    if not (a1.shape[1] == a2.shape[1] == rs.shape[1]):
        raise UsageError(
            "cp_reconstruct needs equal column counts, got "
            f"{a1.shape[1]}, {a2.shape[1]}, {rs.shape[1]}")
    return Tensor3(_backend.cp_reconstruct(a1, a2, rs))


def frobenius_norm(t: Tensor3) -> float:
    """Square root of the sum of squared entries."""
    return float(np.sqrt(_backend.sumsq(np.ascontiguousarray(t.data).reshape(-1))))
