"""Dense order-3 and order-4 tensors with the multilinear products used in unmixing.

Layout convention: row-major (C order) with the last index fastest, for both
tensor orders.  All indices are 0-based.  Modes are numbered 1..P as usual in
multilinear algebra.
"""

import dataclasses

import numpy as np

from .errors import NonFiniteError, ShapeError

__all__ = [
    "Tensor3",
    "Tensor4",
    "Matricization",
    "as_array",
    "fiber",
    "matricize",
    "outer_product",
    "mode_k_product",
    "multilinear_product",
    "contracted_product",
]


def _validated(data, order):
    arr = np.array(data, dtype=np.float64, order="C")
    if arr.ndim != order:
        raise ShapeError(f"expected an order-{order} array, got shape {arr.shape}")
    if arr.size == 0:
        raise ShapeError(f"tensor dimensions must be positive, got {arr.shape}")
    if not np.isfinite(arr).all():
        raise NonFiniteError("tensor entries must be finite")
    arr.flags.writeable = False
    return arr


class Tensor3:
    """Immutable dense order-3 tensor of 64-bit floats.

    Holds hyperspectral cubes (n1 x n2 x bands) and abundance maps
    (n1 x n2 x endmembers).
    """

    __slots__ = ("data",)

    def __init__(self, data):
        self.data = _validated(data, 3)

    @property
    def dims(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor3(dims={self.data.shape})"


class Tensor4:
    """Immutable dense order-4 tensor of 64-bit floats.

    Holds per-pixel endmember collections (n1 x n2 x bands x endmembers).
    """

    __slots__ = ("data",)

    def __init__(self, data):
        self.data = _validated(data, 4)

    @property
    def dims(self):
        return self.data.shape

    def __repr__(self):
        return f"Tensor4(dims={self.data.shape})"


@dataclasses.dataclass(frozen=True)
class Matricization:
    """Mode-`mode` unfolding of a tensor.

    Rows are indexed by the unfolded mode; each column is one mode-`mode`
    fiber, with the remaining indices ordered row-major (leftmost remaining
    index slowest).  The unfolding preserves the Frobenius norm.
    """

    mode: int
    rows: int
    cols: int
    data: np.ndarray


def as_array(t):
    """Return the ndarray behind ``t`` (Tensor3/Tensor4 pass-through for arrays)."""
    if isinstance(t, (Tensor3, Tensor4)):
        return t.data
    return np.asarray(t, dtype=np.float64)


def _wrap_like(t, arr):
    if isinstance(t, (Tensor3, Tensor4)):
        if arr.ndim == 3:
            return Tensor3(arr)
        if arr.ndim == 4:
            return Tensor4(arr)
    return arr


def _check_mode(mode, order):
    if not 1 <= mode <= order:
        raise ShapeError(f"mode must be in 1..{order}, got {mode}")


def fiber(t, mode, idx):
    """Copy of the mode-`mode` fiber at the fixed (0-based) indices `idx`.

    `idx` lists the remaining indices in increasing mode order, e.g. for an
    order-3 tensor and mode 2, ``idx = (n1, n3)``.
    """
    arr = as_array(t)
    _check_mode(mode, arr.ndim)
    if len(idx) != arr.ndim - 1:
        raise ShapeError(f"expected {arr.ndim - 1} fixed indices, got {len(idx)}")
    index = list(idx)
    index.insert(mode - 1, slice(None))
    try:
        return np.array(arr[tuple(index)])
    except IndexError as exc:
        raise ShapeError(f"fiber index {idx} out of bounds for dims {arr.shape}") from exc


def matricize(t, mode):
    """Unfold ``t`` along `mode` into a ``Matricization``."""
    arr = as_array(t)
    _check_mode(mode, arr.ndim)
    mat = np.moveaxis(arr, mode - 1, 0).reshape(arr.shape[mode - 1], -1)
    return Matricization(mode=mode, rows=mat.shape[0], cols=mat.shape[1], data=mat)


def outer_product(vectors):
    """Outer product of 3 or 4 vectors: T[n1,..,nP] = prod_i v_i[n_i]."""
    if len(vectors) not in (3, 4):
        raise ShapeError(f"outer_product takes 3 or 4 vectors, got {len(vectors)}")
    vecs = [np.asarray(v, dtype=np.float64).ravel() for v in vectors]
    if any(v.size == 0 for v in vecs):
        raise ShapeError("outer_product vectors must be non-empty")
    out = vecs[0]
    for v in vecs[1:]:
        out = np.multiply.outer(out, v)
    return Tensor3(out) if out.ndim == 3 else Tensor4(out)


def mode_k_product(t, k, B):
    """Mode-`k` product: every mode-`k` fiber of ``t`` is multiplied by matrix ``B``."""
    arr = as_array(t)
    _check_mode(k, arr.ndim)
    mat = np.asarray(B, dtype=np.float64)
    if mat.ndim != 2:
        raise ShapeError(f"mode-{k} factor must be a matrix, got shape {mat.shape}")
    if mat.shape[1] != arr.shape[k - 1]:
        raise ShapeError(
            f"mode-{k} factor has {mat.shape[1]} columns but the tensor "
            f"dimension is {arr.shape[k - 1]}"
        )
    out = np.moveaxis(np.tensordot(mat, arr, axes=(1, k - 1)), 0, k - 1)
    return _wrap_like(t, np.ascontiguousarray(out))


def multilinear_product(core, factors):
    """Successive mode-k products of ``core`` with one factor per mode, modes 1..P."""
    arr = as_array(core)
    if len(factors) != arr.ndim:
        raise ShapeError(f"need {arr.ndim} factors, got {len(factors)}")
    out = arr
    for k, B in enumerate(factors, start=1):
        out = mode_k_product(out, k, B)
    return _wrap_like(core, out)


def contracted_product(t, mode, v):
    """Contract ``t`` with vector ``v`` along `mode`, dropping the singleton mode."""
    arr = as_array(t)
    _check_mode(mode, arr.ndim)
    vec = np.asarray(v, dtype=np.float64).ravel()
    if vec.size != arr.shape[mode - 1]:
        raise ShapeError(
            f"vector length {vec.size} does not match mode-{mode} "
            f"dimension {arr.shape[mode - 1]}"
        )
    out = np.tensordot(arr, vec, axes=(mode - 1, 0))
    if out.ndim in (3, 4) and isinstance(t, (Tensor3, Tensor4)):
        return _wrap_like(t, np.ascontiguousarray(out))
    return out
