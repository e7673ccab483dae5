"""Canonical polyadic decomposition of order-3/4 tensors by alternating least squares."""

import dataclasses
from typing import Optional

import numpy as np

from .errors import NonFiniteError, ShapeError
from .tensor import Tensor3, Tensor4, as_array

__all__ = ["AlsOptions", "CpdFactorization", "cpd_als", "cpd_reconstruct"]


@dataclasses.dataclass(frozen=True)
class AlsOptions:
    """Knobs for the ALS loop.

    tol is the per-sweep fit improvement, relative to the input norm, below
    which the sweep loop stops.
    """

    max_sweeps: int = 100
    tol: float = 1e-8
    restarts: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.max_sweeps < 1:
            raise ShapeError("max_sweeps must be >= 1")
        if self.tol <= 0:
            raise ShapeError("tol must be positive")
        if self.restarts < 1:
            raise ShapeError("restarts must be >= 1")


@dataclasses.dataclass
class CpdFactorization:
    """Rank-K polyadic decomposition: sum_i weights[i] * outer(factor columns i).

    Factor columns are unit norm; magnitudes live in ``weights``.  fit_trace
    records the Frobenius misfit of the winning restart, starting with the
    misfit of its initialization and then one entry per sweep.
    """

    order: int
    rank: int
    weights: np.ndarray
    factors: list
    ridge_used: bool = False
    fit_trace: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.order not in (3, 4):
            raise ShapeError(f"order must be 3 or 4, got {self.order}")
        if self.rank < 1:
            raise ShapeError("rank must be >= 1")
        if len(self.factors) != self.order:
            raise ShapeError(f"expected {self.order} factors, got {len(self.factors)}")
        self.weights = np.asarray(self.weights, dtype=np.float64).ravel()
        if self.weights.size != self.rank or not np.isfinite(self.weights).all():
            raise ShapeError("weights must be a finite vector of length rank")
        for p, F in enumerate(self.factors):
            F = np.asarray(F, dtype=np.float64)
            if F.ndim != 2 or F.shape[1] != self.rank:
                raise ShapeError(f"factor {p} must have {self.rank} columns")
            norms = np.linalg.norm(F, axis=0)
            if np.abs(norms - 1.0).max() > 1e-9:
                raise ShapeError(f"factor {p} columns must be unit norm")
            self.factors[p] = F


def khatri_rao(mats):
    """Column-wise Khatri-Rao product; row index runs first matrix slowest."""
    out = np.asarray(mats[0], dtype=np.float64)
    K = out.shape[1]
    for M in mats[1:]:
        out = (out[:, None, :] * np.asarray(M)[None, :, :]).reshape(-1, K)
    return out


_EINSUM = {
    3: "ir,jr,kr,r->ijk",
    4: "ir,jr,kr,lr,r->ijkl",
}


def _reconstruct_array(factors, weights):
    return np.einsum(_EINSUM[len(factors)], *factors, weights, optimize=True)


def cpd_reconstruct(f):
    """Dense tensor represented by the factorization ``f``."""
    arr = _reconstruct_array(f.factors, f.weights)
    return Tensor3(arr) if f.order == 3 else Tensor4(arr)


def _unit_columns(n, K):
    F = np.zeros((n, K))
    F[np.arange(K) % n, np.arange(K)] = 1.0
    return F


def _normalize(factors):
    """Pull column magnitudes out of the factors into a weight vector."""
    K = factors[0].shape[1]
    weights = np.ones(K)
    out = []
    for F in factors:
        norms = np.linalg.norm(F, axis=0)
        weights *= norms
        safe = np.where(norms > 0, norms, 1.0)
        F = F / safe
        dead = norms == 0
        if dead.any():
            basis = _unit_columns(F.shape[0], K)
            F[:, dead] = basis[:, dead]
        out.append(F)
    return weights, out


def cpd_als(t, K, opts=None, init=None):
    """Fit a rank-K CPD to ``t`` by alternating least squares.

    Each mode update solves the exact linear least-squares problem against
    the Khatri-Rao design of the other factors, so the Frobenius misfit is
    non-increasing across sweeps.  Runs ``opts.restarts`` seeded random
    starts and keeps the best; if ``init`` is a compatible factorization it
    replaces the random start of the first run (warm start).

    Parameters
    ----------
    t : Tensor3, Tensor4 or ndarray
    K : int
        Target rank, at most min over modes of the product of the other dims.
    opts : AlsOptions
    init : CpdFactorization, optional
        Warm start; used when its order, rank and dims match.
    """
    X = as_array(t)
    if X.ndim not in (3, 4):
        raise ShapeError(f"expected an order-3/4 tensor, got shape {X.shape}")
    if not np.isfinite(X).all():
        raise NonFiniteError("tensor entries must be finite")
    P = X.ndim
    dims = X.shape
    if K < 1:
        raise ShapeError("rank must be >= 1")
    kmax = min(np.prod(dims) // d for d in dims)
    if K > kmax:
        raise ShapeError(f"rank {K} exceeds the identifiable cap {kmax} for dims {dims}")
    opts = opts or AlsOptions()

    norm_t = np.linalg.norm(X)
    if norm_t == 0.0:
        factors = [_unit_columns(d, K) for d in dims]
        return CpdFactorization(P, K, np.zeros(K), factors, fit_trace=np.zeros(1))

    unfoldings = [np.moveaxis(X, p, 0).reshape(dims[p], -1) for p in range(P)]
    rng = np.random.default_rng(opts.seed)

    warm = None
    if init is not None and init.order == P and init.rank == K and all(
        F.shape[0] == d for F, d in zip(init.factors, dims)
    ):
        warm = [F.copy() for F in init.factors]
        warm[-1] = warm[-1] * init.weights  # restore magnitudes

    best = None
    for restart in range(opts.restarts):
        if restart == 0 and warm is not None:
            factors = warm
        else:
            factors = []
            for d in dims:
                F = rng.uniform(size=(d, K))
                factors.append(F / np.linalg.norm(F, axis=0))
        ridge_used = False
        err = np.linalg.norm(X - _reconstruct_array(factors, np.ones(K)))
        fits = [err]
        for _ in range(opts.max_sweeps):
            for p in range(P):
                others = [factors[q] for q in range(P) if q != p]
                G = np.ones((K, K))
                for F in others:
                    G *= F.T @ F
                U = unfoldings[p] @ khatri_rao(others)
                try:
                    factors[p] = np.linalg.solve(G, U.T).T
                except np.linalg.LinAlgError:
                    ridge_used = True
                    try:
                        factors[p] = np.linalg.solve(G + 1e-12 * np.eye(K), U.T).T
                    except np.linalg.LinAlgError:
                        factors[p] = np.linalg.lstsq(G, U.T, rcond=None)[0].T
            prev = err
            err = np.linalg.norm(X - _reconstruct_array(factors, np.ones(K)))
            fits.append(err)
            if (prev - err) / norm_t < opts.tol:
                break
        if best is None or err < best[0]:
            best = (err, factors, ridge_used, np.asarray(fits))

    weights, factors = _normalize(best[1])
    return CpdFactorization(P, K, weights, factors, ridge_used=best[2], fit_trace=best[3])
