"""Matrix primitives for the unmixing solvers.

Singular values, nonnegative least squares (Lawson-Hanson active set) and
simplex-constrained least squares (primal active-set QP).  The constrained
solvers terminate exactly on the small endmember counts used in unmixing
(R <= 64) and break ties deterministically by lowest index, so results are
reproducible bit for bit.
"""

import dataclasses

import numpy as np

from .errors import ConvergenceError, DegenerateInputError, NonFiniteError, ShapeError

__all__ = ["SvdResult", "singular_values", "nnls", "fcls_solve", "scls_solve"]


@dataclasses.dataclass(frozen=True)
class SvdResult:
    """Singular values of a matrix, sorted non-increasing."""

    singular_values: np.ndarray


def singular_values(M):
    """Singular values of ``M`` (descending, nonnegative)."""
    arr = np.asarray(M, dtype=np.float64)
    if arr.ndim != 2:
        raise ShapeError(f"expected a matrix, got shape {arr.shape}")
    if not np.isfinite(arr).all():
        raise NonFiniteError("matrix entries must be finite")
    return SvdResult(singular_values=np.linalg.svd(arr, compute_uv=False))


def _lawson_hanson(A, b, max_iter):
    """Classic active-set NNLS.  Returns x >= 0 minimizing ||Ax - b||."""
    m, n = A.shape
    x = np.zeros(n)
    passive = np.zeros(n, dtype=bool)
    w = A.T @ (b - A @ x)
    tol = 1e-10 * max(1.0, np.abs(w).max(initial=0.0))
    iters = 0
    while True:
        active = ~passive
        if not active.any() or w[active].max(initial=-np.inf) <= tol:
            return x
        # most positive gradient enters; argmax takes the lowest index on ties
        cand = np.where(active)[0]
        j = cand[np.argmax(w[cand])]
        passive[j] = True
        while True:
            iters += 1
            if iters > max_iter:
                raise ConvergenceError("nnls hit its iteration cap", best=x)
            idx = np.where(passive)[0]
            z = np.zeros(n)
            z[idx] = np.linalg.lstsq(A[:, idx], b, rcond=None)[0]
            if z[idx].min(initial=np.inf) > 0:
                x = z
                break
            # step back to the boundary, drop the blocking variables
            neg = idx[z[idx] <= 0]
            alpha = np.min(x[neg] / (x[neg] - z[neg]))
            x = x + alpha * (z - x)
            passive[passive & (x <= 1e-14)] = False
            x[~passive] = 0.0
        w = A.T @ (b - A @ x)


def nnls(A, b, ridge=0.0, prior=None, max_iter=None):
    """Solve min ||Ax - b||^2 + ridge * ||x - prior||^2 subject to x >= 0.

    Parameters
    ----------
    A : (m, n) array
    b : (m,) array
    ridge : float, >= 0
        Tikhonov weight pulling x toward ``prior``.
    prior : (n,) array or None
        Defaults to the zero vector.
    max_iter : int, optional
        Active-set iteration cap; exceeding it raises ConvergenceError
        carrying the best iterate found.
    """
    A = np.asarray(A, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64).ravel()
    if A.ndim != 2:
        raise ShapeError(f"expected a matrix, got shape {A.shape}")
    if A.shape[0] != b.size:
        raise ShapeError(f"A has {A.shape[0]} rows but b has {b.size} entries")
    if not (np.isfinite(A).all() and np.isfinite(b).all()):
        raise NonFiniteError("nnls inputs must be finite")
    if ridge < 0:
        raise ShapeError("ridge must be nonnegative")
    n = A.shape[1]
    if ridge > 0:
        p = np.zeros(n) if prior is None else np.asarray(prior, dtype=np.float64).ravel()
        if p.size != n:
            raise ShapeError(f"prior has {p.size} entries, expected {n}")
        s = np.sqrt(ridge)
        A = np.vstack([A, s * np.eye(n)])
        b = np.concatenate([b, s * p])
    if max_iter is None:
        max_iter = 50 * n + 100
    return _lawson_hanson(A, b, max_iter)


def _simplex_qp(H, c, max_iter):
    """min 1/2 x'Hx - c'x  s.t.  sum(x) = 1, x >= 0, by primal active set.

    Ties (blocking constraint, released multiplier) go to the lowest index,
    which selects the lowest-lexicographic active set among equal optima.
    """
    R = c.size
    if R == 1:
        return np.array([1.0])
    x = np.full(R, 1.0 / R)
    clamped = np.zeros(R, dtype=bool)
    scale = max(1.0, np.abs(H).max(), np.abs(c).max())
    dir_tol = 1e-13 * max(1.0, scale)
    dual_tol = 1e-11 * scale
    for _ in range(max_iter):
        free = np.where(~clamped)[0]
        g = H @ x - c
        nf = free.size
        K = np.empty((nf + 1, nf + 1))
        K[:nf, :nf] = H[np.ix_(free, free)]
        K[:nf, nf] = 1.0
        K[nf, :nf] = 1.0
        K[nf, nf] = 0.0
        rhs = np.concatenate([-g[free], [0.0]])
        try:
            sol = np.linalg.solve(K, rhs)
        except np.linalg.LinAlgError:
            sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
        p = np.zeros(R)
        p[free] = sol[:nf]
        mu = sol[nf]
        if np.abs(p).max() <= dir_tol * max(1.0, np.abs(x).max()):
            # x minimizes over the current face; check bound multipliers
            if not clamped.any():
                return x
            nu = g[clamped] + mu
            if nu.min() >= -dual_tol:
                return x
            release = np.where(clamped)[0][np.argmin(nu)]
            clamped[release] = False
            continue
        shrinking = (~clamped) & (p < -1e-15)
        if not shrinking.any():
            x = x + p
            continue
        ratios = -x[shrinking] / p[shrinking]
        tau = min(1.0, ratios.min())
        x = x + tau * p
        if tau < 1.0:
            block = np.where(shrinking)[0][np.argmin(ratios)]
            clamped[block] = True
            x[block] = 0.0
        x[np.abs(x) < 1e-15] = 0.0
    raise ConvergenceError("fcls active set hit its iteration cap", best=x)


def fcls_solve(M, r, lambda_a=0.0, q=None, max_iter=None):
    """Fully constrained least squares with an optional pull toward ``q``.

    Minimizes ||r - M a||^2 + lambda_a * ||a - q||^2 over the probability
    simplex (a >= 0, sum(a) = 1).  With lambda_a = 0 this is plain FCLS.
    """
    M = np.asarray(M, dtype=np.float64)
    r = np.asarray(r, dtype=np.float64).ravel()
    if M.ndim != 2:
        raise ShapeError(f"expected a matrix, got shape {M.shape}")
    L, R = M.shape
    if r.size != L:
        raise ShapeError(f"pixel has {r.size} bands but the matrix has {L} rows")
    if lambda_a < 0:
        raise ShapeError("lambda_a must be nonnegative")
    qv = np.zeros(R) if q is None else np.asarray(q, dtype=np.float64).ravel()
    if qv.size != R:
        raise ShapeError(f"q has {qv.size} entries, expected {R}")
    if not (np.isfinite(M).all() and np.isfinite(r).all() and np.isfinite(qv).all()):
        raise NonFiniteError("fcls inputs must be finite")
    H = M.T @ M + lambda_a * np.eye(R)
    c = M.T @ r + lambda_a * qv
    if max_iter is None:
        max_iter = 30 * R + 60
    return _simplex_qp(H, c, max_iter)


def fcls_solve_many(Ms, rs, lambda_a=0.0, qs=None):
    """Vectorized FCLS over a stack of pixels.

    ``Ms`` is either a single (L, R) matrix shared by all pixels or an
    (N, L, R) stack; ``rs`` is (N, L); ``qs`` is (N, R) or None.  Solves the
    equality-only KKT system for all pixels in one shot and falls back to the
    per-pixel active set only where that solution leaves the simplex.
    """
    rs = np.asarray(rs, dtype=np.float64)
    N, L = rs.shape
    Ms = np.asarray(Ms, dtype=np.float64)
    shared = Ms.ndim == 2
    R = Ms.shape[-1]
    if R == 1:
        return np.ones((N, 1))
    if shared:
        H = Ms.T @ Ms + lambda_a * np.eye(R)
        c = rs @ Ms
    else:
        H = np.einsum("nlr,nls->nrs", Ms, Ms) + lambda_a * np.eye(R)
        c = np.einsum("nlr,nl->nr", Ms, rs)
    if qs is not None:
        c = c + lambda_a * np.asarray(qs, dtype=np.float64)

    rhs = np.concatenate([c, np.ones((N, 1))], axis=1)
    if shared:
        K = np.empty((R + 1, R + 1))
        K[:R, :R] = H
        K[:R, R] = 1.0
        K[R, :R] = 1.0
        K[R, R] = 0.0
        try:
            alpha = np.linalg.solve(K, rhs.T).T[:, :R]
        except np.linalg.LinAlgError:
            alpha = None
    else:
        K = np.zeros((N, R + 1, R + 1))
        K[:, :R, :R] = H
        K[:, :R, R] = 1.0
        K[:, R, :R] = 1.0
        try:
            alpha = np.linalg.solve(K, rhs[:, :, None])[:, :R, 0]
        except np.linalg.LinAlgError:
            alpha = None

    out = np.empty((N, R))
    if alpha is None:
        bad = np.arange(N)
    else:
        ok = alpha.min(axis=1) >= -1e-11
        out[ok] = np.where(np.abs(alpha[ok]) < 1e-15, 0.0, alpha[ok])
        bad = np.where(~ok)[0]
    max_iter = 30 * R + 60
    for n in bad:
        Hn = H if shared else H[n]
        out[n] = _simplex_qp(Hn, c[n], max_iter)
    return out


def scls_solve(M, r):
    """Scaled constrained least squares for one pixel.

    Solves NNLS for unnormalized coefficients, reports their sum as the
    per-pixel brightness scale, and returns the normalized abundances.
    A zero pixel (scale 0) falls back to uniform abundances.
    """
    M = np.asarray(M, dtype=np.float64)
    if M.ndim != 2:
        raise ShapeError(f"expected a matrix, got shape {M.shape}")
    if np.any(np.linalg.norm(M, axis=0) == 0):
        raise DegenerateInputError("endmember matrix has a zero column")
    R = M.shape[1]
    beta = nnls(M, r)
    scale = float(beta.sum())
    if scale > 0:
        return beta / scale, scale
    return np.full(R, 1.0 / R), 0.0
