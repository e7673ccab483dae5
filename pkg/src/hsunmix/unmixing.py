"""Block-coordinate unmixing with low-rank tensor regularization (ULTRA-V),
plus whole-cube FCLS and SCLS baselines.

The global objective couples a per-pixel linear mixing residual with two
Frobenius pull terms toward low-rank companion tensors: one for the
per-pixel endmember tensor, one for the abundance tensor.  Each outer
iteration refreshes the two companion tensors by CPD (warm-started from the
previous iteration), then updates endmembers in closed form with a positive
orthant projection, then abundances by regularized FCLS.
"""

import dataclasses
import time
from typing import Optional

import numpy as np

from .cpd import AlsOptions, cpd_als, cpd_reconstruct, _reconstruct_array
from .errors import NonFiniteError, ShapeError, SingularSystemError
from .linalg import fcls_solve_many, nnls, scls_solve
from .rank import DEFAULT_EPSILON, estimate_rank
from .tensor import Tensor3, Tensor4, as_array

__all__ = [
    "UnmixConfig",
    "UnmixResult",
    "IterationRecord",
    "cost",
    "update_abundances",
    "update_endmembers",
    "update_em_lowrank",
    "update_abund_lowrank",
    "ultra_v",
    "unmix_fcls",
    "unmix_scls",
]


@dataclasses.dataclass(frozen=True)
class UnmixConfig:
    """Parameters of one ULTRA-V run.

    lambda_a / lambda_m weight the pulls of abundances and endmembers toward
    their low-rank companions.  rank_q / rank_p override the gap-based rank
    estimates for the abundance and endmember companions.
    """

    lambda_a: float = 0.0
    lambda_m: float = 0.0
    epsilon: float = DEFAULT_EPSILON
    rank_q: Optional[int] = None
    rank_p: Optional[int] = None
    max_outer_iters: int = 50
    outer_tol: float = 1e-4
    als: AlsOptions = AlsOptions()
    seed: int = 0

    def __post_init__(self):
        if self.lambda_a < 0 or self.lambda_m < 0:
            raise ShapeError("regularization weights must be nonnegative")
        if self.max_outer_iters < 1:
            raise ShapeError("max_outer_iters must be >= 1")
        if self.rank_q is not None and self.rank_q < 1:
            raise ShapeError("rank_q override must be positive")
        if self.rank_p is not None and self.rank_p < 1:
            raise ShapeError("rank_p override must be positive")


@dataclasses.dataclass
class IterationRecord:
    """Descent audit for one outer iteration.

    Costs are the global objective evaluated immediately around each block
    update, holding the other blocks at the values that update saw.
    cost_q_before is None on the first iteration (there is no previous
    companion to compare against) and whenever the corresponding weight is 0.
    """

    cost_q_before: Optional[float]
    cost_q_after: float
    cost_a_before: float
    cost_a_after: float
    p_fit_trace: Optional[np.ndarray]
    q_fit_trace: Optional[np.ndarray]


@dataclasses.dataclass
class UnmixResult:
    abundances: Tensor3
    endmembers: Tensor4
    abund_lowrank: Tensor3
    em_lowrank: Tensor4
    cost_trace: np.ndarray
    ranks_used: tuple
    iters: int
    wall_time: float
    iteration_log: list = dataclasses.field(default_factory=list)


def _check_dims(Rc, A, M, P, Q):
    n1, n2, L = Rc.shape
    R = A.shape[2]
    if A.shape[:2] != (n1, n2):
        raise ShapeError(f"abundance dims {A.shape} do not match cube {Rc.shape}")
    if M.shape != (n1, n2, L, R):
        raise ShapeError(f"endmember dims {M.shape}, expected {(n1, n2, L, R)}")
    if P.shape != M.shape:
        raise ShapeError(f"endmember companion dims {P.shape} != {M.shape}")
    if Q.shape != A.shape:
        raise ShapeError(f"abundance companion dims {Q.shape} != {A.shape}")


def _cost_arrays(Rc, A, M, P, Q, lambda_a, lambda_m):
    recon = np.einsum("ijlr,ijr->ijl", M, A, optimize=True)
    val = 0.5 * np.sum((Rc - recon) ** 2)
    if lambda_m > 0:
        val += 0.5 * lambda_m * np.sum((M - P) ** 2)
    if lambda_a > 0:
        val += 0.5 * lambda_a * np.sum((A - Q) ** 2)
    return float(val)


def cost(cube, abundances, endmembers, em_lowrank, abund_lowrank, config):
    """Global unmixing objective: data misfit plus the two low-rank pulls."""
    Rc = as_array(cube)
    A = as_array(abundances)
    M = as_array(endmembers)
    P = as_array(em_lowrank)
    Q = as_array(abund_lowrank)
    _check_dims(Rc, A, M, P, Q)
    return _cost_arrays(Rc, A, M, P, Q, config.lambda_a, config.lambda_m)


def update_abundances(cube, endmembers, abund_lowrank, lambda_a):
    """Exact per-pixel minimization of the objective over the abundances.

    Each pixel solves a regularized FCLS against its own endmember matrix,
    pulled toward the companion fiber with weight lambda_a.
    """
    Rc = as_array(cube)
    M = as_array(endmembers)
    Q = as_array(abund_lowrank)
    n1, n2, L = Rc.shape
    R = M.shape[3]
    if M.shape[:3] != (n1, n2, L):
        raise ShapeError(f"endmember dims {M.shape} do not match cube {Rc.shape}")
    if Q.shape != (n1, n2, R):
        raise ShapeError(f"companion dims {Q.shape}, expected {(n1, n2, R)}")
    alphas = fcls_solve_many(
        M.reshape(-1, L, R),
        Rc.reshape(-1, L),
        lambda_a,
        Q.reshape(-1, R) if lambda_a > 0 else None,
    )
    return Tensor3(alphas.reshape(n1, n2, R))


def _update_em_arrays(Rc, A, P, lambda_m):
    n1, n2, L = Rc.shape
    R = A.shape[2]
    A2 = A.reshape(-1, R)
    if lambda_m == 0 and (R > 1 or np.any(A2 == 0)):
        raise SingularSystemError(
            "endmember update is singular with lambda_m = 0 (a a^T is rank "
            "deficient); use lambda_m > 0"
        )
    gram = np.einsum("nr,ns->nrs", A2, A2) + lambda_m * np.eye(R)
    rhs = np.einsum("nl,nr->nlr", Rc.reshape(-1, L), A2) + lambda_m * P.reshape(-1, L, R)
    M2 = np.linalg.solve(gram, rhs.transpose(0, 2, 1)).transpose(0, 2, 1)
    return np.maximum(M2, 0.0).reshape(n1, n2, L, R)


def update_endmembers(cube, abundances, em_lowrank, lambda_m):
    """Closed-form per-pixel endmember update projected onto the positive orthant.

    Per pixel: clip((r a^T + lambda_m P_slab)(a a^T + lambda_m I)^{-1}, 0).
    This is the approximate minimizer of the objective over the endmember
    block; lambda_m > 0 keeps the normal matrix invertible.
    """
    Rc = as_array(cube)
    A = as_array(abundances)
    P = as_array(em_lowrank)
    n1, n2, L = Rc.shape
    R = A.shape[2]
    if A.shape[:2] != (n1, n2):
        raise ShapeError(f"abundance dims {A.shape} do not match cube {Rc.shape}")
    if P.shape != (n1, n2, L, R):
        raise ShapeError(f"companion dims {P.shape}, expected {(n1, n2, L, R)}")
    return Tensor4(_update_em_arrays(Rc, A, P, lambda_m))


def update_em_lowrank(endmembers, rank, als=None):
    """Rank-``rank`` CPD approximation of the endmember tensor.

    The companion objective is a pure scaled Frobenius misfit, so its
    minimizer does not depend on the regularization weight.
    """
    return cpd_reconstruct(cpd_als(as_array(endmembers), rank, als))


def update_abund_lowrank(abundances, rank, als=None):
    """Rank-``rank`` CPD approximation of the abundance tensor."""
    return cpd_reconstruct(cpd_als(as_array(abundances), rank, als))


def _scls_arrays(Rc, M0):
    """Vectorized SCLS over all pixels for a shared endmember matrix."""
    n1, n2, L = Rc.shape
    R = M0.shape[1]
    rs = Rc.reshape(-1, L)
    beta = np.linalg.lstsq(M0, rs.T, rcond=None)[0].T
    bad = np.where(beta.min(axis=1) < 0)[0]
    for n in bad:
        beta[n] = nnls(M0, rs[n])
    scales = beta.sum(axis=1)
    alphas = np.full((rs.shape[0], R), 1.0 / R)
    pos = scales > 0
    alphas[pos] = beta[pos] / scales[pos, None]
    scales[~pos] = 0.0
    return alphas.reshape(n1, n2, R), scales.reshape(n1, n2)


def unmix_fcls(cube, em_matrix):
    """Per-pixel FCLS abundances for a fixed endmember matrix."""
    Rc = as_array(cube)
    M0 = np.asarray(em_matrix, dtype=np.float64)
    if M0.ndim != 2 or M0.shape[0] != Rc.shape[2]:
        raise ShapeError(
            f"endmember matrix shape {M0.shape} does not match cube bands {Rc.shape[2]}"
        )
    n1, n2, L = Rc.shape
    alphas = fcls_solve_many(M0, Rc.reshape(-1, L))
    return Tensor3(alphas.reshape(n1, n2, M0.shape[1]))


def unmix_scls(cube, em_matrix):
    """Per-pixel SCLS abundances and brightness-scale map for a fixed matrix."""
    Rc = as_array(cube)
    M0 = np.asarray(em_matrix, dtype=np.float64)
    if M0.ndim != 2 or M0.shape[0] != Rc.shape[2]:
        raise ShapeError(
            f"endmember matrix shape {M0.shape} does not match cube bands {Rc.shape[2]}"
        )
    if np.any(np.linalg.norm(M0, axis=0) == 0):
        raise ShapeError("endmember matrix has a zero column")
    alphas, scales = _scls_arrays(Rc, M0)
    return Tensor3(alphas), scales


def _als_for_iter(base, seed):
    return AlsOptions(
        max_sweeps=base.max_sweeps,
        tol=base.tol,
        restarts=base.restarts,
        seed=seed & 0x7FFFFFFFFFFFFFFF,
    )


def ultra_v(cube, em_init, config=None):
    """Run the full block-coordinate unmixing loop.

    Parameters
    ----------
    cube : Tensor3 or (n1, n2, L) array
        Observed hyperspectral image.
    em_init : (L, R) matrix or Tensor4
        Initial endmembers.  A matrix is replicated across pixels.
    config : UnmixConfig

    Abundances are initialized by SCLS; companion ranks come from the
    singular-value gap estimator on the initial tensors unless overridden.
    Stops when the relative change of the global cost falls below
    ``config.outer_tol`` or after ``config.max_outer_iters`` iterations.
    """
    t0 = time.perf_counter()
    config = config or UnmixConfig()
    Rc = as_array(cube)
    if Rc.ndim != 3:
        raise ShapeError(f"expected an order-3 cube, got shape {Rc.shape}")
    if not np.isfinite(Rc).all():
        raise NonFiniteError("cube entries must be finite")
    n1, n2, L = Rc.shape

    em_arr = as_array(em_init)
    if em_arr.ndim == 2:
        em_matrix = em_arr
        if em_matrix.shape[0] != L:
            raise ShapeError(
                f"endmember matrix has {em_matrix.shape[0]} bands, cube has {L}"
            )
        M = np.broadcast_to(em_matrix, (n1, n2, L, em_matrix.shape[1])).copy()
    elif em_arr.ndim == 4:
        em_matrix = None
        if em_arr.shape[:3] != (n1, n2, L):
            raise ShapeError(f"endmember dims {em_arr.shape} do not match cube")
        M = np.array(em_arr)
    else:
        raise ShapeError(f"em_init must be a matrix or order-4 tensor, got {em_arr.shape}")
    if M.min() < 0:
        raise ShapeError("initial endmembers must be nonnegative")
    R = M.shape[3]

    if em_matrix is not None:
        A, _ = _scls_arrays(Rc, em_matrix)
    else:
        A = np.empty((n1, n2, R))
        rs = Rc.reshape(-1, L)
        Ms = M.reshape(-1, L, R)
        flat = A.reshape(-1, R)
        for n in range(rs.shape[0]):
            flat[n] = scls_solve(Ms[n], rs[n])[0]

    rank_q = config.rank_q or estimate_rank(A, config.epsilon).overall
    rank_p = config.rank_p or estimate_rank(M, config.epsilon).overall

    lam_a, lam_m = config.lambda_a, config.lambda_m
    # lambda = 0 turns a companion term off entirely: any companion minimizes
    # it, so the cheapest exact choice is the tensor itself, and with
    # lambda_m = 0 the (ill-posed) endmember update is skipped.
    P = M
    Q = A
    fact_p = None
    fact_q = None
    trace = [_cost_arrays(Rc, A, M, P, Q, lam_a, lam_m)]
    log = []
    iters = 0
    shared_em = em_matrix is not None and lam_m == 0

    for i in range(1, config.max_outer_iters + 1):
        iters = i
        p_fit = q_fit = None
        if lam_m > 0:
            fact_p = cpd_als(
                M, rank_p, _als_for_iter(config.als, config.seed * 1_000_003 + 2 * i), init=fact_p
            )
            P = _reconstruct_array(fact_p.factors, fact_p.weights)
            p_fit = fact_p.fit_trace
        else:
            P = M

        cost_q_before = None
        if lam_a > 0:
            if i > 1:
                cost_q_before = _cost_arrays(Rc, A, M, P, Q, lam_a, lam_m)
            fact_q = cpd_als(
                A, rank_q, _als_for_iter(config.als, config.seed * 1_000_003 + 2 * i + 1), init=fact_q
            )
            Q = _reconstruct_array(fact_q.factors, fact_q.weights)
            q_fit = fact_q.fit_trace
        else:
            Q = A
        cost_q_after = _cost_arrays(Rc, A, M, P, Q, lam_a, lam_m)

        if lam_m > 0:
            M = _update_em_arrays(Rc, A, P, lam_m)

        cost_a_before = _cost_arrays(Rc, A, M, P, Q, lam_a, lam_m)
        if shared_em:
            alphas = fcls_solve_many(em_matrix, Rc.reshape(-1, L), lam_a,
                                     Q.reshape(-1, R) if lam_a > 0 else None)
        else:
            alphas = fcls_solve_many(M.reshape(-1, L, R), Rc.reshape(-1, L), lam_a,
                                     Q.reshape(-1, R) if lam_a > 0 else None)
        A = alphas.reshape(n1, n2, R)
        cost_a_after = _cost_arrays(Rc, A, M, P, Q, lam_a, lam_m)

        trace.append(cost_a_after)
        log.append(IterationRecord(cost_q_before, cost_q_after,
                                   cost_a_before, cost_a_after, p_fit, q_fit))
        denom = max(abs(trace[-2]), 1e-300)
        if abs(trace[-1] - trace[-2]) / denom < config.outer_tol:
            break

    return UnmixResult(
        abundances=Tensor3(A),
        endmembers=Tensor4(M),
        abund_lowrank=Tensor3(Q),
        em_lowrank=Tensor4(P),
        cost_trace=np.asarray(trace),
        ranks_used=(rank_q, rank_p),
        iters=iters,
        wall_time=time.perf_counter() - t0,
        iteration_log=log,
    )
