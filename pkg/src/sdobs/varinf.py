"""Double-loop variational fit of the Gaussian-bound widths gamma(g).

The posterior under the Laplacian prior is replaced by the Gaussian obtained
from the lower bound ``exp(-tau^2 gamma/2 - w^2 / (2 gamma))``. The widths are
fitted per measurement by alternating

1. marginal variances ``z = diag((Gamma^-1 + B H^T H B^T / sigma^2)^-1)``,
2. the smoothed MAP problem
   ``min_f |Hf - g|^2 / sigma^2 + 2 tau sum_i sqrt(z_i + [Bf]_i^2)``,
3. the closed-form update ``gamma_i = sqrt(z_i + [Bf]_i^2) / tau``.

``sigma`` is always the standard deviation of one real component of ``g``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .linops import LinearOperator, conjugate_gradient
from .priors import floor_gamma

__all__ = [
    "DENSE_LIMIT",
    "DoubleLoopResult",
    "InnerLoopConfig",
    "InnerLoopResult",
    "SingularSystemError",
    "VariationalState",
    "diag_of_inverse_dense",
    "diag_of_inverse_sparse",
    "double_loop",
    "inner_loop_map",
    "inner_objective",
    "marginal_variances",
    "threshold_scaled",
    "transformed_gram",
    "update_gamma",
]

log = logging.getLogger(__name__)

DENSE_LIMIT = 4096


class SingularSystemError(np.linalg.LinAlgError):
    pass


@dataclass
class InnerLoopConfig:
    max_iters: int = 200
    grad_tol: float = 1e-6
    """Stop when |grad| <= grad_tol * |grad at init|."""
    stall_tol: float = 1e-13
    """Stop when the relative objective decrease falls below this."""
    armijo_c: float = 1e-4
    backtrack: float = 0.5
    max_backtracks: int = 60
    method: str = "mm"
    """``"mm"``: descent along the majorizer-preconditioned gradient;
    ``"gd"``: plain steepest descent."""
    cg_tol: float = 1e-4
    """Relative residual for the preconditioned direction. The direction only
    has to be a good descent direction, so a loose solve is enough."""
    cg_max_iter: int = 2000

    def __post_init__(self):
        if self.grad_tol <= 0 or self.armijo_c <= 0 or not 0 < self.backtrack < 1:
            raise ValueError("inner-loop tolerances must be positive")
        if self.method not in ("mm", "gd"):
            raise ValueError(f"unknown inner-loop method {self.method!r}")


@dataclass
class VariationalState:
    gamma: np.ndarray
    z: np.ndarray
    f_map: np.ndarray
    outer_iter: int


# -- marginal variances -----------------------------------------------------

def transformed_gram(H: LinearOperator, B: LinearOperator) -> np.ndarray:
    """Dense ``B H^T H B^T`` (independent of gamma, g and sigma)."""
    Bt = B.to_dense().T
    HBt = H.apply(Bt)
    return HBt.T @ HBt


def diag_of_inverse_dense(C: np.ndarray) -> np.ndarray:
    try:
        c, low = sla.cho_factor(C, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise SingularSystemError("system matrix is not positive definite") from exc
    inv, info = sla.lapack.dpotri(c, lower=1)
    if info != 0:
        raise SingularSystemError(f"dpotri failed with info={info}")
    return np.diag(inv).copy()


def threshold_scaled(C, threshold: float):
    """Sparse copy of C keeping the diagonal and every off-diagonal entry with
    ``|C_ij| / sqrt(C_ii C_jj) >= threshold``."""
    d = np.sqrt(np.abs(np.diag(C) if not sp.issparse(C) else C.diagonal()))
    if sp.issparse(C):
        C = C.tocoo()
        rows, cols, vals = C.row, C.col, C.data
    else:
        C = np.asarray(C)
        rows, cols = np.nonzero(C)
        vals = C[rows, cols]
    scaled = np.abs(vals) / (d[rows] * d[cols])
    keep = (rows == cols) | (scaled >= threshold)
    n = len(d)
    return sp.csc_matrix((vals[keep], (rows[keep], cols[keep])), shape=(n, n))


def diag_of_inverse_sparse(C, block: int = 256) -> np.ndarray:
    C = sp.csc_matrix(C)
    n = C.shape[0]
    try:
        lu = spla.splu(C)
    except RuntimeError as exc:
        raise SingularSystemError(
            f"thresholded system is singular ({exc}); the diagonal of C must be preserved "
            "and the threshold lowered"
        ) from exc
    z = np.empty(n)
    for start in range(0, n, block):
        stop = min(start + block, n)
        e = np.zeros((n, stop - start))
        e[np.arange(start, stop), np.arange(stop - start)] = 1.0
        cols = lu.solve(e)
        z[start:stop] = cols[np.arange(start, stop), np.arange(stop - start)]
    return z


def _gram_diag_and_sparse(H, B, sigma, gamma, threshold, block=256):
    """Blockwise construction of the thresholded C for large Q."""
    Q = gamma.size
    inv_g = 1.0 / gamma

    def columns(start, stop):
        e = np.zeros((Q, stop - start))
        e[np.arange(start, stop), np.arange(stop - start)] = 1.0
        return B.apply(H.normal(B.apply_adjoint(e))) / sigma ** 2

    diag = np.empty(Q)
    for start in range(0, Q, block):
        stop = min(start + block, Q)
        diag[start:stop] = columns(start, stop)[np.arange(start, stop), np.arange(stop - start)]
    diag += inv_g
    d = np.sqrt(diag)
    rows_all, cols_all, vals_all = [], [], []
    for start in range(0, Q, block):
        stop = min(start + block, Q)
        cols = columns(start, stop)
        cols[np.arange(start, stop), np.arange(stop - start)] += inv_g[start:stop]
        scaled = np.abs(cols) / (d[:, None] * d[start:stop][None, :])
        r, c = np.nonzero(scaled >= threshold)
        rows_all.append(r)
        cols_all.append(c + start)
        vals_all.append(cols[r, c])
    rows = np.concatenate(rows_all)
    cols = np.concatenate(cols_all)
    vals = np.concatenate(vals_all)
    C = sp.csc_matrix((vals, (rows, cols)), shape=(Q, Q))
    C.setdiag(diag)
    return C


def marginal_variances(gamma, H: LinearOperator, B: LinearOperator, sigma: float, *,
                       method: str = "auto", threshold: float = 0.01,
                       gram: np.ndarray | None = None) -> np.ndarray:
    """Diagonal of ``C^-1`` with ``C = Gamma^-1 + B H^T H B^T / sigma^2``.

    Parameters
    ----------
    method : {"auto", "dense", "sparse"}
        ``dense`` factorizes C exactly. ``sparse`` first drops off-diagonal
        entries whose symmetrically scaled magnitude is below ``threshold``
        and then inverts the sparse approximation. ``auto`` picks dense up to
        :data:`DENSE_LIMIT` coefficients.
    gram : array, optional
        Precomputed :func:`transformed_gram` (reused across calls).
    """
    g = floor_gamma(gamma)
    if method == "auto":
        method = "dense" if g.size <= DENSE_LIMIT else "sparse"
    if method == "dense":
        G = transformed_gram(H, B) if gram is None else gram
        C = G / sigma ** 2
        C[np.diag_indices_from(C)] += 1.0 / g
        z = diag_of_inverse_dense(C)
    elif method == "sparse":
        if gram is not None:
            C = gram / sigma ** 2
            C[np.diag_indices_from(C)] += 1.0 / g
            C = threshold_scaled(C, threshold)
        else:
            C = _gram_diag_and_sparse(H, B, sigma, g, threshold)
        z = diag_of_inverse_sparse(C)
    else:
        raise ValueError(f"unknown method {method!r}")
    if not np.all(z > 0):
        raise SingularSystemError(
            "non-positive marginal variance; the thresholded C lost definiteness "
            "(keep its diagonal and lower the threshold)"
        )
    return z


# -- inner loop ---------------------------------------------------------------

def inner_objective(f, g, z, tau, sigma, H, B) -> float:
    resid = H.apply(f) - g
    t = B.apply(f)
    return float(resid @ resid / sigma ** 2 + 2.0 * tau * np.sum(np.sqrt(z + t ** 2)))


@dataclass
class InnerLoopResult:
    f: np.ndarray
    objective_trace: list
    grad_norm: float
    iterations: int
    converged: bool


def inner_loop_map(g, z, tau: float, sigma: float, H: LinearOperator, B: LinearOperator,
                   init=None, cfg: InnerLoopConfig | None = None) -> InnerLoopResult:
    """Minimize ``|Hf - g|^2/sigma^2 + 2 tau sum sqrt(z_i + [Bf]_i^2)``.

    Each iteration takes a descent step ``-P^-1 grad`` with Armijo
    backtracking, where P is the Hessian of the quadratic majorizer of the
    smoothed penalty at the current point (``method="mm"``) or the identity
    (``method="gd"``). A unit step along the majorizer direction already
    decreases the objective, so backtracking rarely triggers.
    """
    cfg = cfg or InnerLoopConfig()
    g = np.asarray(g, dtype=float)
    z = np.asarray(z, dtype=float)
    if np.any(z < 0):
        raise ValueError("marginal variances must be non-negative")
    f = np.zeros(H.domain_dim) if init is None else np.array(init, dtype=float)
    HtG = H.apply_adjoint(g)
    s2 = sigma ** 2

    def objective(f):
        return inner_objective(f, g, z, tau, sigma, H, B)

    def gradient(f):
        t = B.apply(f)
        s = np.maximum(np.sqrt(z + t ** 2), 1e-300)
        return 2.0 * (H.normal(f) - HtG) / s2 + 2.0 * tau * B.apply_adjoint(t / s), t, s

    phi = objective(f)
    if not np.isfinite(phi):
        raise FloatingPointError("non-finite inner objective at the starting point")
    grad, t, s = gradient(f)
    g0 = np.linalg.norm(grad)
    trace = [phi]
    gnorm = g0
    step = 1.0
    it = 0
    converged = g0 == 0.0
    while not converged and it < cfg.max_iters:
        if cfg.method == "mm":
            w = 1.0 / np.maximum(s, 1e-150)
            P = lambda v: 2.0 * H.normal(v) / s2 + 2.0 * tau * B.apply_adjoint(w * B.apply(v))
            d = -conjugate_gradient(P, grad, tol=cfg.cg_tol, max_iter=cfg.cg_max_iter,
                                    raise_on_fail=False).x
            step = 1.0
        else:
            d = -grad
            step = min(step * 2.0, 1e300)
        slope = grad @ d
        if slope >= 0:
            d, slope = -grad, -(grad @ grad)
        for _ in range(cfg.max_backtracks):
            cand = f + step * d
            phi_new = objective(cand)
            if np.isfinite(phi_new) and phi_new <= phi + cfg.armijo_c * step * slope:
                break
            step *= cfg.backtrack
        else:
            log.debug("inner loop: line search failed at iteration %d", it)
            break
        if not np.isfinite(phi_new):
            raise FloatingPointError("non-finite inner objective")
        it += 1
        decrease = phi - phi_new
        f, phi = cand, phi_new
        trace.append(phi)
        grad, t, s = gradient(f)
        gnorm = np.linalg.norm(grad)
        if gnorm <= cfg.grad_tol * g0:
            converged = True
        elif decrease <= cfg.stall_tol * abs(phi):
            break
    return InnerLoopResult(f, trace, float(gnorm), it, converged)


# -- outer loop ---------------------------------------------------------------

def update_gamma(z, Bf, tau: float) -> np.ndarray:
    return np.sqrt(np.asarray(z) + np.asarray(Bf) ** 2) / tau


@dataclass
class DoubleLoopResult:
    gamma: np.ndarray
    state: VariationalState
    gamma_changes: list = field(default_factory=list)
    inner_iterations: list = field(default_factory=list)
    history: list = field(default_factory=list, repr=False)
    """Per-iteration ``(z, f, gamma)`` when ``keep_history`` was requested."""


def double_loop(g, H: LinearOperator, B: LinearOperator, tau: float, sigma: float,
                k0: int = 16, gamma_init: float = 1000.0, *, early_exit: float | None = None,
                inner: InnerLoopConfig | None = None, gram: np.ndarray | None = None,
                variance_method: str = "auto", threshold: float = 0.01,
                keep_history: bool = False) -> DoubleLoopResult:
    """Fit the bound widths gamma(g) by ``k0`` outer iterations.

    ``early_exit`` stops once ``|gamma_k - gamma_{k-1}| / |gamma_k|`` falls
    below the given value. The inner MAP problem is warm-started from the
    previous outer iterate.
    """
    if not (tau > 0 and sigma > 0):
        raise ValueError("tau and sigma must be positive")
    g = np.asarray(g, dtype=float)
    if gram is None and variance_method != "sparse" and B.range_dim <= DENSE_LIMIT:
        gram = transformed_gram(H, B)
    gamma = np.full(B.range_dim, float(gamma_init))
    f = np.zeros(H.domain_dim)
    z = np.zeros_like(gamma)
    result = DoubleLoopResult(gamma, VariationalState(gamma, z, f, 0))
    for k in range(1, k0 + 1):
        z = marginal_variances(gamma, H, B, sigma, method=variance_method,
                               threshold=threshold, gram=gram)
        res = inner_loop_map(g, z, tau, sigma, H, B, init=f, cfg=inner)
        f = res.f
        new_gamma = floor_gamma(update_gamma(z, B.apply(f), tau))
        change = np.linalg.norm(new_gamma - gamma) / np.linalg.norm(new_gamma)
        gamma = new_gamma
        result.gamma_changes.append(float(change))
        result.inner_iterations.append(res.iterations)
        if keep_history:
            result.history.append((z.copy(), f.copy(), gamma.copy()))
        result.state = VariationalState(gamma, z, f, k)
        if early_exit is not None and change < early_exit:
            break
    result.gamma = gamma
    return result
