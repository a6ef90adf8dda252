"""Observer test statistics, all returned in the natural-log domain.

Noise is white with covariance ``sigma^2 I`` on the (real) measurement
vector, so ``Sigma_n^-1 = I / sigma^2`` throughout.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

from .linops import LinearOperator, conjugate_gradient
from .priors import floor_gamma

__all__ = [
    "HotellingTemplate",
    "LogTestStatistic",
    "QuadratureDomainError",
    "bke_log_lr",
    "hotelling_log_stat",
    "oracle_log_lr_small",
    "sdo_log_lr",
    "sdo_log_lr_dense",
    "sdo_signal_estimate",
    "train_hotelling",
]


@dataclass(frozen=True)
class LogTestStatistic:
    value: float
    observer_kind: str
    solver_diagnostics: dict = field(default_factory=dict)

    def __post_init__(self):
        if not np.isfinite(self.value):
            raise FloatingPointError(f"{self.observer_kind} statistic is not finite")

    def __float__(self):
        return float(self.value)


def _vec(v) -> np.ndarray:
    v = np.asarray(v, dtype=float).ravel()
    if not np.all(np.isfinite(v)):
        raise ValueError("vector contains non-finite values")
    return v


def bke_log_lr(g, f_b, f_s, H: LinearOperator, sigma: float) -> LogTestStatistic:
    """Background-known-exactly log likelihood ratio
    ``(g - H f_b - H f_s / 2)^T H f_s / sigma^2``."""
    if sigma <= 0:
        raise ValueError("sigma must be positive")
    g = np.asarray(g, dtype=float)
    Hfs = H.apply(_vec(f_s))
    Hfb = H.apply(_vec(f_b))
    return LogTestStatistic(float((g - Hfb - 0.5 * Hfs) @ Hfs) / sigma ** 2, "BKE")


def _posterior_precision(H, B, gamma_hat, sigma):
    inv_g = 1.0 / floor_gamma(gamma_hat)
    s2 = sigma ** 2

    def A(v):
        return H.normal(v) / s2 + B.apply_adjoint(inv_g * B.apply(v))

    return A, inv_g


def sdo_signal_estimate(f_s, H, B, gamma_hat, sigma, tol=1e-10, max_iter=2000):
    """CG solve of ``(H^T H / sigma^2 + B^T Gamma^-1 B) x = H^T H f_s / sigma^2``."""
    A, _ = _posterior_precision(H, B, gamma_hat, sigma)
    return conjugate_gradient(A, H.normal(f_s) / sigma ** 2, tol=tol, max_iter=max_iter)


def sdo_log_lr(g, f_s, H: LinearOperator, B: LinearOperator, gamma_hat, sigma: float,
               cg_tol: float = 1e-12, cg_max_iter: int = 2000) -> LogTestStatistic:
    """Sparsity-driven observer log statistic for one measurement.

    ``(g - H f_s / 2)^T H (f_s - f_hat) / sigma^2`` where ``f_hat`` is the
    signal filtered through the data-dependent Gaussian posterior
    (see :func:`sdo_signal_estimate`).

    ``f_s - f_hat`` equals ``Sigma B^T Gamma^-1 B f_s`` and is solved for
    directly; subtracting ``f_hat`` loses digits whenever the data term
    dominates and ``f_hat`` is close to ``f_s``.
    """
    g = np.asarray(g, dtype=float)
    f_s = _vec(f_s)
    if not np.any(f_s):
        return LogTestStatistic(0.0, "SDO", {"cg_iterations": 0, "cg_residual": 0.0})
    A, inv_g = _posterior_precision(H, B, gamma_hat, sigma)
    sol = conjugate_gradient(A, B.apply_adjoint(inv_g * B.apply(f_s)), tol=cg_tol, max_iter=cg_max_iter)
    Hfs = H.apply(f_s)
    value = (g - 0.5 * Hfs) @ H.apply(sol.x) / sigma ** 2
    return LogTestStatistic(float(value), "SDO",
                            {"cg_iterations": sol.iterations, "cg_residual": sol.residual})


def sdo_log_lr_dense(g, f_s, H, B, gamma_hat, sigma) -> float:
    """Same statistic with ``Sigma(g)`` formed and inverted explicitly."""
    Hm = H.to_dense() if isinstance(H, LinearOperator) else np.atleast_2d(H)
    Bm = B.to_dense() if isinstance(B, LinearOperator) else np.atleast_2d(B)
    g = np.asarray(g, dtype=float)
    f_s = np.asarray(f_s, dtype=float).ravel()
    s2 = sigma ** 2
    Sigma = np.linalg.inv(Hm.T @ Hm / s2 + Bm.T @ np.diag(1.0 / floor_gamma(gamma_hat)) @ Bm)
    Hfs = Hm @ f_s
    M = np.eye(len(g)) - Hm @ Sigma @ Hm.T / s2
    return float((g - 0.5 * Hfs) @ M @ Hfs / s2)


class QuadratureDomainError(RuntimeError):
    pass


def oracle_log_lr_small(g, f_s, H, B, gamma_hat, sigma, n_grid: int = 161,
                        width: float = 12.0, boundary_tol: float = 1e-8) -> LogTestStatistic:
    """Brute-force log of ``int Lambda_BKE(g | f_b) p(f_b | g) df_b`` for N <= 3.

    ``p`` is the approximate posterior built directly from its definition,
    ``N(g | H f_b, sigma^2 I) exp(-w^T Gamma^-1 w / 2)`` with ``w = B f_b``,
    and normalized by the same tensor-product quadrature. Nothing from the
    closed form is used to evaluate the integrand; the posterior mean and
    covariance (``f_x`` and ``Sigma``) only position the grid, which must also
    cover the mean shifted by the BKE exponential tilt
    (``f_y = f_x - Sigma H^T H f_s / sigma^2``).
    """
    Hm = H.to_dense() if isinstance(H, LinearOperator) else np.atleast_2d(np.asarray(H, float))
    Bm = B.to_dense() if isinstance(B, LinearOperator) else np.atleast_2d(np.asarray(B, float))
    g = np.atleast_1d(np.asarray(g, dtype=float))
    f_s = np.atleast_1d(np.asarray(f_s, dtype=float))
    N = Hm.shape[1]
    if N > 3:
        raise ValueError("quadrature oracle is limited to N <= 3")
    if not np.any(f_s):
        return LogTestStatistic(0.0, "SDO-oracle")
    s2 = sigma ** 2
    inv_g = 1.0 / floor_gamma(gamma_hat)

    # grid placement
    prec = Hm.T @ Hm / s2 + Bm.T @ (inv_g[:, None] * Bm)
    Sigma = np.linalg.inv(prec)
    f_x = Sigma @ Hm.T @ g / s2
    f_y = f_x - Sigma @ Hm.T @ Hm @ f_s / s2
    sd = np.sqrt(np.diag(Sigma))
    lo = np.minimum(f_x, f_y) - width * sd
    hi = np.maximum(f_x, f_y) + width * sd
    axes = [np.linspace(lo[i], hi[i], n_grid) for i in range(N)]
    pts = np.stack([a.ravel() for a in np.meshgrid(*axes, indexing="ij")], axis=1)

    Hf = pts @ Hm.T
    W = pts @ Bm.T
    resid = g[None, :] - Hf
    log_post = -0.5 * np.sum(resid ** 2, axis=1) / s2 - 0.5 * np.sum(W ** 2 * inv_g, axis=1)
    Hfs = Hm @ f_s
    log_bke = ((g[None, :] - Hf - 0.5 * Hfs) @ Hfs) / s2
    log_num = log_post + log_bke

    shape = (n_grid,) * N
    for name, lw in (("posterior", log_post), ("tilted integrand", log_num)):
        grid = (lw - lw.max()).reshape(shape)
        total = logsumexp(grid)
        edge = -np.inf
        for ax in range(N):
            edge = np.logaddexp(edge, logsumexp(np.take(grid, [0, n_grid - 1], axis=ax)))
        if edge - total > np.log(boundary_tol):
            raise QuadratureDomainError(f"{name} mass on the grid boundary exceeds {boundary_tol:g}")
    value = logsumexp(log_num) - logsumexp(log_post)
    return LogTestStatistic(float(value), "SDO-oracle", {"n_grid": n_grid})


# -- Hotelling observer ------------------------------------------------------

@dataclass(frozen=True)
class HotellingTemplate:
    template: np.ndarray
    mean_h0: np.ndarray
    training_size: int
    shrinkage: float = 1e-6
    diagnostics: dict = field(default_factory=dict, compare=False)


def train_hotelling(training_backgrounds, f_s, H: LinearOperator, sigma: float,
                    shrinkage: float = 1e-6, cg_tol: float = 1e-10,
                    cg_max_iter: int = 5000) -> HotellingTemplate:
    """Estimate the Hotelling template from noise-free background projections.

    ``K_g = K_b + sigma^2 I + shrinkage * trace(K_b)/M * I`` with ``K_b`` the
    sample covariance of ``H f_b``; the template ``K_g^-1 H f_s`` is found by
    CG using the low-rank form of ``K_b``.
    """
    backgrounds = [_vec(f) for f in training_backgrounds]
    T = len(backgrounds)
    if T < 2:
        raise ValueError("Hotelling training needs at least two backgrounds")
    G = H.apply(np.stack(backgrounds, axis=1)).T
    mean = G.mean(axis=0)
    D = G - mean
    M = G.shape[1]
    trace_kb = np.sum(D ** 2) / (T - 1)
    ridge = sigma ** 2 + shrinkage * trace_kb / M
    if not ridge > 0:
        raise np.linalg.LinAlgError("regularized covariance is singular (sigma = 0 and no shrinkage)")

    def Kg(v):
        return D.T @ (D @ v) / (T - 1) + ridge * v

    Hfs = H.apply(_vec(f_s))
    sol = conjugate_gradient(Kg, Hfs, tol=cg_tol, max_iter=cg_max_iter)
    return HotellingTemplate(sol.x, mean, T, shrinkage,
                             {"cg_iterations": sol.iterations, "cg_residual": sol.residual})


def hotelling_log_stat(g, tmpl: HotellingTemplate) -> LogTestStatistic:
    g = np.asarray(g, dtype=float)
    if g.shape != tmpl.mean_h0.shape:
        raise ValueError(f"measurement shape {g.shape} does not match template {tmpl.mean_h0.shape}")
    return LogTestStatistic(float(tmpl.template @ (g - tmpl.mean_h0)), "HO")
