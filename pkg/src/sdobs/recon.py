"""Image estimators: sparse PLS, its variational quadratic surrogate, ridge,
zero-filling, plus SSIM for comparing images."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .linops import LinearOperator, MRIOperator, SamplingMask, conjugate_gradient
from .priors import floor_gamma

__all__ = [
    "ReconResult",
    "operator_norm_sq",
    "pls_l1",
    "pls_l1_approx",
    "pls_l1_objective",
    "pls_l2",
    "soft_threshold",
    "ssim",
    "zero_fill",
]


@dataclass
class ReconResult:
    image: np.ndarray
    objective_trace: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = True


def soft_threshold(x, thresh):
    return np.sign(x) * np.maximum(np.abs(x) - thresh, 0.0)


def operator_norm_sq(H: LinearOperator, iters: int = 100, seed: int = 0) -> float:
    """Power-iteration estimate of ``|H|^2`` (largest eigenvalue of H^T H)."""
    if isinstance(H, MRIOperator):
        return 1.0
    v = np.random.default_rng(seed).standard_normal(H.domain_dim)
    lam = 0.0
    for _ in range(iters):
        v /= np.linalg.norm(v)
        w = H.normal(v)
        lam_new = float(v @ w)
        v = w
        if abs(lam_new - lam) <= 1e-10 * max(lam_new, 1e-300):
            lam = lam_new
            break
        lam = lam_new
    return lam


def pls_l1_objective(f, g, H, B, sigma, tau) -> float:
    r = H.apply(f) - g
    return float(r @ r + 2.0 * sigma ** 2 * tau * np.sum(np.abs(B.apply(f))))


def pls_l1(g, H: LinearOperator, B: LinearOperator, sigma: float, tau: float,
           max_iters: int = 2000, tol: float = 1e-8, init=None) -> ReconResult:
    """Sparse MAP estimate ``argmin |g - Hf|^2 + 2 sigma^2 tau |Bf|_1``.

    Monotone FISTA in the coefficient domain (B must be orthonormal, so the
    soft-threshold prox is exact). Starts from the zero-filled estimate
    ``H^T g`` unless ``init`` is given. Stops when the relative fixed-point
    residual of the proximal-gradient map drops below ``tol``.
    """
    if not (sigma > 0 and tau > 0):
        raise ValueError("sigma and tau must be positive")
    g = np.asarray(g, dtype=float)
    lam = 2.0 * sigma ** 2 * tau
    L = 2.0 * operator_norm_sq(H)
    step = 1.0 / L

    def F(w):
        r = H.apply(B.apply_adjoint(w)) - g
        return float(r @ r + lam * np.sum(np.abs(w)))

    def grad(w):
        return 2.0 * B.apply(H.apply_adjoint(H.apply(B.apply_adjoint(w)) - g))

    w = B.apply(H.apply_adjoint(g) if init is None else np.asarray(init, dtype=float))
    Fw = F(w)
    trace = [Fw]
    y, t = w.copy(), 1.0
    converged = False
    it = 0
    for it in range(1, max_iters + 1):
        u = soft_threshold(y - step * grad(y), lam * step)
        Fu = F(u)
        t_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * t * t))
        w_prev = w
        if Fu <= Fw:
            w, Fw = u, Fu
        if not np.isfinite(Fw):
            raise FloatingPointError("PLS-l1 objective diverged")
        y = w + (t / t_new) * (u - w) + ((t - 1.0) / t_new) * (w - w_prev)
        t = t_new
        trace.append(Fw)
        # fixed-point residual of the prox-gradient map at the current iterate
        p = soft_threshold(w - step * grad(w), lam * step)
        if np.linalg.norm(p - w) <= tol * max(np.linalg.norm(w), 1e-300):
            converged = True
            break
    return ReconResult(B.apply_adjoint(w), trace, it, converged)


def pls_l1_approx(g, H: LinearOperator, B: LinearOperator, sigma: float, gamma_hat,
                  tol: float = 1e-10, max_iter: int = 5000) -> ReconResult:
    """Quadratic MAP under the fitted Gaussian bound:
    ``argmin |g - Hf|^2 / sigma^2 + f^T B^T Gamma^-1 B f``."""
    g = np.asarray(g, dtype=float)
    inv_g = 1.0 / floor_gamma(gamma_hat)
    s2 = sigma ** 2

    def A(v):
        return H.normal(v) / s2 + B.apply_adjoint(inv_g * B.apply(v))

    sol = conjugate_gradient(A, H.apply_adjoint(g) / s2, tol=tol, max_iter=max_iter)
    return ReconResult(sol.x, [], sol.iterations)


def pls_l2(g, H: LinearOperator, beta: float, tol: float = 1e-10,
           max_iter: int = 5000) -> ReconResult:
    """Ridge estimate ``argmin |g - Hf|^2 + beta |f|^2`` by CG from zero."""
    if beta < 0:
        raise ValueError("beta must be non-negative")
    g = np.asarray(g, dtype=float)
    sol = conjugate_gradient(lambda v: H.normal(v) + beta * v, H.apply_adjoint(g),
                             tol=tol, max_iter=max_iter)
    return ReconResult(sol.x, [], sol.iterations)


def zero_fill(g, mask: SamplingMask, n: int) -> np.ndarray:
    """Inverse DFT of k-space with unsampled lines set to zero (real part)."""
    g = np.asarray(g, dtype=float)
    if mask.n != n or g.size != 2 * n * mask.sampled_count:
        raise ValueError("measurement size does not match the mask")
    return MRIOperator(mask, n).apply_adjoint(g)


def ssim(a, b, dynamic_range: float, window: int = 8) -> float:
    """Mean SSIM over all ``window x window`` patches (uniform weights)."""
    if not dynamic_range > 0:
        raise ValueError("dynamic_range must be positive")
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch {a.shape} vs {b.shape}")
    if a.ndim == 1:
        n = int(round(np.sqrt(a.size)))
        a, b = a.reshape(n, n), b.reshape(n, n)
    c1 = (0.01 * dynamic_range) ** 2
    c2 = (0.03 * dynamic_range) ** 2
    pa = sliding_window_view(a, (window, window))
    pb = sliding_window_view(b, (window, window))
    mu_a = pa.mean(axis=(-2, -1))
    mu_b = pb.mean(axis=(-2, -1))
    da = pa - mu_a[..., None, None]
    db = pb - mu_b[..., None, None]
    var_a = (da * da).mean(axis=(-2, -1))
    var_b = (db * db).mean(axis=(-2, -1))
    cov = (da * db).mean(axis=(-2, -1))
    s = ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / ((mu_a ** 2 + mu_b ** 2 + c1) * (var_a + var_b + c2))
    return float(s.mean())
