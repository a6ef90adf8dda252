"""Laplacian sparsity prior, its scale estimate, and its Gaussian lower bound."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .linops import LinearOperator, as_object_vector

__all__ = [
    "GAMMA_FLOOR",
    "LaplacianPrior",
    "estimate_tau",
    "floor_gamma",
    "gaussian_bound_log_density",
    "laplacian_log_density",
]

GAMMA_FLOOR = 1e-10


def floor_gamma(gamma) -> np.ndarray:
    """Clamp bound widths to :data:`GAMMA_FLOOR` before they are inverted."""
    return np.maximum(np.asarray(gamma, dtype=float), GAMMA_FLOOR)


@dataclass(frozen=True)
class LaplacianPrior:
    """i.i.d. Laplacian density ``(tau/2) exp(-tau |w_i|)`` on transform coefficients."""

    tau: float
    Q: int | None = None

    def __post_init__(self):
        if not self.tau > 0:
            raise ValueError(f"tau must be positive, got {self.tau}")

    def log_density(self, w) -> float:
        return laplacian_log_density(w, self.tau)


def laplacian_log_density(w, tau: float) -> float:
    w = np.asarray(w, dtype=float)
    return float(np.sum(np.log(tau / 2.0) - tau * np.abs(w)))


def gaussian_bound_log_density(w, gamma, tau: float) -> float:
    """Log of the parameterized Gaussian lower bound on the Laplacian prior.

    ``sum_i log(tau/2) - tau^2 gamma_i / 2 - w_i^2 / (2 gamma_i)``; never
    exceeds :func:`laplacian_log_density` and touches it at
    ``gamma_i = |w_i| / tau``.
    """
    w = np.asarray(w, dtype=float)
    gamma = np.asarray(gamma, dtype=float)
    if w.shape != gamma.shape:
        raise ValueError(f"shape mismatch: w {w.shape} vs gamma {gamma.shape}")
    if np.any(gamma <= 0):
        raise ValueError("gamma must be strictly positive")
    return float(np.sum(np.log(tau / 2.0) - 0.5 * tau ** 2 * gamma - w ** 2 / (2.0 * gamma)))


def estimate_tau(training_images, B: LinearOperator, outlier_percentile: float | None = 99.9,
                 outlier_threshold: float | None = None) -> float:
    """Moment estimate ``tau = sqrt(2 / var(w))`` from pooled transform coefficients.

    Coefficients whose magnitude exceeds ``outlier_threshold`` (absolute) or,
    if that is not given, the ``outlier_percentile`` of pooled ``|w|`` are
    dropped first. Pass ``outlier_percentile=None`` to keep everything.
    """
    images = list(training_images)
    if not images:
        raise ValueError("need at least one training image")
    w = np.concatenate([B.apply(as_object_vector(f)) for f in images])
    mag = np.abs(w)
    if outlier_threshold is not None:
        w = w[mag <= outlier_threshold]
    elif outlier_percentile is not None:
        # inverted_cdf keeps the cut identical when the pool is duplicated
        cut = np.percentile(mag, outlier_percentile, method="inverted_cdf")
        w = w[mag <= cut]
    if w.size == 0:
        raise ValueError("no coefficients left after outlier removal")
    var = np.mean(w ** 2) - np.mean(w) ** 2
    if not var > 0:
        raise ValueError("pooled coefficient variance is zero; cannot estimate tau")
    return float(np.sqrt(2.0 / var))
