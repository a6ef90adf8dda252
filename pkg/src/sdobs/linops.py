"""Matrix-free linear operators, acquisition designs and a CG solver.

All operators act on real vectors. Complex k-space samples are stored as
interleaved ``(re, im)`` pairs so that every downstream quantity (noise
covariance, normal equations, observer templates) stays real.

Operators accept either a single vector of shape ``(dim,)`` or a batch of
column vectors of shape ``(dim, k)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

__all__ = [
    "CGNotConverged",
    "CGResult",
    "DESIGN_KINDS",
    "HaarTransform",
    "LinearOperator",
    "MRIOperator",
    "MatrixOperator",
    "SamplingMask",
    "adjoint_mismatch",
    "as_object_vector",
    "conjugate_gradient",
    "design_counts",
    "make_design",
    "make_haar_transform",
    "make_mri_operator",
]

DESIGN_KINDS = ("FS", "UH", "RH", "LH")


def as_object_vector(values) -> np.ndarray:
    """Validate and flatten an object (image) to a length-n² float vector."""
    f = np.asarray(values, dtype=float).ravel()
    n = int(round(np.sqrt(f.size)))
    if n * n != f.size:
        raise ValueError(f"object length {f.size} is not a perfect square")
    if not np.all(np.isfinite(f)):
        raise ValueError("object contains non-finite values")
    return f


class LinearOperator:
    """Base class: a real linear map with an explicit adjoint.

    Subclasses implement ``_apply`` and ``_adjoint`` on 2D column batches.
    """

    domain_dim: int
    range_dim: int

    def __init__(self, domain_dim: int, range_dim: int):
        self.domain_dim = int(domain_dim)
        self.range_dim = int(range_dim)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.range_dim, self.domain_dim)

    def _apply(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _adjoint(self, y: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    @staticmethod
    def _batched(fn, v, dim, name):
        v = np.asarray(v, dtype=float)
        if v.shape[0] != dim:
            raise ValueError(f"{name}: expected leading dimension {dim}, got {v.shape}")
        if v.ndim == 1:
            return fn(v[:, None])[:, 0]
        return fn(v)

    def apply(self, x) -> np.ndarray:
        return self._batched(self._apply, x, self.domain_dim, type(self).__name__)

    def apply_adjoint(self, y) -> np.ndarray:
        return self._batched(self._adjoint, y, self.range_dim, type(self).__name__ + " adjoint")

    def __call__(self, x) -> np.ndarray:
        return self.apply(x)

    def normal(self, x) -> np.ndarray:
        """Apply ``A^T A``."""
        return self.apply_adjoint(self.apply(x))

    def to_dense(self, block: int = 512) -> np.ndarray:
        """Materialize the operator as a dense matrix (small problems only)."""
        out = np.empty((self.range_dim, self.domain_dim))
        for start in range(0, self.domain_dim, block):
            stop = min(start + block, self.domain_dim)
            e = np.zeros((self.domain_dim, stop - start))
            e[np.arange(start, stop), np.arange(stop - start)] = 1.0
            out[:, start:stop] = self.apply(e)
        return out


class MatrixOperator(LinearOperator):
    """Wrap an explicit real matrix."""

    def __init__(self, matrix):
        m = np.atleast_2d(np.asarray(matrix, dtype=float))
        super().__init__(m.shape[1], m.shape[0])
        self.matrix = m

    def _apply(self, x):
        return self.matrix @ x

    def _adjoint(self, y):
        return self.matrix.T @ y


@dataclass(frozen=True)
class SamplingMask:
    """Which phase-encoding lines (rows of centred k-space) are acquired.

    Row ``n // 2`` is the DC line.
    """

    line_flags: np.ndarray
    kind: str = "custom"

    def __post_init__(self):
        flags = np.asarray(self.line_flags, dtype=bool).copy()
        flags.setflags(write=False)
        object.__setattr__(self, "line_flags", flags)
        if flags.ndim != 1:
            raise ValueError("line_flags must be one-dimensional")
        if not 1 <= flags.sum() <= flags.size:
            raise ValueError("a sampling mask must acquire at least one line")

    @property
    def n(self) -> int:
        return self.line_flags.size

    @property
    def sampled_count(self) -> int:
        return int(self.line_flags.sum())

    @property
    def lines(self) -> np.ndarray:
        return np.flatnonzero(self.line_flags)


class MRIOperator(LinearOperator):
    """Unitary 2D DFT followed by selection of whole phase-encoding rows.

    The output interleaves real and imaginary parts of the sampled
    coefficients in row-major order, so ``range_dim = 2 * n * sampled_count``.
    """

    def __init__(self, mask: SamplingMask, n: int):
        if mask.n != n:
            raise ValueError(f"mask has {mask.n} lines but the grid side is {n}")
        self.mask = mask
        self.n = int(n)
        self._rows = mask.lines
        super().__init__(n * n, 2 * n * mask.sampled_count)

    def kspace(self, x: np.ndarray) -> np.ndarray:
        """Full centred k-space of column batch ``x``: shape ``(n, n, k)``."""
        img = x.reshape(self.n, self.n, -1)
        k = np.fft.fft2(img, axes=(0, 1), norm="ortho")
        return np.fft.fftshift(k, axes=(0, 1))

    def _apply(self, x):
        k = self.kspace(x)[self._rows]
        out = np.empty(k.shape[:2] + (2, k.shape[2]))
        out[:, :, 0] = k.real
        out[:, :, 1] = k.imag
        return out.reshape(self.range_dim, -1)

    def _adjoint(self, y):
        pairs = y.reshape(self._rows.size, self.n, 2, -1)
        full = np.zeros((self.n, self.n, y.shape[1]), dtype=complex)
        full[self._rows] = pairs[:, :, 0] + 1j * pairs[:, :, 1]
        full = np.fft.ifftshift(full, axes=(0, 1))
        img = np.fft.ifft2(full, axes=(0, 1), norm="ortho").real
        return img.reshape(self.domain_dim, -1)

    def to_complex(self, g) -> np.ndarray:
        """Unpack a stacked-real measurement into ``(sampled_lines, n)`` complex."""
        g = np.asarray(g, dtype=float)
        pairs = g.reshape(self._rows.size, self.n, 2)
        return pairs[..., 0] + 1j * pairs[..., 1]


def make_mri_operator(mask: SamplingMask, n: int) -> MRIOperator:
    if n < 2 or n & (n - 1):
        raise ValueError(f"grid side must be a power of two, got {n}")
    return MRIOperator(mask, n)


class HaarTransform(LinearOperator):
    """Orthonormal multilevel 2D Haar wavelet transform.

    Coefficients use the usual in-place pyramid layout: after ``levels``
    steps the coarse approximation occupies the top-left
    ``n / 2**levels`` square.
    """

    def __init__(self, n: int, levels: int = 4):
        if levels < 0 or n % (2 ** levels):
            raise ValueError(f"grid side {n} is not divisible by 2**{levels}")
        self.n = int(n)
        self.levels = int(levels)
        super().__init__(n * n, n * n)

    @staticmethod
    def _step(a, axis):
        even = np.take(a, np.arange(0, a.shape[axis], 2), axis=axis)
        odd = np.take(a, np.arange(1, a.shape[axis], 2), axis=axis)
        return np.concatenate(((even + odd), (even - odd)), axis=axis) / np.sqrt(2.0)

    @staticmethod
    def _unstep(a, axis):
        half = a.shape[axis] // 2
        s = np.take(a, np.arange(half), axis=axis)
        d = np.take(a, np.arange(half, 2 * half), axis=axis)
        out = np.empty_like(a)
        idx = [slice(None)] * a.ndim
        idx[axis] = slice(0, None, 2)
        out[tuple(idx)] = (s + d) / np.sqrt(2.0)
        idx[axis] = slice(1, None, 2)
        out[tuple(idx)] = (s - d) / np.sqrt(2.0)
        return out

    def _apply(self, x):
        w = x.reshape(self.n, self.n, -1).copy()
        m = self.n
        for _ in range(self.levels):
            block = w[:m, :m]
            block = self._step(block, 0)
            w[:m, :m] = self._step(block, 1)
            m //= 2
        return w.reshape(self.domain_dim, -1)

    def _adjoint(self, y):
        f = y.reshape(self.n, self.n, -1).copy()
        m = self.n >> (self.levels - 1) if self.levels else self.n
        for _ in range(self.levels):
            block = f[:m, :m]
            block = self._unstep(block, 1)
            f[:m, :m] = self._unstep(block, 0)
            m *= 2
        return f.reshape(self.domain_dim, -1)


def make_haar_transform(n: int, levels: int = 4) -> HaarTransform:
    return HaarTransform(n, levels)


def adjoint_mismatch(op: LinearOperator, rng=None, probes: int = 100) -> float:
    """Largest normalized adjoint defect ``|<Ax,y> - <x,A^T y>| / (|x||y|)``."""
    rng = np.random.default_rng(rng)
    worst = 0.0
    for _ in range(probes):
        x = rng.standard_normal(op.domain_dim)
        y = rng.standard_normal(op.range_dim)
        lhs = op.apply(x) @ y
        rhs = x @ op.apply_adjoint(y)
        worst = max(worst, abs(lhs - rhs) / (np.linalg.norm(x) * np.linalg.norm(y)))
    return worst


# -- acquisition designs -----------------------------------------------------

def design_counts(n: int) -> tuple[int, int]:
    """(lines per half-scan, lines in the low-frequency block) for grid side n."""
    return round(n * 144 / 256), round(n * 72 / 256)


def _centered_block(n: int, count: int) -> np.ndarray:
    start = n // 2 - count // 2
    return np.arange(start, start + count)


def make_design(kind: str, n: int, seed=None) -> SamplingMask:
    """Build one of the FS / UH / RH / LH phase-encoding designs.

    Half-scan designs acquire ``round(144 n / 256)`` lines. UH and RH share
    a centred low-frequency block of ``round(72 n / 256)`` lines; the rest
    are evenly spaced (UH) or drawn without replacement (RH). LH takes a
    single centred block.
    """
    kind = kind.upper()
    if kind not in DESIGN_KINDS:
        raise ValueError(f"unknown design kind {kind!r}; expected one of {DESIGN_KINDS}")
    if n < 8:
        raise ValueError(f"grid side {n} too small for proportional design counts")
    half, low = design_counts(n)
    flags = np.zeros(n, dtype=bool)
    if kind == "FS":
        flags[:] = True
    elif kind == "LH":
        flags[_centered_block(n, half)] = True
    else:
        flags[_centered_block(n, low)] = True
        rest = np.flatnonzero(~flags)
        extra = half - low
        if kind == "UH":
            pick = np.round(np.linspace(0, rest.size - 1, extra)).astype(int)
            flags[rest[pick]] = True
        else:
            rng = np.random.default_rng(seed)
            flags[rng.choice(rest, size=extra, replace=False)] = True
    return SamplingMask(flags, kind)


# -- conjugate gradients -----------------------------------------------------

class CGNotConverged(RuntimeError):
    def __init__(self, iterations: int, residual: float, tol: float):
        self.iterations = iterations
        self.residual = residual
        super().__init__(
            f"CG did not reach relative residual {tol:g} in {iterations} iterations "
            f"(final relative residual {residual:.3e})"
        )


@dataclass
class CGResult:
    x: np.ndarray
    iterations: int
    residual: float
    """Relative residual ``|b - A x| / |b|``, recomputed from the returned x."""
    converged: bool = True
    history: list = field(default_factory=list, repr=False)


def conjugate_gradient(apply_A: Callable[[np.ndarray], np.ndarray], b, tol: float = 1e-8,
                       max_iter: int = 500, x0=None, raise_on_fail: bool = True) -> CGResult:
    """Solve ``A x = b`` for symmetric positive-definite ``A`` given as a callable.

    Iterates until the recursively updated residual drops below
    ``tol * |b|`` and then confirms with an explicitly recomputed residual.
    Raises :class:`CGNotConverged` otherwise (unless ``raise_on_fail`` is
    false, in which case ``converged`` is set on the result).
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if callable(getattr(apply_A, "apply", None)):
        apply_A = apply_A.apply
    b = np.asarray(b, dtype=float)
    bnorm = np.linalg.norm(b)
    x = np.zeros_like(b) if x0 is None else np.array(x0, dtype=float)
    if bnorm == 0.0:
        return CGResult(np.zeros_like(b), 0, 0.0)

    r = b - apply_A(x)
    p = r.copy()
    rr = r @ r
    history = [np.sqrt(rr) / bnorm]
    it = 0
    while it < max_iter and np.sqrt(rr) > tol * bnorm:
        Ap = apply_A(p)
        pAp = p @ Ap
        if pAp <= 0:
            raise np.linalg.LinAlgError("operator is not positive definite along a search direction")
        alpha = rr / pAp
        x += alpha * p
        r -= alpha * Ap
        rr_new = r @ r
        p = r + (rr_new / rr) * p
        rr = rr_new
        it += 1
        history.append(np.sqrt(rr) / bnorm)
        if np.sqrt(rr) <= tol * bnorm:
            # guard against drift of the recursive residual
            r = b - apply_A(x)
            rr = r @ r
            p = r.copy()

    rel = np.linalg.norm(b - apply_A(x)) / bnorm
    converged = rel <= tol
    if not converged and raise_on_fail:
        raise CGNotConverged(it, rel, tol)
    return CGResult(x, it, rel, converged, history)
