"""Shared numerical types: observation grids, paths and symmetric matrices."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Tuple

import numpy as np

from .errors import NonFiniteError, NonSymmetricError, NotPSDError, ValidationError

PSD_TOL = 1e-10
SYM_TOL = 1e-12


@dataclass(frozen=True)
class TimeGrid:
    """Equidistant grid ``t_m = m / n`` for ``m = 0 .. floor(n T)``.

    Only ``(n, T)`` is stored; times are recomputed from integer indices so
    that no rounding error accumulates along the grid.
    """

    n: int
    T: float = 1.0

    def __post_init__(self):
        if int(self.n) != self.n or self.n <= 0:
            raise ValidationError(f"n must be a positive integer, got {self.n!r}")
        if not (self.T > 0 and math.isfinite(self.T)):
            raise ValidationError(f"T must be positive and finite, got {self.T!r}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "T", float(self.T))

    @property
    def steps(self) -> int:
        """Number of increments, ``floor(n T)``."""
        # tolerate products like 0.3 * 10 = 2.9999999999999996
        return int(math.floor(self.n * self.T * (1 + 1e-12)))

    @property
    def count(self) -> int:
        return self.steps + 1

    @property
    def dt(self) -> float:
        return 1.0 / self.n

    @property
    def is_periodic(self) -> bool:
        """True when the increments tile ``[0, T]`` exactly (``n T`` integral)."""
        return abs(self.n * self.T - self.steps) <= 1e-9 * max(1.0, self.n * self.T)

    def time(self, m) -> np.ndarray:
        return np.asarray(m) / self.n

    def times(self) -> np.ndarray:
        return np.arange(self.count) / self.n

    def nearest_index(self, t) -> np.ndarray:
        return np.clip(np.rint(np.asarray(t) * self.n).astype(np.int64), 0, self.steps)


@dataclass(frozen=True)
class SampledPath:
    """A d-dimensional path observed on a :class:`TimeGrid`.

    ``values`` has shape ``(grid.count, d)``.
    """

    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 1:
            v = v[:, None]
        if v.ndim != 2:
            raise ValidationError("path values must be a (count, d) array")
        if v.shape[0] != self.grid.count:
            raise ValidationError(
                f"path has {v.shape[0]} points but the grid has {self.grid.count}"
            )
        if not np.all(np.isfinite(v)):
            raise NonFiniteError("path contains non-finite values")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def d(self) -> int:
        return self.values.shape[1]

    def increments(self) -> np.ndarray:
        """``Delta^n_m Y`` for ``m = 1 .. floor(nT)``, shape ``(steps, d)``."""
        return np.diff(self.values, axis=0)


@dataclass(frozen=True)
class SymMatrixPath:
    """Time-indexed sequence of symmetric matrices, ``values`` of shape ``(M, d, d)``."""

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 3 or v.shape[1] != v.shape[2]:
            raise ValidationError("matrix path values must have shape (M, d, d)")
        if t.shape != (v.shape[0],):
            raise ValidationError("times and values lengths differ")
        if t.size > 1 and np.any(np.diff(t) <= 0):
            raise ValidationError("times must be strictly increasing")
        if not np.allclose(v, np.swapaxes(v, 1, 2), rtol=0, atol=SYM_TOL * max(1.0, np.nanmax(np.abs(v), initial=0))):
            raise NonSymmetricError("matrix path values are not symmetric")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)

    @property
    def d(self) -> int:
        return self.values.shape[1]

    def __len__(self):
        return self.values.shape[0]

    def entry(self, i: int, j: int) -> np.ndarray:
        return self.values[:, i, j]


def upper_pairs(d: int):
    """Index pairs ``(i, j)`` with ``i <= j`` in row-major order."""
    return [(i, j) for i in range(d) for j in range(i, d)]


def check_symmetric(a: np.ndarray, tol: float = SYM_TOL) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValidationError(f"expected a square matrix, got shape {a.shape}")
    scale = max(1.0, float(np.max(np.abs(a), initial=0.0)))
    if np.max(np.abs(a - a.T), initial=0.0) > tol * scale:
        raise NonSymmetricError("matrix is not symmetric")
    return 0.5 * (a + a.T)


def matrix_sqrt_psd(a: np.ndarray, tol: float = PSD_TOL) -> np.ndarray:
    """Unique positive semidefinite square root via symmetric eigendecomposition.

    Eigenvalues in ``[-tol * trace, 0)`` are treated as round-off and set to
    zero; anything more negative raises :class:`NotPSDError`.
    """
    a = check_symmetric(a)
    w, v = np.linalg.eigh(a)
    floor = -tol * max(float(np.trace(a)), 0.0)
    if w.size and w[0] < floor:
        raise NotPSDError(f"smallest eigenvalue {w[0]:.3e} below tolerance {floor:.3e}")
    s = (v * np.sqrt(np.clip(w, 0.0, None))) @ v.T
    return 0.5 * (s + s.T)


def psd_project(a: np.ndarray) -> Tuple[np.ndarray, float]:
    """Symmetrize and clip negative eigenvalues to zero.

    Returns the projected matrix and the total absolute clipped eigenvalue
    mass. A PSD input is returned unchanged (after symmetrization).
    """
    a = np.asarray(a, dtype=float)
    a = 0.5 * (a + a.T)
    w, v = np.linalg.eigh(a)
    neg = w < 0
    if not np.any(neg):
        return a, 0.0
    clipped = float(-w[neg].sum())
    p = (v * np.where(neg, 0.0, w)) @ v.T
    return 0.5 * (p + p.T), clipped


# --- batched closed forms for 2 x 2 stacks (simulator hot loop) -------------

def _eig2(a):
    p = a[..., 0, 0]
    q = a[..., 1, 1]
    r = 0.5 * (a[..., 0, 1] + a[..., 1, 0])
    half_tr = 0.5 * (p + q)
    disc = np.sqrt(0.25 * (p - q) ** 2 + r * r)
    return p, q, r, half_tr - disc, half_tr + disc


def psd_project_2x2(a: np.ndarray):
    """Vectorized :func:`psd_project` for a stack of 2 x 2 matrices.

    Uses the spectral identity ``P_+ = (A - lo I) / (hi - lo)`` for the top
    eigenprojector, so no iterative eigensolver is involved. Matrices that are
    already PSD are returned unchanged.
    """
    p, q, r, lo, hi = _eig2(a)
    out = np.empty_like(a)
    out[..., 0, 0] = p
    out[..., 1, 1] = q
    out[..., 0, 1] = r
    out[..., 1, 0] = r
    clipped = np.zeros(p.shape)
    one_neg = (lo < 0) & (hi > 0)
    if np.any(one_neg):
        gap = hi[one_neg] - lo[one_neg]
        scale = hi[one_neg] / gap
        out[one_neg, 0, 0] = scale * (p[one_neg] - lo[one_neg])
        out[one_neg, 1, 1] = scale * (q[one_neg] - lo[one_neg])
        out[one_neg, 0, 1] = scale * r[one_neg]
        out[one_neg, 1, 0] = scale * r[one_neg]
        clipped[one_neg] = -lo[one_neg]
    both_neg = hi <= 0
    if np.any(both_neg):
        clipped[both_neg] = -(np.minimum(lo[both_neg], 0) + np.minimum(hi[both_neg], 0))
        out[both_neg] = 0.0
    return out, clipped


def sqrt_psd_2x2(a: np.ndarray) -> np.ndarray:
    """Vectorized PSD square root of PSD 2 x 2 matrices.

    ``sqrt(A) = (A + s I) / t`` with ``s = sqrt(det A)``, ``t = sqrt(tr A + 2 s)``.
    """
    p = a[..., 0, 0]
    q = a[..., 1, 1]
    r = a[..., 0, 1]
    s = np.sqrt(np.maximum(p * q - r * r, 0.0))
    t = np.sqrt(np.maximum(p + q + 2 * s, 0.0))
    safe = np.where(t > 0, t, 1.0)
    out = np.empty_like(a)
    out[..., 0, 0] = (p + s) / safe
    out[..., 1, 1] = (q + s) / safe
    out[..., 0, 1] = r / safe
    out[..., 1, 0] = r / safe
    out[t == 0] = 0.0
    return out
