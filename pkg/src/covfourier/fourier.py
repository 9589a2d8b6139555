"""Fourier-Fejer reconstruction of the spot covariance path.

Pipeline for an observed path ``Y`` on the grid ``t_m = m / n``:

1. Fourier coefficients of ``t -> rho_g(X_t)`` are estimated by
   ``V(k) = (1/n) sum_m exp(-i 2 pi k t_{m-1} / T) g(sqrt(n) dY_m)``.
2. The path of ``rho_g(X)`` is rebuilt with Fejer (Cesaro) weights
   ``1 - |k| / N``.
3. ``rho_g`` is inverted pointwise.

``rho_g(x) = E[g(U)]`` for ``U ~ N(0, x)`` is the moment map that links the
increment functional ``g`` to the covariance.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence, Tuple, Union

import numpy as np
from scipy.integrate import quad

from .core import SampledPath, SymMatrixPath, TimeGrid
from .errors import (
    ImaginaryResidueError,
    InvalidRateError,
    ModeCountTooLargeError,
    OutOfDomainError,
    UnsupportedError,
    ValidationError,
)
from .special import abs_normal_moment, bivariate_abs_moment


class GKind(str, Enum):
    POWER = "power"
    COSINE = "cosine"
    GAUSS_EXP = "gaussexp"
    SQUARES = "squares"


@dataclass(frozen=True)
class GFunctionSpec:
    """A jump-robust test function ``g: R^d -> S_d``.

    Kinds
    -----
    ``power``     entry (i, j) is ``|x_i|^r |x_j|^s`` (diagonal ``|x_i|^{r+s}``)
    ``cosine``    entry (i, j) is ``cos(x_i + 1{i != j} x_j)``
    ``gaussexp``  entry (i, j) is ``exp(-<x, A_ij x> / 2)``
    ``squares``   the outer product ``x x^T`` (realized covariance; not jump robust)
    """

    kind: GKind
    d: int = 1
    r: float = 2.0
    s: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", GKind(self.kind))
        if self.d < 1:
            raise ValidationError("d must be positive")
        if self.kind is GKind.POWER:
            if not (self.r > 0 and self.s >= 0):
                raise ValidationError("power variation needs r > 0 and s >= 0")
            if self.d > 1 and self.r != self.s:
                # |x_i|^r |x_j|^s is only symmetric in (i, j) when r == s
                raise ValidationError("power variation with d > 1 requires r == s")

    @classmethod
    def cosine(cls, d: int = 2):
        return cls(GKind.COSINE, d)

    @classmethod
    def gauss_exp(cls, d: int = 2):
        return cls(GKind.GAUSS_EXP, d)

    @classmethod
    def squares(cls, d: int = 1):
        return cls(GKind.SQUARES, d)

    @classmethod
    def power(cls, r: float, s: float = 0.0, d: int = 1):
        return cls(GKind.POWER, d, float(r), float(s))

    @property
    def supports_rho(self) -> bool:
        return True

    @property
    def supports_rho_gg(self) -> bool:
        return self.kind is not GKind.POWER or self.d == 1

    @property
    def supports_inverse(self) -> bool:
        if self.kind is GKind.POWER:
            return self.d == 1 and self.s == 0
        return True


# --- g and its moment maps ----------------------------------------------------

def eval_g(spec: GFunctionSpec, x: np.ndarray) -> np.ndarray:
    """Evaluate ``g`` at one vector (shape ``(d,)``) or a stack (``(..., d)``)."""
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != spec.d:
        raise ValidationError(f"expected vectors of dimension {spec.d}")
    d = spec.d
    eye = np.eye(d, dtype=bool)
    xi = x[..., :, None]
    xj = x[..., None, :]
    if spec.kind is GKind.COSINE:
        arg = np.where(eye, xi, xi + xj)
        return np.cos(arg)
    if spec.kind is GKind.GAUSS_EXP:
        # <x, A_ij x> = (x_i + x_j)^2, which is 4 x_i^2 on the diagonal
        return np.exp(-0.5 * (xi + xj) ** 2)
    if spec.kind is GKind.SQUARES:
        return xi * xj
    ax = np.abs(x)
    return ax[..., :, None] ** spec.r * ax[..., None, :] ** spec.s


def _linear_forms(spec: GFunctionSpec):
    """Coefficient vectors ``a_ij`` with ``g_ij(x) = cos(a_ij . x)`` (cosine kind)."""
    d = spec.d
    a = np.zeros((d, d, d))
    for i in range(d):
        for j in range(d):
            a[i, j, i] += 1.0
            if i != j:
                a[i, j, j] += 1.0
    return a


def rho_g(spec: GFunctionSpec, x: np.ndarray) -> np.ndarray:
    """Moment map ``E[g(U)]``, ``U ~ N(0, x)``; broadcasts over leading axes."""
    x = np.asarray(x, dtype=float)
    diag = np.einsum("...ii->...i", x)
    xi = diag[..., :, None]
    xj = diag[..., None, :]
    d = spec.d
    eye = np.eye(d, dtype=bool)
    if spec.kind is GKind.COSINE:
        return np.exp(-0.5 * np.where(eye, xi, xi + 2 * x + xj))
    if spec.kind is GKind.GAUSS_EXP:
        return 1.0 / np.sqrt(xi + 2 * x + xj + 1.0)
    if spec.kind is GKind.SQUARES:
        return x.copy()
    r, s = spec.r, spec.s
    out = np.empty(x.shape)
    m = abs_normal_moment(r + s)
    for i in range(d):
        out[..., i, i] = np.clip(diag[..., i], 0, None) ** ((r + s) / 2) * m
        for j in range(d):
            if i == j:
                continue
            a, c = np.clip(diag[..., i], 0, None), np.clip(diag[..., j], 0, None)
            denom = np.sqrt(a * c)
            corr = np.clip(np.divide(x[..., i, j], denom, out=np.zeros_like(denom), where=denom > 0), -1, 1)
            mom = np.vectorize(lambda c_: bivariate_abs_moment(r, s, float(c_)))(corr)
            out[..., i, j] = a ** (r / 2) * c ** (s / 2) * mom
    return out


def rho_gg(spec: GFunctionSpec, x: np.ndarray) -> np.ndarray:
    """Second-moment map ``E[g_ij(U) g_kl(U)]`` as a ``(d, d, d, d)`` array."""
    x = np.asarray(x, dtype=float)
    d = spec.d
    if spec.kind is GKind.COSINE:
        a = _linear_forms(spec)
        diff = a[:, :, None, None, :] - a[None, None, :, :, :]
        summ = a[:, :, None, None, :] + a[None, None, :, :, :]
        qd = np.einsum("...p,pq,...q->...", diff, x, diff)
        qs = np.einsum("...p,pq,...q->...", summ, x, summ)
        return 0.5 * (np.exp(-0.5 * qd) + np.exp(-0.5 * qs))
    if spec.kind is GKind.GAUSS_EXP:
        out = np.empty((d,) * 4)
        e = np.eye(d)
        for i in range(d):
            for j in range(d):
                for k in range(d):
                    for l in range(d):
                        v1 = e[i] + e[j]
                        v2 = e[k] + e[l]
                        A = np.outer(v1, v1) + np.outer(v2, v2)
                        out[i, j, k, l] = np.linalg.det(np.eye(d) + x @ A) ** -0.5
        return out
    if spec.kind is GKind.SQUARES:
        # Isserlis: E[U_i U_j U_k U_l]
        return (
            np.einsum("ij,kl->ijkl", x, x)
            + np.einsum("ik,jl->ijkl", x, x)
            + np.einsum("il,jk->ijkl", x, x)
        )
    if d != 1:
        raise UnsupportedError("second-moment map of power variation is only available for d = 1")
    p = spec.r + spec.s
    return np.array(abs_normal_moment(2 * p) * max(x.item(), 0.0) ** p).reshape(1, 1, 1, 1)


def rho_g_inverse(spec: GFunctionSpec, v: np.ndarray) -> np.ndarray:
    """Invert the moment map entrywise (cosine, Gauss-exponential, squares, 1-d power)."""
    v = np.asarray(v, dtype=float)
    if spec.kind is GKind.SQUARES:
        return v.copy()
    if spec.kind is GKind.POWER:
        if not spec.supports_inverse:
            raise UnsupportedError("power variation is only invertible for d = 1 and s = 0")
        if np.any(v < 0):
            raise OutOfDomainError("power-variation moment must be nonnegative")
        return (v / abs_normal_moment(spec.r)) ** (2 / spec.r)
    if np.any(~(v > 0)) or np.any(v > 1 + 1e-10):
        raise OutOfDomainError("moment-map values must lie in (0, 1]")
    if spec.kind is GKind.COSINE:
        q = -2.0 * np.log(v)
        diag_scale = 1.0
    else:
        q = 1.0 / v**2 - 1.0
        diag_scale = 4.0
    dq = np.einsum("...ii->...i", q) / diag_scale
    out = 0.5 * (q - dq[..., :, None] - dq[..., None, :])
    idx = np.arange(spec.d)
    out[..., idx, idx] = dq
    return out


# --- Fourier coefficients ------------------------------------------------------

@dataclass(frozen=True)
class FourierCoefficients:
    """Complex coefficients for modes ``k = -N .. N``; ``coeffs[k + N]`` is mode k."""

    N: int
    coeffs: np.ndarray
    T: float

    def mode(self, k: int) -> np.ndarray:
        if abs(k) > self.N:
            raise IndexError(k)
        return self.coeffs[k + self.N]

    @property
    def modes(self) -> np.ndarray:
        return np.arange(-self.N, self.N + 1)

    @classmethod
    def from_nonnegative(cls, pos: np.ndarray, T: float) -> "FourierCoefficients":
        """Assemble from modes ``0..N`` using conjugate symmetry."""
        pos = np.asarray(pos, dtype=complex)
        N = pos.shape[0] - 1
        full = np.concatenate([np.conj(pos[:0:-1]), pos], axis=0)
        full[N] = full[N].real
        return cls(N, full, float(T))


def transformed_increments(y: SampledPath, spec: GFunctionSpec) -> np.ndarray:
    """``g(sqrt(n) Delta^n_m Y)`` for ``m = 1 .. floor(nT)``, shape ``(steps, d, d)``."""
    return eval_g(spec, math.sqrt(y.grid.n) * y.increments())


def fourier_coefficients_from_values(
    gvals: np.ndarray, grid: TimeGrid, N: int
) -> FourierCoefficients:
    """Coefficients from precomputed ``g`` values (leading axis = increment index).

    When ``n T`` is integral the phases ``exp(-i 2 pi k (m-1) / (nT))`` are
    exactly those of a length-``nT`` DFT, which is used (deterministic pocketfft).
    Otherwise the sum is formed directly in ascending ``m``.
    """
    L = gvals.shape[0]
    if N > L:
        raise ModeCountTooLargeError(f"N = {N} exceeds the number of increments {L}")
    if N < 0:
        raise ValidationError("N must be nonnegative")
    n, T = grid.n, grid.T
    if grid.is_periodic:
        spec_ = np.fft.fft(gvals, axis=0)[: N + 1] / n
    else:
        tm = np.arange(L) / n
        ks = np.arange(N + 1)
        spec_ = np.empty((N + 1,) + gvals.shape[1:], dtype=complex)
        flat = gvals.reshape(L, -1)
        for k in ks:
            ph = np.exp(-2j * np.pi * k * tm / T)
            spec_[k] = (ph @ flat).reshape(gvals.shape[1:]) / n
    return FourierCoefficients.from_nonnegative(spec_, T)


def fourier_coefficients(y: SampledPath, spec: GFunctionSpec, N: int) -> FourierCoefficients:
    """Estimate the Fourier coefficients of ``t -> rho_g(X_t)`` for ``k = -N .. N``.

    Returns ``V(k)``, which estimates ``T`` times the coefficient.
    """
    if y.grid.count < 2:
        raise ValidationError("need at least two observations")
    if N > y.grid.steps:
        raise ModeCountTooLargeError(f"N = {N} exceeds floor(nT) = {y.grid.steps}")
    return fourier_coefficients_from_values(transformed_increments(y, spec), y.grid, N)


# --- Fejer kernel and inversion ---------------------------------------------------

def fejer_kernel(x, N: int):
    """``F_N(x) = sum_{|k| <= N} (1 - |k|/N) e^{ikx} = sin^2(Nx/2) / (N sin^2(x/2))``.

    The removable singularity at multiples of ``2 pi`` is handled with a
    Taylor expansion, so ``F_N(0) = N``.
    """
    if N < 1:
        raise ValidationError("N must be at least 1")
    x = np.asarray(x, dtype=float)
    xr = np.remainder(x + np.pi, 2 * np.pi) - np.pi
    small = np.abs(xr) < 1e-5
    s_half = np.sin(0.5 * xr)
    safe = np.where(small, 1.0, s_half)
    val = np.sin(0.5 * N * xr) ** 2 / (N * safe**2)
    series = N * (1.0 - (N * N - 1) * xr**2 / 12.0)
    out = np.where(small, series, val)
    return out if out.ndim else float(out)


def fejer_weights(N: int) -> np.ndarray:
    k = np.arange(-N, N + 1)
    return 1.0 - np.abs(k) / N


def _check_residue(z: np.ndarray):
    re, im = z.real, z.imag
    if np.any(np.abs(im) > 1e-9 * np.abs(re) + 1e-12):
        worst = float(np.max(np.abs(im)))
        raise ImaginaryResidueError(f"imaginary residue {worst:.3e} after Fejer summation")


def fejer_reconstruct(coeffs: FourierCoefficients, eval_times: Sequence[float]) -> SymMatrixPath:
    """``rho_hat(t) = (1/T) sum_k (1 - |k|/N) e^{i 2 pi k t / T} V(k)`` at each time."""
    t = np.asarray(eval_times, dtype=float)
    T = coeffs.T
    if np.any(t < -1e-12) or np.any(t > T * (1 + 1e-12)):
        raise ValidationError("evaluation times must lie in [0, T]")
    N = coeffs.N
    if N == 0:
        vals = np.broadcast_to(coeffs.coeffs[0] / T, (t.size,) + coeffs.coeffs.shape[1:]).astype(complex)
    else:
        w = fejer_weights(N)
        phase = np.exp(2j * np.pi * np.outer(t, coeffs.modes) / T) * w
        flat = coeffs.coeffs.reshape(2 * N + 1, -1)
        vals = (phase @ flat).reshape((t.size,) + coeffs.coeffs.shape[1:]) / T
    _check_residue(vals)
    real = vals.real
    real = 0.5 * (real + np.swapaxes(real, -1, -2))
    return SymMatrixPath(t, real)


def kernel_reconstruct(gvals: np.ndarray, grid: TimeGrid, N: int, eval_times) -> np.ndarray:
    """Kernel form of the Fejer estimator (independent of the coefficients).

    ``(1/T) sum_m (1/n) F_N(2 pi (t - t_{m-1}) / T) g_m``; shape ``(len(eval_times), d, d)``.
    """
    t = np.asarray(eval_times, dtype=float)
    L = gvals.shape[0]
    tm = np.arange(L) / grid.n
    K = fejer_kernel(2 * np.pi * (t[:, None] - tm[None, :]) / grid.T, N)
    flat = gvals.reshape(L, -1)
    return (K @ flat).reshape((t.size,) + gvals.shape[1:]) / (grid.n * grid.T)


def fejer_eval_times(N: int, T: float) -> np.ndarray:
    """``t_j = j T / (2N)``, ``j = 0 .. 2N`` (both endpoints included)."""
    return np.arange(2 * N + 1) * T / (2 * N)


# --- spot estimator ---------------------------------------------------------------

@dataclass(frozen=True)
class ClampPolicy:
    """How to treat reconstructed moment values outside the inverse's domain.

    ``eps=None`` means raise :class:`OutOfDomainError`; otherwise values
    ``<= 0`` become ``eps`` and (for bounded kinds) values above 1 become 1.
    """

    eps: Optional[float] = 1e-10

    @classmethod
    def error(cls):
        return cls(None)

    @classmethod
    def clamp(cls, eps: float = 1e-10):
        return cls(float(eps))


@dataclass(frozen=True)
class SpotEstimate:
    rho_path: SymMatrixPath
    x_path: SymMatrixPath
    clamped: np.ndarray
    coefficients: FourierCoefficients

    @property
    def eval_times(self) -> np.ndarray:
        return self.x_path.times

    @property
    def clamp_count(self) -> int:
        return int(self.clamped.sum())


def _clamp(spec: GFunctionSpec, v: np.ndarray, policy: ClampPolicy):
    flags = np.zeros(v.shape[:-2], dtype=np.int64)
    if policy.eps is None or spec.kind in (GKind.SQUARES,):
        return v, flags
    low = v <= 0
    high = (v > 1) if spec.kind in (GKind.COSINE, GKind.GAUSS_EXP) else np.zeros_like(low)
    bad = low | high
    if np.any(bad):
        v = np.where(low, policy.eps, np.where(high, 1.0, v))
        flags = bad.sum(axis=(-1, -2))
    return v, flags


def invert_path(spec: GFunctionSpec, rho_path: SymMatrixPath, policy: ClampPolicy = ClampPolicy()):
    v, flags = _clamp(spec, rho_path.values, policy)
    x = rho_g_inverse(spec, v)
    return SymMatrixPath(rho_path.times, 0.5 * (x + np.swapaxes(x, -1, -2))), flags


def estimate_spot_covariance(
    y: SampledPath,
    spec: GFunctionSpec,
    N: int,
    clamp_policy: ClampPolicy = ClampPolicy(),
    eval_times: Optional[Sequence[float]] = None,
) -> SpotEstimate:
    """Fourier coefficients, Fejer reconstruction on ``t_j = jT/(2N)``, then inversion."""
    if not spec.supports_inverse:
        raise UnsupportedError(f"g of kind {spec.kind.value} has no closed-form inverse")
    coeffs = fourier_coefficients(y, spec, N)
    return spot_from_coefficients(coeffs, spec, clamp_policy, eval_times)


def spot_from_coefficients(
    coeffs: FourierCoefficients,
    spec: GFunctionSpec,
    clamp_policy: ClampPolicy = ClampPolicy(),
    eval_times: Optional[Sequence[float]] = None,
) -> SpotEstimate:
    if eval_times is None:
        eval_times = fejer_eval_times(coeffs.N, coeffs.T)
    rho_path = fejer_reconstruct(coeffs, eval_times)
    x_path, flags = invert_path(spec, rho_path, clamp_policy)
    return SpotEstimate(rho_path, x_path, flags, coeffs)


def select_mode_count(n: int, gamma: float, K: float, T: float = 1.0) -> int:
    """``N = round((n / K)^(1/gamma))``, at least 1 and at most ``floor(nT)``."""
    if not gamma > 1:
        raise InvalidRateError(f"the rate exponent gamma must satisfy gamma > 1, got {gamma}")
    if not K > 0:
        raise InvalidRateError(f"K must be positive, got {K}")
    N = int(round((n / K) ** (1.0 / gamma)))
    return max(1, min(N, TimeGrid(n, T).steps))


def fejer_identities(N: int) -> dict:
    """Quadrature checks of the kernel identities on ``[-pi, pi]``.

    Integrates piecewise between consecutive zeros ``2 pi j / N`` so that
    adaptive quadrature sees one smooth lobe at a time. Returns the
    integrals next to their closed forms ``2 pi`` and
    ``2 pi (2N^2 + 1) / (3 N^2)``, plus the largest ``|F_N|`` at the zeros.
    """
    if N < 1:
        raise ValidationError("N must be at least 1")
    edges = np.unique(np.concatenate([[-np.pi, np.pi], 2 * np.pi * np.arange(-(N // 2), N // 2 + 1) / N]))
    edges = edges[(edges >= -np.pi) & (edges <= np.pi)]
    first = second = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        first += quad(lambda x: fejer_kernel(x, N), a, b, epsabs=1e-14, epsrel=1e-13, limit=200)[0]
        second += quad(lambda x: fejer_kernel(x, N) ** 2, a, b, epsabs=1e-14, epsrel=1e-13, limit=200)[0]
    zeros = 2 * np.pi * np.arange(1, N) / N
    return {
        "N": N,
        "integral": first,
        "integral_closed_form": 2 * np.pi,
        "second_moment": second / N,
        "second_moment_closed_form": 2 * np.pi * (2 * N * N + 1) / (3 * N * N),
        "max_abs_at_zeros": float(np.max(np.abs(fejer_kernel(zeros, N)))) if N > 1 else 0.0,
    }
