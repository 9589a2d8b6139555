"""Second-order estimation from a reconstructed covariance path.

The reconstructed path is sampled on a coarse grid ``t_p = p T / m`` and fed
into jump-robust power-variation statistics. For the affine (Wishart-type)
covariance model the limits of those statistics are explicit in the
volatility-of-covariance matrix ``alpha = Sigma^2`` and the leverage vector
``rho``, which are then fitted.

Quadratic covariation in the affine model::

    d<X_ij, X_kl> = (X_ik alpha_jl + X_il alpha_jk + X_jk alpha_il + X_jl alpha_ik) dt
    d<X_ii, Y_i>  = 2 (Sigma rho)_i X_ii dt
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import minimize

from .core import SampledPath, SymMatrixPath, matrix_sqrt_psd
from .errors import (
    DegenerateAlphaError,
    EmptyPathError,
    GridMismatchError,
    NegativeDiagonalError,
    SolverFailureError,
    ValidationError,
)
from .fourier import ClampPolicy, FourierCoefficients, GFunctionSpec, spot_from_coefficients
from .special import abs_normal_moment, bivariate_abs_moment, hyp2f1

GOLDEN = (math.sqrt(5) - 1) / 2


@dataclass(frozen=True)
class SecondPassConfig:
    """Coarse-grid and power choices for the second pass.

    ``m`` is the number of coarse increments; when ``None`` it is
    ``round(k_tilde * n ** iota)``. ``r_diag`` is used for the diagonal entries
    listed in ``jump_components`` (covariance entries that can jump),
    ``r_offdiag`` for every other entry.
    """

    m: Optional[int] = None
    iota: float = 0.2
    k_tilde: float = 1.0
    r_diag: float = 0.25
    r_offdiag: float = 1.0
    r_cross: float = 0.5
    s_cross: float = 0.5
    jump_components: Tuple[int, ...] = (0,)

    def __post_init__(self):
        if self.m is not None and self.m < 2:
            raise ValidationError("m must be at least 2")
        if not 0 < self.iota < 1:
            raise ValidationError("iota must lie in (0, 1)")
        if not 0 < self.r_diag < 1:
            raise ValidationError("r_diag must lie in (0, 1) to damp jumps")
        for name in ("r_offdiag", "r_cross", "k_tilde"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"{name} must be positive")
        if self.s_cross < 0:
            raise ValidationError("s_cross must be nonnegative")
        object.__setattr__(self, "jump_components", tuple(int(c) for c in self.jump_components))

    def resolve_m(self, n: int) -> int:
        if self.m is not None:
            return int(self.m)
        return max(2, int(round(self.k_tilde * n**self.iota)))

    def rate_bound(self, gamma: float, holder: float) -> float:
        """Largest admissible ``iota``: ``(gamma-1)/gamma * holder/(1+holder)``."""
        return (gamma - 1) / gamma * holder / (1 + holder)

    def check_rate(self, gamma: float, holder: float = 1.0):
        bound = self.rate_bound(gamma, holder)
        if not self.iota < bound:
            raise ValidationError(f"iota = {self.iota} must be below {bound:.4f}")

    def power_for(self, i: int, j: int) -> float:
        if i == j and i in self.jump_components:
            return self.r_diag
        return self.r_offdiag


@dataclass
class ParamEstimate:
    alpha_hat: np.ndarray
    rho_hat: np.ndarray
    m: int
    objective_values: Dict[str, float] = field(default_factory=dict)
    iterations: Dict[str, int] = field(default_factory=dict)
    clamp_count: int = 0


# --- statistics -------------------------------------------------------------------

def power_variation(path, r: float, m: Optional[int] = None) -> float:
    """``(1/m) sum_p |sqrt(m) Delta_p path|^r`` for a path sampled at ``m + 1`` points."""
    x = np.asarray(path, dtype=float)
    if m is None:
        m = x.size - 1
    if x.size < m + 1 or m < 1:
        raise EmptyPathError("path needs m + 1 samples")
    if not r > 0:
        raise ValidationError("r must be positive")
    dx = np.diff(x[: m + 1])
    return float(np.mean(np.abs(math.sqrt(m) * dx) ** r))


def coarse_indices(y: SampledPath, m: int) -> np.ndarray:
    """Fine-grid indices of ``t_p = p / m``, ``p = 0 .. floor(m T)``."""
    grid = y.grid
    P = int(math.floor(m * grid.T * (1 + 1e-12)))
    exact = np.arange(P + 1) * grid.n / m
    idx = np.rint(exact).astype(np.int64)
    if idx[-1] > grid.steps or m > grid.n:
        raise GridMismatchError(f"coarse grid with m = {m} does not embed into the observation grid")
    return idx


def coarse_times(m: int, T: float = 1.0) -> np.ndarray:
    P = int(math.floor(m * T * (1 + 1e-12)))
    return np.arange(P + 1) / m


def cross_power_variation(x_path, y: SampledPath, i: int, r: float, s: float, m: Optional[int] = None) -> float:
    """``(1/m) sum_p |sqrt(m) Delta_p X_ii|^r |sqrt(m) Delta_p Y_i|^s``.

    ``x_path`` holds the coarse samples of ``X_ii`` at ``t_p = p / m``; ``Y``
    is read at the nearest fine-grid index.
    """
    x = np.asarray(x_path, dtype=float)
    if m is None:
        m = x.size - 1
    idx = coarse_indices(y, m)
    if idx.size != x.size:
        raise GridMismatchError("x_path length does not match the coarse grid")
    if abs(idx[-1] / y.grid.n - (idx.size - 1) / m) > 0.5 / y.grid.n:
        raise GridMismatchError("coarse grid is not embeddable within half a fine step")
    yi = y.values[idx, i]
    dx = math.sqrt(m) * np.diff(x)
    dy = math.sqrt(m) * np.diff(yi)
    return float(np.mean(np.abs(dx) ** r * np.abs(dy) ** s))


def covcov_estimator(xhat: SymMatrixPath, kind: str = "squares", r: float = 2.0, m: Optional[int] = None) -> np.ndarray:
    """``(1/m) sum_p f(sqrt(m) Delta_p X)`` as a ``(d, d, d, d)`` tensor.

    ``kind="squares"`` uses signed products ``D_ij D_kl`` (realized
    covariation of the covariance); ``kind="power"`` uses
    ``|D_ij|^{r/2} |D_kl|^{r/2}``.
    """
    v = xhat.values
    if m is None:
        m = v.shape[0] - 1
    if m < 1:
        raise EmptyPathError("path needs at least two samples")
    D = math.sqrt(m) * np.diff(v[: m + 1], axis=0)
    if kind == "squares":
        return np.einsum("pij,pkl->ijkl", D, D) / m
    if kind == "power":
        A = np.abs(D) ** (r / 2)
        return np.einsum("pij,pkl->ijkl", A, A) / m
    raise ValidationError(f"unknown covcov kind {kind!r}")


# --- model limits -----------------------------------------------------------------

def _pv_prefactor(r: float) -> float:
    # sqrt(1/pi) 2^{r/2} Gamma((r+1)/2) = E|U|^r
    return abs_normal_moment(r)


def offdiag_qv_weight(x: np.ndarray, i: int, j: int, a_ii: float, a_ij: float, a_jj: float) -> np.ndarray:
    """Instantaneous variance of ``X_ij``: ``a_jj X_ii + 2 a_ij X_ij + a_ii X_jj``."""
    return a_jj * x[..., i, i] + 2 * a_ij * x[..., i, j] + a_ii * x[..., j, j]


def pv12_model(x_path, a11: float, a12: float, a22: float, r: float, i: int = 0, j: int = 1) -> float:
    """Model limit of the off-diagonal power variation.

    ``E|U|^r (1/m) sum_p (a22 X_11 + 2 a12 X_12 + a11 X_22)^{r/2}`` over the
    samples ``p = 1 .. m``; negative combinations are clamped to zero.
    """
    v = np.asarray(getattr(x_path, "values", x_path), dtype=float)[1:]
    comb = offdiag_qv_weight(v, i, j, a11, a12, a22)
    return _pv_prefactor(r) * float(np.mean(np.clip(comb, 0.0, None) ** (r / 2)))


def pv_diag_model(x_path, a_ii: float, r: float, i: int) -> float:
    v = np.asarray(getattr(x_path, "values", x_path), dtype=float)[1:, i, i]
    return _pv_prefactor(r) * (4 * a_ii) ** (r / 2) * float(np.mean(np.clip(v, 0, None) ** (r / 2)))


def leverage_correlation(alpha: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """Correlation between ``dX_ii`` and ``dY_i``: ``(sqrt(alpha) rho)_i / sqrt(alpha_ii)``."""
    alpha = np.asarray(alpha, dtype=float)
    diag = np.diag(alpha)
    if np.any(diag <= 0):
        raise DegenerateAlphaError("alpha must have a positive diagonal")
    c = matrix_sqrt_psd(alpha) @ np.asarray(rho, dtype=float) / np.sqrt(diag)
    return np.clip(c, -1.0, 1.0)


def pc_model(x_path, alpha: np.ndarray, rho: np.ndarray, i: int, r: float, s: float) -> float:
    """Model limit of the cross power variation of ``X_ii`` and ``Y_i``."""
    alpha = np.asarray(alpha, dtype=float)
    if alpha[i, i] <= 0:
        raise DegenerateAlphaError("alpha_ii must be positive")
    rho = np.asarray(rho, dtype=float)
    if rho @ rho > 1 + 1e-12:
        raise ValidationError("rho must satisfy rho^T rho <= 1")
    c = leverage_correlation(alpha, rho)[i]
    v = np.asarray(getattr(x_path, "values", x_path), dtype=float)[1:, i, i]
    mean = float(np.mean(np.clip(v, 0, None) ** ((r + s) / 2)))
    return bivariate_abs_moment(r, s, c) * (4 * alpha[i, i]) ** (r / 2) * mean


def _pc_from_corr(c: float, a_ii: float, mean_pow: float, r: float, s: float) -> float:
    return bivariate_abs_moment(r, s, c) * (4 * a_ii) ** (r / 2) * mean_pow


# --- optimizers -------------------------------------------------------------------

def golden_section(f, lo: float, hi: float, tol: float = 1e-10, scan: int = 201):
    """Minimize ``f`` on ``[lo, hi]``: coarse scan, then golden section in the best bracket."""
    if hi < lo:
        raise ValidationError("empty interval")
    if hi == lo:
        return lo, f(lo), 0
    xs = np.linspace(lo, hi, scan)
    fs = np.array([f(x) for x in xs])
    k = int(np.argmin(fs))
    a = xs[max(k - 1, 0)]
    b = xs[min(k + 1, scan - 1)]
    c = b - GOLDEN * (b - a)
    d = a + GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    it = 0
    while b - a > tol and it < 500:
        it += 1
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + GOLDEN * (b - a)
            fd = f(d)
    x = 0.5 * (a + b)
    fx = f(x)
    if fs[k] < fx:
        return float(xs[k]), float(fs[k]), it
    return float(x), float(fx), it


def power_variation_targets(xhat, cfg: SecondPassConfig = SecondPassConfig()) -> np.ndarray:
    """Power variations of every entry of the coarse path, powers from ``cfg``."""
    v = np.asarray(getattr(xhat, "values", xhat), dtype=float)
    if v.ndim != 3 or v.shape[0] < 3:
        raise EmptyPathError("need at least three coarse samples")
    d = v.shape[1]
    m = v.shape[0] - 1
    out = np.empty((d, d))
    for i in range(d):
        for j in range(i, d):
            out[i, j] = out[j, i] = power_variation(v[:, i, j], cfg.power_for(i, j), m)
    return out


def estimate_alpha_diag(target: float, xhat: np.ndarray, r: float, i: int) -> float:
    """Closed-form ``alpha_ii = (1/8) (V / (E|U|^r 2^{-r/2} mean X^{r/2}))^{2/r}``."""
    xs = xhat[1:, i, i]
    if np.any(xs < 0):
        raise NegativeDiagonalError(f"reconstructed X_{i + 1}{i + 1} has negative samples")
    denom = _pv_prefactor(r) / 2 ** (r / 2) * float(np.mean(xs ** (r / 2)))
    if denom <= 0:
        raise NegativeDiagonalError("reconstructed diagonal is identically zero")
    return (target / denom) ** (2 / r) / 8.0


def fit_alpha(targets: np.ndarray, xhat, cfg: SecondPassConfig = SecondPassConfig()):
    """Fit ``alpha`` to power-variation targets given the coarse path ``xhat``.

    Diagonal entries are closed form; each off-diagonal entry is a golden
    section search over ``|a| <= sqrt(a_ii a_jj)``.
    """
    v = np.asarray(getattr(xhat, "values", xhat), dtype=float)
    targets = np.asarray(targets, dtype=float)
    d = v.shape[1]
    alpha = np.zeros((d, d))
    for i in range(d):
        alpha[i, i] = estimate_alpha_diag(targets[i, i], v, cfg.power_for(i, i), i)
    residuals, iters = {}, {}
    for i in range(d):
        for j in range(i + 1, d):
            r = cfg.power_for(i, j)
            target = targets[i, j]
            bound = math.sqrt(alpha[i, i] * alpha[j, j])

            def obj(a, i=i, j=j, r=r, target=target):
                return (target - pv12_model(v, alpha[i, i], a, alpha[j, j], r, i, j)) ** 2

            a_hat, f_hat, it = golden_section(obj, -bound, bound)
            alpha[i, j] = alpha[j, i] = a_hat
            residuals[f"alpha{i + 1}{j + 1}"] = f_hat
            iters[f"alpha{i + 1}{j + 1}"] = it
    return alpha, residuals, iters


def estimate_alpha(xhat, cfg: SecondPassConfig = SecondPassConfig()) -> Tuple[np.ndarray, Dict[str, float], Dict[str, int]]:
    """Fit ``alpha`` from the coarse samples of the reconstructed path.

    Returns the estimate together with per-entry squared residuals and
    optimizer iteration counts.
    """
    v = np.asarray(getattr(xhat, "values", xhat), dtype=float)
    return fit_alpha(power_variation_targets(v, cfg), v, cfg)


def _disk_grid(d: int, points: int = 41) -> np.ndarray:
    axis = np.linspace(-1.0, 1.0, points)
    mesh = np.stack(np.meshgrid(*([axis] * d), indexing="ij"), axis=-1).reshape(-1, d)
    # meshgrid with ij indexing already enumerates candidates in lexicographic order
    return mesh[np.einsum("ij,ij->i", mesh, mesh) <= 1 + 1e-12]


def estimate_rho(
    xhat, y: SampledPath, alpha_hat: np.ndarray, cfg: SecondPassConfig = SecondPassConfig(), grid_points: int = 41
) -> Tuple[np.ndarray, float, int]:
    """Least-squares fit of ``rho`` on the unit ball.

    The objective depends on ``rho`` only through the squared correlations
    ``c_i^2``, so ``rho`` and ``-rho`` are exact ties; the grid scan keeps
    the lexicographically smallest minimizer and the simplex refinement
    starts from it.
    """
    v = np.asarray(getattr(xhat, "values", xhat), dtype=float)
    d = v.shape[1]
    m = v.shape[0] - 1
    r, s = cfg.r_cross, cfg.s_cross
    alpha_hat = np.asarray(alpha_hat, dtype=float)
    if np.any(np.diag(alpha_hat) <= 0):
        raise DegenerateAlphaError("alpha_hat must have a positive diagonal")
    targets = np.array([cross_power_variation(v[:, i, i], y, i, r, s, m) for i in range(d)])
    return fit_rho(targets, v, alpha_hat, r, s, grid_points)


def fit_rho(targets, v, alpha_hat, r, s, grid_points: int = 41):
    """Fit ``rho`` to given cross-variation targets (shared by the estimator and tests)."""
    d = v.shape[1]
    root = matrix_sqrt_psd(alpha_hat)
    sd = np.sqrt(np.diag(alpha_hat))
    means = np.array([float(np.mean(np.clip(v[1:, i, i], 0, None) ** ((r + s) / 2))) for i in range(d)])
    scale = np.array([(4 * alpha_hat[i, i]) ** (r / 2) * means[i] for i in range(d)])
    pref = 2 ** ((r + s) / 2) * math.gamma((r + 1) / 2) * math.gamma((s + 1) / 2) / math.pi


    def objective(rho):
        rho = np.asarray(rho, dtype=float)
        if rho @ rho > 1.0:
            return np.inf
        c2 = np.minimum(((root @ rho) / sd) ** 2, 1 - 1e-8)
        model = np.array([pref * hyp2f1(-r / 2, -s / 2, 0.5, c2[i]) * scale[i] for i in range(d)])
        return float(np.sum((targets - model) ** 2))

    cands = _disk_grid(d, grid_points)
    vals = np.array([objective(c) for c in cands])
    k = int(np.argmin(vals))  # first minimum = lexicographically smallest candidate
    start, best = cands[k], vals[k]
    res = minimize(objective, start, method="Nelder-Mead",
                   options={"xatol": 1e-10, "fatol": 1e-20, "maxiter": 4000})
    if not np.isfinite(res.fun):
        raise SolverFailureError("simplex refinement left the feasible set")
    if res.fun <= best:
        return np.asarray(res.x), float(res.fun), int(res.nit)
    if res.fun > best * (1 + 1e-12) + 1e-300:
        raise SolverFailureError("refinement did not improve on the grid minimum")
    return start, float(best), int(res.nit)


def estimate_parameters(
    coeffs: FourierCoefficients,
    spec: GFunctionSpec,
    y: SampledPath,
    cfg: SecondPassConfig = SecondPassConfig(),
    m: Optional[int] = None,
    clamp_policy: ClampPolicy = ClampPolicy(),
) -> ParamEstimate:
    """Second pass for one coarse size ``m``: reconstruct on ``p/m``, fit alpha, then rho."""
    m = int(m if m is not None else cfg.resolve_m(y.grid.n))
    times = coarse_times(m, y.grid.T)
    coarse_indices(y, m)  # validates embedding
    spot = spot_from_coefficients(coeffs, spec, clamp_policy, eval_times=times)
    xhat = spot.x_path.values
    alpha, res_a, it_a = estimate_alpha(xhat, cfg)
    rho, f_rho, it_rho = estimate_rho(xhat, y, alpha, cfg)
    res_a["rho"] = f_rho
    it_a["rho"] = it_rho
    return ParamEstimate(alpha, rho, m, res_a, it_a, spot.clamp_count)


def estimate_parameters_over_m(coeffs, spec, y, m_values: Sequence[int], cfg=SecondPassConfig(),
                               clamp_policy: ClampPolicy = ClampPolicy()) -> List[ParamEstimate]:
    return [estimate_parameters(coeffs, spec, y, cfg, m, clamp_policy) for m in m_values]
