"""Euler simulation of a multivariate Bates-type affine model.

The log-price ``Y`` is a jump diffusion driven by the stochastic covariance
``X``; ``X`` follows a Wishart-type affine SDE

    dX = (b + M X + X M^T) dt + sqrt(X) dB Sigma + Sigma dB^T sqrt(X) + dJ^X

where only ``X_11`` jumps (exponential marks) and ``Y_i`` carries
compound-Poisson Gaussian jumps. ``Z = sqrt(1 - rho^T rho) W + B rho`` links
the price and covariance noise.

Random numbers are drawn per replication from streams derived from a master
seed and the replication index, so a replication's path does not depend on
how many other replications are simulated alongside it.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .core import (
    PSD_TOL,
    SampledPath,
    SymMatrixPath,
    TimeGrid,
    matrix_sqrt_psd,
    psd_project_2x2,
    sqrt_psd_2x2,
)
from .errors import DegenerateStepError, InvalidParamsError

logger = logging.getLogger(__name__)

_BLOCK = 512
_DEGENERATE_CLIP_FRACTION = 0.1


def _as_matrix(a, d, name):
    a = np.asarray(a, dtype=float)
    if a.shape != (d, d):
        raise InvalidParamsError(f"{name} must be {d}x{d}, got shape {a.shape}")
    return a


def _is_psd(a, tol=PSD_TOL):
    if not np.allclose(a, a.T, rtol=0, atol=1e-12 * max(1.0, np.abs(a).max())):
        return False
    w = np.linalg.eigvalsh(0.5 * (a + a.T))
    return w[0] >= -tol * max(float(np.trace(a)), 1e-300)


@dataclass(frozen=True)
class BatesParams:
    """Parameters of the Bates-type model.

    ``alpha`` is ``Sigma^2``; ``Sigma`` itself is recomputed on demand.
    ``theta`` is the mean of the exponential jump marks of ``X_11``.
    ``jump_compensator`` selects the Y drift correction for jumps:
    ``"exact"`` uses ``exp(mu + sigma^2/2) - 1`` (the mean of ``e^J - 1``,
    which makes ``exp(Y)`` a martingale); ``"displayed"`` uses
    ``exp(mu - sigma^2/2) - 1``.
    """

    y0: np.ndarray
    x0: np.ndarray
    M: np.ndarray
    alpha: np.ndarray
    b: np.ndarray
    rho: np.ndarray
    lambda_y: np.ndarray
    jump_mu: np.ndarray
    jump_sigma: np.ndarray
    lambda_x11: float = 0.0
    theta: float = 0.05
    jump_compensator: str = "exact"

    def __post_init__(self):
        y0 = np.atleast_1d(np.asarray(self.y0, dtype=float))
        d = y0.size
        object.__setattr__(self, "y0", y0)
        for name in ("x0", "M", "alpha", "b"):
            object.__setattr__(self, name, _as_matrix(getattr(self, name), d, name))
        for name in ("rho", "lambda_y", "jump_mu", "jump_sigma"):
            v = np.atleast_1d(np.asarray(getattr(self, name), dtype=float))
            if v.shape != (d,):
                raise InvalidParamsError(f"{name} must have length {d}")
            object.__setattr__(self, name, v)
        object.__setattr__(self, "lambda_x11", float(self.lambda_x11))
        object.__setattr__(self, "theta", float(self.theta))
        self.validate()

    @property
    def d(self) -> int:
        return self.y0.size

    @property
    def sigma(self) -> np.ndarray:
        return matrix_sqrt_psd(self.alpha)

    def validate(self):
        d = self.d
        if not _is_psd(self.x0):
            raise InvalidParamsError("x0 must be symmetric positive semidefinite")
        if not _is_psd(self.alpha):
            raise InvalidParamsError("alpha must be symmetric positive semidefinite")
        if not np.allclose(self.b, self.b.T):
            raise InvalidParamsError("b must be symmetric")
        if not _is_psd(self.b - (d - 1) * self.alpha):
            raise InvalidParamsError("b - (d-1) alpha must be positive semidefinite")
        if np.any(np.abs(self.rho) > 1) or self.rho @ self.rho > 1 + 1e-12:
            raise InvalidParamsError("rho must lie in [-1, 1]^d with rho^T rho <= 1")
        if np.any(self.lambda_y < 0) or self.lambda_x11 < 0:
            raise InvalidParamsError("jump intensities must be nonnegative")
        if np.any(self.jump_sigma < 0):
            raise InvalidParamsError("jump_sigma must be nonnegative")
        if self.lambda_x11 > 0 and not self.theta > 0:
            raise InvalidParamsError("theta must be positive")
        if self.jump_compensator not in ("exact", "displayed"):
            raise InvalidParamsError("jump_compensator must be 'exact' or 'displayed'")

    def y_drift_constant(self) -> np.ndarray:
        """Jump compensator ``lambda_i (E[e^J] - 1)`` subtracted from the Y drift."""
        sign = 0.5 if self.jump_compensator == "exact" else -0.5
        return self.lambda_y * np.expm1(self.jump_mu + sign * self.jump_sigma**2)

    @classmethod
    def reference(cls, **overrides) -> "BatesParams":
        """The two-dimensional reference parameter set."""
        alpha = np.array([[0.0725, 0.06], [0.06, 0.1325]])
        base = dict(
            y0=np.zeros(2),
            x0=np.array([[0.09, -0.036], [-0.036, 0.09]]),
            M=np.array([[-1.6, -0.2], [-0.4, -1.0]]),
            alpha=alpha,
            b=3.5 * alpha,
            rho=np.array([-0.3, -0.5]),
            lambda_y=np.array([100.0, 100.0]),
            jump_mu=np.array([-0.005, -0.003]),
            jump_sigma=np.array([0.015, 0.02]),
            lambda_x11=10.0,
            theta=0.05,
        )
        base.update(overrides)
        return cls(**base)

    @classmethod
    def constant_covariance(cls, x: np.ndarray) -> "BatesParams":
        """Driftless, jump-free design with ``X`` frozen at ``x``."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        d = x.shape[0]
        z = np.zeros((d, d))
        return cls(
            y0=np.zeros(d), x0=x, M=z, alpha=z, b=z, rho=np.zeros(d),
            lambda_y=np.zeros(d), jump_mu=np.zeros(d), jump_sigma=np.zeros(d),
            lambda_x11=0.0,
        )

    def with_(self, **changes) -> "BatesParams":
        return replace(self, **changes)


@dataclass(frozen=True)
class JumpLog:
    """Jumps of one replication: fine-grid step index (1-based), component, mark."""

    step: np.ndarray
    component: np.ndarray
    mark: np.ndarray

    def times(self, grid: TimeGrid) -> np.ndarray:
        return self.step / grid.n

    def __len__(self):
        return self.step.size

    def as_records(self, grid: TimeGrid) -> List[Tuple[float, int, float]]:
        return list(zip(self.times(grid).tolist(), self.component.tolist(), self.mark.tolist()))


@dataclass(frozen=True)
class SimOutput:
    y_path: SampledPath
    x_path: SymMatrixPath
    y_jumps: JumpLog
    x_jumps: JumpLog
    psd_clip_count: int
    params: Optional[BatesParams] = field(default=None, repr=False)

    @property
    def grid(self) -> TimeGrid:
        return self.y_path.grid

    @property
    def y_jump_times(self):
        return self.y_jumps.as_records(self.grid)

    @property
    def x_jump_times(self):
        return self.x_jumps.as_records(self.grid)


@dataclass
class BatchOutput:
    """Raw arrays for a batch of replications (leading axis = replication)."""

    grid: TimeGrid
    replications: np.ndarray
    y_final: np.ndarray
    x_final: np.ndarray
    y: Optional[np.ndarray]
    x: Optional[np.ndarray]
    y_jumps: List[JumpLog]
    x_jumps: List[JumpLog]
    psd_clip_count: np.ndarray

    def output(self, k: int, params: Optional[BatesParams] = None) -> SimOutput:
        if self.y is None or self.x is None:
            raise ValueError("batch was simulated without storing paths")
        return SimOutput(
            y_path=SampledPath(self.grid, self.y[k]),
            x_path=SymMatrixPath(self.grid.times(), self.x[k]),
            y_jumps=self.y_jumps[k],
            x_jumps=self.x_jumps[k],
            psd_clip_count=int(self.psd_clip_count[k]),
            params=params,
        )


def replication_seed(seed: int, replication: int, stream: int = 0) -> np.random.SeedSequence:
    """Seed sequence for one replication.

    The replication index and a stream label are mixed in through the
    ``spawn_key``, giving independent, order-free streams.
    """
    return np.random.SeedSequence(int(seed) & 0xFFFFFFFFFFFFFFFF, spawn_key=(int(replication), int(stream)))


def _draw_jumps(params: BatesParams, steps: int, h: float, rng_y, rng_x):
    d = params.d
    st, comp, mk = [], [], []
    for i in range(d):
        lam = params.lambda_y[i] * h
        if lam <= 0:
            continue
        counts = rng_y.poisson(lam, steps)
        idx = np.nonzero(counts)[0]
        reps = counts[idx]
        marks = rng_y.normal(params.jump_mu[i], params.jump_sigma[i], int(reps.sum()))
        st.append(np.repeat(idx + 1, reps))
        comp.append(np.full(marks.size, i))
        mk.append(marks)
    y_log = _sorted_log(st, comp, mk)

    xs, xc, xm = [], [], []
    if params.lambda_x11 > 0:
        counts = rng_x.poisson(params.lambda_x11 * h, steps)
        idx = np.nonzero(counts)[0]
        reps = counts[idx]
        marks = rng_x.exponential(params.theta, int(reps.sum()))
        xs.append(np.repeat(idx + 1, reps))
        xc.append(np.zeros(marks.size, dtype=np.int64))
        xm.append(marks)
    return y_log, _sorted_log(xs, xc, xm)


def _sorted_log(st, comp, mk) -> JumpLog:
    if not st:
        e = np.zeros(0, dtype=np.int64)
        return JumpLog(e, e.copy(), np.zeros(0))
    s = np.concatenate(st).astype(np.int64)
    c = np.concatenate(comp).astype(np.int64)
    m = np.concatenate(mk)
    order = np.lexsort((c, s))
    return JumpLog(s[order], c[order], m[order])


def _dense_block(log: JumpLog, start: int, stop: int, d: int) -> np.ndarray:
    """Per-step summed jump marks for 1-based steps ``start+1 .. stop``."""
    out = np.zeros((stop - start, d))
    lo, hi = np.searchsorted(log.step, [start + 1, stop + 1])
    if hi > lo:
        np.add.at(out, (log.step[lo:hi] - start - 1, log.component[lo:hi]), log.mark[lo:hi])
    return out


def _mm(a, b):
    return np.einsum("...ij,...jk->...ik", a, b)


def _sqrt_stack(x):
    if x.shape[-1] == 2:
        return sqrt_psd_2x2(x)
    w, v = np.linalg.eigh(x)
    return _mm(v * np.sqrt(np.clip(w, 0, None))[..., None, :], np.swapaxes(v, -1, -2))


def _project_stack(x):
    if x.shape[-1] == 2:
        return psd_project_2x2(x)
    x = 0.5 * (x + np.swapaxes(x, -1, -2))
    w, v = np.linalg.eigh(x)
    neg = w < 0
    clipped = -np.where(neg, w, 0).sum(axis=-1)
    bad = neg.any(axis=-1)
    out = x.copy()
    if np.any(bad):
        wb = np.where(neg[bad], 0, w[bad])
        vb = v[bad]
        p = _mm(vb * wb[..., None, :], np.swapaxes(vb, -1, -2))
        out[bad] = 0.5 * (p + np.swapaxes(p, -1, -2))
    return out, clipped


def simulate_bates_batch(
    params: BatesParams,
    grid: TimeGrid,
    seed: int,
    replications: Sequence[int] | int = 1,
    store_paths: bool = True,
) -> BatchOutput:
    """Simulate several replications at once.

    Parameters
    ----------
    replications
        Either a count ``R`` (indices ``0..R-1``) or explicit replication
        indices. Each index owns its random streams, so the result for a
        given index is identical whatever batch it is simulated in.
    store_paths
        If false only terminal values are kept (memory-light Monte Carlo).
    """
    if grid.n < 100:
        raise InvalidParamsError("grid.n must be at least 100 for the Euler scheme")
    reps = np.arange(replications) if np.isscalar(replications) else np.asarray(replications, dtype=np.int64)
    R = reps.size
    d = params.d
    L = grid.steps
    h = grid.dt
    sqrt_h = np.sqrt(h)
    sigma = params.sigma
    rho = params.rho
    w_coef = np.sqrt(max(1.0 - rho @ rho, 0.0))
    jump_comp = params.y_drift_constant()

    normal_rngs = []
    y_logs, x_logs = [], []
    for r in reps:
        normal_rngs.append(np.random.Generator(np.random.PCG64(replication_seed(seed, r, 0))))
        rng_y = np.random.Generator(np.random.PCG64(replication_seed(seed, r, 1)))
        rng_x = np.random.Generator(np.random.PCG64(replication_seed(seed, r, 2)))
        yl, xl = _draw_jumps(params, L, h, rng_y, rng_x)
        y_logs.append(yl)
        x_logs.append(xl)

    X = np.broadcast_to(params.x0, (R, d, d)).copy()
    Y = np.broadcast_to(params.y0, (R, d)).copy()
    y_store = x_store = None
    if store_paths:
        y_store = np.empty((R, L + 1, d))
        x_store = np.empty((R, L + 1, d, d))
        y_store[:, 0] = Y
        x_store[:, 0] = X
    clip_count = np.zeros(R, dtype=np.int64)
    nz = d * d + d

    # constant-coefficient shortcut: no diffusion in X means no projection needed
    x_diffuses = np.any(sigma != 0)

    for start in range(0, L, _BLOCK):
        stop = min(start + _BLOCK, L)
        B = stop - start
        z = np.stack([g.standard_normal((B, nz)) for g in normal_rngs]) * sqrt_h
        yj = np.stack([_dense_block(lg, start, stop, d) for lg in y_logs])
        xj = np.stack([_dense_block(lg, start, stop, 1)[:, 0] for lg in x_logs])
        for k in range(B):
            dB = z[:, k, : d * d].reshape(R, d, d)
            dW = z[:, k, d * d:]
            dZ = w_coef * dW + np.einsum("rij,j->ri", dB, rho)
            S = _sqrt_stack(X)
            diag = np.einsum("rii->ri", X)
            dY = (-0.5 * diag - jump_comp) * h + np.einsum("rij,rj->ri", S, dZ) + yj[:, k]
            drift = params.b + _mm(params.M, X) + _mm(X, params.M.T)
            Xn = X + drift * h
            if x_diffuses:
                noise = _mm(_mm(S, dB), sigma)
                Xn = Xn + noise + np.swapaxes(noise, -1, -2)
                Xn, clipped = _project_stack(Xn)
                hit = clipped > 0
                if np.any(hit):
                    clip_count += hit
                    trace = np.einsum("rii->r", X)
                    if np.any(clipped > _DEGENERATE_CLIP_FRACTION * np.maximum(trace, 1e-300)):
                        raise DegenerateStepError(
                            f"PSD projection clipped more than 10% of the trace at step {start + k + 1}; "
                            "refine the grid"
                        )
            Xn[:, 0, 0] += xj[:, k]
            X = Xn
            Y = Y + dY
            if store_paths:
                y_store[:, start + k + 1] = Y
                x_store[:, start + k + 1] = X

    total_clips = int(clip_count.sum())
    if total_clips:
        logger.debug("PSD projection active in %d steps across %d replications", total_clips, R)
    return BatchOutput(
        grid=grid, replications=reps, y_final=Y, x_final=X, y=y_store, x=x_store,
        y_jumps=y_logs, x_jumps=x_logs, psd_clip_count=clip_count,
    )


def simulate_bates(params: BatesParams, grid: TimeGrid, seed: int, replication: int = 0) -> SimOutput:
    """Simulate one replication on the fine grid (Euler, left-point coefficients)."""
    batch = simulate_bates_batch(params, grid, seed, [replication], store_paths=True)
    return batch.output(0, params)


def strip_jumps(out: SimOutput) -> SimOutput:
    """Subtract the recorded jump marks cumulatively from ``Y`` and ``X_11``."""
    grid = out.grid
    d = out.y_path.d
    L = grid.steps
    yj = _dense_block(out.y_jumps, 0, L, d)
    xj = _dense_block(out.x_jumps, 0, L, 1)[:, 0]
    y = out.y_path.values - np.vstack([np.zeros((1, d)), np.cumsum(yj, axis=0)])
    x = out.x_path.values.copy()
    x[:, 0, 0] -= np.concatenate([[0.0], np.cumsum(xj)])
    empty = JumpLog(np.zeros(0, np.int64), np.zeros(0, np.int64), np.zeros(0))
    return SimOutput(
        y_path=SampledPath(grid, y),
        x_path=SymMatrixPath(out.x_path.times, x),
        y_jumps=empty,
        x_jumps=empty,
        psd_clip_count=out.psd_clip_count,
        params=out.params,
    )


def constant_covariance_increments(
    x: np.ndarray, grid: TimeGrid, seed: int, replications: Sequence[int] | int
) -> np.ndarray:
    """Brownian increments with frozen covariance ``x``, shape ``(R, steps, d)``.

    Exact (no discretization) and much cheaper than the Euler loop; used by the
    Monte Carlo designs where ``X`` is constant.
    """
    x = np.atleast_2d(np.asarray(x, dtype=float))
    root = matrix_sqrt_psd(x)
    reps = np.arange(replications) if np.isscalar(replications) else np.asarray(replications)
    L = grid.steps
    out = np.empty((reps.size, L, x.shape[0]))
    for k, r in enumerate(reps):
        g = np.random.Generator(np.random.PCG64(replication_seed(seed, r, 0)))
        out[k] = g.standard_normal((L, x.shape[0])) @ root * np.sqrt(grid.dt)
    return out
