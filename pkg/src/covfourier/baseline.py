"""Local realized-variance spot estimator and James-Stein shrinkage."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import SampledPath, SymMatrixPath
from .errors import BlockTooSmallError, TooFewPointsError, ValidationError


@dataclass(frozen=True)
class LocalEstimate:
    """Block-constant spot estimate.

    ``values`` holds one matrix per block ``[t_{j-1}, t_j]`` with
    ``t_j = j T / N``; ``values.times`` are the block right endpoints.
    """

    values: SymMatrixPath
    block_edges: np.ndarray  # increment index where each block starts, plus the end
    T: float

    @property
    def N(self) -> int:
        return len(self.values)

    @property
    def block_size(self) -> int:
        return int(np.min(np.diff(self.block_edges)))

    def at(self, t) -> np.ndarray:
        """Evaluate the step function; block j covers ``[t_{j-1}, t_j)``, the last block includes T."""
        t = np.asarray(t, dtype=float)
        j = np.clip(np.floor(t * self.N / self.T).astype(np.int64), 0, self.N - 1)
        return self.values.values[j]


def block_edges(steps: int, N: int) -> np.ndarray:
    """Start indices of ``N`` equal blocks of increments; the last block takes the remainder."""
    size = steps // N
    edges = np.arange(N + 1) * size
    edges[-1] = steps
    return edges


def local_spot_estimator(y: SampledPath, N: int) -> LocalEstimate:
    """``(N/T) sum_{m in block j} dY_m dY_m^T`` on each of ``N`` blocks."""
    steps = y.grid.steps
    if N < 1:
        raise ValidationError(f"block count must be positive, got {N}")
    if N > steps:
        raise BlockTooSmallError(f"{N} blocks but only {steps} increments")
    T = y.grid.T
    edges = block_edges(steps, N)
    dy = y.increments()
    outer = dy[:, :, None] * dy[:, None, :]
    sums = np.add.reduceat(outer, edges[:-1], axis=0)
    vals = sums * (N / T)
    times = (np.arange(1, N + 1) * T) / N
    return LocalEstimate(SymMatrixPath(times, vals), edges, T)


def james_stein_shrink(spot, noise_var: float, positive_part: bool = False) -> np.ndarray:
    """Shrink spot values toward their cross-sectional mean.

    Factor ``1 - (M - 2) noise_var / sum_i (spot_i - mean)^2`` multiplies the
    deviations. The plain factor may be negative; ``positive_part`` floors it
    at zero.
    """
    x = np.asarray(spot, dtype=float)
    M = x.shape[0]
    if M < 3:
        raise TooFewPointsError("James-Stein shrinkage needs at least 3 points")
    if noise_var < 0:
        raise ValidationError("noise variance must be nonnegative")
    mean = x.mean(axis=0)
    dev = x - mean
    ss = np.sum(dev**2, axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        factor = np.where(ss > 0, 1.0 - (M - 2) * noise_var / np.where(ss > 0, ss, 1.0), 1.0)
    if positive_part:
        factor = np.maximum(factor, 0.0)
    return mean + factor * dev


def plugin_noise_variance(spot, n: int, N: int) -> float:
    """``2 Xbar^2 N / n`` with ``Xbar`` the cross-sectional mean of the raw estimates."""
    xbar = float(np.mean(spot))
    return 2.0 * xbar**2 * N / n
