"""Truncated spectral initialization of the column span and rank estimation."""

import json
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateDataError, NoRankDetectedError, ParameterError
from .linalg import hermitian
from .sensing import batch


@dataclass(frozen=True)
class KnownRank:
    r: int

    def __post_init__(self):
        if self.r < 1:
            raise ParameterError("known rank must be >= 1")


@dataclass(frozen=True)
class Threshold:
    omega: float

    def __post_init__(self):
        if not self.omega > 0:
            raise ParameterError("omega must be positive")


@dataclass(eq=False)
class SpectralInit:
    Y_U: np.ndarray
    eigenvalues: np.ndarray
    r_hat: int
    U0: np.ndarray

    def to_dict(self):
        return {"eigenvalues": self.eigenvalues.tolist(), "r_hat": self.r_hat}

    def dump(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)


def default_omega(sigma_min, q):
    return 1.3 * sigma_min**2 / q


def build_YU(ms, kappa, mu, trunc_const=9.0, tau=0):
    """Truncated second-moment matrix of the initialization partition.

    ``Y_U = (1/mq) sum_ik y_ik^2 a_ik a_ik^H 1{y_ik^2 <= C kappa^2 mu^2 mean(y^2)}``
    with ``C = trunc_const``. All-zero data yields the zero matrix.
    """
    if kappa < 1 or mu < 1:
        raise ParameterError("kappa and mu must be >= 1")
    y = ms.y_partition(tau)
    q, m = y.shape
    y2 = y**2
    threshold = trunc_const * kappa**2 * mu**2 * y2.mean()
    w = np.where(y2 <= threshold, y2, 0.0) / (m * q)
    Y = np.zeros((ms.n, ms.n), dtype=ms.field.dtype)
    for k, _, A in batch(ms, tau):
        Y += (A * w[k]) @ hermitian(A)
    return 0.5 * (Y + hermitian(Y))


def estimate_rank(eigenvalues, omega):
    """Largest 1-based ``j`` with ``lambda_j - lambda_n >= omega``; 0 if none."""
    lam = np.asarray(eigenvalues, dtype=float)
    if lam.ndim != 1 or lam.size == 0:
        raise ParameterError("eigenvalues must be a non-empty vector")
    if np.any(np.diff(lam) > 0):
        raise ParameterError("eigenvalues must be sorted non-increasing")
    hits = np.flatnonzero(lam - lam[-1] >= omega)
    return int(hits[-1] + 1) if hits.size else 0


def spectral_init(ms, kappa, mu, rank_mode, trunc_const=9.0):
    """Top-``r_hat`` eigenvectors of ``Y_U``; ``rank_mode`` is KnownRank or Threshold."""
    Y = build_YU(ms, kappa, mu, trunc_const)
    if not np.any(Y):
        raise DegenerateDataError("initialization partition carries no energy (all y = 0)")
    vals, vecs = np.linalg.eigh(Y)
    vals, vecs = vals[::-1], vecs[:, ::-1]
    if isinstance(rank_mode, KnownRank):
        r_hat = rank_mode.r
        if r_hat > ms.n:
            raise ParameterError(f"rank {r_hat} exceeds n={ms.n}")
    elif isinstance(rank_mode, Threshold):
        r_hat = estimate_rank(vals, rank_mode.omega)
        if r_hat == 0:
            raise NoRankDetectedError(f"no eigenvalue gap reaches omega={rank_mode.omega:.3e}")
    else:
        raise ParameterError(f"unknown rank mode {rank_mode!r}")
    return SpectralInit(Y_U=Y, eigenvalues=vals, r_hat=r_hat, U0=vecs[:, :r_hat].copy())
