"""Phase-invariant distances and subspace errors."""

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, ValidationError
from .linalg import check_orthonormal_columns, hermitian, phase

SPECTRAL = "spectral"
FROBENIUS = "frobenius"


@dataclass
class ErrorReport:
    se2: float
    sef: float
    matdist_rel: float
    per_column_dist: np.ndarray


def _overlap(X_hat, X_star):
    # per-column <x_hat, x>; split real products keep <x, x> exactly real,
    # which a fused complex multiply does not
    if not (np.iscomplexobj(X_star) or np.iscomplexobj(X_hat)):
        return np.sum(X_hat * X_star, axis=0)
    a, b = np.asarray(X_hat, complex), np.asarray(X_star, complex)
    re = np.sum(a.real * b.real + a.imag * b.imag, axis=0)
    im = np.sum(a.real * b.imag - a.imag * b.real, axis=0)
    return re + 1j * im


def _column_dists_sq(X_star, X_hat):
    # ||x||^2 + ||x_hat||^2 - 2|<x_hat, x>| evaluated as ||x - z x_hat||^2 at the
    # optimal unit factor z; the expanded form cancels to ~sqrt(eps) accuracy.
    z = phase(_overlap(X_hat, X_star))
    return np.sum(np.abs(X_star - z * X_hat) ** 2, axis=0)


def dist(x_star, x_hat):
    """``min_theta ||x* - exp(-j theta) x_hat||``."""
    x_star = np.asarray(x_star)
    x_hat = np.asarray(x_hat)
    if x_star.shape != x_hat.shape or x_star.ndim != 1:
        raise DimensionError(f"vector shapes differ: {x_star.shape} vs {x_hat.shape}")
    return float(np.sqrt(_column_dists_sq(x_star[:, None], x_hat[:, None])[0]))


def column_dists(X_star, X_hat):
    X_star = np.asarray(X_star)
    X_hat = np.asarray(X_hat)
    if X_star.shape != X_hat.shape:
        raise DimensionError(f"matrix shapes differ: {X_star.shape} vs {X_hat.shape}")
    return np.sqrt(_column_dists_sq(X_star, X_hat))


def matdist(X_star, X_hat):
    return float(np.sqrt(np.sum(column_dists(X_star, X_hat) ** 2)))


def subspace_error(U1, U2, mode=FROBENIUS):
    """``||(I - U1 U1^H) U2||`` in spectral or Frobenius norm."""
    U1 = check_orthonormal_columns(np.asarray(U1), name="U1")
    U2 = check_orthonormal_columns(np.asarray(U2), name="U2")
    if U1.shape != U2.shape:
        raise DimensionError(f"basis shapes differ: {U1.shape} vs {U2.shape}")
    P = U2 - U1 @ (hermitian(U1) @ U2)
    if mode == SPECTRAL:
        return float(np.linalg.norm(P, 2))
    if mode == FROBENIUS:
        return float(np.linalg.norm(P, "fro"))
    raise ValidationError(f"unknown subspace error mode {mode!r}")


def se2(U1, U2):
    return subspace_error(U1, U2, SPECTRAL)


def sef(U1, U2):
    return subspace_error(U1, U2, FROBENIUS)


def phase_align_columns(X_star, X_hat):
    """Rotate each column of ``X_hat`` onto ``X_star``.

    Returns ``(aligned, unaligned_mask)``; columns with zero overlap are left
    untouched and flagged in the mask.
    """
    X_star = np.asarray(X_star)
    X_hat = np.asarray(X_hat)
    if X_star.shape != X_hat.shape:
        raise DimensionError(f"matrix shapes differ: {X_star.shape} vs {X_hat.shape}")
    inner = _overlap(X_hat, X_star)
    zero = inner == 0
    z = phase(inner)
    if not np.iscomplexobj(X_hat) and not np.iscomplexobj(X_star):
        z = z.real
    return X_hat * z, zero


def error_report(X_star, X_hat, U_star=None, U=None):
    d = column_dists(X_star, X_hat)
    total = np.linalg.norm(X_star)
    matdist_rel = float(np.sqrt(np.sum(d**2)) / total) if total > 0 else float(np.sqrt(np.sum(d**2)))
    s2 = sf = float("nan")
    if U_star is not None and U is not None and np.shape(U_star) == np.shape(U):
        s2, sf = se2(U_star, U), sef(U_star, U)
    return ErrorReport(se2=s2, sef=sf, matdist_rel=matdist_rel, per_column_dist=d)
