"""Small dense linear algebra helpers shared by the solver modules."""

from enum import Enum

import numpy as np

from .errors import ValidationError


class Field(str, Enum):
    REAL = "real"
    COMPLEX = "complex"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        return cls(str(value).lower())

    @property
    def dtype(self):
        return np.float64 if self is Field.REAL else np.complex128


def hermitian(M):
    return np.conj(np.swapaxes(M, -1, -2))


def phase(z):
    """Elementwise ``z / |z|`` with ``phase(0) = 1``."""
    z = np.asarray(z)
    mag = np.abs(z)
    safe = np.where(mag > 0, mag, 1.0)
    out = z / safe
    return np.where(mag > 0, out, np.ones_like(out))


def qr_positive(M):
    """Thin QR of ``M`` with the diagonal of ``R`` made positive real.

    The sign/phase convention makes the factorization unique for full
    column rank inputs.
    """
    Q, R = np.linalg.qr(M)
    d = np.diagonal(R, axis1=-2, axis2=-1)
    ph = phase(d)
    Q = Q * ph[..., None, :]
    R = np.conj(ph)[..., :, None] * R
    return Q, R


def orthonormality_defect(U):
    """Spectral norm of ``U^H U - I``."""
    r = U.shape[-1]
    G = hermitian(U) @ U
    return float(np.linalg.norm(G - np.eye(r), 2)) if r else 0.0


def check_orthonormal_columns(U, tol=1e-8, name="basis"):
    U = np.asarray(U)
    if U.ndim != 2:
        raise ValidationError(f"{name} must be a 2-d array, got shape {U.shape}")
    defect = orthonormality_defect(U)
    if defect > tol:
        raise ValidationError(
            f"{name} columns are not orthonormal (||U^H U - I|| = {defect:.3e})"
        )
    return U
