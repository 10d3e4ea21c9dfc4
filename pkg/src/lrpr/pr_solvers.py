"""Standard phase retrieval solvers used for the per-column coefficient update.

All routines accept stacked problems: ``y`` has shape ``(..., m)`` and ``A``
has shape ``(..., d, m)``; leading axes index independent problems. This
lets the outer loop solve its ``q`` small problems in one vectorized call.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import ConditioningError, DegenerateWarning, ParameterError, UnsupportedFieldError
from .linalg import Field, hermitian, phase

RWF = "rwf"
ALTMIN_TSI = "altmin_tsi"


@dataclass(frozen=True, eq=False)
class PrProblem:
    y: np.ndarray
    A: np.ndarray
    field: Field = Field.REAL

    def __post_init__(self):
        object.__setattr__(self, "field", Field.parse(self.field))
        y, A = np.asarray(self.y), np.asarray(self.A)
        if A.ndim < 2 or y.shape != A.shape[:-2] + A.shape[-1:]:
            raise ParameterError(f"incompatible shapes y {y.shape}, A {A.shape}")
        if A.shape[-1] < 1 or A.shape[-2] < 1:
            raise ParameterError("need m >= 1 and d >= 1")
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "A", A)

    @property
    def d(self):
        return self.A.shape[-2]

    @property
    def m(self):
        return self.A.shape[-1]


@dataclass(frozen=True)
class PrConfig:
    iters: int
    step: float = 1.0
    trunc_const: float = 9.0

    def __post_init__(self):
        if self.iters < 1:
            raise ParameterError("iters must be >= 1")
        if self.step <= 0 or self.trunc_const <= 0:
            raise ParameterError("step and trunc_const must be positive")


def _project(A, x):
    # A^H x for stacked A (..., d, m) and x (..., d) -> (..., m)
    return np.einsum("...dm,...d->...m", np.conj(A), x)


def _lift(A, z):
    # A z for stacked A (..., d, m) and z (..., m) -> (..., d)
    return np.einsum("...dm,...m->...d", A, z)


def tsi_init(p, trunc_const=9.0):
    """Truncated spectral initialization.

    Top eigenvector of ``(1/m) sum_i y_i^2 a_i a_i^H`` over the samples with
    ``y_i^2 <= trunc_const * mean(y^2)``, scaled to norm ``sqrt(mean(y^2))``.
    The eigenvector's largest-magnitude entry is made positive real.
    """
    y2 = p.y**2
    mean_y2 = y2.mean(axis=-1)
    keep = y2 <= trunc_const * mean_y2[..., None]
    empty = ~keep.any(axis=-1)
    if np.any(empty):
        warnings.warn(
            "all samples truncated; using the untruncated spectral matrix", DegenerateWarning
        )
        keep = keep | empty[..., None]
    w = np.where(keep, y2, 0.0) / p.m
    M = (p.A * w[..., None, :]) @ hermitian(p.A)
    M = 0.5 * (M + hermitian(M))
    _, vecs = np.linalg.eigh(M)
    v = vecs[..., :, -1]
    idx = np.argmax(np.abs(v), axis=-1)
    lead = np.take_along_axis(v, idx[..., None], axis=-1)
    v = v * np.conj(phase(lead))
    if p.field is Field.REAL:
        v = v.real
    return v * np.sqrt(mean_y2)[..., None]


def _resolve_init(p, cfg, init):
    if init is None:
        return tsi_init(p, cfg.trunc_const)
    x = np.array(init, dtype=p.field.dtype, copy=True)
    if x.shape != p.A.shape[:-1]:
        raise ParameterError(f"init shape {x.shape} does not match problem {p.A.shape[:-1]}")
    return x


def rwf_solve(p, cfg, init=None):
    """Reshaped Wirtinger flow, real field; exactly ``cfg.iters`` iterations.

    ``init=None`` uses the truncated spectral initialization.
    """
    if p.field is not Field.REAL or np.iscomplexobj(p.A):
        raise UnsupportedFieldError("RWF is defined for real measurements only")
    x = _resolve_init(p, cfg, init)
    A, y = p.A, p.y
    scale = cfg.step / p.m
    for _ in range(cfg.iters):
        z = _project(A, x)
        x = x - scale * _lift(A, z - y * np.sign(z))
    return x


def _pinv_rows(A):
    """``(A^H)^+`` of shape (..., d, m) through a thin QR of ``A^H``."""
    d, m = A.shape[-2:]
    if m < d:
        raise ConditioningError(f"need m >= d for least squares, got m={m}, d={d}")
    Q, R = np.linalg.qr(hermitian(A))
    diag = np.abs(np.diagonal(R, axis1=-2, axis2=-1))
    ref = np.max(diag, axis=-1, keepdims=True)
    bad = (diag <= 1e-12 * np.maximum(ref, np.finfo(float).tiny)).any(axis=-1)
    if np.any(bad):
        raise ConditioningError("sensing matrix is numerically rank deficient")
    return np.linalg.solve(R, hermitian(Q))


def altmin_tsi_solve(p, cfg, init=None):
    """Alternate phase assignment and phase-fixed least squares.

    Each iteration sets ``c = phase(A^H x)`` and solves
    ``min_x ||A^H x - c * y||``. Works for either field.
    """
    x = _resolve_init(p, cfg, init)
    P = _pinv_rows(p.A)
    for _ in range(cfg.iters):
        c = phase(_project(p.A, x))
        x = np.einsum("...dm,...m->...d", P, c * p.y)
    return x


def pr_solve(p, cfg, init=None, method=None):
    """Dispatch to RWF (real) or AltMin-TSI (complex) unless ``method`` is given."""
    if method is None:
        method = RWF if p.field is Field.REAL else ALTMIN_TSI
    if method == RWF:
        return rwf_solve(p, cfg, init)
    if method == ALTMIN_TSI:
        return altmin_tsi_solve(p, cfg, init)
    raise ParameterError(f"unknown PR method {method!r}")


def amplitudes(A, x):
    """Noiseless measurements ``|A^H x|`` computed with the solvers' own projection."""
    return np.abs(_project(np.asarray(A), np.asarray(x)))


def amplitude_residual(p, x):
    return np.linalg.norm(amplitudes(p.A, x) - p.y, axis=-1)
