"""Synthetic rank-r ground truths with a prescribed condition number.

Right-singular-vector incoherence is measured on each instance, never
enforced: Gaussian-QR factors concentrate at small mu.
"""

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, ParameterError, ValidationError
from .linalg import Field, check_orthonormal_columns, hermitian, qr_positive


@dataclass(frozen=True, eq=False)
class GroundTruth:
    """Factored truth ``X* = U_star diag(sigma) V_star^H``."""

    n: int
    q: int
    r: int
    field: Field
    U_star: np.ndarray
    sigma: np.ndarray
    V_star: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "field", Field.parse(self.field))
        for name in ("U_star", "sigma", "V_star"):
            object.__setattr__(self, name, np.array(getattr(self, name), copy=True))
        if self.U_star.shape != (self.n, self.r) or self.V_star.shape != (self.q, self.r):
            raise DimensionError("factor shapes do not match (n, q, r)")
        if self.sigma.shape != (self.r,):
            raise DimensionError("sigma must have length r")
        if np.any(self.sigma <= 0) or np.any(np.diff(self.sigma) > 0):
            raise ValidationError("sigma must be positive and non-increasing")
        for arr in (self.U_star, self.sigma, self.V_star):
            arr.setflags(write=False)

    @property
    def kappa(self):
        return float(self.sigma[0] / self.sigma[-1])

    @property
    def mu(self):
        return incoherence_mu(self.V_star)

    @property
    def sigma_min(self):
        return float(self.sigma[-1])

    @property
    def sigma_max(self):
        return float(self.sigma[0])

    @property
    def B_tilde(self):
        """``diag(sigma) V_star^H``; column k is the coefficient vector of x*_k."""
        return self.sigma[:, None] * hermitian(self.V_star)

    def to_dict(self):
        return {
            "n": self.n,
            "q": self.q,
            "r": self.r,
            "field": self.field.value,
            "sigma": self.sigma.tolist(),
            "U_star": _flatten(self.U_star),
            "V_star": _flatten(self.V_star),
        }

    @classmethod
    def from_dict(cls, d):
        field = Field.parse(d["field"])
        n, q, r = int(d["n"]), int(d["q"]), int(d["r"])
        return cls(
            n=n,
            q=q,
            r=r,
            field=field,
            U_star=_unflatten(d["U_star"], (n, r), field),
            sigma=np.asarray(d["sigma"], dtype=float),
            V_star=_unflatten(d["V_star"], (q, r), field),
        )


def _flatten(M):
    # row-major; complex entries interleaved as (re, im)
    if np.iscomplexobj(M):
        return np.stack([M.real, M.imag], axis=-1).ravel().tolist()
    return M.ravel().tolist()


def _unflatten(values, shape, field):
    a = np.asarray(values, dtype=float)
    if field is Field.COMPLEX:
        a = a.reshape(*shape, 2)
        return a[..., 0] + 1j * a[..., 1]
    return a.reshape(shape)


def gaussian(rng, shape, field):
    """Field-appropriate standard Gaussian draw (complex: re, im each N(0, 1/2))."""
    if field is Field.REAL:
        return rng.standard_normal(shape)
    s = np.sqrt(0.5)
    return s * rng.standard_normal(shape) + 1j * (s * rng.standard_normal(shape))


def generate_ground_truth(n, q, r, kappa_target, field="real", seed=0):
    """Draw a rank-``r`` truth with singular values linearly spaced in [1/kappa, 1]."""
    field = Field.parse(field)
    if not (1 <= r <= min(n, q)):
        raise DimensionError(f"need 1 <= r <= min(n, q), got n={n}, q={q}, r={r}")
    if not kappa_target >= 1:
        raise ParameterError(f"kappa_target must be >= 1, got {kappa_target}")
    rng = np.random.default_rng(seed)
    U, _ = qr_positive(gaussian(rng, (n, r), field))
    V, _ = qr_positive(gaussian(rng, (q, r), field))
    if r == 1:
        sigma = np.ones(1)
    else:
        sigma = np.linspace(1.0, 1.0 / kappa_target, r)
    return GroundTruth(n=n, q=q, r=r, field=field, U_star=U, sigma=sigma, V_star=V)


def incoherence_mu(V_star):
    """Smallest mu with ``max_k ||V_star^H e_k|| <= mu sqrt(r/q)``."""
    V = check_orthonormal_columns(np.asarray(V_star), tol=1e-8, name="V_star")
    q, r = V.shape
    row_norms = np.linalg.norm(V, axis=1)
    return float(np.sqrt(q / r) * row_norms.max())


def assemble_X(gt):
    return (gt.U_star * gt.sigma) @ hermitian(gt.V_star)
