"""Seeded Gaussian sensing ensembles and the phaseless measurement model.

Sensing matrices are never stored. Each ``A_k^(tau)`` is regenerated from
``(master_seed, k, tau)`` through its own Philox stream, so columns and
sample-splitting partitions are independent and can be produced in any
order.
"""

import json
from dataclasses import asdict, dataclass, field as dc_field
from enum import Enum

import numpy as np

from .errors import DimensionError, ParameterError
from .linalg import Field, hermitian
from .model import GroundTruth, assemble_X, gaussian

_SENSING_STREAM = 0
_NOISE_STREAM = 1


@dataclass(frozen=True)
class SamplePlan:
    """Per-column sample budget.

    Partition 0 feeds the initialization, partitions 1..T the B-updates
    and T+1..2T the U-updates. With ``reuse=True`` every iteration reads
    partition 1 (sample-frugal mode; iterations then share their samples).
    """

    m0: int
    m1: int
    T: int
    reuse: bool = False

    def __post_init__(self):
        if self.m0 < 1 or self.m1 < 1:
            raise ParameterError("m0 and m1 must be >= 1")
        if self.T < 0:
            raise ParameterError("T must be >= 0")

    @property
    def m_tot(self):
        return self.m0 + (1 if self.reuse else 2 * self.T) * self.m1

    @property
    def n_partitions(self):
        if self.T == 0:
            return 1
        return 2 if self.reuse else 2 * self.T + 1

    def storage_index(self, tau):
        if not 0 <= tau <= 2 * self.T:
            raise IndexError(f"partition {tau} outside 0..{2 * self.T}")
        return min(tau, 1) if self.reuse else tau

    def m(self, tau):
        return self.m0 if self.storage_index(tau) == 0 else self.m1


class NoiseKind(str, Enum):
    NONE = "none"
    BOUNDED_GAUSSIAN_SHAPE = "bounded_gaussian_shape"


@dataclass(frozen=True)
class NoiseSpec:
    kind: NoiseKind = NoiseKind.NONE
    eps_snr: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "kind", NoiseKind(self.kind))
        if self.eps_snr < 0:
            raise ParameterError("eps_snr must be >= 0")

    @classmethod
    def bounded(cls, eps_snr):
        if eps_snr == 0:
            return cls()
        return cls(NoiseKind.BOUNDED_GAUSSIAN_SHAPE, float(eps_snr))

    @property
    def active(self):
        return self.kind is NoiseKind.BOUNDED_GAUSSIAN_SHAPE and self.eps_snr > 0


@dataclass(eq=False)
class MeasurementSet:
    plan: SamplePlan
    field: Field
    n: int
    q: int
    master_seed: int
    noise: NoiseSpec
    # y[s] has shape (q, m) for storage partition s
    y: list = dc_field(repr=False)
    # noise_norms[s, k] is ||v_k|| realized in storage partition s
    noise_norms: np.ndarray = dc_field(repr=False)

    def y_partition(self, tau):
        return self.y[self.plan.storage_index(tau)]

    def sensing(self, tau):
        """All ``q`` sensing matrices of partition ``tau``, shape (q, n, m)."""
        return sensing_stack(self, tau)

    def meta_dict(self):
        return {
            "plan": asdict(self.plan),
            "field": self.field.value,
            "n": self.n,
            "q": self.q,
            "master_seed": self.master_seed,
            "noise": {"kind": self.noise.kind.value, "eps_snr": self.noise.eps_snr},
            "noise_norms": self.noise_norms.tolist(),
        }

    def dump_meta(self, path):
        with open(path, "w") as fh:
            json.dump(self.meta_dict(), fh, indent=2)

    def dump_y(self, path):
        """Write every y entry as little-endian float64, ordered by (tau, k, i)."""
        with open(path, "wb") as fh:
            for ys in self.y:
                fh.write(np.ascontiguousarray(ys, dtype="<f8").tobytes())


def _stream(master_seed, kind, k, tau):
    ss = np.random.SeedSequence(int(master_seed), spawn_key=(kind, int(k), int(tau)))
    return np.random.Generator(np.random.Philox(ss))


def gen_sensing(n, m, field, master_seed, k, tau):
    """Sensing matrix ``A_k^(tau)`` of shape (n, m), a pure function of its seeds."""
    if n < 1 or m < 1:
        raise DimensionError("n and m must be >= 1")
    field = Field.parse(field)
    return gaussian(_stream(master_seed, _SENSING_STREAM, k, tau), (n, m), field)


def sensing_stack(ms, tau):
    s = ms.plan.storage_index(tau)
    m = ms.plan.m(tau)
    return np.stack([gen_sensing(ms.n, m, ms.field, ms.master_seed, k, s) for k in range(ms.q)])


def _bounded_noise(master_seed, k, tau, m, magnitude):
    g = _stream(master_seed, _NOISE_STREAM, k, tau).standard_normal(m)
    return g * (magnitude / np.linalg.norm(g))


def measure(truth, plan, noise=None, master_seed=0, field=None):
    """Phaseless measurements ``y = |A^H x*_k| + v`` for every column and partition.

    ``truth`` is a GroundTruth or an explicit (n, q) matrix; for a matrix the
    field defaults to its dtype. Noisy entries are left unclamped.
    """
    noise = noise or NoiseSpec()
    if isinstance(truth, GroundTruth):
        X = assemble_X(truth)
        field = truth.field if field is None else Field.parse(field)
    else:
        X = np.asarray(truth)
        if field is None:
            field = Field.COMPLEX if np.iscomplexobj(X) else Field.REAL
        field = Field.parse(field)
    if field is Field.REAL and np.iscomplexobj(X):
        raise ParameterError("complex signal cannot be measured with a real ensemble")
    n, q = X.shape
    col_norms = np.linalg.norm(X, axis=0)

    ys = []
    noise_norms = np.zeros((plan.n_partitions, q))
    for s in range(plan.n_partitions):
        m = plan.m0 if s == 0 else plan.m1
        ys_s = np.empty((q, m))
        for k in range(q):
            A = gen_sensing(n, m, field, master_seed, k, s)
            ys_s[k] = np.abs(hermitian(A) @ X[:, k])
            if noise.active:
                v = _bounded_noise(master_seed, k, s, m, noise.eps_snr * col_norms[k])
                ys_s[k] += v
                noise_norms[s, k] = np.linalg.norm(v)
        ys.append(ys_s)
    return MeasurementSet(
        plan=plan,
        field=field,
        n=n,
        q=q,
        master_seed=int(master_seed),
        noise=noise,
        y=ys,
        noise_norms=noise_norms,
    )


def batch(ms, tau):
    """Iterate ``(k, y_k^(tau), A_k^(tau))`` for k = 0..q-1, regenerating each A."""
    s = ms.plan.storage_index(tau)
    m = ms.plan.m(tau)
    ys = ms.y[s]
    return ((k, ys[k], gen_sensing(ms.n, m, ms.field, ms.master_seed, k, s)) for k in range(ms.q))
