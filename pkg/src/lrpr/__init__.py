"""Alternating minimization for low rank phase retrieval."""

from .altmin import RunConfig, RunReport, compute_noise_floor, run
from .linalg import Field
from .metrics import dist, matdist, se2, sef, subspace_error
from .model import GroundTruth, assemble_X, generate_ground_truth, incoherence_mu
from .sensing import NoiseSpec, SamplePlan, measure
from .spectral import KnownRank, Threshold, spectral_init

__all__ = [
    "Field",
    "GroundTruth",
    "KnownRank",
    "NoiseSpec",
    "RunConfig",
    "RunReport",
    "SamplePlan",
    "Threshold",
    "assemble_X",
    "compute_noise_floor",
    "dist",
    "generate_ground_truth",
    "incoherence_mu",
    "matdist",
    "measure",
    "run",
    "se2",
    "sef",
    "spectral_init",
    "subspace_error",
]

__version__ = "0.1.0"
