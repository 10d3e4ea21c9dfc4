"""Seeded experiment sweeps with CSV/JSON output.

An experiment file is one JSON document::

    {
      "kind": "noise_sweep",
      "instance": {"n": 60, "q": 120, "r": 2, "kappa": 2.0, "field": "real",
                   "m0": 150, "m1": 60, "T": 25},
      "config": {"rank_mode": {"known_rank": 2}},
      "sweep": {"param": "eps_snr", "values": [1e-4, 1e-3, 1e-2]},
      "trials": 10,
      "success_tol": 1e-6,
      "seed": 0
    }

``config`` holds RunConfig fields; ``T`` defaults to the instance's. Unless
``"oracle_params": false``, every trial feeds the true kappa and mu of its
ground truth to the initialization, and ``{"omega": "auto"}`` resolves to
``1.3 sigma_min^2 / q``.
"""

import csv
import json
import math
import os
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from ..altmin import RunConfig, run
from ..errors import ParameterError
from ..model import generate_ground_truth
from ..sensing import NoiseSpec, SamplePlan, measure
from ..spectral import KnownRank, Threshold, default_omega

CONVERGENCE = "convergence"
PHASE_TRANSITION = "phase_transition"
NOISE_SWEEP = "noise_sweep"
ORACLE_SUITE = "oracle_suite"
KINDS = (CONVERGENCE, PHASE_TRANSITION, NOISE_SWEEP, ORACLE_SUITE)

SWEEPABLE = {"m0", "m1", "eps_snr", "T", "n", "q", "kappa"}

ROW_FIELDS = [
    "grid_value",
    "trial",
    "seed",
    "n",
    "q",
    "r",
    "kappa",
    "field",
    "m0",
    "m1",
    "T",
    "eps_snr",
    "reuse",
    "mu",
    "r_hat",
    "final_sef",
    "final_matdist_rel",
    "success",
    "error",
    "wall_time",
]


@dataclass(frozen=True)
class Instance:
    n: int = 60
    q: int = 120
    r: int = 2
    kappa: float = 2.0
    field: str = "real"
    m0: int = 150
    m1: int = 60
    T: int = 25
    eps_snr: float = 0.0
    reuse: bool = False


@dataclass
class Experiment:
    kind: str = CONVERGENCE
    instance: Instance = field(default_factory=Instance)
    config: dict = field(default_factory=dict)
    sweep_param: str = None
    sweep_values: list = field(default_factory=list)
    trials: int = 1
    success_tol: float = 1e-6
    seed: int = 0
    oracle_params: bool = True

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ParameterError(f"unknown experiment kind {self.kind!r}")
        if self.trials < 1:
            raise ParameterError("trials must be >= 1")
        vals = list(self.sweep_values)
        if any(b <= a for a, b in zip(vals, vals[1:])):
            raise ParameterError("sweep values must be strictly increasing")
        if self.sweep_param is not None and self.sweep_param not in SWEEPABLE:
            raise ParameterError(f"cannot sweep {self.sweep_param!r}")
        if self.kind == PHASE_TRANSITION and self.sweep_param not in ("m0", "m1"):
            raise ParameterError("phase transition sweeps m0 or m1")
        if self.kind == NOISE_SWEEP and self.sweep_param != "eps_snr":
            raise ParameterError("noise sweep sweeps eps_snr")

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        inst = Instance(**d.pop("instance", {}))
        sweep = d.pop("sweep", None) or {}
        return cls(
            instance=inst,
            sweep_param=sweep.get("param"),
            sweep_values=list(sweep.get("values", [])),
            **d,
        )

    @classmethod
    def load(cls, path):
        with open(path) as fh:
            return cls.from_dict(json.load(fh))

    def to_dict(self):
        return {
            "kind": self.kind,
            "instance": asdict(self.instance),
            "config": self.config,
            "sweep": {"param": self.sweep_param, "values": self.sweep_values},
            "trials": self.trials,
            "success_tol": self.success_tol,
            "seed": self.seed,
            "oracle_params": self.oracle_params,
        }

    def grid(self):
        if self.sweep_param is None:
            return [(None, self.instance)]
        return [(v, replace(self.instance, **{self.sweep_param: v})) for v in self.sweep_values]


def build_config(inst, config, gt, oracle_params=True):
    d = dict(config)
    d.setdefault("T", inst.T)
    mode = d.get("rank_mode")
    if mode is None:
        d["rank_mode"] = {"known_rank": inst.r}
    elif isinstance(mode, dict) and mode.get("omega") == "auto":
        d["rank_mode"] = {"omega": default_omega(gt.sigma_min, gt.q)}
    if oracle_params:
        d["kappa"], d["mu"] = gt.kappa, gt.mu
    return RunConfig.from_dict(d)


def run_trial(inst, config, seed, success_tol=1e-6, oracle_params=True, keep_report=False):
    """One seeded trial; errors become a failed row rather than propagating."""
    t0 = time.perf_counter()
    row = {k: getattr(inst, k) for k in ("n", "q", "r", "kappa", "field", "m0", "m1", "T", "eps_snr", "reuse")}
    row.update(seed=seed, mu=math.nan, r_hat=-1, final_sef=math.nan, final_matdist_rel=math.nan)
    row.update(success=False, error="")
    report = None
    try:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            gt = generate_ground_truth(inst.n, inst.q, inst.r, inst.kappa, inst.field, seed)
            row["mu"] = gt.mu
            plan = SamplePlan(inst.m0, inst.m1, inst.T, inst.reuse)
            ms = measure(gt, plan, NoiseSpec.bounded(inst.eps_snr), master_seed=seed)
            cfg = build_config(inst, config, gt, oracle_params)
            cfg.seed = seed
            report = run(gt, ms, cfg)
        row["r_hat"] = report.final["r_hat"]
        row["final_sef"] = report.final["sef"]
        row["final_matdist_rel"] = report.final["matdist_rel"]
        row["success"] = bool(report.final["matdist_rel"] <= success_tol)
    except Exception as exc:  # recorded as a failed trial
        row["error"] = f"{type(exc).__name__}: {exc}"
        report = getattr(exc, "partial_report", None)
    row["wall_time"] = time.perf_counter() - t0
    return (row, report) if keep_report else row


def _trial_job(args):
    return run_trial(*args)


def _format(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return "1" if v else "0"
    if isinstance(v, float):
        return f"{v:.10e}"
    return str(v)


def write_rows_csv(rows, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(ROW_FIELDS)
        for row in rows:
            w.writerow([_format(row.get(k, "")) for k in ROW_FIELDS])


def median_smooth(values):
    """Width-3 running median with edge replication."""
    v = np.asarray(values, dtype=float)
    if v.size < 3:
        return v.copy()
    padded = np.concatenate([v[:1], v, v[-1:]])
    return np.median(np.stack([padded[:-2], padded[1:-1], padded[2:]]), axis=0)


def loglog_slope(x, y):
    x, y = np.asarray(x, float), np.asarray(y, float)
    ok = (x > 0) & (y > 0) & np.isfinite(y)
    if ok.sum() < 2:
        return math.nan
    return float(np.polyfit(np.log(x[ok]), np.log(y[ok]), 1)[0])


def summarize(e, rows):
    points = []
    for value, _ in e.grid():
        sel = [r for r in rows if r["grid_value"] == value]
        md = np.array([r["final_matdist_rel"] for r in sel], dtype=float)
        sf = np.array([r["final_sef"] for r in sel], dtype=float)
        points.append(
            {
                "value": value,
                "trials": len(sel),
                "success_fraction": float(np.mean([r["success"] for r in sel])),
                "median_matdist_rel": float(np.nanmedian(md)) if np.isfinite(md).any() else None,
                "median_sef": float(np.nanmedian(sf)) if np.isfinite(sf).any() else None,
                "failed": sum(1 for r in sel if r["error"]),
            }
        )
    summary = {"experiment": e.to_dict(), "points": points}
    if e.kind == PHASE_TRANSITION:
        smooth = median_smooth([p["success_fraction"] for p in points])
        summary["smoothed_success"] = smooth.tolist()
        summary["monotone"] = bool(np.all(np.diff(smooth) >= 0))
    if e.kind == NOISE_SWEEP:
        med = [p["median_matdist_rel"] or math.nan for p in points]
        summary["loglog_slope"] = loglog_slope([p["value"] for p in points], med)
        summary["monotone"] = bool(np.all(np.diff(med) >= 0))
    return summary


def run_experiment(e, out_dir=None, threads=1):
    """Run every (grid point, trial) and optionally write results.csv / summary.json.

    Trial ``i`` uses seed ``e.seed + i`` at every grid point. Rows come back
    in grid-then-trial order regardless of ``threads``.
    """
    if e.kind == ORACLE_SUITE:
        from .acceptance import run_all

        results = run_all()
        summary = {"criteria": [r.to_dict() for r in results], "passed": all(r.passed for r in results)}
        if out_dir:
            os.makedirs(out_dir, exist_ok=True)
            with open(os.path.join(out_dir, "summary.json"), "w") as fh:
                json.dump(summary, fh, indent=2)
        return [], summary

    jobs, labels = [], []
    for value, inst in e.grid():
        for i in range(e.trials):
            jobs.append((inst, e.config, e.seed + i, e.success_tol, e.oracle_params))
            labels.append((value, i))
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_trial_job, jobs))
    else:
        results = [_trial_job(j) for j in jobs]
    rows = []
    for (value, i), row in zip(labels, results):
        rows.append({"grid_value": value, "trial": i, **row})

    summary = summarize(e, rows)
    if out_dir:
        os.makedirs(out_dir, exist_ok=True)
        write_rows_csv(rows, os.path.join(out_dir, "results.csv"))
        with open(os.path.join(out_dir, "summary.json"), "w") as fh:
            json.dump(summary, fh, indent=2)
    return rows, summary
