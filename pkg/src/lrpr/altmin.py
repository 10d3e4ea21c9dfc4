"""Alternating minimization for low rank phase retrieval.

One outer iteration recovers every column's coefficients by an ``r``-dim
phase retrieval in the current subspace, estimates the measurement phases,
and refits the column span by structured least squares. Both factors are
renormalized by QR with a positive-diagonal convention.
"""

import csv
import json
import math
import time
import warnings
from dataclasses import asdict, dataclass, field as dc_field

import numpy as np

from .errors import (
    ConvergenceWarning,
    DegenerateWarning,
    LRPRError,
    ParameterError,
    RankCollapseError,
    UnderdeterminedError,
)
from .linalg import Field, hermitian, phase, qr_positive
from .metrics import error_report
from .model import assemble_X, incoherence_mu
from .pr_solvers import PrConfig, PrProblem, pr_solve
from .spectral import KnownRank, Threshold, spectral_init

CSV_HEADER = ["iter", "se2", "sef", "matdist_rel", "t_pr_used", "wall_time_ms"]


@dataclass
class RunConfig:
    T: int = 25
    rank_mode: object = dc_field(default_factory=lambda: KnownRank(1))
    # oracle parameters for the truncation threshold of the initialization
    kappa: float = 1.0
    mu: float = 1.0
    init_trunc_const: float = 9.0
    t_pr_base: int = None
    t_pr_growth: float = 1.0
    ls_tol: float = 1e-10
    ls_max_iters: int = 200
    rwf_step: float = 1.0
    trunc_const: float = 9.0
    pr_method: str = None
    warm_start: bool = True
    success_tol: float = 1e-6
    seed: int = 0

    def __post_init__(self):
        if self.T < 0:
            raise ParameterError("T must be >= 0")
        if not 0 < self.ls_tol < 1:
            raise ParameterError("ls_tol must lie in (0, 1)")
        if self.t_pr_base is not None and self.t_pr_base < 1:
            raise ParameterError("t_pr_base must be >= 1")
        if self.ls_max_iters < 1:
            raise ParameterError("ls_max_iters must be >= 1")

    def resolved_t_pr_base(self, r):
        if self.t_pr_base is not None:
            return self.t_pr_base
        return 10 + math.ceil(2 * math.log2(max(r * self.kappa, 1.0)))

    def t_pr(self, t, r):
        """Inner PR iteration count at outer iteration ``t`` (0-based)."""
        return self.resolved_t_pr_base(r) + math.ceil(self.t_pr_growth * t)

    def to_dict(self):
        d = asdict(self)
        mode = self.rank_mode
        if isinstance(mode, KnownRank):
            d["rank_mode"] = {"known_rank": mode.r}
        else:
            d["rank_mode"] = {"omega": mode.omega}
        return d

    @classmethod
    def from_dict(cls, d):
        d = dict(d)
        mode = d.pop("rank_mode", None)
        if isinstance(mode, dict):
            if "known_rank" in mode:
                mode = KnownRank(int(mode["known_rank"]))
            elif "omega" in mode:
                mode = Threshold(float(mode["omega"]))
            else:
                raise ParameterError(f"bad rank_mode {mode!r}")
        unknown = set(d) - set(cls.__dataclass_fields__)
        if unknown:
            raise ParameterError(f"unknown RunConfig keys: {sorted(unknown)}")
        if mode is not None:
            d["rank_mode"] = mode
        return cls(**d)


@dataclass(eq=False)
class FactoredEstimate:
    U: np.ndarray
    B_hat: np.ndarray
    B: np.ndarray
    X_hat: np.ndarray


@dataclass(eq=False)
class RunReport:
    rows: list
    final: dict
    provenance: dict
    estimate: FactoredEstimate = None

    def sef_trajectory(self):
        return np.array([row["sef"] for row in self.rows])

    def to_dict(self):
        return {
            "rows": [_json_row(r) for r in self.rows],
            "final": _json_row(self.final),
            "provenance": self.provenance,
        }

    def dump_json(self, path):
        with open(path, "w") as fh:
            json.dump(self.to_dict(), fh, indent=2)

    def write_csv(self, path_or_file):
        own = isinstance(path_or_file, (str, bytes)) or hasattr(path_or_file, "__fspath__")
        fh = open(path_or_file, "w", newline="", encoding="utf-8") if own else path_or_file
        try:
            w = csv.writer(fh)
            w.writerow(CSV_HEADER)
            for row in self.rows:
                w.writerow(
                    [
                        row["iter"],
                        f"{row['se2']:.10e}",
                        f"{row['sef']:.10e}",
                        f"{row['matdist_rel']:.10e}",
                        row["t_pr_used"],
                        f"{row['wall_time'] * 1e3:.6e}",
                    ]
                )
        finally:
            if own:
                fh.close()


def _json_row(row):
    out = {}
    for k, v in row.items():
        if isinstance(v, float) and not math.isfinite(v):
            v = None
        elif isinstance(v, np.generic):
            v = v.item()
        out[k] = v
    return out


def _project_sensing(U, A):
    # U^H A_k for every k: (q, r, m)
    return np.einsum("nr,knm->krm", np.conj(U), A)


def solve_columns(U, y, A, iters, *, field, init=None, step=1.0, trunc_const=9.0, method=None):
    """Per-column PR in span(U) on stacked data ``y`` (q, m), ``A`` (q, n, m)."""
    r = U.shape[1]
    if y.shape[1] < r:
        raise UnderdeterminedError(f"m = {y.shape[1]} < r = {r}: projected PR is under-determined")
    problem = PrProblem(y=y, A=_project_sensing(U, A), field=field)
    cfg = PrConfig(iters=iters, step=step, trunc_const=trunc_const)
    B_hat = pr_solve(problem, cfg, init=init, method=method)
    return B_hat.T, U @ B_hat.T


def update_B(U, ms, t, iters, init=None, step=1.0, trunc_const=9.0, method=None):
    """Solve the q projected PR problems of partition ``t``.

    Returns ``(B_hat, X_hat)`` with ``B_hat`` of shape (r, q) and
    ``X_hat = U B_hat``. ``init`` is an optional (q, r) warm start.
    """
    return solve_columns(
        U,
        ms.y_partition(t),
        ms.sensing(t),
        iters,
        field=ms.field,
        init=init,
        step=step,
        trunc_const=trunc_const,
        method=method,
    )


def _rank_checked_qr(M, what):
    Q, R = qr_positive(M)
    d = np.abs(np.diag(R))
    if d.size and (d.max() == 0 or d.min() <= 1e-10 * d.max()):
        raise RankCollapseError(f"{what} lost full rank (diag R range {d.min():.2e}..{d.max():.2e})")
    return Q, R


def orthonormalize_B(B_hat):
    """``B_hat = R_B B`` with ``B B^H = I`` and positive-real diag of ``R_B``."""
    Q, R = _rank_checked_qr(hermitian(B_hat), "B_hat")
    return hermitian(R), hermitian(Q)


def orthonormalize_U(U_hat):
    """``U_hat = U R_U`` with ``U^H U = I`` and positive-real diag of ``R_U``."""
    return _rank_checked_qr(U_hat, "U_hat")


def phases_from(X_hat, A):
    # C[i, k] = phase(a_ik^H x_hat_k)
    return phase(np.einsum("knm,nk->mk", np.conj(A), X_hat))


def estimate_phases(X_hat, ms, t):
    """Unit-modulus phase matrix (m1, q) from partition ``T + t``."""
    return phases_from(X_hat, ms.sensing(ms.plan.T + t))


class NormalOperator:
    """``W -> sum_k A_k A_k^H W b_k b_k^H`` applied without forming the nr x nr system."""

    def __init__(self, A, B):
        self.A = A
        self.AH = np.ascontiguousarray(hermitian(A))
        self.B = B
        self.BH = hermitian(B)

    def _scatter(self, Z):
        # sum_k A_k z_k e_k^T, Z (q, m) -> (n, q)
        return (self.A @ Z[:, :, None])[:, :, 0].T

    def __call__(self, W):
        WB = W @ self.B
        Z = (self.AH @ WB.T[:, :, None])[:, :, 0]
        return self._scatter(Z) @ self.BH

    def rhs(self, C, y):
        return self._scatter(C.T * y) @ self.BH


def conjugate_gradient(op, rhs, x0=None, tol=1e-10, max_iters=200):
    """CG for a Hermitian PSD operator on matrices.

    Stops once ``||rhs - op(x)|| <= tol ||rhs||``. Returns
    ``(x, relative_residual, iterations)``.
    """
    x = np.zeros_like(rhs) if x0 is None else x0.copy()
    b_norm = np.linalg.norm(rhs)
    if b_norm == 0:
        return np.zeros_like(rhs), 0.0, 0
    res = rhs - op(x) if x0 is not None else rhs.copy()
    p = res.copy()
    rr = np.vdot(res, res).real
    it = 0
    while math.sqrt(rr) > tol * b_norm and it < max_iters:
        Ap = op(p)
        alpha = rr / np.vdot(p, Ap).real
        x = x + alpha * p
        res = res - alpha * Ap
        rr_new = np.vdot(res, res).real
        p = res + (rr_new / rr) * p
        rr = rr_new
        it += 1
    return x, math.sqrt(rr) / b_norm, it


def solve_U(y, A, C_hat, B, ls_tol=1e-10, ls_max_iters=200):
    """Least-squares fit of ``U`` on stacked data: ``min sum_k ||c_k * y_k - A_k^H U b_k||^2``."""
    op = NormalOperator(A, B)
    U_hat, resid, iters = conjugate_gradient(op, op.rhs(C_hat, y), tol=ls_tol, max_iters=ls_max_iters)
    if resid > ls_tol:
        warnings.warn(
            ConvergenceWarning(f"U least squares stopped at relative residual {resid:.3e}", resid)
        )
    return U_hat, resid


def update_U(ms, t, C_hat, B, ls_tol=1e-10, ls_max_iters=200):
    """Structured least-squares update of the column span from partition ``T + t``."""
    tau = ms.plan.T + t
    U_hat, _ = solve_U(ms.y_partition(tau), ms.sensing(tau), C_hat, B, ls_tol, ls_max_iters)
    return U_hat


def compute_noise_floor(ms, gt, eps_v=None):
    """Noise level below which the error stops contracting.

    ``max((1/eps_v) ||V||_F / (sqrt(m) sigma_max), max_k ||v_k|| / (sqrt(m) ||x*_k||))``
    evaluated on each iteration partition (``m = m1``) and maximized over
    partitions. ``eps_v`` defaults to ``0.01 / kappa``.
    """
    if eps_v is None:
        eps_v = 0.01 / gt.kappa
    col_norms = np.linalg.norm(assemble_X(gt), axis=0)
    zero = col_norms == 0
    if np.any(zero):
        warnings.warn(f"{int(zero.sum())} zero-norm columns excluded", DegenerateWarning)
    parts = range(1, ms.plan.n_partitions) if ms.plan.n_partitions > 1 else [0]
    level = 0.0
    for s in parts:
        m = ms.plan.m0 if s == 0 else ms.plan.m1
        v = ms.noise_norms[s]
        first = np.linalg.norm(v) / (eps_v * math.sqrt(m) * gt.sigma_max)
        second = np.max(v[~zero] / col_norms[~zero], initial=0.0) / math.sqrt(m)
        level = max(level, first, second)
    return float(level)


def _provenance(ms, cfg):
    return {
        "config": cfg.to_dict(),
        "plan": asdict(ms.plan),
        "master_seed": ms.master_seed,
        "field": ms.field.value,
        "n": ms.n,
        "q": ms.q,
        "noise": {"kind": ms.noise.kind.value, "eps_snr": ms.noise.eps_snr},
    }


def run(gt, ms, cfg):
    """Spectral initialization followed by ``cfg.T`` alternating updates.

    Row ``t`` of the report holds the subspace errors of ``U^t`` and the
    matrix error of ``X_hat^t = U^t B_hat^t``. Iteration ``t`` reads
    partition ``t + 1`` for the coefficients and ``T + t + 1`` for phases and
    the span update; the final read-out reuses the initialization partition.
    On error the partial report is attached to the exception as
    ``partial_report``.
    """
    if cfg.T > ms.plan.T:
        raise ParameterError(f"config asks for T={cfg.T} but the plan only holds T={ms.plan.T}")
    T = cfg.T
    t0 = time.perf_counter()
    rows = []
    X_star = assemble_X(gt) if gt is not None else None
    report = RunReport(rows=rows, final={}, provenance=_provenance(ms, cfg))

    def log(t, U, X_hat, t_pr):
        if gt is not None:
            err = error_report(X_star, X_hat, gt.U_star, U)
            se2_, sef_, md = err.se2, err.sef, err.matdist_rel
        else:
            se2_ = sef_ = md = float("nan")
        rows.append(
            {
                "iter": t,
                "se2": se2_,
                "sef": sef_,
                "matdist_rel": md,
                "t_pr_used": t_pr,
                "wall_time": time.perf_counter() - t0,
            }
        )

    pr_kw = dict(field=ms.field, step=cfg.rwf_step, trunc_const=cfg.trunc_const, method=cfg.pr_method)
    try:
        init = spectral_init(ms, cfg.kappa, cfg.mu, cfg.rank_mode, cfg.init_trunc_const)
        U = init.U0
        if ms.field is Field.REAL:
            U = U.real
        r = U.shape[1]
        report.final["r_hat"] = init.r_hat
        X_prev = None
        B_hat = X_hat = None
        for t in range(T + 1):
            last = t == T
            tau_b = 0 if last else t + 1
            warm = hermitian(U) @ X_prev if (cfg.warm_start and X_prev is not None) else None
            t_pr = cfg.t_pr(t, r)
            B_hat, X_hat = solve_columns(
                U, ms.y_partition(tau_b), ms.sensing(tau_b), t_pr,
                init=None if warm is None else warm.T, **pr_kw,
            )
            log(t, U, X_hat, t_pr)
            if last:
                break
            X_prev = X_hat
            R_B, B = orthonormalize_B(B_hat)
            tau_u = ms.plan.T + t + 1
            A_u = ms.sensing(tau_u)
            C_hat = phases_from(X_hat, A_u)
            U_hat, _ = solve_U(ms.y_partition(tau_u), A_u, C_hat, B, cfg.ls_tol, cfg.ls_max_iters)
            U, _ = orthonormalize_U(U_hat)
    except LRPRError as exc:
        report.final["total_time"] = time.perf_counter() - t0
        report.final["error"] = f"{type(exc).__name__}: {exc}"
        exc.partial_report = report
        raise

    try:
        _, B = orthonormalize_B(B_hat)
    except RankCollapseError:
        B = None
    report.estimate = FactoredEstimate(U=U, B_hat=B_hat, B=B, X_hat=X_hat)
    last_row = rows[-1]
    mu_hat = incoherence_mu(hermitian(B)) if B is not None else float("nan")
    report.final.update(
        {
            "se2": last_row["se2"],
            "sef": last_row["sef"],
            "matdist_rel": last_row["matdist_rel"],
            "converged": bool(last_row["sef"] <= cfg.success_tol) if gt is not None else None,
            "mu_hat": mu_hat,
            "total_time": time.perf_counter() - t0,
        }
    )
    return report
