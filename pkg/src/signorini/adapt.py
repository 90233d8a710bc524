"""Marking, uniform/adaptive refinement loops and convergence-rate fits."""
from __future__ import annotations

import dataclasses
import logging
import time
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .estimator import IndicatorSet, global_estimate, h1_error
from .mesh import Mesh, refine_marked, refine_uniform
from .problems import Problem, get_problem
from .solver import (ContactState, DiscreteSolution, NitscheConfig,
                     SolverError, estimate_inverse_constant, solve_nitsche)

log = logging.getLogger(__name__)

CSV_HEADER = "step,N,eta,S,eta_plus_S,h_max,active_points,walltime_ms,exact_h1_error"


@dataclass
class ConvergenceRecord:
    step: int
    N: int
    eta: float
    S: float
    h_max: float
    active_points: int
    walltime_ms: float = 0.0
    exact_h1_error: Optional[float] = None

    @property
    def eta_plus_S(self) -> float:
        return self.eta + self.S

    def csv_row(self) -> str:
        err = "" if self.exact_h1_error is None else repr(self.exact_h1_error)
        return (f"{self.step},{self.N},{self.eta!r},{self.S!r},{self.eta_plus_S!r},"
                f"{self.h_max!r},{self.active_points},{self.walltime_ms:.1f},{err}")


@dataclass
class RunConfig:
    strategy: str = "uniform"
    theta: float = 0.5
    max_dofs: int = 100_000
    nitsche: NitscheConfig = field(default_factory=NitscheConfig)
    degree: int = 2
    problem: str | Problem = "signorini-paper"
    initial_n: int = 4
    max_steps: Optional[int] = None

    def __post_init__(self):
        if self.strategy not in ("uniform", "adaptive"):
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if not 0 < self.theta <= 1:
            raise ValueError("theta must lie in (0, 1]")
        if self.degree not in (1, 2):
            raise ValueError("degree must be 1 or 2")


@dataclass
class Step:
    """Everything computed on one mesh of a run."""
    record: ConvergenceRecord
    mesh: Mesh
    solution: DiscreteSolution
    contact: ContactState
    indicators: IndicatorSet


def mark(indicators, theta: float = 0.5) -> np.ndarray:
    """Maximum strategy: elements with ``E_K >= theta * max E_K``.

    ``indicators`` is an :class:`IndicatorSet` or an array of E_K values.
    The argmax is always marked.
    """
    E = np.asarray(getattr(indicators, "adaptive", indicators), dtype=float)
    if E.size == 0:
        raise ValueError("no elements to mark")
    return np.flatnonzero(E >= theta * E.max())


def run_sequence(cfg: RunConfig, callback: Callable[[Step], None] | None = None):
    """Solve, estimate and refine until the dof budget or step limit is hit.

    The run stops after the first record with ``N >= cfg.max_dofs``.
    ``callback`` receives every :class:`Step` as soon as it is computed.
    """
    problem = get_problem(cfg.problem) if isinstance(cfg.problem, str) else cfg.problem
    ncfg = dataclasses.replace(cfg.nitsche, degree=cfg.degree, check_alpha=False)
    mesh = problem.initial_mesh(cfg.initial_n)

    if cfg.nitsche.check_alpha:
        ci = estimate_inverse_constant(mesh, cfg.degree)
        if ncfg.alpha >= ci:
            warnings.warn(f"alpha={ncfg.alpha} is not below the estimated inverse "
                          f"constant {ci:.4g}")

    records = []
    step = 0
    while True:
        t0 = time.perf_counter()
        try:
            u, c = solve_nitsche(mesh, problem.load, ncfg)
        except SolverError as exc:
            raise SolverError(f"step {step}: {exc}") from exc
        ind = global_estimate(u, c, problem.load)
        err = None
        if problem.exact_grad is not None:
            err = h1_error(u, problem.exact_grad)
        rec = ConvergenceRecord(
            step=step, N=u.dofmap.N, eta=ind.eta, S=ind.S, h_max=float(mesh.h.max()),
            active_points=c.n_active, walltime_ms=1000 * (time.perf_counter() - t0),
            exact_h1_error=err)
        records.append(rec)
        log.info("step %d: N=%d eta+S=%.4e active=%d", step, rec.N, rec.eta_plus_S,
                 rec.active_points)
        if callback is not None:
            callback(Step(rec, mesh, u, c, ind))
        if rec.N >= cfg.max_dofs or (cfg.max_steps is not None and step >= cfg.max_steps):
            return records
        if cfg.strategy == "uniform":
            mesh = refine_uniform(mesh)
        else:
            mesh = refine_marked(mesh, mark(ind, cfg.theta))
        step += 1


def fit_rate(records, tail: int = 4) -> float:
    """Least-squares slope of log(eta + S) against log N over the last records."""
    if tail < 2:
        raise ValueError("tail must be at least 2")
    if len(records) < tail:
        raise ValueError(f"need {tail} records, have {len(records)}")
    sel = records[-tail:]
    N = np.array([r.N for r in sel], dtype=float)
    y = np.array([r.eta_plus_S for r in sel], dtype=float)
    return float(np.polyfit(np.log(N), np.log(y), 1)[0])


def write_csv_header(fh) -> None:
    fh.write(CSV_HEADER + "\n")
