"""Newton iterations in complex coordinates for constant-power and ZIP loads."""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Literal, Sequence

import numpy as np

from . import wirtinger as wt
from .grid import GridModel
from .linsolve import ConjugateBlockSolver, ConjugateBlockSystem, LinearSolveError, SingularMatrixError

log = logging.getLogger(__name__)

Model = Literal["cp", "zip"]
Norm = Literal["l2", "inf"]

QUADRATIC_TAIL_CONSTANT = 1e3
# transitions landing below this are at roundoff level and always pass
QUADRATIC_TAIL_FLOOR = 1e-11


class SolverError(RuntimeError):
    """The Newton iteration could not take a step."""

    def __init__(self, iteration: int, cause: Exception):
        self.iteration = iteration
        self.cause = cause
        super().__init__(f"iteration {iteration}: {cause}")


@dataclass(frozen=True)
class SolverConfig:
    tolerance: float = 1e-4
    max_iterations: int = 20
    model: Model = "cp"
    norm: Norm = "l2"
    flat_start_voltage: complex | None = None
    initial_voltage: Sequence[complex] | None = None
    damping: bool = False

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")
        if self.max_iterations < 1:
            raise ValueError("max_iterations must be at least 1")
        if self.model not in ("cp", "zip"):
            raise ValueError(f"unknown model {self.model!r}")
        if self.norm not in ("l2", "inf"):
            raise ValueError(f"unknown norm {self.norm!r}")


@dataclass(frozen=True)
class IterationRecord:
    index: int
    mismatch_norm: float
    step_norm: float
    mismatch_l2: float
    mismatch_inf: float


@dataclass
class SolveResult:
    V_N: np.ndarray
    I_N: np.ndarray
    converged: bool
    iterations: list[IterationRecord]
    S_loss: complex
    slack_injection: complex
    model: str = "cp"
    quadratic_tail: bool | None = None
    meta: dict = field(default_factory=dict)

    @property
    def iteration_count(self) -> int:
        """Number of voltage updates performed."""
        return len(self.iterations) - 1

    @property
    def final_mismatch(self) -> float:
        return self.iterations[-1].mismatch_norm


def _norm(x: np.ndarray, kind: Norm) -> float:
    return float(np.linalg.norm(x, np.inf if kind == "inf" else 2))


def compute_losses(grid: GridModel, V_N) -> tuple[complex, complex]:
    """Total network loss and slack injection for the state ``V_N``.

    Full currents ``Y_full V`` are evaluated as ``Y_full (V - v0) + shunt v0``.
    """
    V = np.concatenate([[grid.v0], np.asarray(V_N, dtype=complex)])
    I = grid.Y_full @ (V - grid.v0) + grid.shunt * grid.v0
    S = V * np.conj(I)
    return complex(S.sum()), complex(S[0])


def _initial_voltage(grid: GridModel, cfg: SolverConfig) -> np.ndarray:
    if cfg.initial_voltage is not None:
        V = np.array(cfg.initial_voltage, dtype=complex)
        if V.shape != (grid.n,):
            raise ValueError(f"initial_voltage has shape {V.shape}, expected ({grid.n},)")
        return V
    v = grid.v0 if cfg.flat_start_voltage is None else complex(cfg.flat_start_voltage)
    return np.full(grid.n, v, dtype=complex)


def _residual(grid: GridModel, V: np.ndarray, model: Model):
    I = wt.nodal_currents(grid, V)
    if model == "cp":
        return I, wt.power_mismatch(grid.S_N, V, I)
    return I, wt.zip_residual(grid, V, I)


def _newton(grid: GridModel, cfg: SolverConfig, model: Model) -> SolveResult:
    V = _initial_voltage(grid, cfg)
    I, R = _residual(grid, V, model)
    eps = _norm(R, cfg.norm)
    history = [IterationRecord(0, eps, 0.0, _norm(R, "l2"), _norm(R, "inf"))]
    linear = ConjugateBlockSolver()
    # cp solves for +dV against the mismatch, zip for -dV against the residual
    sign = 1.0 if model == "cp" else -1.0

    it = 0
    while eps > cfg.tolerance and it < cfg.max_iterations:
        it += 1
        try:
            if model == "cp":
                blocks = wt.assemble_jacobian_cp(grid, V, I, R)
            else:
                blocks = wt.assemble_jacobian_zip(grid, V, I, R)
            dV = linear.solve(ConjugateBlockSystem.from_blocks(blocks.A, blocks.B, blocks.rhs))
        except (LinearSolveError, wt.ShortCircuitError) as exc:
            raise SolverError(it, exc) from exc

        step = sign * dV
        V_new = V + step
        I_new, R_new = _residual(grid, V_new, model)
        eps_new = _norm(R_new, cfg.norm)
        if cfg.damping:
            t = 1.0
            while eps_new > eps and t > 2.0**-10:
                t /= 2
                step = t * sign * dV
                V_new = V + step
                I_new, R_new = _residual(grid, V_new, model)
                eps_new = _norm(R_new, cfg.norm)
        V, I, R, eps = V_new, I_new, R_new, eps_new
        if not np.isfinite(eps):
            log.warning("mismatch became non-finite at iteration %d", it)
            history.append(IterationRecord(it, float("inf"), _norm(step, "inf"), float("inf"), float("inf")))
            break
        history.append(IterationRecord(it, eps, _norm(step, "inf"), _norm(R, "l2"), _norm(R, "inf")))
        log.debug("iteration %d: mismatch %.3e", it, eps)

    # certificate: recompute from the returned voltages alone
    I, R = _residual(grid, V, model)
    eps = _norm(R, cfg.norm)
    converged = bool(np.isfinite(eps) and eps <= cfg.tolerance)
    if np.isfinite(eps):
        last = history[-1]
        history[-1] = IterationRecord(last.index, eps, last.step_norm, _norm(R, "l2"), _norm(R, "inf"))
        S_loss, slack = compute_losses(grid, V)
    else:
        S_loss = slack = complex("nan+nanj")

    result = SolveResult(V, I, converged, history, S_loss, slack, model=model)
    if converged and result.iteration_count >= 3:
        result.quadratic_tail = quadratic_tail_ok(history)
        if not result.quadratic_tail:
            log.warning("convergence tail is not quadratic: %s", [r.mismatch_norm for r in history])
    return result


def quadratic_tail_ok(history: Sequence[IterationRecord], C: float = QUADRATIC_TAIL_CONSTANT) -> bool:
    """``eps[k+1] <= C * eps[k]**2`` over the last two transitions."""
    e = [r.mismatch_norm for r in history]
    return all(
        e[k + 1] <= max(C * e[k] ** 2, QUADRATIC_TAIL_FLOOR) for k in range(len(e) - 3, len(e) - 1)
    )


def solve_constant_power(grid: GridModel, cfg: SolverConfig | None = None) -> SolveResult:
    """Newton load flow with every load at constant power (``grid.alpha`` ignored)."""
    return _newton(grid, cfg or SolverConfig(), "cp")


def solve_zip(grid: GridModel, cfg: SolverConfig | None = None) -> SolveResult:
    """Newton load flow with loads drawing ``s |v|**alpha``."""
    return _newton(grid, cfg or SolverConfig(model="zip"), "zip")


def solve(grid: GridModel, cfg: SolverConfig | None = None) -> SolveResult:
    cfg = cfg or SolverConfig()
    return solve_zip(grid, cfg) if cfg.model == "zip" else solve_constant_power(grid, cfg)


def batch_solve(
    grids: Sequence[GridModel], cfg: SolverConfig | None = None, workers: int = 1
) -> list[SolveResult | Exception]:
    """Solve each grid independently.

    Failures are returned in place of the result instead of being raised.
    """

    def one(g: GridModel):
        try:
            return solve(g, cfg)
        except Exception as exc:  # collected per item
            return exc

    if workers > 1 and len(grids) > 1:
        with ThreadPoolExecutor(workers) as pool:
            return list(pool.map(one, grids))
    return [one(g) for g in grids]


__all__ = [
    "SolverConfig",
    "IterationRecord",
    "SolveResult",
    "SolverError",
    "SingularMatrixError",
    "compute_losses",
    "solve_constant_power",
    "solve_zip",
    "solve",
    "batch_solve",
]
