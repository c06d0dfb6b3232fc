"""Independent checks for the Newton solver.

Nothing here touches the Jacobian code: the fixed-point solver and the
certificates use only the admittance blocks of the grid and plain complex
arithmetic.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Literal

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .grid import GridModel
from .newton import IterationRecord, SolveResult, compute_losses


class OracleDivergenceError(RuntimeError):
    pass


class InfeasibleLoadError(ValueError):
    pass


@dataclass(frozen=True)
class OracleConfig:
    tolerance: float = 1e-12
    max_iterations: int = 500

    def __post_init__(self):
        if not self.tolerance > 0:
            raise ValueError("tolerance must be positive")


def _loads_exponent(grid: GridModel, model: str) -> np.ndarray:
    return np.zeros(grid.n) if model == "cp" else np.asarray(grid.alpha, dtype=float)


def fixed_point_solve(
    grid: GridModel, cfg: OracleConfig | None = None, model: Literal["cp", "zip"] = "cp"
) -> SolveResult:
    """Z-bus iteration ``V <- Y_NN^-1 (conj(S/V) |V|^alpha - Y_N0 v0)``.

    Convergence is declared when successive iterates differ by less than
    ``cfg.tolerance`` in the infinity norm.
    """
    cfg = cfg or OracleConfig()
    alpha = _loads_exponent(grid, model)
    lu = spla.splu(sp.csc_matrix(grid.Y_NN))
    base = grid.Y_N0 * grid.v0
    V = np.full(grid.n, grid.v0, dtype=complex)
    history = [IterationRecord(0, float("inf"), 0.0, float("inf"), float("inf"))]
    converged = False
    growth = 0
    prev_delta = np.inf
    for it in range(1, cfg.max_iterations + 1):
        J = np.conj(grid.S_N / V) * np.abs(V) ** alpha
        V_new = lu.solve(J - base)
        change = V_new - V
        delta = float(np.max(np.abs(change), initial=0.0))
        V = V_new
        history.append(IterationRecord(it, delta, delta, float(np.linalg.norm(change)), delta))
        if not np.all(np.isfinite(V)):
            raise OracleDivergenceError(f"non-finite voltage at iteration {it}")
        if delta < cfg.tolerance:
            converged = True
            break
        growth = growth + 1 if delta > prev_delta else 0
        if growth >= 10:
            raise OracleDivergenceError(f"iterate change grew for 10 consecutive iterations (at {it})")
        prev_delta = delta
    I = grid.Y_N0 * grid.v0 + grid.Y_NN @ V
    S_loss, slack = compute_losses(grid, V)
    return SolveResult(V, I, converged, history, S_loss, slack, model=f"fixed-point/{model}")


def two_bus_closed_form(v0: complex, y: complex, s: complex) -> tuple[np.ndarray, int]:
    """Both roots of ``conj(v) y (v - v0) = conj(s)``.

    ``s`` is the power injected at the far bus. Taking moduli gives a
    quadratic in ``t = |v|^2``::

        |y|^2 t^2 - (2 Re(y s) + |y|^2 |v0|^2) t + |s|^2 = 0

    and each root back-substitutes to ``v = conj((y t - conj(s)) / (y v0))``.
    Returns the two voltages and the index of the operational (higher
    magnitude) one.
    """
    if y == 0:
        raise ValueError("branch admittance must be non-zero")
    ay2 = abs(y) ** 2
    b = 2 * (y * s).real + ay2 * abs(v0) ** 2
    c = abs(s) ** 2
    disc = b * b - 4 * ay2 * c
    if disc < 0:
        raise InfeasibleLoadError(f"no steady state for s={s}: load beyond the transfer limit")
    sq = np.sqrt(disc)
    # stable pair of roots
    t_hi = (b + sq) / (2 * ay2) if b >= 0 else (b - sq) / (2 * ay2)
    t_lo = c / (ay2 * t_hi) if t_hi != 0 else 0.0
    roots = np.array(
        [np.conj((y * t - np.conj(s)) / (y * v0)) for t in (t_hi, t_lo)], dtype=complex
    )
    return roots, int(np.argmax(np.abs(roots)))


def residual_certificate(
    grid: GridModel, V_N, model: Literal["cp", "zip"] = "cp", alpha=None
) -> float:
    """Infinity norm of the load-flow residual at ``V_N``, evaluated from scratch."""
    V = np.asarray(V_N, dtype=complex)
    I = grid.Y_N0 * grid.v0 + grid.Y_NN @ V
    if model == "cp":
        R = grid.S_N - V * np.conj(I)
    else:
        a = grid.alpha if alpha is None else np.broadcast_to(np.asarray(alpha, dtype=float), V.shape)
        R = np.conj(V) * I - np.conj(grid.S_N) * np.abs(V) ** a
    return float(np.max(np.abs(R), initial=0.0))


def linear_network_solution(grid: GridModel) -> np.ndarray:
    """Exact voltages when every load is a constant impedance.

    A load drawing ``conj(load) |v|^2`` draws current ``conj(load) v``, so
    ``(Y_NN + diag(conj(load))) V = -Y_N0 v0``.
    """
    M = (grid.Y_NN + sp.diags(np.conj(grid.load_N))).tocsc()
    return spla.spsolve(M, -grid.Y_N0 * grid.v0)


def absorbed_power(grid: GridModel, V_N) -> complex:
    """Total power drawn at the non-slack terminals, ``-sum(V conj(I))``."""
    V = np.asarray(V_N, dtype=complex)
    I = grid.Y_N0 * grid.v0 + grid.Y_NN @ V
    return complex(-np.sum(V * np.conj(I)))


def power_balance_error(grid: GridModel, V_N, S_loss: complex, slack_injection: complex) -> float:
    """``|slack_injection - absorbed - S_loss|`` with absorbed power taken at the terminals.

    Differs from the balance against *scheduled* load by at most the sum of
    the nodal mismatches, which :func:`residual_certificate` bounds.
    """
    return abs(slack_injection - absorbed_power(grid, V_N) - S_loss)
