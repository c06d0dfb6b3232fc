"""Load-flow residuals and their Wirtinger Jacobians.

Both load models are linearised in the pair (dV, conj(dV)) and divided row
by row by ``conj(V)``, so every Newton step solves

    A @ dV + B @ conj(dV) = rhs

with ``A`` sharing the sparsity of ``Y_NN`` and ``B`` diagonal.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp

from .grid import GridModel

#: smallest nodal voltage magnitude (pu) accepted before a division by v
SHORT_CIRCUIT_FLOOR = 1e-9


class ShortCircuitError(ArithmeticError):
    """A nodal voltage collapsed to (numerically) zero."""

    def __init__(self, node: int, magnitude: float):
        self.node = node
        self.magnitude = magnitude
        super().__init__(f"|v| = {magnitude:.3e} pu at node index {node} (short circuit)")


@dataclass(frozen=True)
class JacobianBlocks:
    A: sp.csc_matrix
    B: sp.dia_matrix
    rhs: np.ndarray

    @property
    def B_diag(self) -> np.ndarray:
        return self.B.diagonal()


@dataclass(frozen=True)
class WirtingerPair:
    d_z: complex
    d_zconj: complex


def _vector(x, n: int | None = None, name: str = "vector") -> np.ndarray:
    v = np.asarray(x, dtype=complex).ravel()
    if n is not None and v.shape[0] != n:
        raise ValueError(f"{name} has length {v.shape[0]}, expected {n}")
    return v


def _guard(V: np.ndarray, mask: np.ndarray | None = None) -> None:
    mag = np.abs(V)
    bad = mag < SHORT_CIRCUIT_FLOOR
    if mask is not None:
        bad &= mask
    if bad.any():
        k = int(np.argmax(bad))
        raise ShortCircuitError(k, float(mag[k]))


def nodal_currents(grid: GridModel, V_N) -> np.ndarray:
    """Currents injected into the network, ``Y_N0 v0 + Y_NN V``.

    Evaluated as ``Y_NN (V - v0) + shunt v0``, the same quantity rearranged
    so that the flat-start currents of a shunt-free grid are exactly zero.
    """
    V = _vector(V_N, grid.n, "V_N")
    return grid.Y_NN @ (V - grid.v0) + grid.shunt_N * grid.v0


def power_mismatch(S_N, V_N, I_N) -> np.ndarray:
    """Scheduled minus computed injection, ``S - V * conj(I)``."""
    S = _vector(S_N, name="S_N")
    V = _vector(V_N, S.shape[0], "V_N")
    I = _vector(I_N, S.shape[0], "I_N")
    return S - V * np.conj(I)


def zip_residual(grid: GridModel, V_N, I_N) -> np.ndarray:
    """Residual ``conj(v) i - conj(s) |v|**alpha`` of the exponential load model."""
    V = _vector(V_N, grid.n, "V_N")
    I = _vector(I_N, grid.n, "I_N")
    _guard(V, grid.alpha < 2)
    return np.conj(V) * I - np.conj(grid.S_N) * np.abs(V) ** grid.alpha


def assemble_jacobian_cp(grid: GridModel, V_N, I_N, dS_N) -> JacobianBlocks:
    V = _vector(V_N, grid.n, "V_N")
    I = _vector(I_N, grid.n, "I_N")
    dS = _vector(dS_N, grid.n, "dS_N")
    _guard(V)
    B = sp.diags(I / np.conj(V), format="dia")
    rhs = np.conj(dS / V)
    return JacobianBlocks(A=grid.Y_NN, B=B, rhs=rhs)


def assemble_jacobian_zip(grid: GridModel, V_N, I_N, F_N) -> JacobianBlocks:
    """Blocks of the exponential-load residual, normalised by ``conj(V)``.

    The load term uses ``|v|**(alpha - 2)``, which is what differentiating
    ``conj(s) (v conj(v))**(alpha/2)`` produces. ``rhs`` is the normalised
    residual itself, so the step is applied as ``V - dV``.
    """
    V = _vector(V_N, grid.n, "V_N")
    I = _vector(I_N, grid.n, "I_N")
    F = _vector(F_N, grid.n, "F_N")
    _guard(V)
    Vc = np.conj(V)
    h = (grid.alpha / 2.0) * np.conj(grid.S_N) * np.abs(V) ** (grid.alpha - 2.0)
    A = (grid.Y_NN - sp.diags(h)).tocsc()
    B = sp.diags(I / Vc - h * V / Vc, format="dia")
    return JacobianBlocks(A=A, B=B, rhs=F / Vc)


def wirtinger_fd(f: Callable[[complex], complex], z: complex, h: float = 1e-7) -> WirtingerPair:
    """Both Wirtinger derivatives of ``f`` at ``z`` by central differences.

    The real and imaginary parts u, v of ``f`` are differentiated along x
    and y and recombined as

        df/dz  = (u_x + v_y)/2 + j (v_x - u_y)/2
        df/dz* = (u_x - v_y)/2 + j (v_x + u_y)/2
    """
    if not h > 0:
        raise ValueError("step h must be positive")
    samples = [complex(f(z + h)), complex(f(z - h)), complex(f(z + 1j * h)), complex(f(z - 1j * h))]
    if not all(np.isfinite(s) for s in samples):
        raise FloatingPointError(f"non-finite function value near z={z}")
    fx = (samples[0] - samples[1]) / (2 * h)
    fy = (samples[2] - samples[3]) / (2 * h)
    ux, vx = fx.real, fx.imag
    uy, vy = fy.real, fy.imag
    d_z = 0.5 * (ux + vy) + 0.5j * (vx - uy)
    d_zconj = 0.5 * (ux - vy) + 0.5j * (vx + uy)
    return WirtingerPair(d_z, d_zconj)


def wirtinger_fd_jacobian(
    F: Callable[[np.ndarray], np.ndarray], V, h: float = 1e-7
) -> tuple[np.ndarray, np.ndarray]:
    """Dense Wirtinger Jacobians ``(dF/dV, dF/dconj(V))`` of a vector map.

    Column ``m`` applies :func:`wirtinger_fd` to every output with only
    ``V[m]`` perturbed.
    """
    V = _vector(V)
    n = V.shape[0]
    m_out = _vector(F(V)).shape[0]
    Jz = np.empty((m_out, n), dtype=complex)
    Jc = np.empty((m_out, n), dtype=complex)
    for m in range(n):
        def column(zm, m=m):
            W = V.copy()
            W[m] = zm
            return _vector(F(W))

        cache: dict[complex, np.ndarray] = {}

        for k in range(m_out):
            def fk(zm, k=k):
                if zm not in cache:
                    cache[zm] = column(zm)
                return cache[zm][k]

            pair = wirtinger_fd(fk, V[m], h)
            Jz[k, m] = pair.d_z
            Jc[k, m] = pair.d_zconj
    return Jz, Jc
