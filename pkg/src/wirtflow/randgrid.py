"""Seeded random radial feeders for property tests and ``check --random``."""
from __future__ import annotations

import numpy as np

from .grid import BranchRecord, GridModel, LoadRecord, build_grid


def random_radial_grid(
    seed: int | np.random.Generator,
    *,
    nodes: tuple[int, int] = (5, 15),
    total_load: float = 0.5,
    exponents: tuple[float, ...] = (0.0,),
) -> GridModel:
    """Random tree of ``nodes`` buses (slack included) with light loading.

    Each new bus hangs off a uniformly chosen existing bus. Impedances are
    drawn from r in [0.01, 0.1], x in [0.02, 0.2] pu; loads are scaled so
    that the sum of their magnitudes is ``total_load`` at most. Load
    exponents are drawn from ``exponents``.
    """
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    count = int(rng.integers(nodes[0], nodes[1] + 1))
    branches = []
    for k in range(1, count):
        parent = int(rng.integers(0, k))
        z = complex(rng.uniform(0.01, 0.1), rng.uniform(0.02, 0.2))
        branches.append(BranchRecord(parent, k, z))
    p = rng.uniform(0.0, 1.0, count - 1)
    q = p * rng.uniform(0.2, 0.8, count - 1)
    s = p + 1j * q
    s *= total_load * rng.uniform(0.2, 1.0) / np.abs(s).sum()
    alpha = rng.choice(np.asarray(exponents, dtype=float), count - 1)
    loads = [LoadRecord(k, complex(s[k - 1]), float(alpha[k - 1])) for k in range(1, count)]
    return build_grid(branches, loads)


def random_grids(count: int, seed: int, **kw) -> list[GridModel]:
    rng = np.random.default_rng(seed)
    return [random_radial_grid(rng, **kw) for _ in range(count)]
