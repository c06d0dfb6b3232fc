"""Grid description files, bus admittance assembly and slack partitioning.

Two CSV files describe a grid::

    branches.csv   from,to,r_pu,x_pu,b_pu,in_service
    loads.csv      node,p_pu,q_pu,alpha

plus an optional ``ties.csv`` (``from,to``) naming the normally-open tie
branches. Node 0 is the slack. Load powers in ``loads.csv`` are consumed
powers; a negative value models distributed generation. Everything is in
per-unit.
"""
from __future__ import annotations

import csv
import warnings
from collections import deque
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Iterable, Literal, Sequence

import numpy as np
import scipy.sparse as sp

BRANCH_HEADER = ("from", "to", "r_pu", "x_pu", "b_pu", "in_service")
LOAD_HEADER = ("node", "p_pu", "q_pu", "alpha")
TIE_HEADER = ("from", "to")

TieMode = Literal["open", "closed"]


class GridError(ValueError):
    """Base class for invalid grid input."""


class ParseError(GridError):
    def __init__(self, path: str | Path, line: int, message: str):
        self.path = str(path)
        self.line = line
        super().__init__(f"{path}:{line}: {message}")


class ConnectivityError(GridError):
    def __init__(self, node: int):
        self.node = node
        super().__init__(f"node {node} has no in-service path to the slack node")


@dataclass(frozen=True)
class BranchRecord:
    from_node: int
    to_node: int
    series_impedance: complex
    shunt_admittance_total: complex = 0j
    in_service: bool = True

    def __post_init__(self):
        if self.from_node == self.to_node:
            raise GridError(f"branch {self.from_node}-{self.to_node} connects a node to itself")
        if self.series_impedance == 0:
            raise GridError(f"branch {self.from_node}-{self.to_node} has zero impedance")

    @property
    def key(self) -> tuple[int, int]:
        return (min(self.from_node, self.to_node), max(self.from_node, self.to_node))


@dataclass(frozen=True)
class LoadRecord:
    node: int
    power: complex
    exponent: float = 0.0

    def __post_init__(self):
        if not 0.0 <= self.exponent <= 2.0:
            warnings.warn(
                f"load at node {self.node} has exponent {self.exponent} outside [0, 2]",
                stacklevel=3,
            )


@dataclass(frozen=True)
class IngestOptions:
    """Knobs applied while turning records into a :class:`GridModel`.

    ``slack`` names the file node id that acts as slack (it is swapped with
    id 0). ``ties`` overrides the ``in_service`` flag of the branches listed
    in ``ties.csv``; ``None`` keeps the flags from the branch file.
    """

    slack: int = 0
    v0: complex = 1.0 + 0j
    ties: TieMode | None = None
    alpha_override: float | None = None


@dataclass(frozen=True, eq=False)
class GridModel:
    """Immutable, partitioned network.

    ``S_N`` is the net complex power *injected* at each non-slack node,
    i.e. the negated load of ``loads.csv``. ``alpha`` holds the per-node
    voltage exponent of the load model. ``labels[k]`` is the file node id
    of internal index ``k`` (index 0 is the slack).
    """

    n: int
    v0: complex
    Y_NN: sp.csc_matrix
    Y_N0: np.ndarray
    Y_full: sp.csc_matrix
    S_N: np.ndarray
    alpha: np.ndarray
    shunt: np.ndarray
    branches: tuple[BranchRecord, ...] = ()
    loads: tuple[LoadRecord, ...] = ()
    ties: tuple[tuple[int, int], ...] = ()
    labels: tuple[int, ...] = field(default=())

    def __post_init__(self):
        for arr in (self.Y_N0, self.S_N, self.alpha, self.shunt):
            arr.flags.writeable = False

    @property
    def node_count(self) -> int:
        return self.n + 1

    @property
    def in_service_branches(self) -> list[BranchRecord]:
        return [b for b in self.branches if b.in_service]

    @property
    def is_radial(self) -> bool:
        return len(self.in_service_branches) == self.n

    @property
    def shunt_N(self) -> np.ndarray:
        """Total branch-shunt admittance at each non-slack node (row sums of ``Y_full``)."""
        return self.shunt[1:]

    @property
    def load_N(self) -> np.ndarray:
        """Consumed power at nominal voltage (negated injection)."""
        return -self.S_N


def build_ybus(branches: Iterable[BranchRecord], node_count: int) -> sp.csc_matrix:
    """Assemble the bus admittance matrix from in-service pi-model branches."""
    rows: list[int] = []
    cols: list[int] = []
    vals: list[complex] = []
    for br in branches:
        if not br.in_service:
            continue
        k, m = br.from_node, br.to_node
        if not (0 <= k < node_count and 0 <= m < node_count):
            raise GridError(f"branch {k}-{m} references a node outside 0..{node_count - 1}")
        y = 1.0 / br.series_impedance
        half = br.shunt_admittance_total / 2.0
        rows += [k, m, k, m]
        cols += [k, m, m, k]
        vals += [y + half, y + half, -y, -y]
    Y = sp.coo_matrix(
        (np.asarray(vals, dtype=complex), (rows, cols)), shape=(node_count, node_count)
    )
    return Y.tocsc()


def partition(Y_full: sp.spmatrix, slack: int = 0) -> tuple[sp.csc_matrix, np.ndarray]:
    """Split ``Y_full`` into the non-slack block and the slack coupling column."""
    Y = sp.csc_matrix(Y_full)
    keep = np.array([k for k in range(Y.shape[0]) if k != slack], dtype=int)
    Y_NN = Y[keep][:, keep].tocsc()
    Y_N0 = np.asarray(Y[keep][:, [slack]].todense()).ravel()
    return Y_NN, Y_N0


def reassemble(Y_NN: sp.spmatrix, Y_N0: np.ndarray, y00: complex) -> sp.csc_matrix:
    """Inverse of :func:`partition` for slack index 0 (``Y_full`` is symmetric)."""
    col = sp.csc_matrix(np.asarray(Y_N0, dtype=complex).reshape(-1, 1))
    top = sp.hstack([sp.csc_matrix([[y00]]), col.T])
    bottom = sp.hstack([col, Y_NN])
    return sp.vstack([top, bottom]).tocsc()


def _check_connected(branches: Sequence[BranchRecord], node_count: int) -> None:
    adj: list[list[int]] = [[] for _ in range(node_count)]
    for br in branches:
        if br.in_service:
            adj[br.from_node].append(br.to_node)
            adj[br.to_node].append(br.from_node)
    seen = [False] * node_count
    seen[0] = True
    queue = deque([0])
    while queue:
        k = queue.popleft()
        for m in adj[k]:
            if not seen[m]:
                seen[m] = True
                queue.append(m)
    for k, ok in enumerate(seen):
        if not ok:
            raise ConnectivityError(k)


def build_grid(
    branches: Sequence[BranchRecord],
    loads: Sequence[LoadRecord],
    *,
    v0: complex = 1.0 + 0j,
    ties: Sequence[tuple[int, int]] = (),
    labels: Sequence[int] | None = None,
) -> GridModel:
    """Validate records and build the partitioned :class:`GridModel`."""
    seen: set[tuple[int, int]] = set()
    for br in branches:
        if br.key in seen:
            raise GridError(f"duplicate branch {br.key[0]}-{br.key[1]}")
        seen.add(br.key)

    ids = {0}
    for br in branches:
        ids.update((br.from_node, br.to_node))
    for ld in loads:
        ids.add(ld.node)
    node_count = max(ids) + 1
    for k in range(node_count):
        if k not in ids:
            raise ConnectivityError(k)
    _check_connected(branches, node_count)

    n = node_count - 1
    S_N = np.zeros(n, dtype=complex)
    alpha = np.zeros(n)
    load_nodes: set[int] = set()
    for ld in loads:
        if ld.node == 0:
            raise GridError("a load cannot be attached to the slack node")
        if ld.node in load_nodes:
            raise GridError(f"duplicate load row for node {ld.node}")
        load_nodes.add(ld.node)
        S_N[ld.node - 1] = -ld.power
        alpha[ld.node - 1] = ld.exponent

    shunt = np.zeros(node_count, dtype=complex)
    for br in branches:
        if br.in_service:
            shunt[br.from_node] += br.shunt_admittance_total / 2.0
            shunt[br.to_node] += br.shunt_admittance_total / 2.0

    Y_full = build_ybus(branches, node_count)
    Y_NN, Y_N0 = partition(Y_full, 0)
    return GridModel(
        n=n,
        v0=complex(v0),
        Y_NN=Y_NN,
        Y_N0=Y_N0,
        Y_full=Y_full,
        S_N=S_N,
        alpha=alpha,
        shunt=shunt,
        branches=tuple(branches),
        loads=tuple(loads),
        ties=tuple(ties),
        labels=tuple(labels) if labels is not None else tuple(range(node_count)),
    )


def set_tie_lines(grid: GridModel, mode: TieMode) -> GridModel:
    """Rebuild ``grid`` with every tie branch opened or closed."""
    if mode not in ("open", "closed"):
        raise ValueError(f"tie mode must be 'open' or 'closed', got {mode!r}")
    tie_keys = {(min(a, b), max(a, b)) for a, b in grid.ties}
    known = {br.key for br in grid.branches}
    for key in tie_keys - known:
        raise GridError(f"unknown tie branch {key[0]}-{key[1]}")
    closed = mode == "closed"
    branches = [
        replace(br, in_service=closed) if br.key in tie_keys else br for br in grid.branches
    ]
    return build_grid(branches, grid.loads, v0=grid.v0, ties=grid.ties, labels=grid.labels)


def with_loads(grid: GridModel, loads: Sequence[LoadRecord]) -> GridModel:
    return build_grid(grid.branches, loads, v0=grid.v0, ties=grid.ties, labels=grid.labels)


# --------------------------------------------------------------------------- #
# CSV ingestion
# --------------------------------------------------------------------------- #

def _rows(path: Path, header: tuple[str, ...]):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            head = next(reader)
        except StopIteration:
            raise ParseError(path, 1, "empty file") from None
        if tuple(h.strip() for h in head) != header:
            raise ParseError(path, 1, f"expected header {','.join(header)}")
        for row in reader:
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(header):
                raise ParseError(path, reader.line_num, f"expected {len(header)} fields, got {len(row)}")
            yield reader.line_num, [c.strip() for c in row]


def _int(path, line, text):
    try:
        return int(text)
    except ValueError:
        raise ParseError(path, line, f"invalid integer {text!r}") from None


def _float(path, line, text):
    try:
        value = float(text)
    except ValueError:
        raise ParseError(path, line, f"invalid number {text!r}") from None
    if not np.isfinite(value):
        raise ParseError(path, line, f"non-finite number {text!r}")
    return value


def read_branches(path: str | Path) -> list[BranchRecord]:
    path = Path(path)
    out = []
    for line, (f, t, r, x, b, s) in _rows(path, BRANCH_HEADER):
        flag = _int(path, line, s)
        if flag not in (0, 1):
            raise ParseError(path, line, f"in_service must be 0 or 1, got {s!r}")
        try:
            out.append(
                BranchRecord(
                    _int(path, line, f),
                    _int(path, line, t),
                    complex(_float(path, line, r), _float(path, line, x)),
                    complex(0.0, _float(path, line, b)),
                    bool(flag),
                )
            )
        except GridError as exc:
            raise ParseError(path, line, str(exc)) from None
    return out


def read_loads(path: str | Path) -> list[LoadRecord]:
    path = Path(path)
    out = []
    for line, (node, p, q, a) in _rows(path, LOAD_HEADER):
        try:
            out.append(
                LoadRecord(
                    _int(path, line, node),
                    complex(_float(path, line, p), _float(path, line, q)),
                    _float(path, line, a),
                )
            )
        except GridError as exc:
            raise ParseError(path, line, str(exc)) from None
    return out


def read_ties(path: str | Path) -> list[tuple[int, int]]:
    path = Path(path)
    return [(_int(path, line, f), _int(path, line, t)) for line, (f, t) in _rows(path, TIE_HEADER)]


def _relabel(k: int, slack: int) -> int:
    if k == slack:
        return 0
    if k == 0:
        return slack
    return k


def parse_grid(
    branch_file: str | Path,
    load_file: str | Path,
    options: IngestOptions | None = None,
    tie_file: str | Path | None = None,
) -> GridModel:
    """Read branch/load (and optional tie) files into a :class:`GridModel`."""
    options = options or IngestOptions()
    branches = read_branches(branch_file)
    loads = read_loads(load_file)
    ties = read_ties(tie_file) if tie_file is not None else []

    s = options.slack
    if s != 0:
        branches = [
            replace(b, from_node=_relabel(b.from_node, s), to_node=_relabel(b.to_node, s))
            for b in branches
        ]
        loads = [replace(ld, node=_relabel(ld.node, s)) for ld in loads]
        ties = [(_relabel(a, s), _relabel(b, s)) for a, b in ties]
    if options.alpha_override is not None:
        loads = [replace(ld, exponent=float(options.alpha_override)) for ld in loads]

    node_count = 1 + max([0] + [max(b.from_node, b.to_node) for b in branches] + [ld.node for ld in loads])
    labels = [_relabel(k, s) for k in range(node_count)]
    grid = build_grid(branches, loads, v0=options.v0, ties=ties, labels=labels)
    if options.ties is not None and ties:
        grid = set_tie_lines(grid, options.ties)
    return grid


def bundled_grid_dir(name: str = "ieee69") -> Path:
    """Path of a grid directory shipped with the package."""
    path = Path(__file__).parent / "data" / name
    if not path.is_dir():
        raise FileNotFoundError(f"no bundled grid named {name!r}")
    return path


def resolve_grid_dir(path: str | Path) -> Path:
    """Return ``path`` if it is a directory, else the bundled grid of the same name."""
    p = Path(path)
    if p.is_dir():
        return p
    try:
        return bundled_grid_dir(p.name)
    except FileNotFoundError:
        raise FileNotFoundError(f"grid directory {str(path)!r} not found") from None


def load_grid_dir(path: str | Path, options: IngestOptions | None = None) -> GridModel:
    """Load ``branches.csv``, ``loads.csv`` and optional ``ties.csv`` from a directory."""
    d = resolve_grid_dir(path)
    loads = d / "loads.csv"
    if not loads.exists():
        raise FileNotFoundError(f"{loads} not found")
    ties = d / "ties.csv"
    return parse_grid(d / "branches.csv", loads, options, ties if ties.exists() else None)


def load_ieee69(ties: TieMode = "open", variant: str = "ieee69") -> GridModel:
    """The bundled 69-bus feeder (Baran & Wu data, 12.66 kV / 10 MVA base)."""
    return load_grid_dir(bundled_grid_dir(variant), IngestOptions(ties=ties))
