"""Core data types and CSV ingestion.

The canonical on-disk format is a "long" CSV with one row per
(location, replicate):

    location_id, rep_id, y, z1..zq, x1..xp        (q may be 0)

Locations are numbered by first appearance in the file; every matrix in
the package (weights, pair differences) uses that index order.  Rows
within a location are ordered by ``rep_id``.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, DataError

__all__ = [
    "LocationBlock",
    "Dataset",
    "Partition",
    "Coefficients",
    "SolverConfig",
    "load_dataset",
    "save_dataset",
    "validate",
]


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=float)
    a.flags.writeable = False
    return a


@dataclass(frozen=True)
class LocationBlock:
    """All repeated measures observed at one location.

    y has length n_i, Z is n_i x q (q may be 0) and X is n_i x p.
    """

    location_id: str
    y: np.ndarray
    Z: np.ndarray
    X: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "y", _frozen(np.atleast_1d(self.y)))
        object.__setattr__(self, "Z", _frozen(np.atleast_2d(self.Z)))
        object.__setattr__(self, "X", _frozen(np.atleast_2d(self.X)))

    @property
    def n_obs(self) -> int:
        return self.y.shape[0]


class Dataset:
    """Validated collection of location blocks plus stacked views.

    Immutable after construction; safe to share across workers.  The
    stacked arrays concatenate blocks in location order, which is the
    row order used by the solver.
    """

    def __init__(self, blocks: list[LocationBlock], check: bool = True):
        self.blocks = list(blocks)
        self.n = len(self.blocks)
        self.q = int(self.blocks[0].Z.shape[1]) if self.blocks else 0
        self.p = int(self.blocks[0].X.shape[1]) if self.blocks else 0
        if check:
            problem = validate(self)
            if problem is not None:
                raise DataError(problem)
        self.n_i = np.array([b.n_obs for b in self.blocks], dtype=np.int64)
        self.m = int(self.n_i.sum())
        self.offsets = np.concatenate([[0], np.cumsum(self.n_i)]).astype(np.int64)
        self.y_stacked = _frozen(np.concatenate([b.y for b in self.blocks])
                                 if self.blocks else np.zeros(0))
        self.Z_stacked = _frozen(np.vstack([b.Z for b in self.blocks])
                                 if self.blocks else np.zeros((0, 0)))
        self.X_stacked = _frozen(np.vstack([b.X for b in self.blocks])
                                 if self.blocks else np.zeros((0, 0)))
        self.loc_of_row = np.repeat(np.arange(self.n, dtype=np.int64), self.n_i)
        self.location_ids = [b.location_id for b in self.blocks]

    def __repr__(self):  # pragma: no cover - cosmetic
        return (f"Dataset(n={self.n}, m={self.m}, q={self.q}, p={self.p})")


def validate(dataset: Dataset) -> str | None:
    """Return a description of the first invariant violation, or None.

    Never mutates.  Checked in a fixed order so reports are
    deterministic: block count, per-block shapes, finiteness,
    duplicate ids.
    """
    if dataset.n == 0:
        return "dataset has no locations"
    seen: set[str] = set()
    for b in dataset.blocks:
        if b.location_id in seen:
            return f"duplicate location_id {b.location_id!r}"
        seen.add(b.location_id)
        if b.n_obs < 1:
            return f"empty location {b.location_id!r}"
        if b.Z.shape != (b.n_obs, dataset.q):
            return (f"location {b.location_id!r}: z rows have shape "
                    f"{b.Z.shape[1]}, expected {dataset.q}")
        if b.X.shape != (b.n_obs, dataset.p):
            return (f"location {b.location_id!r}: x rows have shape "
                    f"{b.X.shape[1]}, expected {dataset.p}")
        for name, arr in (("y", b.y), ("z", b.Z), ("x", b.X)):
            if arr.size and not np.isfinite(arr).all():
                return f"non-finite value in {name} at location {b.location_id!r}"
    if dataset.p < 1:
        return "local covariate dimension p must be >= 1"
    return None


class Partition:
    """Assignment of the n locations to groups labelled 1..K."""

    def __init__(self, assignment, k: int | None = None):
        a = np.asarray(assignment, dtype=np.int64)
        if a.ndim != 1 or a.size == 0:
            raise DataError("assignment must be a nonempty 1-D label vector")
        kk = int(a.max()) if k is None else int(k)
        if kk < 1 or a.min() < 1 or a.max() > kk:
            raise DataError(f"labels must lie in 1..{kk}")
        counts = np.bincount(a, minlength=kk + 1)[1:]
        if (counts == 0).any():
            missing = int(np.flatnonzero(counts == 0)[0] + 1)
            raise DataError(f"group {missing} is empty; labels must cover 1..K")
        self.assignment = a
        self.assignment.flags.writeable = False
        self.k = kk

    @classmethod
    def from_labels(cls, labels) -> "Partition":
        """Canonicalise arbitrary labels to 1..K by first appearance."""
        order: dict = {}
        out = np.empty(len(labels), dtype=np.int64)
        for i, lab in enumerate(labels):
            out[i] = order.setdefault(lab, len(order) + 1)
        return cls(out, len(order))

    @property
    def n(self) -> int:
        return self.assignment.shape[0]

    def groups(self) -> list[np.ndarray]:
        """Member index arrays for groups 1..K."""
        return [np.flatnonzero(self.assignment == k + 1) for k in range(self.k)]

    def sizes(self) -> np.ndarray:
        return np.bincount(self.assignment, minlength=self.k + 1)[1:]

    def __eq__(self, other):
        return (isinstance(other, Partition)
                and np.array_equal(self.assignment, other.assignment))

    def __repr__(self):  # pragma: no cover - cosmetic
        return f"Partition(n={self.n}, K={self.k})"


@dataclass(frozen=True)
class Coefficients:
    """Fitted coefficients: shared eta, per-location beta, per-group alpha."""

    eta: np.ndarray
    beta: np.ndarray
    alpha: np.ndarray | None = None
    partition: Partition | None = None

    def __post_init__(self):
        object.__setattr__(self, "eta", _frozen(np.atleast_1d(self.eta)))
        object.__setattr__(self, "beta", _frozen(np.atleast_2d(self.beta)))
        if self.alpha is not None:
            object.__setattr__(self, "alpha", _frozen(np.atleast_2d(self.alpha)))
        if self.partition is not None and self.alpha is not None:
            expanded = self.alpha[self.partition.assignment - 1]
            if not np.array_equal(expanded, self.beta):
                raise DataError("beta rows do not match the attached partition's alpha rows")


@dataclass(frozen=True)
class SolverConfig:
    """ADMM solver settings.

    The closed-form shrinkage step requires gamma > c + c/vartheta with
    pair weights c <= 1, so construction enforces gamma > 1 + 1/vartheta
    (and gamma > 2, the penalty's own constraint).
    """

    gamma: float = 3.0
    vartheta: float = 1.0
    tol: float = 1e-4
    max_iter: int = 1000
    group_tol: float = 1e-6

    def __post_init__(self):
        if not self.gamma > 2:
            raise ConfigError(f"gamma must be > 2, got {self.gamma}")
        if not self.vartheta > 0:
            raise ConfigError(f"vartheta must be > 0, got {self.vartheta}")
        if not self.gamma > 1.0 + 1.0 / self.vartheta:
            raise ConfigError(
                f"gamma={self.gamma} violates gamma > 1 + 1/vartheta "
                f"= {1.0 + 1.0 / self.vartheta}")
        if not self.tol > 0:
            raise ConfigError("tol must be > 0")
        if self.max_iter < 1:
            raise ConfigError("max_iter must be >= 1")
        if self.group_tol < 0:
            raise ConfigError("group_tol must be >= 0")


# ---------------------------------------------------------------------------
# CSV ingestion
# ---------------------------------------------------------------------------

def _header_dims(header: list[str]) -> tuple[int, int]:
    """Infer (q, p) from header names; raise on anything malformed."""
    base = ["location_id", "rep_id", "y"]
    if header[:3] != base:
        raise DataError(f"header must start with {base}, got {header[:3]}")
    q = 0
    idx = 3
    while idx < len(header) and header[idx] == f"z{q + 1}":
        q += 1
        idx += 1
    p = 0
    while idx < len(header) and header[idx] == f"x{p + 1}":
        p += 1
        idx += 1
    if idx != len(header):
        raise DataError(f"unexpected column {header[idx]!r}; "
                        "expected z1..zq then x1..xp")
    if p < 1:
        raise DataError("at least one local covariate column x1 is required")
    return q, p


def load_dataset(path) -> Dataset:
    """Read a long-format CSV into a validated Dataset.

    Lines starting with '#' are ignored.  Rows within a location are
    sorted by rep_id; locations keep first-appearance order.
    """
    with open(path, "r", encoding="utf-8", newline="") as fh:
        return _parse_dataset(fh, str(path))


def loads_dataset(text: str) -> Dataset:
    """Parse CSV text (same format as :func:`load_dataset`)."""
    return _parse_dataset(io.StringIO(text), "<string>")


def _parse_dataset(fh, source: str) -> Dataset:
    rows = []
    line_no = 0
    header = None
    for raw in csv.reader(fh):
        line_no += 1
        if not raw or (raw[0].lstrip().startswith("#")):
            continue
        if header is None:
            header = [c.strip() for c in raw]
            q, p = _header_dims(header)
            width = 3 + q + p
            continue
        if len(raw) != width:
            raise DataError(f"{source}: row {line_no} has {len(raw)} fields, "
                            f"expected {width}")
        rows.append((line_no, [c.strip() for c in raw]))
    if header is None:
        raise DataError(f"{source}: missing header row")
    if not rows:
        raise DataError(f"{source}: no data rows")

    def parse_cell(line, col_name, text):
        try:
            return float(text)
        except ValueError:
            raise DataError(f"{source}: row {line}, column {col_name!r}: "
                            f"non-numeric value {text!r}") from None

    per_loc: dict[str, list] = {}
    for line, cells in rows:
        loc = cells[0]
        if loc == "":
            raise DataError(f"{source}: row {line}: empty location_id")
        rep = parse_cell(line, "rep_id", cells[1])
        yval = parse_cell(line, "y", cells[2])
        zs = [parse_cell(line, f"z{j + 1}", cells[3 + j]) for j in range(q)]
        xs = [parse_cell(line, f"x{j + 1}", cells[3 + q + j]) for j in range(p)]
        per_loc.setdefault(loc, []).append((rep, yval, zs, xs))

    blocks = []
    for loc, recs in per_loc.items():
        recs.sort(key=lambda r: r[0])
        y = np.array([r[1] for r in recs])
        Z = np.array([r[2] for r in recs]).reshape(len(recs), q)
        X = np.array([r[3] for r in recs]).reshape(len(recs), p)
        blocks.append(LocationBlock(loc, y, Z, X))
    return Dataset(blocks)


def save_dataset(dataset: Dataset, path) -> None:
    """Write a Dataset back to the long CSV format (17 significant digits,
    so load(save(d)) round-trips well below 1e-12)."""
    header = (["location_id", "rep_id", "y"]
              + [f"z{j + 1}" for j in range(dataset.q)]
              + [f"x{j + 1}" for j in range(dataset.p)])
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for b in dataset.blocks:
            for h in range(b.n_obs):
                row = [b.location_id, h + 1, f"{b.y[h]:.17g}"]
                row += [f"{v:.17g}" for v in b.Z[h]]
                row += [f"{v:.17g}" for v in b.X[h]]
                w.writerow(row)
