"""Side-by-side reproduction of the published simulation tables.

Each table is a set of cells (weight kind, replicate count n_i, metric)
with the published value and an informal comparison tolerance; the
runner executes the underlying scenario at a scaled replicate count and
reports published vs reproduced vs verdict.  Tables:

    1  group-count summary, setting s1, 7x7
    2  mean ARI, setting s1, 7x7
    3  group count + ARI, setting s1, 10x10
    4  group-count summary, setting s2, 7x7
    5  mean ARI, setting s2, 7x7
    6  group count + ARI, setting s2, 10x10
    7  unbalanced four-group setting, 10x10, n_i = 10
    8  random groups (s1 coefficients), 7x7, n_i = 10

The published numbers are Monte Carlo means over 100 replicates; at
scale < 1 the comparison gets noisier, so verdicts are indicative, not
acceptance gates.
"""

from __future__ import annotations

from dataclasses import dataclass

from .errors import DataError
from .model import SolverConfig
from .simgen import MethodSpec, SimScenario, run_replicates

__all__ = ["BenchCell", "BenchTable", "PAPER_TABLES", "run_bench"]

# default |reproduced - published| tolerances per metric
_TOL = {"khat_mean": 0.6, "per": 0.20, "ari_mean": 0.10}
# cross-validation cells are noisier and cost 10x; compare loosely
_TOL_CV = {"khat_mean": 1.0, "per": 0.30, "ari_mean": 0.12}


@dataclass(frozen=True)
class BenchCell:
    n_i: int
    kind: str            # weight kind
    criterion: str       # bic | cv
    metric: str          # khat_mean | per | ari_mean
    paper: float

    @property
    def tol(self) -> float:
        return (_TOL_CV if self.criterion == "cv" else _TOL)[self.metric]


@dataclass(frozen=True)
class BenchTable:
    number: int
    title: str
    setting: str
    grid: tuple[int, int]
    cells: tuple[BenchCell, ...]


def _cells(n_i, criterion, metric, by_kind) -> list[BenchCell]:
    return [BenchCell(n_i=n_i, kind=k, criterion=criterion, metric=metric,
                      paper=v) for k, v in by_kind.items()]


def _table(number, title, setting, grid, cells) -> BenchTable:
    return BenchTable(number=number, title=title, setting=setting,
                      grid=tuple(grid), cells=tuple(cells))


PAPER_TABLES: dict[int, BenchTable] = {
    1: _table(1, "group-count summary, setting s1, 7x7 grid", "s1", (7, 7),
              _cells(10, "bic", "khat_mean",
                     {"equal": 3.34, "reg_sp": 3.15, "reg": 3.33, "sp": 3.13})
              + _cells(10, "bic", "per",
                       {"equal": 0.69, "reg_sp": 0.86, "reg": 0.69, "sp": 0.87})
              + [BenchCell(10, "sp", "cv", "khat_mean", 3.82),
                 BenchCell(10, "sp", "cv", "per", 0.56)]
              + _cells(30, "bic", "khat_mean",
                       {"equal": 3.00, "reg_sp": 3.00, "reg": 3.00, "sp": 3.00})
              + _cells(30, "bic", "per",
                       {"equal": 1.00, "reg_sp": 1.00, "reg": 1.00, "sp": 1.00})),
    2: _table(2, "mean ARI, setting s1, 7x7 grid", "s1", (7, 7),
              _cells(10, "bic", "ari_mean",
                     {"equal": 0.80, "reg_sp": 0.92, "reg": 0.82, "sp": 0.92})
              + [BenchCell(10, "sp", "cv", "ari_mean", 0.95)]
              + _cells(30, "bic", "ari_mean",
                       {"equal": 0.998, "reg_sp": 0.999, "reg": 0.998,
                        "sp": 0.999})),
    3: _table(3, "group count and ARI, setting s1, 10x10 grid", "s1", (10, 10),
              _cells(10, "bic", "khat_mean", {"equal": 3.59, "sp": 3.37})
              + _cells(10, "bic", "per", {"equal": 0.53, "sp": 0.71})
              + _cells(10, "bic", "ari_mean", {"equal": 0.70, "sp": 0.97})
              + _cells(30, "bic", "khat_mean", {"equal": 3.00, "sp": 3.00})
              + _cells(30, "bic", "per", {"equal": 1.00, "sp": 1.00})
              + _cells(30, "bic", "ari_mean", {"equal": 0.996, "sp": 1.00})),
    4: _table(4, "group-count summary, setting s2, 7x7 grid", "s2", (7, 7),
              _cells(10, "bic", "khat_mean",
                     {"equal": 3.25, "reg_sp": 3.01, "reg": 3.14, "sp": 2.88})
              + _cells(10, "bic", "per",
                       {"equal": 0.34, "reg_sp": 0.45, "reg": 0.33, "sp": 0.60})
              + _cells(30, "bic", "khat_mean",
                       {"equal": 2.70, "reg_sp": 2.90, "reg": 2.76, "sp": 2.95})
              + _cells(30, "bic", "per",
                       {"equal": 0.70, "reg_sp": 0.90, "reg": 0.76, "sp": 0.95})),
    5: _table(5, "mean ARI, setting s2, 7x7 grid", "s2", (7, 7),
              _cells(10, "bic", "ari_mean",
                     {"equal": 0.32, "reg_sp": 0.50, "reg": 0.33, "sp": 0.61})
              + _cells(30, "bic", "ari_mean",
                       {"equal": 0.72, "reg_sp": 0.86, "reg": 0.75, "sp": 0.90})),
    6: _table(6, "group count and ARI, setting s2, 10x10 grid", "s2", (10, 10),
              _cells(10, "bic", "khat_mean", {"equal": 3.82, "sp": 3.35})
              + _cells(10, "bic", "per", {"equal": 0.32, "sp": 0.62})
              + _cells(10, "bic", "ari_mean", {"equal": 0.32, "sp": 0.81})
              + _cells(30, "bic", "khat_mean", {"equal": 3.10, "sp": 3.00})
              + _cells(30, "bic", "per", {"equal": 0.64, "sp": 1.00})
              + _cells(30, "bic", "ari_mean", {"equal": 0.79, "sp": 0.94})),
    7: _table(7, "unbalanced four-group setting, 10x10 grid", "unbalanced",
              (10, 10),
              _cells(10, "bic", "khat_mean",
                     {"equal": 4.58, "reg_sp": 4.23, "reg": 5.17, "sp": 4.35})
              + _cells(10, "bic", "per",
                       {"equal": 0.57, "reg_sp": 0.80, "reg": 0.30, "sp": 0.71})
              + _cells(10, "bic", "ari_mean",
                       {"equal": 0.62, "reg_sp": 0.94, "reg": 0.67, "sp": 0.96})),
    8: _table(8, "random groups with s1 coefficients, 7x7 grid", "random",
              (7, 7),
              _cells(10, "bic", "khat_mean",
                     {"equal": 3.42, "reg_sp": 3.45, "reg": 3.40, "sp": 3.45})
              + _cells(10, "bic", "per",
                       {"equal": 0.66, "reg_sp": 0.62, "reg": 0.65, "sp": 0.62})
              + _cells(10, "bic", "ari_mean",
                       {"equal": 0.78, "reg_sp": 0.82, "reg": 0.81, "sp": 0.82})),
}


def run_bench(table: int, scale: float = 1.0, seed: int = 0,
              config: SolverConfig | None = None, jobs: int = 1,
              base_reps: int = 100) -> dict:
    """Reproduce one table's cells at a scaled replicate count."""
    if table not in PAPER_TABLES:
        raise DataError(f"unknown table {table}; expected 1..{len(PAPER_TABLES)}")
    if not 0 < scale <= 1:
        raise DataError("scale must lie in (0, 1]")
    spec = PAPER_TABLES[table]
    n_reps = max(1, int(round(base_reps * scale)))

    runs: dict[tuple, dict] = {}
    for cell in spec.cells:
        key = (cell.n_i, cell.kind, cell.criterion)
        if key in runs:
            continue
        scenario = SimScenario(setting=spec.setting, grid=spec.grid,
                               n_i=cell.n_i, seed=seed)
        method = MethodSpec(kind=cell.kind, criterion=cell.criterion)
        report = run_replicates(scenario, method, n_reps, config=config,
                                jobs=jobs)
        runs[key] = report.aggregate

    cells_out = []
    for cell in spec.cells:
        agg = runs[(cell.n_i, cell.kind, cell.criterion)]
        repro = agg.get(cell.metric)
        verdict = (repro is not None and abs(repro - cell.paper) <= cell.tol)
        cells_out.append({
            "n_i": cell.n_i, "kind": cell.kind, "criterion": cell.criterion,
            "metric": cell.metric, "paper": cell.paper,
            "reproduced": repro, "tol": cell.tol, "pass": bool(verdict),
        })
    return {
        "table": spec.number,
        "title": spec.title,
        "setting": spec.setting,
        "grid": list(spec.grid),
        "scale": scale,
        "n_reps": n_reps,
        "seed": seed,
        "cells": cells_out,
        "n_pass": sum(c["pass"] for c in cells_out),
        "n_cells": len(cells_out),
    }
