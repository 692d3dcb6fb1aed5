"""Tuning-parameter selection: modified BIC over a warm-started lambda
path, a (lambda, psi) grid search, and a replicate-split K-fold
cross-validation variant.

The criterion is

    BIC = log[ (1/n) sum_i (1/n_i) sum_h resid_ih^2 ]
          + C_n * (log n / n) * (K*p + q),      C_n = c0 * log(log(n*p + q))

with c0 = 0.2.  Paths are warm-started: each fit starts from the
previous grid point's solution.  Because the penalty is concave the
path endpoint depends on the traversal direction, so the grid search
walks the grid in both directions (ascending from the unpenalized
initializer, then descending from the fused end) and scores every
converged cell; the descending pass keeps spatially coherent partitions
alive that the ascending pass loses at noisy small-sample settings.

The default grid is log-spaced with lambda_max found by a doubling
search (smallest doubled lambda collapsing the fit to one group) and
lambda_min = 0.2 * lambda_max.  The narrow window is deliberate: with a
much smaller lambda_min the candidate set fills with barely penalized
fits whose groups are carved purely from noisy coefficient estimates;
those cells overfit the in-sample criterion and can shadow the
spatially structured solutions the method is after.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, DataError, SolverError
from .graph import AdjacencyGraph, neighbor_orders
from .model import Dataset, LocationBlock, SolverConfig
from .solver import AdmmState, FitWorkspace, SasaFit, fit, initialize, make_workspace
from .weights import WeightMatrix, WeightSpec, compute_weights

__all__ = [
    "TuneGrid",
    "TuneResult",
    "bic",
    "default_lambda_grid",
    "solve_path",
    "select",
    "cross_validate",
]

DEFAULT_PSIS = (0.1, 0.5, 1.0, 3.0)
DIRECTIONS = ("ascending", "descending")


@dataclass(frozen=True)
class TuneGrid:
    """Candidate lambdas and psis.

    lambdas=None requests the data-adaptive default grid (computed per
    weight matrix).  For equal weights psi is inert and collapses to a
    single 0.0 entry.  directions controls which warm-started traversals
    of the grid feed the candidate set.
    """

    lambdas: tuple | None = None
    psis: tuple = DEFAULT_PSIS
    c0: float = 0.2
    n_lambda: int = 50
    lambda_min_ratio: float = 0.2
    directions: tuple = DIRECTIONS

    def __post_init__(self):
        if self.lambdas is not None:
            lam = tuple(float(x) for x in self.lambdas)
            if len(lam) == 0:
                raise ConfigError("lambda grid must be nonempty")
            if any(x < 0 for x in lam):
                raise ConfigError("lambda values must be >= 0")
            if sorted(lam) != list(lam) and sorted(lam, reverse=True) != list(lam):
                raise ConfigError("lambda grid must be sorted")
            object.__setattr__(self, "lambdas", lam)
        if len(self.psis) == 0:
            raise ConfigError("psi grid must be nonempty")
        if any(x < 0 for x in self.psis):
            raise ConfigError("psi values must be >= 0")
        if not self.c0 > 0:
            raise ConfigError("c0 must be > 0")
        if self.n_lambda < 1:
            raise ConfigError("n_lambda must be >= 1")
        if not self.directions or any(d not in DIRECTIONS for d in self.directions):
            raise ConfigError(f"directions must be a nonempty subset of {DIRECTIONS}")


@dataclass
class TuneResult:
    """BIC/CV surface over the grid plus the winning fit.

    The cell arrays are indexed [direction, psi, lambda]; lambda grids
    are per psi (the data-adaptive default depends on the weights), and
    directions lists the traversals actually run.
    """

    kind: str
    criterion: str
    psis: np.ndarray
    directions: tuple
    lambdas: np.ndarray        # (n_psi, n_lambda)
    score: np.ndarray          # (n_dir, n_psi, n_lambda) BIC or CV error
    khat: np.ndarray
    converged: np.ndarray
    failed: np.ndarray
    degenerate: np.ndarray
    best_psi: float
    best_lambda: float
    best_direction: str
    best_fit: SasaFit

    def to_dict(self) -> dict:
        return {
            "kind": self.kind,
            "criterion": self.criterion,
            "psis": self.psis.tolist(),
            "directions": list(self.directions),
            "lambdas": self.lambdas.tolist(),
            "score": self.score.tolist(),
            "khat": self.khat.tolist(),
            "converged": self.converged.tolist(),
            "failed": self.failed.tolist(),
            "degenerate": self.degenerate.tolist(),
            "best": {"psi": self.best_psi, "lambda": self.best_lambda,
                     "direction": self.best_direction,
                     "K": int(self.best_fit.k)},
        }


# ---------------------------------------------------------------------------
# Modified BIC
# ---------------------------------------------------------------------------

def bic_value(dataset: Dataset, eta, beta, k: int, c0: float = 0.2) -> float:
    """The criterion at explicit coefficients and group count."""
    fitted = np.einsum("ij,ij->i", dataset.X_stacked,
                       np.atleast_2d(beta)[dataset.loc_of_row])
    if dataset.q:
        fitted = fitted + dataset.Z_stacked @ np.atleast_1d(eta)
    r = dataset.y_stacked - fitted
    w = (1.0 / dataset.n_i)[dataset.loc_of_row]
    mse = float(np.dot(w * r, r)) / dataset.n
    n, p, q = dataset.n, dataset.p, dataset.q
    c_n = c0 * np.log(np.log(n * p + q))
    penalty = c_n * (np.log(n) / n) * (k * p + q)
    if mse == 0.0:
        return float("-inf")
    return float(np.log(mse) + penalty)


def bic(dataset: Dataset, fit_result: SasaFit, c0: float = 0.2) -> float:
    """Modified BIC of a fit; -inf flags a degenerate zero-residual fit."""
    return bic_value(dataset, fit_result.eta, fit_result.beta,
                     fit_result.k, c0=c0)


# ---------------------------------------------------------------------------
# Lambda grids and paths
# ---------------------------------------------------------------------------

def default_lambda_grid(dataset: Dataset, weights: WeightMatrix,
                        config: SolverConfig, n_lambda: int = 50,
                        lambda_min_ratio: float = 0.2,
                        init: AdmmState | None = None,
                        workspace: FitWorkspace | None = None) -> np.ndarray:
    """Log-spaced ascending grid with a data-adaptive upper end.

    lambda_max is the smallest doubled lambda whose fit collapses to one
    group (warm-starting each probe from the previous one), seeded at a
    small fraction of the largest initial pairwise gap.
    """
    ws = workspace if workspace is not None else make_workspace(dataset, config.vartheta)
    state = init if init is not None else initialize(dataset)
    gaps = state.beta[ws.pair_i] - state.beta[ws.pair_j]
    max_gap = float(np.sqrt(np.einsum("ij,ij->i", gaps, gaps)).max())
    lam = max(1e-8, 0.01 * max_gap)
    warm = state
    for _ in range(64):
        probe = fit(dataset, weights, lam, config=config, init=warm, workspace=ws)
        if probe.k == 1:
            break
        warm = probe.state
        lam *= 2.0
    else:
        raise SolverError("doubling search did not reach a single group; "
                          "is the penalty weight matrix degenerate?")
    if n_lambda == 1:
        return np.array([lam])
    return np.geomspace(lambda_min_ratio * lam, lam, n_lambda)


def solve_path(dataset: Dataset, weights: WeightMatrix, lambdas,
               config: SolverConfig | None = None,
               init: AdmmState | None = None,
               workspace: FitWorkspace | None = None) -> list[SasaFit | None]:
    """Fit every lambda in grid order, warm-starting each fit from the
    previous solution.  A diverged grid point yields None in its slot and
    the path continues from the last good state."""
    lambdas = np.asarray(list(lambdas), dtype=float)
    if lambdas.size == 0:
        raise ConfigError("lambda grid must be nonempty")
    config = config if config is not None else SolverConfig()
    ws = workspace if workspace is not None else make_workspace(dataset, config.vartheta)
    state = init if init is not None else initialize(dataset)
    fits: list[SasaFit | None] = []
    for lam in lambdas:
        try:
            f = fit(dataset, weights, float(lam), config=config, init=state,
                    workspace=ws)
        except SolverError:
            fits.append(None)
            continue
        fits.append(f)
        state = f.state
    return fits


# ---------------------------------------------------------------------------
# Grid selection
# ---------------------------------------------------------------------------

def _effective_psis(kind: str, psis) -> tuple:
    # psi has no effect on equal weights; collapse to one cell.
    return (0.0,) if kind == "equal" else tuple(psis)


def _weights_for(kind: str, psi: float, n: int, orders, beta_init) -> WeightMatrix:
    spec = WeightSpec(kind=kind, psi=psi)
    return compute_weights(spec, orders=orders, beta_init=beta_init, n=n)


def _path_in_direction(dataset, weights, lams, config, init, ws, direction):
    """Warm-started fits along the grid in one traversal direction,
    returned in ascending-lambda slot order."""
    if direction == "ascending":
        return solve_path(dataset, weights, lams, config=config, init=init,
                          workspace=ws)
    fits = solve_path(dataset, weights, lams[::-1], config=config, init=init,
                      workspace=ws)
    return fits[::-1]


def select(dataset: Dataset, graph: AdjacencyGraph | None, kind: str,
           grid: TuneGrid | None = None,
           config: SolverConfig | None = None) -> TuneResult:
    """Minimize the modified BIC over the (lambda, psi) grid.

    For each psi: build weights, walk the warm-started path in each
    configured direction, score every converged fit.  Ties break toward
    larger lambda (more parsimony).
    """
    grid = grid if grid is not None else TuneGrid()
    config = config if config is not None else SolverConfig()
    spec_probe = WeightSpec(kind=kind, psi=0.0)
    orders = None
    if spec_probe.requires_orders:
        if graph is None:
            raise DataError(f"weight kind {kind!r} needs an adjacency graph")
        orders = neighbor_orders(graph)

    ws = make_workspace(dataset, config.vartheta)
    init = initialize(dataset)
    beta_init = init.beta if spec_probe.requires_init else None

    psis = _effective_psis(kind, grid.psis)
    n_psi = len(psis)
    n_dir = len(grid.directions)
    n_lam = len(grid.lambdas) if grid.lambdas is not None else grid.n_lambda
    lambdas = np.zeros((n_psi, n_lam))
    score = np.full((n_dir, n_psi, n_lam), np.nan)
    khat = np.zeros((n_dir, n_psi, n_lam), dtype=np.int64)
    conv = np.zeros((n_dir, n_psi, n_lam), dtype=bool)
    failed = np.zeros((n_dir, n_psi, n_lam), dtype=bool)
    degenerate = np.zeros((n_dir, n_psi, n_lam), dtype=bool)

    best = None  # (bic, lam, fit, psi, direction)
    for r, psi in enumerate(psis):
        weights = _weights_for(kind, psi, dataset.n, orders, beta_init)
        if grid.lambdas is not None:
            lams = np.asarray(grid.lambdas, dtype=float)
        else:
            lams = default_lambda_grid(dataset, weights, config,
                                       n_lambda=grid.n_lambda,
                                       lambda_min_ratio=grid.lambda_min_ratio,
                                       init=init, workspace=ws)
        lambdas[r] = lams
        for d, direction in enumerate(grid.directions):
            fits = _path_in_direction(dataset, weights, lams, config, init,
                                      ws, direction)
            for c, f in enumerate(fits):
                if f is None:
                    failed[d, r, c] = True
                    continue
                val = bic(dataset, f, c0=grid.c0)
                score[d, r, c] = val
                khat[d, r, c] = f.k
                conv[d, r, c] = f.converged
                degenerate[d, r, c] = np.isneginf(val)
                if not f.converged:
                    continue
                if (best is None or val < best[0]
                        or (val == best[0] and f.lam > best[1])):
                    best = (val, f.lam, f, psi, direction)

    if best is None:
        raise SolverError("no (lambda, psi) cell converged; nothing to select")

    return TuneResult(kind=kind, criterion="bic", psis=np.asarray(psis),
                      directions=tuple(grid.directions), lambdas=lambdas,
                      score=score, khat=khat, converged=conv,
                      failed=failed, degenerate=degenerate,
                      best_psi=float(best[3]), best_lambda=float(best[1]),
                      best_direction=best[4], best_fit=best[2])


# ---------------------------------------------------------------------------
# Cross validation on replicate splits
# ---------------------------------------------------------------------------

def _fold_slices(n_obs: int, folds: int) -> list[np.ndarray]:
    return np.array_split(np.arange(n_obs), folds)


def split_replicates(dataset: Dataset, folds: int) -> list[tuple[Dataset, Dataset]]:
    """Per-location contiguous split of the repeated measures: fold j's
    validation set is the j-th part of every location."""
    if folds < 2:
        raise ConfigError("cross validation needs folds >= 2")
    short = [b.location_id for b in dataset.blocks if b.n_obs < folds]
    if short:
        raise DataError(
            f"locations {short[:5]} have fewer than {folds} replicates; "
            "use fewer folds")
    out = []
    parts = [_fold_slices(b.n_obs, folds) for b in dataset.blocks]
    for j in range(folds):
        train_blocks, val_blocks = [], []
        for b, pr in zip(dataset.blocks, parts):
            val_idx = pr[j]
            train_idx = np.setdiff1d(np.arange(b.n_obs), val_idx)
            train_blocks.append(LocationBlock(b.location_id, b.y[train_idx],
                                              b.Z[train_idx], b.X[train_idx]))
            val_blocks.append(LocationBlock(b.location_id, b.y[val_idx],
                                            b.Z[val_idx], b.X[val_idx]))
        out.append((Dataset(train_blocks), Dataset(val_blocks)))
    return out


def _prediction_sse(val: Dataset, eta: np.ndarray, beta: np.ndarray) -> float:
    fitted = np.einsum("ij,ij->i", val.X_stacked, beta[val.loc_of_row])
    if val.q:
        fitted = fitted + val.Z_stacked @ eta
    r = val.y_stacked - fitted
    return float(r @ r)


def cross_validate(dataset: Dataset, graph: AdjacencyGraph | None, kind: str,
                   grid: TuneGrid | None = None, folds: int = 10,
                   config: SolverConfig | None = None) -> TuneResult:
    """K-fold selection on replicate splits.

    The lambda grids are fixed from the full dataset (so cells line up
    across folds); weights that need an initial coefficient estimate
    recompute it per training fold.  The score of a cell is the mean of
    per-fold validation mean squared errors; the returned best_fit is
    the full-data path fit at the winning cell.
    """
    grid = grid if grid is not None else TuneGrid()
    config = config if config is not None else SolverConfig()
    spec_probe = WeightSpec(kind=kind, psi=0.0)
    orders = None
    if spec_probe.requires_orders:
        if graph is None:
            raise DataError(f"weight kind {kind!r} needs an adjacency graph")
        orders = neighbor_orders(graph)

    ws_full = make_workspace(dataset, config.vartheta)
    init_full = initialize(dataset)
    beta_init_full = init_full.beta if spec_probe.requires_init else None

    psis = _effective_psis(kind, grid.psis)
    n_psi = len(psis)
    n_lam = len(grid.lambdas) if grid.lambdas is not None else grid.n_lambda
    lambdas = np.zeros((n_psi, n_lam))
    for r, psi in enumerate(psis):
        w_full = _weights_for(kind, psi, dataset.n, orders, beta_init_full)
        if grid.lambdas is not None:
            lambdas[r] = np.asarray(grid.lambdas, dtype=float)
        else:
            lambdas[r] = default_lambda_grid(
                dataset, w_full, config, n_lambda=grid.n_lambda,
                lambda_min_ratio=grid.lambda_min_ratio,
                init=init_full, workspace=ws_full)

    sse = np.zeros((n_psi, n_lam))
    count = np.zeros((n_psi, n_lam), dtype=np.int64)
    khat = np.zeros((n_psi, n_lam), dtype=np.int64)
    conv = np.ones((n_psi, n_lam), dtype=bool)
    failed = np.zeros((n_psi, n_lam), dtype=bool)

    for train, val in split_replicates(dataset, folds):
        ws_t = make_workspace(train, config.vartheta)
        init_t = initialize(train)
        beta_init_t = init_t.beta if spec_probe.requires_init else None
        for r, psi in enumerate(psis):
            w_t = _weights_for(kind, psi, train.n, orders, beta_init_t)
            fits = solve_path(train, w_t, lambdas[r], config=config,
                              init=init_t, workspace=ws_t)
            for c, f in enumerate(fits):
                if f is None or not f.converged:
                    failed[r, c] |= f is None
                    conv[r, c] &= f is not None and f.converged
                    continue
                sse[r, c] += _prediction_sse(val, f.eta, f.beta) / val.m
                count[r, c] += 1

    ok = count == folds
    if not ok.any():
        raise SolverError("no (lambda, psi) cell survived every fold")
    score = np.where(ok, sse / folds, np.nan)

    best = None  # (err, lam, r, c)
    for r in range(n_psi):
        for c in range(n_lam):
            if not ok[r, c]:
                continue
            val_err = score[r, c]
            lam = lambdas[r, c]
            if (best is None or val_err < best[0]
                    or (val_err == best[0] and lam > best[1])):
                best = (val_err, lam, r, c)

    r, c = best[2], best[3]
    w_best = _weights_for(kind, psis[r], dataset.n, orders, beta_init_full)
    full_fits = solve_path(dataset, w_best, lambdas[r], config=config,
                           init=init_full, workspace=ws_full)
    best_fit = full_fits[c]
    if best_fit is None:
        raise SolverError("full-data fit diverged at the selected cell")
    for cc, f in enumerate(full_fits):
        if f is not None:
            khat[r, cc] = f.k

    return TuneResult(kind=kind, criterion="cv", psis=np.asarray(psis),
                      lambdas=lambdas, score=score, khat=khat, converged=conv,
                      failed=failed,
                      degenerate=np.zeros_like(failed),
                      best_psi=float(psis[r]), best_lambda=float(lambdas[r, c]),
                      best_fit=best_fit)
