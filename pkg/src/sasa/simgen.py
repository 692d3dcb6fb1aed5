"""Reproducible generation of the grid simulation designs.

Covariate design (shared by all scenarios): the global covariates are an
intercept plus four unit-variance normals with pairwise correlation rho;
the local covariates are a standard normal and a centred/standardised
Bernoulli(0.7).  Shared coefficients are drawn from Uniform[1,2] per
replicate; errors are iid N(0, sigma^2).

Group layouts:

    s1 / s2      three contiguous row-major bands, sizes {16,17,16} on
                 the 7x7 grid and {33,34,33} on 10x10
    unbalanced   10x10 only: 3x3 corner blocks (9 cells) in the top-left
                 and bottom-right, the remaining halves (41 cells each)
                 forming the two large groups
    random       iid uniform over three labels (no spatial structure)

Each band/block is rook-connected.  Group coefficient tables:

    s1           (1,1), (1.5,1.5), (2,2)
    s2           (1,1), (1.25,1.25), (1.5,1.5)
    unbalanced   (1,1), (1.5,1.5), (2,2), (2.5,2.5)
    random       the s1 table

Replicate r of a run uses the RNG stream seeded by (seed, r), so
replicates are order-independent and safe to run concurrently.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .errors import DataError
from .graph import build_grid_adjacency
from .metrics import adjusted_rand_index, khat_summary, rmse_beta
from .model import Dataset, LocationBlock, Partition, SolverConfig
from .solver import refit
from .tuning import DEFAULT_PSIS, TuneGrid, cross_validate, select

__all__ = [
    "SimScenario",
    "SimTruth",
    "MethodSpec",
    "ReplicateResult",
    "SimulationReport",
    "ALPHA_TABLES",
    "layout",
    "sample_dataset",
    "generate",
    "run_replicates",
]

SETTINGS = ("s1", "s2", "unbalanced", "random")

ALPHA_TABLES = {
    "s1": np.array([[1.0, 1.0], [1.5, 1.5], [2.0, 2.0]]),
    "s2": np.array([[1.0, 1.0], [1.25, 1.25], [1.5, 1.5]]),
    "unbalanced": np.array([[1.0, 1.0], [1.5, 1.5], [2.0, 2.0], [2.5, 2.5]]),
    "random": np.array([[1.0, 1.0], [1.5, 1.5], [2.0, 2.0]]),
}

_BAND_SIZES = {(7, 7): (16, 17, 16), (10, 10): (33, 34, 33)}


@dataclass(frozen=True)
class SimScenario:
    """One simulation design point."""

    setting: str = "s1"
    grid: tuple[int, int] = (7, 7)
    n_i: int = 10
    seed: int = 0
    sigma: float = 0.5
    rho: float = 0.3

    def __post_init__(self):
        if self.setting not in SETTINGS:
            raise DataError(f"unknown setting {self.setting!r}; expected {SETTINGS}")
        if self.n_i < 1:
            raise DataError("n_i must be >= 1")
        if not self.sigma > 0:
            raise DataError("sigma must be > 0")
        if not 0 <= self.rho < 1:
            raise DataError("rho must lie in [0, 1)")

    @property
    def n(self) -> int:
        return self.grid[0] * self.grid[1]


@dataclass(frozen=True)
class SimTruth:
    """Ground truth behind one generated dataset."""

    partition: Partition
    alpha_true: np.ndarray
    eta_true: np.ndarray

    @property
    def beta_true(self) -> np.ndarray:
        return self.alpha_true[self.partition.assignment - 1]


def _band_partition(n: int, sizes) -> Partition:
    labels = np.empty(n, dtype=np.int64)
    start = 0
    for g, size in enumerate(sizes):
        labels[start:start + size] = g + 1
        start += size
    return Partition(labels)


def layout(setting: str, grid: tuple[int, int],
           rng: np.random.Generator | None = None) -> Partition:
    """Cell-to-group map for a setting on a grid (row-major indexing)."""
    rows, cols = grid
    n = rows * cols
    if setting in ("s1", "s2"):
        if grid not in _BAND_SIZES:
            raise DataError(f"fixed three-group layouts ship for 7x7 and 10x10 "
                            f"grids only, got {rows}x{cols}")
        return _band_partition(n, _BAND_SIZES[grid])
    if setting == "unbalanced":
        if grid != (10, 10):
            raise DataError("the unbalanced layout ships for the 10x10 grid only")
        labels = np.empty(n, dtype=np.int64)
        for r in range(rows):
            for c in range(cols):
                i = r * cols + c
                if r < 3 and c < 3:
                    labels[i] = 1
                elif r < 5:
                    labels[i] = 2
                elif r >= 7 and c >= 7:
                    labels[i] = 4
                else:
                    labels[i] = 3
        return Partition(labels)
    if setting == "random":
        if rng is None:
            raise DataError("the random layout needs an RNG")
        while True:
            labels = rng.integers(1, 4, size=n)
            if len(np.unique(labels)) == 3:
                return Partition(labels.astype(np.int64))
    raise DataError(f"unknown setting {setting!r}")


def sample_dataset(partition: Partition, alpha: np.ndarray, n_i: int,
                   rng: np.random.Generator, sigma: float = 0.5,
                   rho: float = 0.3, q: int = 5,
                   eta: np.ndarray | None = None) -> tuple[Dataset, SimTruth]:
    """Draw one dataset from explicit truth.

    Draw order (fixed for reproducibility): eta if not given, then the
    correlated normals, x1, x2, and the errors, each in one stacked
    block of m = n * n_i values.
    """
    alpha = np.atleast_2d(np.asarray(alpha, dtype=float))
    if alpha.shape[0] != partition.k:
        raise DataError(f"alpha has {alpha.shape[0]} rows for K={partition.k}")
    n = partition.n
    p = alpha.shape[1]
    m = n * n_i
    if eta is None:
        eta = rng.uniform(1.0, 2.0, size=q) if q else np.zeros(0)
    else:
        eta = np.asarray(eta, dtype=float)
        if eta.shape != (q,):
            raise DataError(f"eta must have length q={q}")

    if q:
        z = np.ones((m, q))
        if q > 1:
            cov = np.full((q - 1, q - 1), rho)
            np.fill_diagonal(cov, 1.0)
            chol = np.linalg.cholesky(cov)
            z[:, 1:] = rng.standard_normal((m, q - 1)) @ chol.T
    else:
        z = np.zeros((m, 0))

    x = np.empty((m, p))
    x[:, 0] = rng.standard_normal(m)
    if p > 1:
        bern = (rng.random(m) < 0.7).astype(float)
        x[:, 1] = (bern - 0.7) / np.sqrt(0.7 * 0.3)
    for extra in range(2, p):
        x[:, extra] = rng.standard_normal(m)

    eps = sigma * rng.standard_normal(m)
    beta_rows = alpha[partition.assignment - 1]
    beta_by_row = np.repeat(beta_rows, n_i, axis=0)
    y = np.einsum("ij,ij->i", x, beta_by_row) + eps
    if q:
        y = y + z @ eta

    blocks = []
    for i in range(n):
        sl = slice(i * n_i, (i + 1) * n_i)
        blocks.append(LocationBlock(f"s{i:03d}", y[sl], z[sl], x[sl]))
    dataset = Dataset(blocks)
    truth = SimTruth(partition=partition, alpha_true=alpha, eta_true=eta)
    return dataset, truth


def generate(scenario: SimScenario,
             rng: np.random.Generator | None = None) -> tuple[Dataset, SimTruth]:
    """Dataset plus truth for a scenario (fresh stream from its seed when
    no RNG is passed)."""
    if rng is None:
        rng = np.random.default_rng(np.random.SeedSequence([scenario.seed, 0]))
    part = layout(scenario.setting, scenario.grid,
                  rng if scenario.setting == "random" else None)
    alpha = ALPHA_TABLES[scenario.setting]
    return sample_dataset(part, alpha, scenario.n_i, rng,
                          sigma=scenario.sigma, rho=scenario.rho)


# ---------------------------------------------------------------------------
# Replicate orchestration
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class MethodSpec:
    """How each replicate is tuned and fit."""

    kind: str = "sp"
    criterion: str = "bic"
    psis: tuple = DEFAULT_PSIS
    n_lambda: int = 50
    lambda_min_ratio: float = 1e-3
    folds: int = 10
    contiguity: str = "rook"

    def grid(self) -> TuneGrid:
        return TuneGrid(psis=self.psis, n_lambda=self.n_lambda,
                        lambda_min_ratio=self.lambda_min_ratio)


@dataclass
class ReplicateResult:
    rep: int
    ok: bool
    error: str = ""
    khat: int = 0
    ari: float = float("nan")
    rmse: float = float("nan")
    rmse_refit: float = float("nan")
    lam: float = float("nan")
    psi: float = float("nan")
    converged: bool = False


@dataclass
class SimulationReport:
    scenario: SimScenario
    method: MethodSpec
    replicates: list[ReplicateResult]
    aggregate: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "scenario": {
                "setting": self.scenario.setting,
                "grid": list(self.scenario.grid),
                "n_i": self.scenario.n_i,
                "seed": self.scenario.seed,
                "sigma": self.scenario.sigma,
                "rho": self.scenario.rho,
            },
            "method": {
                "kind": self.method.kind,
                "criterion": self.method.criterion,
                "psis": list(self.method.psis),
                "n_lambda": self.method.n_lambda,
            },
            "aggregate": self.aggregate,
        }


def _replicate_worker(args) -> ReplicateResult:
    scenario, method, config, rep = args
    rng = np.random.default_rng(np.random.SeedSequence([scenario.seed, rep]))
    try:
        dataset, truth = generate(scenario, rng)
        graph = build_grid_adjacency(*scenario.grid, contiguity=method.contiguity)
        if method.criterion == "bic":
            result = select(dataset, graph, method.kind, grid=method.grid(),
                            config=config)
        elif method.criterion == "cv":
            result = cross_validate(dataset, graph, method.kind,
                                    grid=method.grid(), folds=method.folds,
                                    config=config)
        else:
            raise DataError(f"unknown criterion {method.criterion!r}")
        best = result.best_fit
        coeffs = refit(dataset, best.partition)
        return ReplicateResult(
            rep=rep, ok=True, khat=best.k,
            ari=adjusted_rand_index(best.partition, truth.partition),
            rmse=rmse_beta(best.beta, truth.beta_true),
            rmse_refit=rmse_beta(coeffs.beta, truth.beta_true),
            lam=result.best_lambda, psi=result.best_psi,
            converged=best.converged)
    except Exception as exc:  # per-replicate failures are recorded, not fatal
        return ReplicateResult(rep=rep, ok=False, error=f"{type(exc).__name__}: {exc}")


def aggregate_results(results: list[ReplicateResult], true_k: int) -> dict:
    """Fold replicate metrics into the table-style summary."""
    ok = [r for r in results if r.ok]
    out = {"n_reps": len(results), "n_failed": len(results) - len(ok)}
    if not ok:
        return out
    khat_mean, khat_se, per = khat_summary([r.khat for r in ok], true_k)
    out.update(khat_mean=khat_mean, khat_se=khat_se, per=per)
    for name in ("ari", "rmse", "rmse_refit"):
        vals = np.array([getattr(r, name) for r in ok], dtype=float)
        out[f"{name}_mean"] = float(vals.mean())
        out[f"{name}_se"] = (float(vals.std(ddof=1) / np.sqrt(len(vals)))
                             if len(vals) > 1 else 0.0)
    return out


def run_replicates(scenario: SimScenario, method: MethodSpec, n_reps: int,
                   config: SolverConfig | None = None,
                   jobs: int = 1) -> SimulationReport:
    """Generate, tune, and score n_reps independent replicates.

    Deterministic given (scenario.seed, n_reps); replicate r's stream
    depends only on (seed, r), so results are independent of execution
    order and of jobs.
    """
    if n_reps < 1:
        raise DataError("n_reps must be >= 1")
    config = config if config is not None else SolverConfig()
    tasks = [(scenario, method, config, rep) for rep in range(n_reps)]
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_replicate_worker, tasks))
    else:
        results = [_replicate_worker(t) for t in tasks]
    true_k = ALPHA_TABLES[scenario.setting].shape[0]
    report = SimulationReport(scenario=scenario, method=method,
                              replicates=results,
                              aggregate=aggregate_results(results, true_k))
    return report
