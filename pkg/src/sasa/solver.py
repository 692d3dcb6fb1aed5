"""ADMM solver for the spatially weighted pairwise-fusion objective

    Q(eta, beta) = 1/2 sum_i (1/n_i) sum_h (y_ih - z'eta - x'beta_i)^2
                   + sum_{i<j} p(||beta_i - beta_j||, c_ij * lambda)

The equality constraints beta_i - beta_j = delta_ij are split off with
multipliers v_ij and penalty parameter vartheta.  One iteration updates
beta, eta, delta, v in that order; the stopping rule is the primal
residual ||A beta - delta|| < tol.

Linear systems are factored once per fit and solved, never inverted.
The beta-update system matrix

    M = X' Q_{Z,Omega} X + vartheta * A'A

is constant across iterations (and across lambda, for fixed vartheta),
and A'A is applied through the identity D'D = n*I - 11', avoiding the
n(n-1)/2-row difference matrix entirely.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import _backend
from .errors import ConfigError, DataError, SolverError
from .model import Coefficients, Dataset, Partition, SolverConfig
from .oracle import solve_partition
from .penalty import scad_prox_rows, scad_value
from .weights import WeightMatrix

__all__ = [
    "DifferenceStructure",
    "AdmmState",
    "SasaFit",
    "FitWorkspace",
    "build_difference_structure",
    "projection_matrix",
    "make_workspace",
    "update_beta",
    "update_eta",
    "update_delta",
    "update_v",
    "initialize",
    "fit",
    "extract_groups",
    "refit",
    "objective_value",
]


# ---------------------------------------------------------------------------
# Pair structure
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DifferenceStructure:
    """All unordered pairs (i, j), i < j, in lexicographic order, plus the
    signed difference matrix D with rows e_i - e_j."""

    n: int
    pair_i: np.ndarray
    pair_j: np.ndarray

    @property
    def n_pairs(self) -> int:
        return self.pair_i.shape[0]

    def d_matrix(self) -> np.ndarray:
        """Dense D, one row per pair.  Only for tests/small n."""
        d = np.zeros((self.n_pairs, self.n))
        rows = np.arange(self.n_pairs)
        d[rows, self.pair_i] = 1.0
        d[rows, self.pair_j] = -1.0
        return d

    def ata_dense(self, p: int) -> np.ndarray:
        """Dense A'A = (D'D) kron I_p, materialised for tests."""
        d = self.d_matrix()
        return np.kron(d.T @ d, np.eye(p))

    def ata_structured(self, p: int) -> np.ndarray:
        """A'A via D'D = n*I - 11' (the form the solver uses)."""
        return np.kron(self.n * np.eye(self.n) - np.ones((self.n, self.n)),
                       np.eye(p))


def build_difference_structure(n: int) -> DifferenceStructure:
    if n < 2:
        raise DataError(f"need at least two locations for pairwise fusion, got n={n}")
    pi, pj = np.triu_indices(n, k=1)
    return DifferenceStructure(n=n, pair_i=pi.astype(np.int64),
                               pair_j=pj.astype(np.int64))


# ---------------------------------------------------------------------------
# The profiled projection Q_{Z,Omega}
# ---------------------------------------------------------------------------

class ProjectionOperator:
    """Applies Q = Omega - Omega Z (Z'Omega Z)^{-1} Z'Omega to stacked
    m-vectors; reduces to Omega itself when q = 0."""

    def __init__(self, dataset: Dataset):
        self.m = dataset.m
        self.q = dataset.q
        self.w = (1.0 / dataset.n_i)[dataset.loc_of_row]
        if dataset.q:
            z = dataset.Z_stacked
            ztoz = z.T @ (z * self.w[:, None])
            try:
                self._chol = scipy.linalg.cho_factor(ztoz, lower=True)
            except scipy.linalg.LinAlgError:
                raise DataError("global design rank-deficient") from None
            self._z = z
        else:
            self._chol = None
            self._z = None

    def apply(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        wu = self.w * u if u.ndim == 1 else self.w[:, None] * u
        if not self.q:
            return wu
        corr = self._z @ scipy.linalg.cho_solve(self._chol, self._z.T @ wu)
        return wu - (self.w * corr if u.ndim == 1 else self.w[:, None] * corr)

    __call__ = apply

    def dense(self) -> np.ndarray:
        """Materialised m x m matrix (tests only)."""
        return self.apply(np.eye(self.m))


def projection_matrix(dataset: Dataset) -> ProjectionOperator:
    """The weighting/projection operator used by the beta update."""
    return ProjectionOperator(dataset)


# ---------------------------------------------------------------------------
# Workspace: everything constant across iterations (and across lambda)
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FitWorkspace:
    """Prefactored systems and stacked data shared by every fit with the
    same dataset and vartheta."""

    n: int
    p: int
    q: int
    m: int
    vartheta: float
    pair_i: np.ndarray
    pair_j: np.ndarray
    chol_m: np.ndarray          # lower Cholesky factor of M, Fortran order
    b0: np.ndarray              # X' Q y
    chol_z: np.ndarray          # lower factor of Z'Omega Z (0x0 when q=0)
    zox: np.ndarray             # Z'Omega X  (q x n*p)
    zoy: np.ndarray             # Z'Omega y
    y: np.ndarray
    z_stack: np.ndarray
    x_stack: np.ndarray
    offsets: np.ndarray
    inv_ni: np.ndarray
    loc_of_row: np.ndarray


def make_workspace(dataset: Dataset, vartheta: float) -> FitWorkspace:
    """Factor the beta/eta systems once for a (dataset, vartheta) pair."""
    n, p, q = dataset.n, dataset.p, dataset.q
    diff = build_difference_structure(n)
    nb = n * p
    inv_ni = 1.0 / dataset.n_i.astype(float)

    xtox = np.zeros((nb, nb))
    xtoy = np.zeros(nb)
    xtoz = np.zeros((nb, q))
    ztoz = np.zeros((q, q))
    ztoy = np.zeros(q)
    for i, b in enumerate(dataset.blocks):
        s = slice(i * p, (i + 1) * p)
        xtox[s, s] = b.X.T @ b.X * inv_ni[i]
        xtoy[s] = b.X.T @ b.y * inv_ni[i]
        if q:
            xtoz[s, :] = b.X.T @ b.Z * inv_ni[i]
            ztoz += b.Z.T @ b.Z * inv_ni[i]
            ztoy += b.Z.T @ b.y * inv_ni[i]

    if q:
        try:
            lz = scipy.linalg.cholesky(ztoz, lower=True)
        except scipy.linalg.LinAlgError:
            raise DataError("global design rank-deficient") from None
        xtqx = xtox - xtoz @ scipy.linalg.cho_solve((lz, True), xtoz.T)
        b0 = xtoy - xtoz @ scipy.linalg.cho_solve((lz, True), ztoy)
    else:
        lz = np.zeros((0, 0))
        xtqx = xtox
        b0 = xtoy

    m_sys = xtqx + vartheta * (n * np.eye(nb)
                               - np.kron(np.ones((n, n)), np.eye(p)))
    try:
        lm = scipy.linalg.cholesky(m_sys, lower=True)
    except scipy.linalg.LinAlgError:
        cond = np.linalg.cond(m_sys)
        raise SolverError("beta-update system is singular or indefinite "
                          f"(condition number {cond:.3e})") from None

    return FitWorkspace(
        n=n, p=p, q=q, m=dataset.m, vartheta=float(vartheta),
        pair_i=diff.pair_i, pair_j=diff.pair_j,
        chol_m=np.asfortranarray(lm), b0=b0,
        chol_z=np.asfortranarray(lz),
        zox=np.ascontiguousarray(xtoz.T), zoy=ztoy,
        y=dataset.y_stacked,
        z_stack=np.ascontiguousarray(dataset.Z_stacked),
        x_stack=np.ascontiguousarray(dataset.X_stacked),
        offsets=dataset.offsets, inv_ni=inv_ni,
        loc_of_row=dataset.loc_of_row)


# ---------------------------------------------------------------------------
# Solver state and results
# ---------------------------------------------------------------------------

@dataclass
class AdmmState:
    """Iterates plus per-iteration diagnostics.

    delta and v hold one row per pair, in the DifferenceStructure pair
    order; primal_residuals[k] is ||A beta - delta|| after iteration k.
    """

    eta: np.ndarray
    beta: np.ndarray
    delta: np.ndarray
    v: np.ndarray
    pair_i: np.ndarray
    pair_j: np.ndarray
    iterations: int = 0
    primal_residuals: np.ndarray = field(default_factory=lambda: np.zeros(0))
    dual_residuals: np.ndarray = field(default_factory=lambda: np.zeros(0))
    objectives: np.ndarray = field(default_factory=lambda: np.zeros(0))


@dataclass
class SasaFit:
    """Converged (or iteration-capped) solver output."""

    state: AdmmState
    partition: Partition
    alpha: np.ndarray
    converged: bool
    objective: float
    lam: float

    @property
    def beta(self) -> np.ndarray:
        return self.state.beta

    @property
    def eta(self) -> np.ndarray:
        return self.state.eta

    @property
    def k(self) -> int:
        return self.partition.k


# ---------------------------------------------------------------------------
# Individual update steps (the fused loop lives in the backend kernels)
# ---------------------------------------------------------------------------

def update_beta(state: AdmmState, dataset: Dataset, diff: DifferenceStructure,
                config: SolverConfig, workspace: FitWorkspace | None = None) -> np.ndarray:
    """Solve (X'QX + vartheta A'A) beta = X'Qy + A'(vartheta delta - v)."""
    ws = workspace if workspace is not None else make_workspace(dataset, config.vartheta)
    w = state.delta - state.v / config.vartheta
    scat = np.zeros((ws.n, ws.p))
    for l in range(ws.p):
        scat[:, l] = (np.bincount(diff.pair_i, weights=w[:, l], minlength=ws.n)
                      - np.bincount(diff.pair_j, weights=w[:, l], minlength=ws.n))
    rhs = ws.b0 + config.vartheta * scat.ravel()
    sol = scipy.linalg.cho_solve((ws.chol_m, True), rhs)
    return sol.reshape(ws.n, ws.p)


def update_eta(state: AdmmState, dataset: Dataset) -> np.ndarray:
    """WLS of the current residual on the global covariates."""
    if dataset.q < 1:
        raise DataError("eta update requires q >= 1 global covariates")
    w = (1.0 / dataset.n_i)[dataset.loc_of_row]
    z = dataset.Z_stacked
    resp = dataset.y_stacked - np.einsum(
        "ij,ij->i", dataset.X_stacked, state.beta[dataset.loc_of_row])
    ztoz = z.T @ (z * w[:, None])
    try:
        return scipy.linalg.solve(ztoz, z.T @ (w * resp), assume_a="pos")
    except scipy.linalg.LinAlgError:
        raise DataError("global design rank-deficient") from None


def update_delta(state: AdmmState, weights: WeightMatrix, penalty,
                 config: SolverConfig) -> np.ndarray:
    """Per-pair proximal step on sigma = (beta_i - beta_j) + v/vartheta."""
    gap = state.beta[state.pair_i] - state.beta[state.pair_j]
    sigma = gap + state.v / config.vartheta
    c = weights.pair_weights(state.pair_i, state.pair_j)
    return penalty.prox_rows(sigma, c, config.vartheta)


def update_v(state: AdmmState, config: SolverConfig) -> np.ndarray:
    """Dual ascent: v += vartheta * (beta_i - beta_j - delta)."""
    gap = state.beta[state.pair_i] - state.beta[state.pair_j]
    return state.v + config.vartheta * (gap - state.delta)


# ---------------------------------------------------------------------------
# Initialization
# ---------------------------------------------------------------------------

def _state_from_coefficients(eta: np.ndarray, beta: np.ndarray,
                             diff: DifferenceStructure) -> AdmmState:
    delta0 = beta[diff.pair_i] - beta[diff.pair_j]
    return AdmmState(eta=np.asarray(eta, dtype=float),
                     beta=np.asarray(beta, dtype=float),
                     delta=delta0, v=np.zeros_like(delta0),
                     pair_i=diff.pair_i, pair_j=diff.pair_j)


def initialize(dataset: Dataset, mode: str = "per_location",
               k_star: int | None = None, ridge: float = 1e-3) -> AdmmState:
    """Starting point for the ADMM iteration.

    per_location fits the joint model with every location its own group
    (so beta_i is the per-location least-squares fit); delta starts at
    the pairwise differences and v at zero.  ridge_fusion is the
    fallback when per-location fits are rank-deficient (tiny n_i): a
    ridge-fused fit is ranked into k_star bins and refit groupwise.
    """
    diff = build_difference_structure(dataset.n)
    if mode == "per_location":
        singleton = Partition(np.arange(1, dataset.n + 1))
        try:
            eta0, alpha0 = solve_partition(dataset, singleton)
        except DataError:
            raise DataError(
                "per-location initial fit is rank-deficient (each location "
                "needs enough replicates to identify its coefficients); "
                "try mode='ridge_fusion'") from None
        return _state_from_coefficients(eta0, alpha0, diff)
    if mode == "ridge_fusion":
        if k_star is None or k_star < 1 or k_star > dataset.n:
            raise ConfigError("ridge_fusion needs k_star in 1..n")
        if not 0 < ridge:
            raise ConfigError("ridge must be > 0")
        ws = make_workspace(dataset, ridge)
        beta_r = scipy.linalg.cho_solve((ws.chol_m, True), ws.b0).reshape(
            dataset.n, dataset.p)
        # Rank locations along the dominant direction of the ridge fit,
        # then cut into k_star nearly equal bins.
        centred = beta_r - beta_r.mean(axis=0)
        if dataset.p == 1:
            score = beta_r[:, 0]
        else:
            _, _, vt = np.linalg.svd(centred, full_matrices=False)
            score = centred @ vt[0]
        order = np.argsort(score, kind="stable")
        labels = np.empty(dataset.n, dtype=np.int64)
        for b, idx in enumerate(np.array_split(order, k_star)):
            labels[idx] = b + 1
        part = Partition.from_labels(labels)
        eta0, alpha0 = solve_partition(dataset, part)
        return _state_from_coefficients(eta0, alpha0[part.assignment - 1], diff)
    raise ConfigError(f"unknown initialization mode {mode!r}")


# ---------------------------------------------------------------------------
# Group extraction and the full fit
# ---------------------------------------------------------------------------

class _UnionFind:
    def __init__(self, n: int):
        self.parent = list(range(n))

    def find(self, a: int) -> int:
        while self.parent[a] != a:
            self.parent[a] = self.parent[self.parent[a]]
            a = self.parent[a]
        return a

    def union(self, a: int, b: int) -> None:
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[max(ra, rb)] = min(ra, rb)


def extract_groups(state: AdmmState, config: SolverConfig) -> tuple[Partition, np.ndarray]:
    """Connected components of the zero-delta graph, and group means.

    Pairs with ||delta_ij|| <= group_tol count as fused; membership is
    the transitive closure.  alpha_k averages beta over group k.
    """
    n = state.beta.shape[0]
    norms = np.sqrt(np.einsum("ij,ij->i", state.delta, state.delta))
    uf = _UnionFind(n)
    for k in np.flatnonzero(norms <= config.group_tol):
        uf.union(int(state.pair_i[k]), int(state.pair_j[k]))
    roots = [uf.find(i) for i in range(n)]
    partition = Partition.from_labels(roots)
    alpha = np.vstack([state.beta[g].mean(axis=0) for g in partition.groups()])
    return partition, alpha


def objective_value(dataset: Dataset, eta: np.ndarray, beta: np.ndarray,
                    weights: WeightMatrix, lam: float, gamma: float) -> float:
    """The penalized objective at arbitrary coefficients."""
    fitted = np.einsum("ij,ij->i", dataset.X_stacked,
                       np.atleast_2d(beta)[dataset.loc_of_row])
    if dataset.q:
        fitted = fitted + dataset.Z_stacked @ np.atleast_1d(eta)
    r = dataset.y_stacked - fitted
    w = (1.0 / dataset.n_i)[dataset.loc_of_row]
    loss = 0.5 * float(np.dot(w * r, r))
    diff = build_difference_structure(dataset.n)
    gap = beta[diff.pair_i] - beta[diff.pair_j]
    c = weights.pair_weights(diff.pair_i, diff.pair_j)
    pen = float(np.sum(scad_value(np.sqrt(np.einsum("ij,ij->i", gap, gap)),
                                  lam * c, gamma)))
    return loss + pen


def fit(dataset: Dataset, weights: WeightMatrix, lam: float,
        config: SolverConfig | None = None, init: AdmmState | None = None,
        workspace: FitWorkspace | None = None) -> SasaFit:
    """Run the ADMM cycle to convergence and extract the subgroups."""
    if lam < 0:
        raise ConfigError(f"lambda must be >= 0, got {lam}")
    config = config if config is not None else SolverConfig()
    ws = workspace if workspace is not None else make_workspace(dataset, config.vartheta)
    if ws.n != dataset.n or ws.p != dataset.p or ws.vartheta != config.vartheta:
        raise ConfigError("workspace does not match dataset/config")
    if init is None:
        init = initialize(dataset)
    c_pairs = weights.pair_weights(ws.pair_i, ws.pair_j)
    if c_pairs.shape[0] != ws.pair_i.shape[0]:
        raise DataError("weight matrix size does not match dataset")
    lam_eff = np.ascontiguousarray(lam * c_pairs)

    (beta, eta, delta, v, iters, status, primal, dual, objective
     ) = _backend.run_admm(
        np.ascontiguousarray(init.beta), np.ascontiguousarray(init.eta),
        np.ascontiguousarray(init.delta), np.ascontiguousarray(init.v),
        ws.pair_i, ws.pair_j, lam_eff,
        config.gamma, config.vartheta, config.tol, config.max_iter,
        ws.chol_m, ws.b0, ws.chol_z, ws.zox, ws.zoy,
        ws.y, ws.z_stack, ws.x_stack, ws.offsets, ws.inv_ni, ws.loc_of_row)

    if status == _backend.STATUS_DIVERGED:
        raise SolverError(f"divergence at iteration {iters}")

    state = AdmmState(eta=eta, beta=beta, delta=delta, v=v,
                      pair_i=ws.pair_i, pair_j=ws.pair_j, iterations=iters,
                      primal_residuals=primal, dual_residuals=dual,
                      objectives=objective)
    partition, alpha = extract_groups(state, config)
    return SasaFit(state=state, partition=partition, alpha=alpha,
                   converged=(status == _backend.STATUS_CONVERGED),
                   objective=float(objective[-1]), lam=float(lam))


def refit(dataset: Dataset, partition: Partition) -> Coefficients:
    """Unpenalized WLS assuming the estimated groups are the truth."""
    eta, alpha = solve_partition(dataset, partition)
    beta = alpha[partition.assignment - 1]
    return Coefficients(eta=eta, beta=beta, alpha=alpha, partition=partition)
