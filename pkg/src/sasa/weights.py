"""Pairwise penalty weights.

Four schemes, all yielding c_ij in (0, 1]:

    equal    c_ij = 1
    reg_sp   c_ij = exp(psi * (1 - a_ij) * ||beta0_i - beta0_j||)
    reg      c_ij = exp(-psi * ||beta0_i - beta0_j||)
    sp       c_ij = exp(psi * (1 - a_ij))

a_ij is the neighbor order (>= 1 off the diagonal) and beta0 an initial
per-location coefficient estimate, so every exponent is <= 0.  Weights
are computed once, before the solver runs, and held fixed.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DataError
from .graph import NeighborOrders

__all__ = ["WeightSpec", "WeightMatrix", "compute_weights", "WEIGHT_KINDS"]

WEIGHT_KINDS = ("equal", "reg_sp", "reg", "sp")

# exp() underflows to exact 0 below ~-745; keep weights strictly positive.
_FLOOR = np.finfo(float).tiny


@dataclass(frozen=True)
class WeightSpec:
    """Scheme selector plus the scale psi."""

    kind: str = "equal"
    psi: float = 1.0

    def __post_init__(self):
        if self.kind not in WEIGHT_KINDS:
            raise DataError(f"unknown weight kind {self.kind!r}; "
                            f"expected one of {WEIGHT_KINDS}")
        if self.psi < 0:
            raise DataError(f"psi must be >= 0, got {self.psi}")

    @property
    def requires_orders(self) -> bool:
        return self.kind in ("reg_sp", "sp")

    @property
    def requires_init(self) -> bool:
        return self.kind in ("reg_sp", "reg")


@dataclass(frozen=True)
class WeightMatrix:
    """Symmetric n x n matrix of pair weights in (0, 1]; diagonal unused."""

    c: np.ndarray

    def pair_weights(self, pair_i: np.ndarray, pair_j: np.ndarray) -> np.ndarray:
        """Weights for an explicit pair list, as a flat vector."""
        return self.c[pair_i, pair_j]


def _pair_gaps(beta_init: np.ndarray) -> np.ndarray:
    """n x n matrix of Euclidean distances between coefficient rows."""
    diff = beta_init[:, None, :] - beta_init[None, :, :]
    return np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))


def compute_weights(spec: WeightSpec, orders: NeighborOrders | None = None,
                    beta_init: np.ndarray | None = None,
                    n: int | None = None) -> WeightMatrix:
    """Build the weight matrix for a scheme.

    orders is required for sp/reg_sp, beta_init (n x p) for reg/reg_sp.
    For equal weights, pass n (or either optional input) to fix the size.
    """
    if spec.requires_orders and orders is None:
        raise DataError(f"weight scheme {spec.kind!r} requires neighbor orders")
    if spec.requires_init:
        if beta_init is None:
            raise DataError(f"weight scheme {spec.kind!r} requires an initial "
                            "coefficient estimate")
        beta_init = np.atleast_2d(np.asarray(beta_init, dtype=float))
        if not np.isfinite(beta_init).all():
            raise DataError("initial coefficient estimate contains non-finite values")

    if spec.kind == "equal":
        if n is None:
            if orders is not None:
                n = orders.a.shape[0]
            elif beta_init is not None:
                n = beta_init.shape[0]
            else:
                raise DataError("equal weights need n (or orders/beta_init) to fix the size")
        c = np.ones((int(n), int(n)))
    elif spec.kind == "sp":
        c = np.exp(spec.psi * (1.0 - orders.a.astype(float)))
    elif spec.kind == "reg":
        c = np.exp(-spec.psi * _pair_gaps(beta_init))
    else:  # reg_sp
        if orders.a.shape[0] != beta_init.shape[0]:
            raise DataError("orders and beta_init disagree on n")
        c = np.exp(spec.psi * (1.0 - orders.a.astype(float)) * _pair_gaps(beta_init))

    np.fill_diagonal(c, 1.0)
    c = np.maximum(c, _FLOOR)
    c.flags.writeable = False
    return WeightMatrix(c=c)
