"""Concave fusion penalty: value, scaled value, and proximal operator.

The shipped penalty is the smoothly clipped absolute deviation (SCAD)

    p(t, lam) = lam * integral_0^t min{1, (gamma - x/lam)_+ / (gamma - 1)} dx

which is linear on [0, lam], quadratic on (lam, gamma*lam], and constant
lam^2*(gamma+1)/2 beyond.  The proximal map solves

    min_d  vartheta/2 * ||s - d||^2 + p(||d||, lam)

in closed form; with gamma > 1 + 1/vartheta that 1-D problem is strictly
convex, so the three-branch formula below is the unique minimizer.
Branch boundaries use <= so ties fall to the lower branch (the branches
agree there analytically).

The penalty is exposed behind a small value+prox interface so an L1 or
MCP variant could be slotted in; only SCAD ships.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

__all__ = [
    "scad_value",
    "scaled_penalty",
    "group_soft_threshold",
    "scad_prox",
    "scad_prox_rows",
    "ScadPenalty",
]


def scad_value(t, lam, gamma: float = 3.0):
    """Penalty value at magnitude t >= 0.  Broadcasts over t and lam."""
    t = np.asarray(t, dtype=float)
    lam_arr = np.asarray(lam, dtype=float)
    if np.any(t < 0):
        raise ValueError("scad_value expects nonnegative magnitudes")
    if np.any(lam_arr < 0):
        raise ValueError("lambda must be >= 0")
    if not gamma > 2:
        raise ConfigError(f"gamma must be > 2, got {gamma}")
    linear = lam_arr * t
    quad = (2.0 * gamma * lam_arr * t - t * t - lam_arr * lam_arr) / (2.0 * (gamma - 1.0))
    plateau = 0.5 * (gamma + 1.0) * lam_arr * lam_arr
    out = np.where(t <= lam_arr, linear, np.where(t <= gamma * lam_arr, quad, plateau))
    if out.ndim == 0:
        return float(out)
    return out


def scaled_penalty(t, lam: float, gamma: float = 3.0):
    """Penalty divided by lambda; requires lam > 0."""
    if not lam > 0:
        raise ValueError("scaled penalty needs lambda > 0")
    out = np.asarray(scad_value(t, lam, gamma)) / lam
    if out.ndim == 0:
        return float(out)
    return out


def group_soft_threshold(w, t: float):
    """(1 - t/||w||)_+ * w, with the zero vector mapped to itself."""
    if t < 0:
        raise ValueError("threshold must be >= 0")
    w = np.asarray(w, dtype=float)
    norm = float(np.linalg.norm(w))
    if norm <= t:
        return np.zeros_like(w)
    return (1.0 - t / norm) * w


def scad_prox_rows(sigma: np.ndarray, lam_eff: np.ndarray, gamma: float,
                   vartheta: float) -> np.ndarray:
    """Row-wise proximal map: sigma is (P, p), lam_eff is (P,).

    lam_eff carries the per-pair effective level c_ij * lambda.
    """
    sigma = np.atleast_2d(np.asarray(sigma, dtype=float))
    lam_eff = np.asarray(lam_eff, dtype=float)
    norms = np.sqrt(np.einsum("ij,ij->i", sigma, sigma))
    safe = np.where(norms > 0.0, norms, 1.0)
    thr_soft = lam_eff * (1.0 + 1.0 / vartheta)
    thr_plateau = gamma * lam_eff
    f_soft = np.maximum(0.0, 1.0 - (lam_eff / vartheta) / safe)
    mid_scale = 1.0 - 1.0 / ((gamma - 1.0) * vartheta)
    f_mid = np.maximum(0.0, 1.0 - (gamma * lam_eff / ((gamma - 1.0) * vartheta)) / safe) / mid_scale
    factor = np.where(norms <= thr_soft, f_soft,
                      np.where(norms <= thr_plateau, f_mid, 1.0))
    return sigma * factor[:, None]


def scad_prox(sigma, lam_eff: float, gamma: float, vartheta: float) -> np.ndarray:
    """Proximal map for a single difference vector."""
    sigma = np.asarray(sigma, dtype=float)
    out = scad_prox_rows(sigma.reshape(1, -1), np.array([lam_eff]), gamma, vartheta)
    return out.reshape(sigma.shape)


@dataclass(frozen=True)
class ScadPenalty:
    """SCAD penalty bound to a (gamma, lambda) pair.

    The per-pair effective level is ``weight * lam`` with weight = c_ij
    in (0, 1].
    """

    gamma: float = 3.0
    lam: float = 0.0

    def __post_init__(self):
        if not self.gamma > 2:
            raise ConfigError(f"gamma must be > 2, got {self.gamma}")
        if self.lam < 0:
            raise ConfigError(f"lambda must be >= 0, got {self.lam}")

    def value(self, t, weight=1.0):
        return scad_value(t, np.asarray(weight, dtype=float) * self.lam, self.gamma)

    def prox(self, sigma, weight: float, vartheta: float) -> np.ndarray:
        return scad_prox(sigma, weight * self.lam, self.gamma, vartheta)

    def prox_rows(self, sigma: np.ndarray, weights: np.ndarray,
                  vartheta: float) -> np.ndarray:
        return scad_prox_rows(sigma, np.asarray(weights, dtype=float) * self.lam,
                              self.gamma, vartheta)
