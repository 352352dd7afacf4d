"""Ellipsoidal confidence regions for data-driven predictions, and the chi-square functions they need."""
from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
import scipy.linalg as sla

from .errors import DimensionError, FormatError, NotTwoDimensional, SingularSigma
from .fileio import write_json
from .linalg import cho_factor_jitter
from .predictors import GeneralNoise, IIDNoise, NoiseModel, PredictionResult

SIGMA_JITTER = 1e-10
_TINY = 1e-300


# -- chi-square ------------------------------------------------------------------------

def _gamma_series(a: float, x: float) -> float:
    term = total = 1.0 / a
    ap = a
    for _ in range(100_000):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * 1e-17:
            break
    return total * math.exp(-x + a * math.log(x) - math.lgamma(a))


def _gamma_cont_frac(a: float, x: float) -> float:
    """Upper regularized Q(a, x) by modified Lentz evaluation."""
    b = x + 1.0 - a
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, 100_000):
        an = -i * (i - a)
        b += 2.0
        d = an * d + b
        if abs(d) < _TINY:
            d = _TINY
        c = b + an / c
        if abs(c) < _TINY:
            c = _TINY
        d = 1.0 / d
        step = d * c
        h *= step
        if abs(step - 1.0) < 1e-16:
            break
    return math.exp(-x + a * math.log(x) - math.lgamma(a)) * h


def regularized_gamma_p(a: float, x: float) -> float:
    if x <= 0.0:
        return 0.0
    if x < a + 1.0:
        return min(1.0, _gamma_series(a, x))
    return max(0.0, 1.0 - _gamma_cont_frac(a, x))


def chi2_cdf(x: float, d: int) -> float:
    if d < 1:
        raise ValueError("degrees of freedom must be >= 1")
    if x < 0.0:
        raise ValueError("x must be nonnegative")
    return regularized_gamma_p(0.5 * d, 0.5 * x)


def _chi2_pdf(x: float, d: int) -> float:
    a = 0.5 * d
    if x <= 0.0:
        return 0.0 if d > 2 else (0.5 if d == 2 else math.inf)
    return 0.5 * math.exp((a - 1.0) * math.log(0.5 * x) - 0.5 * x - math.lgamma(a))


def chi2_quantile(p: float, d: int) -> float:
    """Inverse of chi2_cdf by safeguarded Newton iteration on a bracket."""
    if not 0.0 < p < 1.0:
        raise ValueError(f"p must lie in (0, 1), got {p}")
    lo, hi = 0.0, max(1.0, float(d))
    while chi2_cdf(hi, d) < p:
        lo, hi = hi, 2.0 * hi
    x = 0.5 * (lo + hi)
    for _ in range(200):
        f = chi2_cdf(x, d) - p
        if f == 0.0:
            return x
        if f < 0.0:
            lo = x
        else:
            hi = x
        pdf = _chi2_pdf(x, d)
        x_new = x - f / pdf if pdf > 0.0 and math.isfinite(pdf) else 0.5 * (lo + hi)
        if not lo < x_new < hi:
            x_new = 0.5 * (lo + hi)
        if abs(x_new - x) <= 1e-15 * max(x, 1e-300) or hi - lo <= 1e-15 * hi:
            return x_new
        x = x_new
    return x


# -- covariance assembly ----------------------------------------------------------------

def assemble_sigma(gamma: np.ndarray, g: np.ndarray, noise: NoiseModel) -> np.ndarray:
    """Covariance of the prediction error given (g, delta)."""
    gamma = np.atleast_2d(np.asarray(gamma, dtype=float))
    g = np.asarray(g, dtype=float).reshape(-1)
    nf, npast = gamma.shape
    GGt = gamma @ gamma.T
    if isinstance(noise, IIDNoise):
        s2 = noise.sigma2
        Sigma = s2 * float(g @ g) * (GGt + np.eye(nf)) + s2 * GGt
    elif isinstance(noise, GeneralNoise):
        nyL = nf + npast
        M = g.size
        if noise.Sigma_Y.shape != (nyL * M, nyL * M):
            raise DimensionError(
                f"Sigma_Y has shape {noise.Sigma_Y.shape}, expected {(nyL * M,) * 2}"
            )
        if noise.Sigma_yini.shape != (npast, npast):
            raise DimensionError(f"Sigma_yini has shape {noise.Sigma_yini.shape}")
        Sigma_g = np.einsum("j,jakb,k->ab", g, noise.Sigma_Y.reshape(M, nyL, M, nyL), g)
        K = np.hstack([-gamma, np.eye(nf)])
        Sigma = K @ Sigma_g @ K.T + gamma @ noise.Sigma_yini @ gamma.T
    else:
        raise TypeError(f"unknown noise model {noise!r}")
    return 0.5 * (Sigma + Sigma.T)


class DofPolicy(enum.Enum):
    FULL = "full"  # n_y * Lp: dimension of the error vector
    LITERAL = "literal"  # Lp only; coincides with FULL for single-output systems


@dataclass(frozen=True, eq=False)
class ConfidenceRegion:
    center: np.ndarray
    Sigma: np.ndarray
    mu_p: float
    p: float
    dof: int

    def __post_init__(self):
        c = np.asarray(self.center, dtype=float).reshape(-1)
        S = np.atleast_2d(np.asarray(self.Sigma, dtype=float))
        if S.shape != (c.size, c.size):
            raise DimensionError(f"Sigma shape {S.shape} does not match center size {c.size}")
        object.__setattr__(self, "center", c)
        object.__setattr__(self, "Sigma", S)
        Lc, _ = cho_factor_jitter(S, SIGMA_JITTER, SingularSigma, "prediction error covariance")
        object.__setattr__(self, "_chol", np.tril(Lc))

    @property
    def chol(self) -> np.ndarray:
        return self._chol

    @property
    def dim(self) -> int:
        return self.center.size

    def to_dict(self, boundary=None) -> dict:
        d = {
            "format_version": 1,
            "center": self.center.tolist(),
            "sigma": self.Sigma.tolist(),
            "mu_p": self.mu_p,
            "p": self.p,
            "dof": self.dof,
        }
        if boundary is not None:
            d["boundary"] = [list(map(float, pt)) for pt in boundary]
        return d

    @classmethod
    def from_dict(cls, d: dict) -> ConfidenceRegion:
        try:
            return cls(np.array(d["center"]), np.array(d["sigma"]), float(d["mu_p"]),
                       float(d["p"]), int(d["dof"]))
        except KeyError as e:
            raise FormatError(f"region JSON missing field {e}") from None


def confidence_region(result: PredictionResult, gamma: np.ndarray, noise: NoiseModel,
                      p: float, dof_policy=DofPolicy.FULL, n_y: int = 1) -> ConfidenceRegion:
    """Ellipsoid containing the true output with probability p.

    ``n_y`` is only consulted by the LITERAL policy, where dof = (n_y Lp) / n_y.
    """
    if not 0.0 < p < 1.0:
        raise ValueError(f"p must lie in (0, 1), got {p}")
    gamma = np.atleast_2d(np.asarray(gamma, dtype=float))
    center = result.y - gamma @ result.delta
    Sigma = assemble_sigma(gamma, result.g, noise)
    dim = center.size
    dof = dim if DofPolicy(dof_policy) is DofPolicy.FULL else dim // n_y
    return ConfidenceRegion(center, Sigma, chi2_quantile(p, dof), p, dof)


def quadratic_form(region: ConfidenceRegion, y) -> float:
    y = np.asarray(y, dtype=float).reshape(-1)
    if y.size != region.dim:
        raise DimensionError(f"point has size {y.size}, region has dimension {region.dim}")
    v = y - region.center
    w = sla.solve_triangular(region.chol, v, lower=True, check_finite=False)
    return float(w @ w)


def contains(region: ConfidenceRegion, y_true) -> bool:
    return quadratic_form(region, y_true) <= region.mu_p


def estimated_mse(gamma: np.ndarray, result: PredictionResult, noise: NoiseModel) -> float:
    gamma = np.atleast_2d(np.asarray(gamma, dtype=float))
    bias = gamma @ result.delta
    return float(np.trace(assemble_sigma(gamma, result.g, noise)) + bias @ bias)


def ellipse_boundary(region: ConfidenceRegion, n_points: int) -> np.ndarray:
    if region.dim != 2:
        raise NotTwoDimensional(f"region has dimension {region.dim}")
    if n_points < 1:
        raise ValueError("n_points must be positive")
    theta = 2.0 * np.pi * np.arange(n_points) / n_points
    circle = np.vstack([np.cos(theta), np.sin(theta)])
    return (region.center[:, None] + math.sqrt(region.mu_p) * region.chol @ circle).T


def save_region(region: ConfidenceRegion, path, boundary: Optional[np.ndarray] = None) -> None:
    write_json(path, region.to_dict(boundary))


def load_region(path) -> ConfidenceRegion:
    try:
        d = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise FormatError(f"{path}: {e}") from None
    if "region" in d and "center" not in d:
        d = d["region"]
    return ConfidenceRegion.from_dict(d)
