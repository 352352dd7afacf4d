"""Data-driven output predictors built on a signal matrix.

All regularized predictors share one equality-constrained quadratic program::

    min_g  ||Y_p g - y_ini||_Q^2 + g^T W g   s.t.  [U_p; U_f] g = [u_ini; u]

with ``W = lambda * I`` for the ridge family (subspace/SMM/Wasserstein and the i.i.d.
minimum-MSE predictor) and a full ``W`` for the minimum-MSE predictor under general
noise covariances. The slack is ``delta = Y_p g - y_ini`` and the prediction ``Y_f g``.
"""
from __future__ import annotations

import enum
import threading
import weakref
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
import scipy.linalg as sla

from .errors import (
    DimensionError,
    GeneralNoiseUnsupported,
    InfeasibleConstraint,
    MissingGammaSource,
    MissingQ,
    NonPositiveW,
    SingularProjection,
)
from .linalg import cho_factor_jitter, pinv
from .lti import StateSpaceModel, gamma_model_based
from .signal_matrix import SignalMatrix

CHOL_JITTER = 1e-12
FEASIBILITY_RTOL = 1e-8


# -- noise models ----------------------------------------------------------------

@dataclass(frozen=True)
class IIDNoise:
    """Output noise w_t ~ N(0, sigma2 I), Page or independent-trajectory data."""

    sigma2: float

    def __post_init__(self):
        if not (self.sigma2 >= 0.0 and np.isfinite(self.sigma2)):
            raise ValueError(f"sigma2 must be finite and nonnegative, got {self.sigma2}")


@dataclass(frozen=True, eq=False)
class GeneralNoise:
    """Arbitrary Gaussian covariances.

    ``Sigma_Y`` is the covariance of vec([Y_p; Y_f]) (column-major, so block (j, k) of
    size n_y*L couples columns j and k); ``Sigma_yini`` that of y_ini.
    """

    Sigma_Y: np.ndarray
    Sigma_yini: np.ndarray

    def __post_init__(self):
        for name in ("Sigma_Y", "Sigma_yini"):
            S = np.array(getattr(self, name), dtype=float)
            if S.ndim != 2 or S.shape[0] != S.shape[1]:
                raise DimensionError(f"{name} must be square")
            if not np.allclose(S, S.T, rtol=0.0, atol=1e-12 * max(1.0, np.abs(S).max())):
                raise ValueError(f"{name} is not symmetric")
            ev = np.linalg.eigvalsh(S)
            if ev.size and ev[0] < -1e-10 * max(1.0, abs(ev[-1])):
                raise ValueError(f"{name} is not positive semidefinite (min eig {ev[0]:.3g})")
            S.setflags(write=False)
            object.__setattr__(self, name, S)


NoiseModel = Union[IIDNoise, GeneralNoise]


# -- problem / result --------------------------------------------------------------

@dataclass(frozen=True)
class PredictionProblem:
    u_ini: np.ndarray
    y_ini: np.ndarray
    u: np.ndarray

    def __post_init__(self):
        for name in ("u_ini", "y_ini", "u"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float).reshape(-1))

    def check(self, sm: SignalMatrix) -> None:
        expected = {
            "u_ini": sm.n_u * sm.L0,
            "y_ini": sm.n_y * sm.L0,
            "u": sm.n_u * sm.Lp,
        }
        for name, n in expected.items():
            if getattr(self, name).size != n:
                raise DimensionError(f"{name} has size {getattr(self, name).size}, expected {n}")

    def scaled(self, alpha: float) -> PredictionProblem:
        return PredictionProblem(alpha * self.u_ini, alpha * self.y_ini, alpha * self.u)


@dataclass(frozen=True)
class PredictionResult:
    y: np.ndarray
    g: np.ndarray
    delta: np.ndarray
    lam: float
    Q: Optional[np.ndarray] = None
    kind: str = ""


class Kind(enum.Enum):
    PINV = "pinv"
    SUB = "sub"
    SMM = "smm"
    WD = "wd"
    MINMSE = "minmse"


class LambdaChoice(enum.Enum):
    """Regularization used when estimating the free-response map from data."""

    SUB = "sub"
    SMM = "smm"
    WD = "wd"


@dataclass(frozen=True)
class ModelBased:
    model: StateSpaceModel


@dataclass(frozen=True)
class DataDriven:
    lambda_choice: LambdaChoice

    def __post_init__(self):
        object.__setattr__(self, "lambda_choice", LambdaChoice(self.lambda_choice))


GammaSource = Union[ModelBased, DataDriven]


# -- core solver ---------------------------------------------------------------------

def _kkt_solve(Y_p, U, y_rhs, b, W, Q, *, singular_exc=InfeasibleConstraint, w_exc=InfeasibleConstraint):
    """Solve the eliminated KKT system; ``y_rhs``/``b`` may carry several columns.

    ``W`` is a scalar (ridge) or an M x M matrix. ``Q`` of None means identity.
    """
    M = Y_p.shape[1]
    QY = Y_p if Q is None else Q @ Y_p
    F = Y_p.T @ QY
    if np.isscalar(W) or np.ndim(W) == 0:
        F[np.diag_indices(M)] += float(W)
    else:
        F = F + W
    Fc = cho_factor_jitter(F, CHOL_JITTER, w_exc, "regularized Gram matrix")
    rhs_g = QY.T @ y_rhs  # Y_p^T Q y_ini
    Finv_rhs = sla.cho_solve(Fc, rhs_g, check_finite=False)
    Finv_Ut = sla.cho_solve(Fc, U.T, check_finite=False)
    S = U @ Finv_Ut
    S = 0.5 * (S + S.T)
    r = U @ Finv_rhs - b

    def feasible(g):
        resid = np.linalg.norm(U @ g - b)
        scale = max(np.linalg.norm(b), np.linalg.norm(U) * np.linalg.norm(g), 1.0)
        return np.isfinite(resid) and resid <= FEASIBILITY_RTOL * scale

    try:
        Sc = sla.cho_factor(S, lower=True, check_finite=False)
        g = Finv_rhs - Finv_Ut @ sla.cho_solve(Sc, r, check_finite=False)
        if feasible(g):
            return g
    except np.linalg.LinAlgError:
        pass
    # Redundant input constraints: the pseudo-inverse still works if they are consistent.
    g = Finv_rhs - Finv_Ut @ (pinv(S) @ r)
    if not feasible(g):
        raise singular_exc("input constraint cannot be met: U F^-1 U^T is singular")
    return g


def _blocks(sm: SignalMatrix):
    P = sm.partition()
    U = np.vstack([P.U_p, P.U_f])
    return P, U


def _make_result(sm, P, prob, g, lam, Q=None, kind=""):
    return PredictionResult(
        y=P.Y_f @ g,
        g=g,
        delta=P.Y_p @ g - prob.y_ini,
        lam=float(lam),
        Q=Q,
        kind=kind,
    )


def predict_pinv(sm: SignalMatrix, prob: PredictionProblem) -> PredictionResult:
    """Minimum-norm g solving [U_p; U_f; Y_p] g = [u_ini; u; y_ini] (exact on noise-free data)."""
    prob.check(sm)
    P, U = _blocks(sm)
    H = np.vstack([U, P.Y_p])
    g = pinv(H) @ np.concatenate([prob.u_ini, prob.u, prob.y_ini])
    return _make_result(sm, P, prob, g, 0.0, kind="pinv")


def solve_unified(sm: SignalMatrix, prob: PredictionProblem, lam: float,
                  Q: Optional[np.ndarray] = None) -> PredictionResult:
    """Minimize ||delta||_Q^2 + lam ||g||^2 subject to the input constraints."""
    if not lam > 0.0:
        raise ValueError(f"lambda must be positive, got {lam}")
    prob.check(sm)
    P, U = _blocks(sm)
    if Q is not None:
        Q = np.asarray(Q, dtype=float)
        n = sm.n_y * sm.L0
        if Q.shape != (n, n):
            raise DimensionError(f"Q has shape {Q.shape}, expected {(n, n)}")
    b = np.concatenate([prob.u_ini, prob.u])
    g = _kkt_solve(P.Y_p, U, prob.y_ini, b, lam, Q)
    return _make_result(sm, P, prob, g, lam, Q)


def lambda_for(sm: SignalMatrix, prob: PredictionProblem, kind, noise: NoiseModel,
               Q: Optional[np.ndarray] = None) -> float:
    kind = Kind(kind)
    if not isinstance(noise, IIDNoise):
        raise GeneralNoiseUnsupported("lambda_for needs i.i.d. noise; use predict_minmse_general")
    s2, ny = noise.sigma2, sm.n_y
    if kind in (Kind.SUB, Kind.PINV):
        return 0.0
    if kind is Kind.WD:
        return ny * sm.L0 * s2
    if kind is Kind.SMM:
        g_pinv = predict_pinv(sm, prob).g
        gn2 = float(g_pinv @ g_pinv)
        if gn2 == 0.0:
            # zero problem: the optimum is g = 0 for any positive weight
            return ny * sm.L * s2
        return ny * (sm.Lp * s2 / gn2 + sm.L * s2)
    if Q is None:
        raise MissingQ("the minimum-MSE weight needs Q")
    return s2 * ny * sm.Lp + s2 * float(np.trace(Q))


def gamma_lambda(sm: SignalMatrix, choice, sigma2: float) -> float:
    """Regularization for free-response estimation; the initial window is noise-free there."""
    choice = LambdaChoice(choice)
    if choice is LambdaChoice.SUB:
        return 0.0
    if choice is LambdaChoice.SMM:
        return sm.n_y * sm.L * sigma2
    return sm.n_y * sm.L0 * sigma2


def estimate_gamma(sm: SignalMatrix, lam: float) -> np.ndarray:
    """Data-driven free-response map: the unified predictor applied with u_ini = u = 0."""
    if lam < 0.0:
        raise ValueError(f"lambda must be nonnegative, got {lam}")
    P, U = _blocks(sm)
    nyp = sm.n_y * sm.L0
    if lam == 0.0:
        H = np.vstack([U, P.Y_p])
        return P.Y_f @ pinv(H)[:, -nyp:]
    G = _kkt_solve(P.Y_p, U, np.eye(nyp), np.zeros((U.shape[0], nyp)), lam, None,
                   singular_exc=SingularProjection)
    return P.Y_f @ G


_gamma_cache: "weakref.WeakKeyDictionary[SignalMatrix, dict]" = weakref.WeakKeyDictionary()
_gamma_lock = threading.Lock()


def cached_estimate_gamma(sm: SignalMatrix, lam: float) -> np.ndarray:
    with _gamma_lock:
        hit = _gamma_cache.get(sm, {}).get(lam)
    if hit is not None:
        return hit
    G = estimate_gamma(sm, lam)
    G.setflags(write=False)
    with _gamma_lock:
        return _gamma_cache.setdefault(sm, {}).setdefault(lam, G)


def resolve_gamma(sm: SignalMatrix, source: GammaSource, noise: NoiseModel) -> np.ndarray:
    if isinstance(source, ModelBased):
        return gamma_model_based(source.model, sm.L0, sm.Lp)
    if isinstance(source, DataDriven):
        if isinstance(noise, IIDNoise):
            s2 = noise.sigma2
        else:
            # average per-sample variance as the scalar surrogate for the ridge weight
            s2 = float(np.trace(noise.Sigma_Y)) / noise.Sigma_Y.shape[0]
        return cached_estimate_gamma(sm, gamma_lambda(sm, source.lambda_choice, s2))
    raise TypeError(f"unknown gamma source {source!r}")


def predict(sm: SignalMatrix, prob: PredictionProblem, kind, noise: NoiseModel,
            gamma_source: Optional[GammaSource] = None) -> PredictionResult:
    kind = Kind(kind)
    if kind is Kind.MINMSE and gamma_source is None:
        raise MissingGammaSource("the minimum-MSE predictor needs a gamma source")
    if kind in (Kind.PINV, Kind.SUB):
        res = predict_pinv(sm, prob)
    elif kind in (Kind.SMM, Kind.WD):
        lam = lambda_for(sm, prob, kind, noise)
        res = predict_pinv(sm, prob) if lam == 0.0 else solve_unified(sm, prob, lam)
    else:
        gamma = resolve_gamma(sm, gamma_source, noise)
        if isinstance(noise, GeneralNoise):
            res = predict_minmse_general(sm, prob, noise, gamma)
        elif noise.sigma2 == 0.0:
            res = predict_pinv(sm, prob)
        else:
            Q = gamma.T @ gamma
            res = solve_unified(sm, prob, lambda_for(sm, prob, kind, noise, Q), Q)
    return PredictionResult(res.y, res.g, res.delta, res.lam, res.Q, kind.value)


def minmse_weight(sm: SignalMatrix, Sigma_Y: np.ndarray, gamma: np.ndarray) -> np.ndarray:
    """W[j, k] = tr([-G I] Sigma_Y^(j,k) [-G I]^T) over the (n_y L)-sized blocks of Sigma_Y."""
    nyL, M = sm.n_y * sm.L, sm.M
    if Sigma_Y.shape != (nyL * M, nyL * M):
        raise DimensionError(f"Sigma_Y has shape {Sigma_Y.shape}, expected {(nyL * M,) * 2}")
    K = np.hstack([-gamma, np.eye(sm.n_y * sm.Lp)])
    KtK = K.T @ K
    S4 = Sigma_Y.reshape(M, nyL, M, nyL)
    W = np.einsum("jakb,ba->jk", S4, KtK)
    return 0.5 * (W + W.T)


def predict_minmse_general(sm: SignalMatrix, prob: PredictionProblem, noise: GeneralNoise,
                           gamma: np.ndarray) -> PredictionResult:
    prob.check(sm)
    gamma = np.asarray(gamma, dtype=float)
    if gamma.shape != (sm.n_y * sm.Lp, sm.n_y * sm.L0):
        raise DimensionError(f"gamma has shape {gamma.shape}")
    W = minmse_weight(sm, noise.Sigma_Y, gamma)
    ev = np.linalg.eigvalsh(W)
    if ev[0] <= 1e-12 * max(1.0, abs(ev[-1])):
        raise NonPositiveW(f"noise weight matrix is not positive definite (min eig {ev[0]:.3g})")
    P, U = _blocks(sm)
    Q = gamma.T @ gamma
    b = np.concatenate([prob.u_ini, prob.u])
    g = _kkt_solve(P.Y_p, U, prob.y_ini, b, W, Q, w_exc=NonPositiveW)
    return _make_result(sm, P, prob, g, float(np.trace(W)) / sm.M, Q, kind="minmse")
