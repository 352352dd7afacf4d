"""Discrete-time LTI models: simulation, observability, H2 norm, random generation."""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    DimensionError,
    FormatError,
    GenerationFailed,
    LagTooShort,
    UnobservableSystem,
    UnstableSystem,
)
from .fileio import write_json
from .linalg import numerical_rank, pinv

STABILITY_TOL = 1e-6
MAX_GENERATION_ATTEMPTS = 100
EIG_MAG_RANGE = (0.1, 0.95)


def _as_matrix(x, name: str) -> np.ndarray:
    arr = np.array(x, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    if arr.ndim != 2:
        raise DimensionError(f"{name} must be a matrix, got ndim={arr.ndim}")
    if not np.all(np.isfinite(arr)):
        raise DimensionError(f"{name} has non-finite entries")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class StateSpaceModel:
    """x[t+1] = A x[t] + B u[t],  y[t] = C x[t] + D u[t] (+ output noise)."""

    A: np.ndarray
    B: np.ndarray
    C: np.ndarray
    D: np.ndarray

    def __post_init__(self):
        for name in "ABCD":
            object.__setattr__(self, name, _as_matrix(getattr(self, name), name))
        nx = self.A.shape[0]
        if nx < 1 or self.A.shape != (nx, nx):
            raise DimensionError(f"A must be square, got {self.A.shape}")
        nu = self.B.shape[1]
        ny = self.C.shape[0]
        if nu < 1 or ny < 1:
            raise DimensionError("n_u and n_y must be at least 1")
        if self.B.shape != (nx, nu):
            raise DimensionError(f"B has shape {self.B.shape}, expected {(nx, nu)}")
        if self.C.shape != (ny, nx):
            raise DimensionError(f"C has shape {self.C.shape}, expected {(ny, nx)}")
        if self.D.shape != (ny, nu):
            raise DimensionError(f"D has shape {self.D.shape}, expected {(ny, nu)}")

    @property
    def n_x(self) -> int:
        return self.A.shape[0]

    @property
    def n_u(self) -> int:
        return self.B.shape[1]

    @property
    def n_y(self) -> int:
        return self.C.shape[0]

    def spectral_radius(self) -> float:
        return float(np.max(np.abs(np.linalg.eigvals(self.A))))

    def scaled_output(self, factor: float) -> StateSpaceModel:
        return StateSpaceModel(self.A, self.B, factor * self.C, factor * self.D)

    # -- persistence -------------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "format_version": 1,
            "n_x": self.n_x,
            "n_u": self.n_u,
            "n_y": self.n_y,
            "A": self.A.tolist(),
            "B": self.B.tolist(),
            "C": self.C.tolist(),
            "D": self.D.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> StateSpaceModel:
        try:
            model = cls(d["A"], d["B"], d["C"], d["D"])
            dims = (d["n_x"], d["n_u"], d["n_y"])
        except KeyError as e:
            raise FormatError(f"model JSON missing field {e}") from None
        if dims != (model.n_x, model.n_u, model.n_y):
            raise FormatError(f"declared dims {dims} disagree with matrices")
        return model


def save_model(model: StateSpaceModel, path) -> None:
    # json uses repr() for floats, which is the shortest round-trip form.
    write_json(path, model.to_dict())


def load_model(path) -> StateSpaceModel:
    try:
        d = json.loads(Path(path).read_text())
    except json.JSONDecodeError as e:
        raise FormatError(f"{path}: {e}") from None
    return StateSpaceModel.from_dict(d)


@dataclass(frozen=True)
class Trajectory:
    inputs: np.ndarray  # (T, n_u)
    outputs: np.ndarray  # (T, n_y)

    def __post_init__(self):
        u = np.array(self.inputs, dtype=float)
        y = np.array(self.outputs, dtype=float)
        if u.ndim == 1:
            u = u[:, None]
        if y.ndim == 1:
            y = y[:, None]
        if u.ndim != 2 or y.ndim != 2:
            raise DimensionError("inputs/outputs must be (T, n) arrays")
        if u.shape[0] != y.shape[0] or u.shape[0] < 1:
            raise DimensionError(f"inputs length {u.shape[0]} != outputs length {y.shape[0]}")
        u.setflags(write=False)
        y.setflags(write=False)
        object.__setattr__(self, "inputs", u)
        object.__setattr__(self, "outputs", y)

    def __len__(self) -> int:
        return self.inputs.shape[0]

    @property
    def n_u(self) -> int:
        return self.inputs.shape[1]

    @property
    def n_y(self) -> int:
        return self.outputs.shape[1]


def simulate(model: StateSpaceModel, x0, inputs, noise=None) -> Trajectory:
    u = np.asarray(inputs, dtype=float)
    if u.ndim == 1:
        u = u.reshape(-1, model.n_u) if model.n_u > 1 else u[:, None]
    T = u.shape[0]
    if T < 1:
        raise DimensionError("inputs must be nonempty")
    if u.shape[1] != model.n_u:
        raise DimensionError(f"inputs have {u.shape[1]} channels, model has n_u={model.n_u}")
    x = np.asarray(x0, dtype=float).reshape(-1)
    if x.shape != (model.n_x,):
        raise DimensionError(f"x0 has size {x.size}, model has n_x={model.n_x}")
    if noise is not None:
        w = np.asarray(noise, dtype=float)
        if w.ndim == 1:
            w = w[:, None] if model.n_y == 1 else w.reshape(-1, model.n_y)
        if w.shape != (T, model.n_y):
            raise DimensionError(f"noise has shape {w.shape}, expected {(T, model.n_y)}")

    A, B, C, D = model.A, model.B, model.C, model.D
    y = np.empty((T, model.n_y))
    for t in range(T):
        y[t] = C @ x + D @ u[t]
        x = A @ x + B @ u[t]
    if noise is not None:
        y = y + w
    return Trajectory(u, y)


def extended_observability(model: StateSpaceModel, k: int, start: int = 0) -> np.ndarray:
    """Stack C A^start, ..., C A^(start+k-1) vertically."""
    if k < 1:
        raise ValueError("k must be >= 1")
    blocks = []
    CA = model.C @ np.linalg.matrix_power(model.A, start)
    for _ in range(k):
        blocks.append(CA)
        CA = CA @ model.A
    return np.vstack(blocks)


def observability_index(model: StateSpaceModel) -> int:
    nx = model.n_x
    for k in range(1, nx + 1):
        if numerical_rank(extended_observability(model, k)) == nx:
            return k
    raise UnobservableSystem(f"observability matrix has rank < n_x={nx}")


def gamma_model_based(model: StateSpaceModel, L0: int, Lp: int) -> np.ndarray:
    """Map from a past free-response output window to the future free response."""
    lag = observability_index(model)
    if L0 < lag:
        raise LagTooShort(f"L0={L0} is shorter than the observability index {lag}")
    O_p = extended_observability(model, L0)
    O_f = extended_observability(model, Lp, start=L0)
    return O_f @ pinv(O_p)


def controllability_gramian(model: StateSpaceModel) -> np.ndarray:
    """Solve A W A^T - W + B B^T = 0 by Kronecker vectorization (fine for n_x <= ~12)."""
    rho = model.spectral_radius()
    if rho >= 1.0 - STABILITY_TOL:
        raise UnstableSystem(f"spectral radius {rho:.6g} is not below 1")
    A, B = model.A, model.B
    n = model.n_x
    # row-major vec: vec(A W A^T) = (A kron A) vec(W)
    lhs = np.eye(n * n) - np.kron(A, A)
    W = np.linalg.solve(lhs, (B @ B.T).reshape(-1)).reshape(n, n)
    return 0.5 * (W + W.T)


def h2_norm(model: StateSpaceModel) -> float:
    W = controllability_gramian(model)
    C, D = model.C, model.D
    val = np.trace(C @ W @ C.T) + np.trace(D @ D.T)
    return float(np.sqrt(max(val, 0.0)))


def stationary_state(model: StateSpaceModel, rng: np.random.Generator) -> np.ndarray:
    """Draw x ~ N(0, W_c): the state distribution under unit white-noise input."""
    evals, evecs = np.linalg.eigh(controllability_gramian(model))
    return evecs @ (np.sqrt(np.clip(evals, 0.0, None)) * rng.standard_normal(model.n_x))


def _random_state_matrix(n_x: int, rng: np.random.Generator) -> np.ndarray:
    lo, hi = EIG_MAG_RANGE
    blocks = []
    remaining = n_x
    while remaining > 0:
        r = rng.uniform(lo, hi)
        if remaining >= 2 and rng.random() < 0.5:
            theta = rng.uniform(0.0, np.pi)
            c, s = np.cos(theta), np.sin(theta)
            blocks.append(r * np.array([[c, -s], [s, c]]))
            remaining -= 2
        else:
            blocks.append(np.array([[r if rng.random() < 0.5 else -r]]))
            remaining -= 1
    Lam = np.zeros((n_x, n_x))
    i = 0
    for b in blocks:
        k = b.shape[0]
        Lam[i:i + k, i:i + k] = b
        i += k
    q, rr = np.linalg.qr(rng.standard_normal((n_x, n_x)))
    q = q * np.sign(np.diag(rr))
    return q @ Lam @ q.T


def random_system(n_x_range, n_u: int, n_y: int, rng: np.random.Generator) -> StateSpaceModel:
    """Random observable, Schur-stable model with unit H2 norm.

    ``n_x_range`` is an inclusive ``(lo, hi)`` pair; ``n_x`` is drawn uniformly from it.
    """
    lo, hi = int(n_x_range[0]), int(n_x_range[1])
    if not 1 <= lo <= hi <= 12:
        raise ValueError(f"n_x_range {n_x_range} must lie within [1, 12]")
    for _ in range(MAX_GENERATION_ATTEMPTS):
        n_x = int(rng.integers(lo, hi + 1))
        A = _random_state_matrix(n_x, rng)
        B = rng.standard_normal((n_x, n_u))
        C = rng.standard_normal((n_y, n_x))
        D = rng.standard_normal((n_y, n_u)) if rng.random() < 0.5 else np.zeros((n_y, n_u))
        model = StateSpaceModel(A, B, C, D)
        try:
            observability_index(model)
            norm = h2_norm(model)
        except (UnobservableSystem, UnstableSystem):
            continue
        if norm <= 0.0 or not np.isfinite(norm):
            continue
        return model.scaled_output(1.0 / norm)
    raise GenerationFailed(f"no observable stable model after {MAX_GENERATION_ATTEMPTS} attempts")


def tf2ss(num, den) -> StateSpaceModel:
    """SISO transfer function in powers of z (highest first) to controllable canonical form."""
    num = np.atleast_1d(np.asarray(num, dtype=float))
    den = np.atleast_1d(np.asarray(den, dtype=float))
    if den[0] == 0.0:
        raise ValueError("leading denominator coefficient must be nonzero")
    num, den = num / den[0], den / den[0]
    n = den.size - 1
    if num.size > den.size:
        raise ValueError("improper transfer function")
    num = np.concatenate([np.zeros(den.size - num.size), num])
    d = num[0]
    rem = num[1:] - d * den[1:]
    A = np.zeros((n, n))
    A[0, :] = -den[1:]
    A[1:, :-1] = np.eye(n - 1)
    B = np.zeros((n, 1))
    B[0, 0] = 1.0
    return StateSpaceModel(A, B, rem.reshape(1, n), [[d]])
