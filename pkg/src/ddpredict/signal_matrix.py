"""Signal matrices built from input-output trajectories, and their partition."""
from __future__ import annotations

import csv
import enum
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from .errors import (
    DimensionError,
    FormatError,
    HankelNotAllowed,
    LengthMismatch,
    TrajectoryTooShort,
)
from .fileio import atomic_write_text, csv_text
from .linalg import numerical_rank
from .lti import Trajectory

log = logging.getLogger(__name__)


class Construction(enum.Enum):
    PAGE = "page"
    HANKEL = "hankel"
    INDEPENDENT = "independent"


class Partition(NamedTuple):
    U_p: np.ndarray
    U_f: np.ndarray
    Y_p: np.ndarray
    Y_f: np.ndarray


@dataclass(frozen=True, eq=False)
class SignalMatrix:
    """Column-stacked length-L windows; rows are col(u-block, y-block), each time-ordered.

    Identity-hashed so that per-matrix caches can key on it.
    """

    Z: np.ndarray
    L: int
    L0: int
    n_u: int
    n_y: int
    construction: Construction

    def __post_init__(self):
        Z = np.array(self.Z, dtype=float)
        if Z.ndim != 2 or Z.shape[1] < 1:
            raise DimensionError("Z must be a matrix with at least one column")
        if not (1 <= self.L0 < self.L):
            raise DimensionError(f"need 1 <= L0 < L, got L0={self.L0}, L={self.L}")
        if Z.shape[0] != self.L * (self.n_u + self.n_y):
            raise DimensionError(
                f"Z has {Z.shape[0]} rows, expected L*(n_u+n_y)={self.L * (self.n_u + self.n_y)}"
            )
        Z.setflags(write=False)
        object.__setattr__(self, "Z", Z)
        object.__setattr__(self, "construction", Construction(self.construction))

    @property
    def Lp(self) -> int:
        return self.L - self.L0

    @property
    def M(self) -> int:
        return self.Z.shape[1]

    def partition(self) -> Partition:
        nu, ny, L, L0 = self.n_u, self.n_y, self.L, self.L0
        Z = self.Z
        nuL = nu * L
        return Partition(
            U_p=Z[: nu * L0],
            U_f=Z[nu * L0: nuL],
            Y_p=Z[nuL: nuL + ny * L0],
            Y_f=Z[nuL + ny * L0:],
        )


def _window_column(traj: Trajectory, start: int, L: int) -> np.ndarray:
    return np.concatenate(
        [traj.inputs[start:start + L].reshape(-1), traj.outputs[start:start + L].reshape(-1)]
    )


def build_page(traj: Trajectory, L: int, L0: int) -> SignalMatrix:
    T = len(traj)
    if T < L:
        raise TrajectoryTooShort(f"trajectory length {T} < L={L}")
    M = T // L
    dropped = T - M * L
    if dropped:
        log.info("page matrix: discarding %d trailing samples", dropped)
    Z = np.column_stack([_window_column(traj, i * L, L) for i in range(M)])
    return SignalMatrix(Z, L, L0, traj.n_u, traj.n_y, Construction.PAGE)


def build_hankel(traj: Trajectory, L: int, L0: int, *, noise_free: bool = False,
                 allow_noisy: bool = False) -> SignalMatrix:
    """Sliding-window signal matrix.

    Overlapping windows share noise samples, which breaks the independent-column
    noise model behind the confidence regions. Callers must either assert the data is
    noise-free or explicitly opt in with ``allow_noisy``.
    """
    if not (noise_free or allow_noisy):
        raise HankelNotAllowed(
            "Hankel construction needs noise_free=True or allow_noisy=True "
            "(confidence regions are invalid for noisy Hankel data)"
        )
    T = len(traj)
    if T < L:
        raise TrajectoryTooShort(f"trajectory length {T} < L={L}")
    Z = np.column_stack([_window_column(traj, i, L) for i in range(T - L + 1)])
    return SignalMatrix(Z, L, L0, traj.n_u, traj.n_y, Construction.HANKEL)


def from_trajectories(trajs: Sequence[Trajectory], L: int, L0: int) -> SignalMatrix:
    if not trajs:
        raise DimensionError("need at least one trajectory")
    for k, tr in enumerate(trajs):
        if len(tr) != L:
            raise LengthMismatch(f"trajectory {k} has length {len(tr)}, expected {L}")
    n_u, n_y = trajs[0].n_u, trajs[0].n_y
    Z = np.column_stack([_window_column(tr, 0, L) for tr in trajs])
    return SignalMatrix(Z, L, L0, n_u, n_y, Construction.INDEPENDENT)


def check_rank(sm: SignalMatrix, n_x: int) -> bool:
    return numerical_rank(sm.Z) == sm.n_u * sm.L + n_x


# -- trajectory CSV ------------------------------------------------------------

def save_trajectory(traj: Trajectory, path) -> None:
    u_names = [f"u{i + 1}" for i in range(traj.n_u)]
    y_names = [f"y{i + 1}" for i in range(traj.n_y)]
    rows = []
    for t in range(len(traj)):
        row = {"t": t}
        row.update(zip(u_names, map(float, traj.inputs[t])))
        row.update(zip(y_names, map(float, traj.outputs[t])))
        rows.append(row)
    atomic_write_text(path, csv_text(["t"] + u_names + y_names, rows))


def load_trajectory(path) -> Trajectory:
    lines = Path(path).read_text().splitlines()
    rows = [ln for ln in lines if ln.strip() and not ln.startswith("#")]
    if not rows:
        raise FormatError(f"{path}: empty trajectory file")
    reader = csv.reader(rows)
    header = next(reader)
    if not header or header[0] != "t":
        raise FormatError(f"{path}: first column must be 't'")
    u_cols = [i for i, h in enumerate(header) if h.startswith("u")]
    y_cols = [i for i, h in enumerate(header) if h.startswith("y")]
    if not u_cols or not y_cols or len(u_cols) + len(y_cols) + 1 != len(header):
        raise FormatError(f"{path}: header must be t,u1..,y1..; got {header}")
    data = []
    for k, row in enumerate(reader):
        if len(row) != len(header):
            raise FormatError(f"{path}: row {k} has {len(row)} fields")
        try:
            vals = [float(v) for v in row]
        except ValueError as e:
            raise FormatError(f"{path}: row {k}: {e}") from None
        if int(vals[0]) != k:
            raise FormatError(f"{path}: time index must ascend from 0 (row {k} has t={row[0]})")
        data.append(vals)
    arr = np.array(data)
    return Trajectory(arr[:, u_cols], arr[:, y_cols])
