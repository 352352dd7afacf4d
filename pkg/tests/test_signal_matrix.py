import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ddpredict.errors import FormatError, HankelNotAllowed, LengthMismatch, TrajectoryTooShort
from ddpredict.lti import Trajectory, random_system, simulate
from ddpredict.signal_matrix import (
    Construction,
    SignalMatrix,
    build_hankel,
    build_page,
    check_rank,
    from_trajectories,
    load_trajectory,
    save_trajectory,
)


def scalar_traj(u, y):
    return Trajectory(np.asarray(u, float), np.asarray(y, float))


def test_page_example():
    sm = build_page(scalar_traj([1, 2, 3, 4], [5, 6, 7, 8]), L=2, L0=1)
    np.testing.assert_array_equal(sm.Z, [[1, 3], [2, 4], [5, 7], [6, 8]])
    assert sm.construction is Construction.PAGE


def test_page_single_column_and_trailing_drop():
    tr = scalar_traj([1, 2, 3], [4, 5, 6])
    sm = build_page(tr, L=3, L0=1)
    assert sm.M == 1
    np.testing.assert_array_equal(sm.Z[:, 0], [1, 2, 3, 4, 5, 6])
    assert build_page(scalar_traj(range(5), range(5)), L=2, L0=1).M == 2


def test_page_too_short():
    with pytest.raises(TrajectoryTooShort):
        build_page(scalar_traj([1], [2]), L=2, L0=1)


def test_hankel_example():
    sm = build_hankel(scalar_traj([1, 2, 3], [4, 5, 6]), L=2, L0=1, noise_free=True)
    np.testing.assert_array_equal(sm.Z, [[1, 2], [2, 3], [4, 5], [5, 6]])


def test_hankel_edge_cases():
    tr = scalar_traj([1, 2, 3], [4, 5, 6])
    np.testing.assert_array_equal(
        build_hankel(tr, L=3, L0=1, noise_free=True).Z, build_page(tr, L=3, L0=1).Z
    )
    assert build_hankel(scalar_traj(range(10), range(10)), L=4, L0=2, noise_free=True).M == 7
    with pytest.raises(TrajectoryTooShort):
        build_hankel(tr, L=4, L0=2, noise_free=True)


def test_hankel_requires_explicit_opt_in():
    tr = scalar_traj(range(10), range(10))
    with pytest.raises(HankelNotAllowed):
        build_hankel(tr, L=4, L0=2)
    assert build_hankel(tr, L=4, L0=2, allow_noisy=True).M == 7


def test_from_trajectories():
    a = scalar_traj([1, 2], [3, 4])
    b = scalar_traj([5, 6], [7, 8])
    sm = from_trajectories([a, b], L=2, L0=1)
    assert sm.Z.shape == (4, 2)
    np.testing.assert_array_equal(from_trajectories([a], 2, 1).Z, build_page(a, 2, 1).Z)
    with pytest.raises(LengthMismatch):
        from_trajectories([a, scalar_traj([1, 2, 3], [1, 2, 3])], L=2, L0=1)


def test_mimo_row_ordering():
    # two inputs, one output: u-block interleaves channels per time step
    u = np.array([[1, 10], [2, 20], [3, 30]], float)
    y = np.array([[100], [200], [300]], float)
    sm = build_page(Trajectory(u, y), L=3, L0=2)
    np.testing.assert_array_equal(sm.Z[:, 0], [1, 10, 2, 20, 3, 30, 100, 200, 300])
    P = sm.partition()
    np.testing.assert_array_equal(P.U_p[:, 0], [1, 10, 2, 20])
    np.testing.assert_array_equal(P.U_f[:, 0], [3, 30])
    np.testing.assert_array_equal(P.Y_p[:, 0], [100, 200])
    np.testing.assert_array_equal(P.Y_f[:, 0], [300])


@settings(max_examples=30, deadline=None)
@given(
    nu=st.integers(1, 3), ny=st.integers(1, 3), L0=st.integers(1, 5), Lp=st.integers(1, 5),
    M=st.integers(1, 8), seed=st.integers(0, 2**32 - 1),
)
def test_partition_restack(nu, ny, L0, Lp, M, seed):
    L = L0 + Lp
    Z = np.random.default_rng(seed).standard_normal((L * (nu + ny), M))
    sm = SignalMatrix(Z, L, L0, nu, ny, Construction.INDEPENDENT)
    P = sm.partition()
    assert P.U_p.shape == (nu * L0, M) and P.U_f.shape == (nu * Lp, M)
    assert P.Y_p.shape == (ny * L0, M) and P.Y_f.shape == (ny * Lp, M)
    np.testing.assert_array_equal(np.vstack(P), Z)


def test_page_columns_are_disjoint(rng):
    u = rng.standard_normal(20)
    y = rng.standard_normal(20)
    base = build_page(scalar_traj(u, y), L=4, L0=2).Z
    for t in range(20):
        y2 = y.copy()
        y2[t] += 1.0
        changed = np.any(build_page(scalar_traj(u, y2), L=4, L0=2).Z != base, axis=0)
        assert changed.sum() == 1


def test_check_rank_examples(rng):
    m = random_system((4, 4), 1, 1, rng)
    tr = simulate(m, np.zeros(4), rng.standard_normal(800))
    assert check_rank(build_page(tr, L=10, L0=8), 4)
    short = build_page(Trajectory(tr.inputs[:100], tr.outputs[:100]), L=10, L0=8)
    assert short.M < 14 and not check_rank(short, 4)
    zero = SignalMatrix(np.zeros((20, 30)), 10, 8, 1, 1, Construction.PAGE)
    assert not check_rank(zero, 4)


def test_check_rank_statistical():
    hits = 0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        m = random_system((2, 6), 1, 1, rng)
        L = 8
        M = L + m.n_x + 5
        tr = simulate(m, np.zeros(m.n_x), rng.standard_normal(M * L))
        hits += check_rank(build_page(tr, L, 6), m.n_x)
    assert hits >= 99


def test_trajectory_csv_round_trip(tmp_path, rng):
    tr = Trajectory(rng.standard_normal((7, 2)), rng.standard_normal((7, 3)))
    p = tmp_path / "t.csv"
    save_trajectory(tr, p)
    lines = p.read_text().splitlines()
    assert lines[0] == "# format=1"
    assert lines[1] == "t,u1,u2,y1,y2,y3"
    back = load_trajectory(p)
    assert np.array_equal(back.inputs, tr.inputs) and np.array_equal(back.outputs, tr.outputs)


def test_trajectory_csv_errors(tmp_path):
    p = tmp_path / "t.csv"
    p.write_text("t,u1,y1\n0,1,2\n2,1,2\n")
    with pytest.raises(FormatError):
        load_trajectory(p)
    p.write_text("time,u1,y1\n0,1,2\n")
    with pytest.raises(FormatError):
        load_trajectory(p)
