import numpy as np
import pytest

from ddpredict.lti import random_system, simulate
from ddpredict.predictors import PredictionProblem
from ddpredict.signal_matrix import Construction, SignalMatrix, build_page


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def noise_free_setup(seed, L=10, L0=8, M=80, n_x_range=(4, 4), n_u=1, n_y=1):
    """Random normalized system plus a noise-free page matrix built from unit Gaussian inputs."""
    rng = np.random.default_rng(seed)
    model = random_system(n_x_range, n_u, n_y, rng)
    u = rng.standard_normal((M * L, n_u))
    traj = simulate(model, np.zeros(model.n_x), u)
    return model, build_page(traj, L, L0), rng


def dense_kkt_oracle(sm, prob, lam, Q=None):
    """Stack the full KKT system in (g, delta, multipliers) and solve it densely."""
    P = sm.partition()
    U = np.vstack([P.U_p, P.U_f])
    M, nd, nc = sm.M, P.Y_p.shape[0], U.shape[0]
    Q = np.eye(nd) if Q is None else Q
    n = M + nd + nc + nd
    K = np.zeros((n, n))
    K[:M, :M] = 2 * lam * np.eye(M)
    K[M:M + nd, M:M + nd] = 2 * Q
    K[:M, M + nd:M + nd + nc] = U.T
    K[:M, M + nd + nc:] = P.Y_p.T
    K[M:M + nd, M + nd + nc:] = -np.eye(nd)
    K[M + nd:M + nd + nc, :M] = U
    K[M + nd + nc:, :M] = P.Y_p
    K[M + nd + nc:, M:M + nd] = -np.eye(nd)
    rhs = np.concatenate([np.zeros(M + nd), prob.u_ini, prob.u, prob.y_ini])
    sol = np.linalg.solve(K, rhs)
    g, delta = sol[:M], sol[M:M + nd]
    return g, delta, P.Y_f @ g


def random_instance(rng, with_q):
    nu, ny = rng.integers(1, 3), rng.integers(1, 3)
    L0, Lp = rng.integers(1, 5), rng.integers(1, 5)
    L = L0 + Lp
    M = int(nu * L + rng.integers(2, 30))
    Z = rng.standard_normal((L * (nu + ny), M))
    sm = SignalMatrix(Z, L, L0, nu, ny, Construction.INDEPENDENT)
    prob = PredictionProblem(
        rng.standard_normal(nu * L0), rng.standard_normal(ny * L0), rng.standard_normal(nu * Lp)
    )
    lam = 10 ** rng.uniform(-2, 1)
    Q = None
    if with_q:
        k = rng.integers(1, ny * L0 + 1)
        R = rng.standard_normal((k, ny * L0))
        Q = R.T @ R
    return sm, prob, lam, Q


def oracle_problem(model, L, L0, rng):
    """Consistent (u_ini, y_ini, u) from a random initial state, and the true future output."""
    x = rng.standard_normal(model.n_x)
    u = rng.standard_normal((L, model.n_u))
    y = simulate(model, x, u).outputs
    prob = PredictionProblem(u[:L0].reshape(-1), y[:L0].reshape(-1), u[L0:].reshape(-1))
    return prob, y[L0:].reshape(-1)


DESK_SEED = 0


@pytest.fixture(scope="session")
def desk_report_low_noise():
    """Default desk campaign (200 systems) at sigma2 = 0.1."""
    from ddpredict.montecarlo import CampaignConfig, run_campaign

    return run_campaign(CampaignConfig(sigma2=0.1, seed=DESK_SEED))


@pytest.fixture(scope="session")
def desk_report_unit_noise():
    """Default desk campaign (200 systems) at sigma2 = 1."""
    from ddpredict.montecarlo import CampaignConfig, run_campaign

    return run_campaign(CampaignConfig(sigma2=1.0, seed=DESK_SEED))


# -- acceptance reporting ---------------------------------------------------------------------

ACCEPTANCE_LINES = {}


@pytest.fixture
def criterion():
    """Record one pass/fail line for an acceptance criterion, then assert it."""

    def record(number: int, title: str, ok: bool, detail: str):
        ACCEPTANCE_LINES[number] = f"criterion {number:2d} {'PASS' if ok else 'FAIL'}  {title}: {detail}"
        print(ACCEPTANCE_LINES[number])
        assert ok, detail

    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
