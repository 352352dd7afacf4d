"""Monte Carlo validation campaigns over banks of random systems.

Every system draws from its own Philox stream keyed by ``(seed, index)``, so a report is a
pure function of the config regardless of execution order or worker count.
"""
from __future__ import annotations

import dataclasses
import hashlib
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .errors import CampaignError, SingularSigma
from .fileio import atomic_write_text, csv_text, write_json
from .linalg import pinv
from .lti import (
    StateSpaceModel,
    extended_observability,
    gamma_model_based,
    random_system,
    simulate,
    stationary_state,
)
from .predictors import (
    DataDriven,
    IIDNoise,
    Kind,
    LambdaChoice,
    ModelBased,
    PredictionProblem,
    cached_estimate_gamma,
    gamma_lambda,
    predict,
)
from .signal_matrix import build_page
from .uncertainty import confidence_region, contains, estimated_mse

PREDICTOR_LABELS = {
    "pinv": "Pinv",
    "sub": "Sub",
    "smm": "SMM",
    "wd": "WD",
    "mse-mb": "MSE-MB",
    "mse-sub": "MSE-Sub",
    "mse-smm": "MSE-SMM",
    "mse-wd": "MSE-WD",
}
CR_LABELS = {"mb": "CR-MB", "sub": "CR-Sub", "smm": "CR-SMM", "wd": "CR-WD"}
IC_MODES = ("stationary_prefix", "simulated_prefix", "raw_gaussian")


def predictor_spec(name: str, model: Optional[StateSpaceModel] = None):
    """Map a predictor alias to ``(Kind, gamma source or None)``."""
    if name not in PREDICTOR_LABELS:
        raise ValueError(f"unknown predictor {name!r}; choose from {sorted(PREDICTOR_LABELS)}")
    if not name.startswith("mse-"):
        return Kind(name), None
    src = name[4:]
    if src == "mb":
        if model is None:
            raise ValueError("mse-mb needs the true model")
        return Kind.MINMSE, ModelBased(model)
    return Kind.MINMSE, DataDriven(LambdaChoice(src))


def gamma_source_spec(name: str, model: Optional[StateSpaceModel] = None):
    if name not in CR_LABELS:
        raise ValueError(f"unknown gamma source {name!r}; choose from {sorted(CR_LABELS)}")
    if name == "mb":
        if model is None:
            raise ValueError("model-based gamma needs the true model")
        return ModelBased(model)
    return DataDriven(LambdaChoice(name))


@dataclass(frozen=True)
class CampaignConfig:
    n_systems: int = 200
    n_x_range: tuple = (3, 8)
    L: int = 20
    L0: int = 8
    Lp: int = 12
    M: int = 320
    sigma2: float = 0.1
    p_levels: tuple = (0.95, 0.99)
    predictors: tuple = ("sub", "smm", "wd", "mse-mb", "mse-sub", "mse-smm", "mse-wd")
    gamma_sources: tuple = ("mb", "sub", "smm", "wd")
    seed: int = 0
    n_u: int = 1
    n_y: int = 1
    ic_mode: str = "stationary_prefix"
    workers: int = 1

    def __post_init__(self):
        for name in ("n_x_range", "p_levels", "predictors", "gamma_sources"):
            object.__setattr__(self, name, tuple(getattr(self, name)))
        if self.n_systems < 1:
            raise ValueError("n_systems must be positive")
        if self.L0 + self.Lp != self.L or self.L0 < 1 or self.Lp < 1:
            raise ValueError(f"need L0 + Lp = L with both positive, got {self.L0}+{self.Lp} vs {self.L}")
        if self.M < 1 or self.sigma2 < 0:
            raise ValueError("M must be positive and sigma2 nonnegative")
        if not all(0.0 < p < 1.0 for p in self.p_levels):
            raise ValueError("p_levels must lie in (0, 1)")
        for p in self.predictors:
            if p not in PREDICTOR_LABELS:
                raise ValueError(f"unknown predictor {p!r}")
        for s in self.gamma_sources:
            if s not in CR_LABELS:
                raise ValueError(f"unknown gamma source {s!r}")
        if self.ic_mode not in IC_MODES:
            raise ValueError(f"ic_mode must be one of {IC_MODES}")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        return {k: list(v) if isinstance(v, tuple) else v for k, v in d.items()}

    @classmethod
    def from_dict(cls, d: dict) -> CampaignConfig:
        d = {k: v for k, v in d.items() if k != "format_version"}
        unknown = set(d) - {f.name for f in dataclasses.fields(cls)}
        if unknown:
            raise ValueError(f"unknown campaign config fields: {sorted(unknown)}")
        return cls(**d)

    def content_hash(self) -> str:
        """Git blob hash of the canonical config JSON (``workers`` excluded: it cannot change results)."""
        d = self.to_dict()
        d.pop("workers")
        body = json.dumps(d, sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha1(b"blob %d\0" % len(body) + body).hexdigest()


@dataclass
class SystemRecord:
    index: int
    n_x: int
    sq_err: dict  # predictor -> ||y - y0||^2
    member: dict  # (predictor, cr, p) -> bool, or None when the region is degenerate
    est_mse: dict  # (predictor, cr) -> estimated MSE


@dataclass
class CampaignReport:
    config: CampaignConfig
    coverage: dict  # (predictor, cr, p) -> fraction (nan when undefined)
    empirical_mse: dict  # predictor -> mean squared error norm
    estimated_mse: dict  # (predictor, cr) -> mean estimated MSE
    records: list = field(default_factory=list)


def system_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(index,))))


def _initial_condition(model, cfg, rng):
    """Returns (problem, y0) for the configured initial-condition mode.

    stationary_prefix: the state at the start of the past window follows the stationary
        distribution under unit white input, so with unit H2 norm y_ini is unit-variance.
    simulated_prefix: that state is N(0, I) instead (realization dependent).
    raw_gaussian: y_ini itself is N(0, I); y0 continues the best-fitting past state.
    """
    nu, ny, L0, L = cfg.n_u, cfg.n_y, cfg.L0, cfg.L
    u_all = rng.standard_normal((L, nu))
    if cfg.ic_mode == "raw_gaussian":
        y_ini = rng.standard_normal(ny * L0)
        forced = simulate(model, np.zeros(model.n_x), u_all[:L0]).outputs.reshape(-1)
        x_start = pinv(extended_observability(model, L0)) @ (y_ini - forced)
        clean = simulate(model, x_start, u_all).outputs
    else:
        if cfg.ic_mode == "stationary_prefix":
            x_start = stationary_state(model, rng)
        else:
            x_start = rng.standard_normal(model.n_x)
        clean = simulate(model, x_start, u_all).outputs
        y_ini = clean[:L0].reshape(-1) + math.sqrt(cfg.sigma2) * rng.standard_normal(ny * L0)
    prob = PredictionProblem(u_all[:L0].reshape(-1), y_ini, u_all[L0:].reshape(-1))
    return prob, clean[L0:].reshape(-1)


def run_system(cfg: CampaignConfig, index: int) -> SystemRecord:
    rng = system_rng(cfg.seed, index)
    try:
        model = random_system(cfg.n_x_range, cfg.n_u, cfg.n_y, rng)
        T = cfg.M * cfg.L + cfg.L0
        u_data = rng.standard_normal((T, cfg.n_u))
        w = math.sqrt(cfg.sigma2) * rng.standard_normal((T, cfg.n_y))
        traj = simulate(model, np.zeros(model.n_x), u_data, w)
        # the trailing L0 samples are not used; page matrix keeps the first M*L
        sm = build_page(traj, cfg.L, cfg.L0)
        prob, y0 = _initial_condition(model, cfg, rng)
        noise = IIDNoise(cfg.sigma2)

        gammas = {}
        for cr in cfg.gamma_sources:
            if cr == "mb":
                gammas[cr] = gamma_model_based(model, cfg.L0, cfg.Lp)
            else:
                gammas[cr] = cached_estimate_gamma(sm, gamma_lambda(sm, cr, cfg.sigma2))

        sq_err, member, est = {}, {}, {}
        for name in cfg.predictors:
            kind, src = predictor_spec(name, model)
            res = predict(sm, prob, kind, noise, src)
            err = res.y - y0
            sq_err[name] = float(err @ err)
            for cr, G in gammas.items():
                est[(name, cr)] = estimated_mse(G, res, noise)
                for p in cfg.p_levels:
                    try:
                        member[(name, cr, p)] = contains(confidence_region(res, G, noise, p), y0)
                    except SingularSigma:
                        member[(name, cr, p)] = None
        return SystemRecord(index, model.n_x, sq_err, member, est)
    except CampaignError:
        raise
    except Exception as e:  # noqa: BLE001 - attach the failing system to any library error
        raise CampaignError(index, (cfg.seed, index), e) from e


def _run_chunk(args):
    cfg, indices = args
    return [run_system(cfg, i) for i in indices]


def run_campaign(cfg: CampaignConfig) -> CampaignReport:
    n = cfg.n_systems
    if cfg.workers <= 1:
        records = [run_system(cfg, i) for i in range(n)]
    else:
        chunks = [(cfg, list(range(k, n, cfg.workers))) for k in range(cfg.workers)]
        with ProcessPoolExecutor(max_workers=cfg.workers) as ex:
            records = [r for chunk in ex.map(_run_chunk, chunks) for r in chunk]
        records.sort(key=lambda r: r.index)
    return aggregate(cfg, records)


def aggregate(cfg: CampaignConfig, records: list) -> CampaignReport:
    records = sorted(records, key=lambda r: r.index)
    # np.mean over a contiguous array uses pairwise summation in index order
    empirical = {p: float(np.mean([r.sq_err[p] for r in records])) for p in cfg.predictors}
    estimated = {
        (p, cr): float(np.mean([r.est_mse[(p, cr)] for r in records]))
        for p in cfg.predictors for cr in cfg.gamma_sources
    }
    coverage = {}
    for p in cfg.predictors:
        for cr in cfg.gamma_sources:
            for lvl in cfg.p_levels:
                vals = [r.member[(p, cr, lvl)] for r in records]
                coverage[(p, cr, lvl)] = (
                    math.nan if any(v is None for v in vals) else float(np.mean(vals))
                )
    return CampaignReport(cfg, coverage, empirical, estimated, records)


# -- tables -------------------------------------------------------------------------------

def summarize(report: CampaignReport) -> dict:
    """Three tables as lists of row dicts: coverage, estimated-vs-empirical MSE, predictor MSE."""
    cfg = report.config
    crs = [CR_LABELS[c] for c in cfg.gamma_sources]
    coverage = []
    for lvl in cfg.p_levels:
        for p in cfg.predictors:
            row = {"p": lvl, "predictor": PREDICTOR_LABELS[p]}
            row.update({CR_LABELS[c]: report.coverage[(p, c, lvl)] for c in cfg.gamma_sources})
            coverage.append(row)
    mse_est = []
    for p in cfg.predictors:
        row = {"predictor": PREDICTOR_LABELS[p], "Empirical": report.empirical_mse[p]}
        row.update({CR_LABELS[c]: report.estimated_mse[(p, c)] for c in cfg.gamma_sources})
        mse_est.append(row)
    col = f"sigma2={cfg.sigma2!r}"
    mse_emp = [{"predictor": PREDICTOR_LABELS[p], col: report.empirical_mse[p]} for p in cfg.predictors]
    return {
        "coverage": (["p", "predictor", *crs], coverage),
        "mse_estimated": (["predictor", "Empirical", *crs], mse_est),
        "mse_empirical": (["predictor", col], mse_emp),
    }


def write_report(report: CampaignReport, out_dir) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = {}
    for name, (header, rows) in summarize(report).items():
        path = out / f"{name}.csv"
        atomic_write_text(path, csv_text(header, rows))
        files[name] = path.name
    manifest = {
        "format_version": 1,
        "config": report.config.to_dict(),
        "seed": report.config.seed,
        "config_hash": report.config.content_hash(),
        "tables": files,
    }
    write_json(out / "manifest.json", manifest)
    return files
