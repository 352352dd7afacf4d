"""Command-line front end.

Exit codes: 0 success, 2 usage error, 3 I/O error, 4 file format error, 5 library error.
Failures print one JSON line on stderr: {"error": <class>, "exit": <code>, "message": <text>}.
"""
from __future__ import annotations

import argparse
import csv
import json
import sys
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from .errors import DDPredictError, FormatError
from .fileio import atomic_write_text, csv_text, write_json
from .lti import (
    Trajectory,
    gamma_model_based,
    load_model,
    random_system,
    save_model,
    simulate,
)
from .montecarlo import (
    CR_LABELS,
    PREDICTOR_LABELS,
    CampaignConfig,
    gamma_source_spec,
    predictor_spec,
    run_campaign,
    write_report,
)
from .predictors import IIDNoise, PredictionProblem, predict, resolve_gamma
from .signal_matrix import build_hankel, build_page, load_trajectory, save_trajectory
from .uncertainty import (
    ConfidenceRegion,
    confidence_region,
    ellipse_boundary,
    estimated_mse,
    load_region,
)

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_FORMAT, EXIT_LIBRARY = 0, 2, 3, 4, 5
BUILTIN_PREFIX = "builtin:"
BOUNDARY_POINTS = 100

EPILOG = """exit codes: 0 ok, 2 usage, 3 I/O, 4 file format, 5 library error.
models may be given as a JSON path or as builtin:g1 (bundled fourth-order example)."""


class UsageError(Exception):
    def __init__(self, message: str, usage: str = ""):
        super().__init__(message)
        self.usage = usage


# -- commands ----------------------------------------------------------------------------

@dataclass(frozen=True)
class SysGen:
    out: str
    n_x_range: tuple
    n_u: int = 1
    n_y: int = 1
    seed: int = 0


@dataclass(frozen=True)
class Simulate:
    model: str
    out: str
    inputs: Optional[str] = None
    length: Optional[int] = None
    sigma2: float = 0.0
    seed: int = 0
    x0: Optional[tuple] = None


@dataclass(frozen=True)
class Predict:
    trajectory: str
    L: int
    L0: int
    kind: str
    problem: object  # PredictionProblem, path to problem JSON, or inline (u_ini, y_ini, u)
    sigma2: float = 0.0
    cr: Optional[str] = None
    model: Optional[str] = None
    p: float = 0.9
    construction: str = "page"
    allow_hankel: bool = False
    out: Optional[str] = None
    region_out: Optional[str] = None


@dataclass(frozen=True)
class Campaign:
    out: str
    config: Optional[str] = None
    workers: Optional[int] = None


@dataclass(frozen=True)
class Ellipse:
    region: str
    out: str
    n_points: int = BOUNDARY_POINTS


# -- parsing -----------------------------------------------------------------------------

class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message, self.format_usage())


def _nx_range(text: str) -> tuple:
    lo, sep, hi = text.partition("..")
    try:
        r = (int(lo), int(hi)) if sep else (int(lo), int(lo))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected N or LO..HI, got {text!r}") from None
    return r


def _floats(text: str) -> tuple:
    try:
        return tuple(float(v) for v in text.split(",") if v.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _vector_arg(text: str):
    # "zeros" defers the length to the signal-matrix dimensions
    return "zeros" if text == "zeros" else _floats(text)


def _build_parser() -> _Parser:
    top = _Parser(prog="ddpredict", description="Data-driven prediction with confidence regions.",
                  epilog=EPILOG, formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = top.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("sysgen", help="draw a random stable system normalized to unit H2 norm")
    s.add_argument("--out", required=True)
    s.add_argument("--nx", type=_nx_range, default=(3, 8), help="state dimension N or range LO..HI")
    s.add_argument("--nu", type=int, default=1)
    s.add_argument("--ny", type=int, default=1)
    s.add_argument("--seed", type=int, default=0)

    s = sub.add_parser("simulate", help="simulate a model and write a trajectory CSV")
    s.add_argument("--model", required=True)
    s.add_argument("--out", required=True)
    g = s.add_mutually_exclusive_group(required=True)
    g.add_argument("--inputs", help="CSV with columns t,u1..")
    g.add_argument("--length", type=int, help="draw this many unit Gaussian input samples")
    s.add_argument("--sigma2", type=float, default=0.0, help="output measurement noise variance")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--x0", type=_floats, help="initial state, comma separated (default zero)")

    s = sub.add_parser("predict", help="predict a future output window and its confidence region")
    s.add_argument("--trajectory", required=True)
    s.add_argument("--L", type=int, required=True)
    s.add_argument("--L0", type=int, required=True)
    s.add_argument("--kind", required=True, choices=list(PREDICTOR_LABELS))
    s.add_argument("--problem", help="JSON with u_ini, y_ini, u")
    s.add_argument("--u-ini", type=_vector_arg)
    s.add_argument("--y-ini", type=_vector_arg)
    s.add_argument("--u", type=_vector_arg)
    s.add_argument("--sigma2", type=float, default=0.0)
    s.add_argument("--cr", choices=list(CR_LABELS),
                   help="free-response map for the region (default: mb with --model, else smm)")
    s.add_argument("--model", help="true model, needed by mse-mb and --cr mb")
    s.add_argument("--p", type=float, default=0.9)
    s.add_argument("--construction", choices=["page", "hankel"], default="page")
    s.add_argument("--allow-hankel", action="store_true", help="permit a Hankel matrix on noisy data")
    s.add_argument("--out", help="prediction JSON (stdout if omitted)")
    s.add_argument("--region-out", help="region JSON alone, with boundary points when 2-D")

    s = sub.add_parser("campaign", help="run a Monte Carlo campaign and write report tables")
    s.add_argument("--config", help="campaign config JSON (defaults if omitted)")
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--workers", type=int)

    s = sub.add_parser("ellipse", help="export boundary points of a 2-D region")
    s.add_argument("--region", required=True, help="region JSON or prediction JSON")
    s.add_argument("--n-points", type=int, default=BOUNDARY_POINTS)
    s.add_argument("--out", required=True, help="CSV with columns k,y1,y2")
    return top


def _read_problem_json(path: str) -> PredictionProblem:
    try:
        d = json.loads(Path(path).read_text())
        return PredictionProblem(d["u_ini"], d["y_ini"], d["u"])
    except json.JSONDecodeError as e:
        raise FormatError(f"{path}: {e}") from None
    except KeyError as e:
        raise FormatError(f"{path}: missing field {e}") from None


def parse_args(argv: Sequence[str]):
    parser = _build_parser()
    a = parser.parse_args(list(argv))
    if a.command == "sysgen":
        return SysGen(a.out, a.nx, a.nu, a.ny, a.seed)
    if a.command == "simulate":
        return Simulate(a.model, a.out, a.inputs, a.length, a.sigma2, a.seed, a.x0)
    if a.command == "campaign":
        return Campaign(a.out, a.config, a.workers)
    if a.command == "ellipse":
        if a.n_points < 1:
            raise UsageError("--n-points must be positive", parser.format_usage())
        return Ellipse(a.region, a.out, a.n_points)

    # predict
    usage = parser.format_usage()
    if not 0 < a.L0 < a.L:
        raise UsageError(f"need 0 < L0 < L, got L0={a.L0} L={a.L}", usage)
    inline = (a.u_ini, a.y_ini, a.u)
    if a.problem is not None:
        if any(v is not None for v in inline):
            raise UsageError("give either --problem or --u-ini/--y-ini/--u, not both", usage)
        problem = a.problem
    elif all(v is not None for v in inline):
        problem = inline
    else:
        raise UsageError("prediction problem missing: need --problem or all of --u-ini, --y-ini, --u", usage)
    if (a.kind == "mse-mb" or a.cr == "mb") and a.model is None:
        raise UsageError(f"--model is required for {'--kind mse-mb' if a.kind == 'mse-mb' else '--cr mb'}",
                         usage)
    if not 0.0 < a.p < 1.0:
        raise UsageError(f"--p must lie in (0, 1), got {a.p}", usage)
    return Predict(a.trajectory, a.L, a.L0, a.kind, problem, a.sigma2, a.cr, a.model, a.p,
                   a.construction, a.allow_hankel, a.out, a.region_out)


# -- execution ---------------------------------------------------------------------------

def resolve_model(ref: str):
    if ref.startswith(BUILTIN_PREFIX):
        name = ref[len(BUILTIN_PREFIX):]
        res = resources.files("ddpredict") / "data" / f"{name}.json"
        if not res.is_file():
            raise FileNotFoundError(f"no bundled model named {name!r}")
        with resources.as_file(res) as path:
            return load_model(path)
    return load_model(ref)


def _load_inputs(path: str) -> np.ndarray:
    rows = [ln for ln in Path(path).read_text().splitlines() if ln.strip() and not ln.startswith("#")]
    if not rows:
        raise FormatError(f"{path}: empty input file")
    reader = csv.reader(rows)
    header = next(reader)
    cols = [i for i, h in enumerate(header) if h.startswith("u")]
    if not cols:
        raise FormatError(f"{path}: no u columns in header {header}")
    try:
        return np.array([[float(r[i]) for i in cols] for r in reader])
    except (ValueError, IndexError) as e:
        raise FormatError(f"{path}: {e}") from None


def _run_sysgen(cmd: SysGen):
    model = random_system(cmd.n_x_range, cmd.n_u, cmd.n_y, np.random.default_rng(cmd.seed))
    save_model(model, cmd.out)


def _run_simulate(cmd: Simulate):
    model = resolve_model(cmd.model)
    rng = np.random.default_rng(cmd.seed)
    if cmd.inputs is not None:
        u = _load_inputs(cmd.inputs)
    else:
        u = rng.standard_normal((cmd.length, model.n_u))
    noise = np.sqrt(cmd.sigma2) * rng.standard_normal((len(u), model.n_y)) if cmd.sigma2 > 0 else None
    x0 = np.zeros(model.n_x) if cmd.x0 is None else np.array(cmd.x0)
    save_trajectory(simulate(model, x0, u, noise), cmd.out)


def _materialize(problem, n_u: int, n_y: int, L0: int, Lp: int) -> PredictionProblem:
    if isinstance(problem, PredictionProblem):
        return problem
    if isinstance(problem, str):
        return _read_problem_json(problem)
    sizes = (n_u * L0, n_y * L0, n_u * Lp)
    vals = [np.zeros(n) if v == "zeros" else np.array(v) for v, n in zip(problem, sizes)]
    return PredictionProblem(*vals)


def _run_predict(cmd: Predict) -> Optional[str]:
    traj = load_trajectory(cmd.trajectory)
    if cmd.construction == "hankel":
        sm = build_hankel(traj, cmd.L, cmd.L0, noise_free=cmd.sigma2 == 0.0, allow_noisy=cmd.allow_hankel)
    else:
        sm = build_page(traj, cmd.L, cmd.L0)
    prob = _materialize(cmd.problem, sm.n_u, sm.n_y, sm.L0, sm.Lp)
    prob.check(sm)
    model = resolve_model(cmd.model) if cmd.model else None
    noise = IIDNoise(cmd.sigma2)
    kind, src = predictor_spec(cmd.kind, model)
    result = predict(sm, prob, kind, noise, src)

    out = {
        "format_version": 1,
        "kind": cmd.kind,
        "lam": result.lam,
        "y": result.y.tolist(),
        "delta": result.delta.tolist(),
        "g": result.g.tolist(),
    }
    if cmd.sigma2 > 0.0:
        cr = cmd.cr or ("mb" if model is not None else "smm")
        gamma = (gamma_model_based(model, sm.L0, sm.Lp) if cr == "mb"
                 else resolve_gamma(sm, gamma_source_spec(cr), noise))
        region = confidence_region(result, gamma, noise, cmd.p, n_y=sm.n_y)
        boundary = ellipse_boundary(region, BOUNDARY_POINTS) if region.dim == 2 else None
        out["cr"] = cr
        out["estimated_mse"] = estimated_mse(gamma, result, noise)
        out["region"] = region.to_dict(boundary)
        if cmd.region_out:
            write_json(cmd.region_out, region.to_dict(boundary))
    text = json.dumps(out, indent=1) + "\n"
    if cmd.out:
        atomic_write_text(cmd.out, text)
        return None
    return text


def _run_campaign(cmd: Campaign):
    if cmd.config:
        try:
            d = json.loads(Path(cmd.config).read_text())
        except json.JSONDecodeError as e:
            raise FormatError(f"{cmd.config}: {e}") from None
        try:
            cfg = CampaignConfig.from_dict(d)
        except (TypeError, ValueError) as e:
            raise FormatError(f"{cmd.config}: {e}") from None
    else:
        cfg = CampaignConfig()
    if cmd.workers is not None:
        cfg = CampaignConfig.from_dict({**cfg.to_dict(), "workers": cmd.workers})
    out = Path(cmd.out)
    out.mkdir(parents=True, exist_ok=True)
    write_report(run_campaign(cfg), out)


def _run_ellipse(cmd: Ellipse):
    region: ConfidenceRegion = load_region(cmd.region)
    pts = ellipse_boundary(region, cmd.n_points)
    rows = [{"k": k, "y1": float(x), "y2": float(y)} for k, (x, y) in enumerate(pts)]
    atomic_write_text(cmd.out, csv_text(["k", "y1", "y2"], rows))


_RUNNERS = {SysGen: _run_sysgen, Simulate: _run_simulate, Predict: _run_predict,
            Campaign: _run_campaign, Ellipse: _run_ellipse}


def _fail(exc: BaseException, code: int) -> int:
    msg = " ".join(str(exc).split())
    print(json.dumps({"error": type(exc).__name__, "exit": code, "message": msg}), file=sys.stderr)
    return code


def run(cmd) -> int:
    try:
        text = _RUNNERS[type(cmd)](cmd)
    except FormatError as e:
        return _fail(e, EXIT_FORMAT)
    except OSError as e:
        return _fail(e, EXIT_IO)
    except (DDPredictError, ValueError) as e:
        return _fail(e, EXIT_LIBRARY)
    if text:
        sys.stdout.write(text)
    return EXIT_OK


def main(argv: Optional[Sequence[str]] = None) -> int:
    try:
        cmd = parse_args(sys.argv[1:] if argv is None else argv)
    except UsageError as e:
        sys.stderr.write(e.usage)
        return _fail(e, EXIT_USAGE)
    return run(cmd)
