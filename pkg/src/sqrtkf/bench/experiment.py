"""Run both filters on shared measurement streams and write traces and a summary.

Outputs in ``config.output_path``:

``trace_sqkf.csv``, ``trace_kf.csv``
    One row per (trial, step): filtered mean, minimum eigenvalue of the
    implied covariance, squared error against ground truth, innovation norm
    and the ``indefinite`` / ``solve_failure`` flags.
``summary.json``
    Per-trial RMSE, first indefinite step and covariance discrepancy against a
    double precision conventional filter, plus batch aggregates.
"""

from __future__ import annotations

import csv
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..filter import FullCovEstimate, StateEstimate, SystemModel, innovate, kalman_gain, kf_step, predict, update
from ..linalg import cholesky
from ..sim import Trajectory, ill_conditioned_problem, make_rng, random_system, simulate
from .config import ConfigInvalid, ExperimentConfig

FILTERS = ("sqkf", "kf")
INDEFINITE_TOL = 10.0  # multiples of working eps * |Sigma|_2


def trace_header(n: int) -> list[str]:
    return (
        ["trial", "step"]
        + [f"mean_{i}" for i in range(n)]
        + ["min_eig", "mse", "innovation_norm", "indefinite", "solve_failure"]
    )


def covariance_health(cov: np.ndarray, eps: float) -> tuple[float, bool]:
    """Smallest eigenvalue of ``cov`` (in double) and whether it counts as indefinite."""
    cov = np.asarray(cov, dtype=np.float64)
    if not np.all(np.isfinite(cov)):
        return math.nan, True
    eig = np.linalg.eigvalsh((cov + cov.T) / 2)
    scale = np.max(np.abs(eig))
    return float(eig[0]), bool(eig[0] < -INDEFINITE_TOL * eps * scale)


@dataclass
class Scenario:
    model: SystemModel
    prior: StateEstimate
    trajectory: Trajectory


@dataclass
class FilterRun:
    means: np.ndarray
    covs: np.ndarray
    min_eig: np.ndarray
    innovation_norm: np.ndarray
    indefinite: np.ndarray
    failed: np.ndarray
    error: dict | None = None


@dataclass
class TrialResult:
    trial: int
    seed: int
    rows: dict = field(default_factory=dict)
    summary: dict = field(default_factory=dict)


def trial_seed(seed: int, trial: int) -> int:
    return int(np.random.SeedSequence([seed, trial]).generate_state(1, dtype=np.uint32)[0])


def load_model_file(path) -> tuple[SystemModel, StateEstimate, Trajectory | None, np.ndarray | None]:
    """Read a model description from JSON.

    Keys: ``A``, ``C``, optional ``B``; noise as ``noise_w``/``noise_v``
    factors or ``W``/``V`` covariances; prior as ``mean0`` plus ``factor0`` or
    ``cov0`` (default ``N(0, I)``); optional ``x0`` and ``trajectory`` (a CSV
    path, relative to the JSON file).
    """
    path = Path(path)
    try:
        spec = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigInvalid(f"{path}: invalid JSON ({exc})") from None
    try:
        A = np.asarray(spec["A"], dtype=float)
        n = A.shape[0]
        B = np.asarray(spec["B"], dtype=float).reshape(n, -1) if spec.get("B") else np.zeros((n, 0))
        C = np.asarray(spec["C"], dtype=float)
        if "noise_w" in spec:
            model = SystemModel(A, B, C, spec["noise_w"], spec["noise_v"])
        else:
            model = SystemModel.from_covariances(A, B, C, spec["W"], spec["V"])
        mean0 = np.asarray(spec.get("mean0", np.zeros(n)), dtype=float)
        if "factor0" in spec:
            prior = StateEstimate(mean0, spec["factor0"])
        else:
            prior = StateEstimate(mean0, cholesky(spec.get("cov0", np.eye(n))))
    except (KeyError, ValueError, np.linalg.LinAlgError) as exc:
        raise ConfigInvalid(f"{path}: bad model description ({exc})") from None
    trajectory = None
    if spec.get("trajectory"):
        trajectory = Trajectory.from_csv(path.parent / spec["trajectory"])
        if (
            trajectory.states.shape[1] != model.n
            or trajectory.controls.shape[1] != model.p
            or trajectory.measurements.shape[1] != model.m
        ):
            raise ConfigInvalid(f"{path}: trajectory dimensions do not match the model")
    x0 = np.asarray(spec["x0"], dtype=float) if "x0" in spec else None
    return model, prior, trajectory, x0


def build_scenario(config: ExperimentConfig, seed: int) -> Scenario:
    rng = make_rng(seed)
    model_seed, sim_seed = (int(s) for s in rng.integers(0, 2**63, size=2))
    if config.scenario == "random":
        model = random_system(config.n, config.m, config.p, config.spectral_radius, model_seed)
        prior = StateEstimate(np.zeros(model.n), np.eye(model.n))
    elif config.scenario == "ill_conditioned":
        model, prior = ill_conditioned_problem(config.epsilon)
    else:
        model, prior, trajectory, x0 = load_model_file(config.input_path)
        if trajectory is not None:
            if config.steps > trajectory.steps:
                raise ConfigInvalid(f"trajectory has only {trajectory.steps} steps")
            return Scenario(model, prior, trajectory)
    # truth starts from a draw of the prior
    x0 = prior.mean + prior.factor.T @ rng.standard_normal(model.n)
    controls = rng.standard_normal((config.steps, model.p))
    return Scenario(model, prior, simulate(model, x0, controls, config.steps, sim_seed))


def _run_filter(kind: str, scenario: Scenario, dtype, steps: int) -> FilterRun:
    eps = float(np.finfo(dtype).eps)
    model = scenario.model.astype(dtype)
    traj = scenario.trajectory
    n = model.n
    run = FilterRun(
        means=np.full((steps, n), np.nan),
        covs=np.full((steps, n, n), np.nan),
        min_eig=np.full(steps, np.nan),
        innovation_norm=np.full(steps, np.nan),
        indefinite=np.zeros(steps, dtype=bool),
        failed=np.zeros(steps, dtype=bool),
    )
    prior = scenario.prior.astype(dtype)
    est = prior if kind == "sqkf" else FullCovEstimate(prior.mean, prior.cov)
    for t in range(steps):
        u = traj.controls[t].astype(dtype)
        y = traj.measurements[t].astype(dtype)
        try:
            if kind == "sqkf":
                pred = predict(est, model, u)
                inn = innovate(pred, model, y)
                est = update(pred, model, inn, kalman_gain(pred, model.C, inn.factor))
                z = inn.residual
                cov = est.factor.astype(np.float64)
                cov = cov.T @ cov
            else:
                mean_pred = model.A @ est.mean + model.B @ u
                z = y - model.C @ mean_pred
                est = kf_step(est, model, u, y)
                cov = est.cov
        except (np.linalg.LinAlgError, ValueError) as exc:
            run.failed[t:] = True
            run.error = {"filter": kind, "step": t, "cause": f"{type(exc).__name__}: {exc}"}
            break
        run.means[t] = est.mean
        run.covs[t] = cov
        run.innovation_norm[t] = np.linalg.norm(np.asarray(z, dtype=np.float64))
        run.min_eig[t], run.indefinite[t] = covariance_health(cov, eps)
    return run


def _rel_cov_error(covs: np.ndarray, ref: np.ndarray) -> float:
    num = np.linalg.norm(covs - ref, axis=(1, 2))
    den = np.linalg.norm(ref, axis=(1, 2))
    with np.errstate(all="ignore"):
        rel = num / den
    return float(np.max(rel)) if np.all(np.isfinite(rel)) else math.inf


def _finite(x: float) -> float | None:
    return float(x) if math.isfinite(x) else None


def run_trial(config: ExperimentConfig, trial: int) -> TrialResult:
    seed = trial_seed(config.seed, trial)
    result = TrialResult(trial=trial, seed=seed)
    steps = config.steps
    try:
        scenario = build_scenario(config, seed)
    except (np.linalg.LinAlgError, ValueError) as exc:
        if isinstance(exc, ConfigInvalid):
            raise
        result.summary = {"trial": trial, "seed": seed, "status": "error", "errors": [str(exc)]}
        return result
    truth = scenario.trajectory.states[1 : steps + 1]

    with np.errstate(all="ignore"):
        runs = {kind: _run_filter(kind, scenario, config.dtype, steps) for kind in FILTERS}
        if config.dtype == np.float64:
            oracle = runs["kf"]
        else:
            oracle = _run_filter("kf", scenario, np.float64, steps)

    per_filter = {}
    for kind, run in runs.items():
        sq_err = np.mean((run.means - truth) ** 2, axis=1)
        indefinite_steps = np.flatnonzero(run.indefinite)
        per_filter[kind] = {
            "rmse": _finite(math.sqrt(np.mean(sq_err))),
            "terminal_rmse": _finite(math.sqrt(sq_err[-1])),
            "first_indefinite_step": int(indefinite_steps[0]) if indefinite_steps.size else None,
            "indefinite_steps": int(indefinite_steps.size),
            "min_eig": _finite(np.min(run.min_eig)) if not np.any(np.isnan(run.min_eig)) else None,
            "max_cov_discrepancy_vs_oracle": _finite(_rel_cov_error(run.covs, oracle.covs)),
            "error": run.error,
        }
        result.rows[kind] = [
            [trial, t, *run.means[t], run.min_eig[t], sq_err[t], run.innovation_norm[t], int(run.indefinite[t]), int(run.failed[t])]
            for t in range(steps)
        ]
    errors = [r.error for r in runs.values() if r.error]
    result.summary = {
        "trial": trial,
        "seed": seed,
        "status": "error" if errors else "ok",
        "errors": errors,
        "oracle_rmse": _finite(math.sqrt(np.mean((oracle.means - truth) ** 2))),
        "max_cov_discrepancy_sqkf_vs_kf": _finite(_rel_cov_error(runs["sqkf"].covs, runs["kf"].covs)),
        "filters": per_filter,
    }
    return result


def _fmt(v) -> str:
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def _max_or_none(values):
    values = list(values)
    if any(v is None for v in values) or not values:
        return None
    return max(values)


def run_experiment(config: ExperimentConfig) -> dict:
    """Run every trial of ``config`` and write traces plus ``summary.json``.

    Returns the summary dict. Filter failures are recorded per trial; only
    configuration and I/O problems raise.
    """
    config = config.validate()
    out = Path(config.output_path)
    out.mkdir(parents=True, exist_ok=True)

    if config.jobs > 1 and config.trials > 1:
        with ProcessPoolExecutor(max_workers=config.jobs) as pool:
            results = list(pool.map(run_trial, [config] * config.trials, range(config.trials)))
    else:
        results = [run_trial(config, k) for k in range(config.trials)]

    n = None
    for r in results:
        if r.rows:
            n = len(r.rows["sqkf"][0]) - 7
            break
    for kind in FILTERS:
        with open(out / f"trace_{kind}.csv", "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(trace_header(n if n is not None else config.n))
            for r in results:
                for row in r.rows.get(kind, []):
                    writer.writerow([_fmt(v) for v in row])

    trials = [r.summary for r in results]
    ok = [t for t in trials if "filters" in t]
    summary = {
        "config": config.to_dict(),
        "trials": trials,
        "aggregate": {
            "trials": len(trials),
            "errored_trials": sum(t["status"] == "error" for t in trials),
            "max_cov_discrepancy_sqkf_vs_kf": _max_or_none(t["max_cov_discrepancy_sqkf_vs_kf"] for t in ok),
            **{
                f"{kind}_indefinite_events": sum(t["filters"][kind]["indefinite_steps"] for t in ok)
                for kind in FILTERS
            },
            **{
                f"{kind}_max_cov_discrepancy_vs_oracle": _max_or_none(
                    t["filters"][kind]["max_cov_discrepancy_vs_oracle"] for t in ok
                )
                for kind in FILTERS
            },
        },
    }
    with open(out / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")
    return summary
