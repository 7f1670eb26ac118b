"""Experiment harness: config parsing, replication sweeps, persistence.

Configs are flat key=value text with dotted section keys::

    problem.name = BT
    run.gamma = 20
    run.alpha = auto          # or a number; auto = rate-bound minimizer
    run.schedule = FixedHorizon
    run.seed = 12345
    sweep = 1024,4096,16384,65536
    replications = 30
    lambda = 3                # optional; with c1/c2 absent they are derived
    c1 = 2.24
    c2 = 0.21875
    output_dir = out
    ledger.estimate = true    # re-estimate the ledger instead of the shipped one
    ledger.L_g = 1.0          # individual overrides

Each (N, replication) pair runs with seed mix(master, N, r) and contributes
one row to results.csv; summary.csv holds the per-N mean and standard error
of V at the random stopping index; a JSONL manifest records the config
hash, ledger, derived constants, and versions.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import constants, diagnostics, engine, problems, seeding
from .constants import ConstantLedger
from .errors import CapabilityError, ConfigurationError

RESULT_COLUMNS = ["N", "replication", "seed", "S", "tau_schedule", "alpha",
                  "gamma", "V_at_S", "Q_at_S", "normgradG_at_S", "W_final",
                  "wall_ms", "samples_used"]

_V_MC_SAMPLES = 10000
_MOMENT_SAMPLES = 20000
STREAM_MOMENTS = 7
STREAM_V_EVAL = 8


@dataclass
class ExperimentConfig:
    """Parsed experiment description."""

    problem_name: str
    gamma: float
    alpha: Optional[float]          # None means "auto"
    schedule: engine.Schedule
    seed: int
    sweep: list
    replications: int
    output_dir: Path
    lam: Optional[float] = None
    c1: Optional[float] = None
    c2: Optional[float] = None
    diag_every: int = 0
    init_beta: Optional[list] = None
    init_theta: Optional[list] = None
    problem_params: dict = field(default_factory=dict)
    ledger_overrides: dict = field(default_factory=dict)
    estimate_ledger: bool = False
    workers: int = 0                # 0 = available parallelism
    raw_text: str = ""

    def __post_init__(self):
        if not self.sweep:
            raise ConfigurationError("sweep must be nonempty")
        if list(self.sweep) != sorted(set(self.sweep)):
            raise ConfigurationError("sweep must be strictly increasing")
        if self.replications < 1:
            raise ConfigurationError("replications must be >= 1")


def parse_config(text: str) -> ExperimentConfig:
    """Parse the flat key=value config format."""
    pairs = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigurationError(f"config line {lineno} is not key=value: {line!r}")
        key, _, value = line.partition("=")
        pairs[key.strip()] = value.strip()

    def pop(key, default=None):
        return pairs.pop(key, default)

    name = pop("problem.name")
    if name is None:
        raise ConfigurationError("config missing problem.name")
    gamma = pop("run.gamma")
    if gamma is None:
        raise ConfigurationError("config missing run.gamma")
    alpha_raw = pop("run.alpha", "auto")
    alpha = None if alpha_raw.lower() == "auto" else float(alpha_raw)
    schedule = engine.Schedule(pop("run.schedule", "FixedHorizon"))
    seed = int(pop("run.seed", "0"))
    diag_every = int(pop("run.diag_every", "0"))
    init_beta = pop("run.init_beta")
    init_theta = pop("run.init_theta")
    if init_beta is not None:
        init_beta = [float(v) for v in init_beta.split(",")]
    if init_theta is not None:
        init_theta = [float(v) for v in init_theta.split(",")]
    sweep_raw = pop("sweep")
    if sweep_raw is None:
        raise ConfigurationError("config missing sweep")
    sweep = [int(v) for v in sweep_raw.split(",") if v.strip()]
    replications = int(pop("replications", "1"))
    output_dir = Path(pop("output_dir", "out"))
    lam = pop("lambda")
    c1 = pop("c1")
    c2 = pop("c2")
    workers = int(pop("workers", "0"))
    estimate = pop("ledger.estimate", "false").lower() in ("1", "true", "yes")

    problem_params = {}
    ledger_overrides = {}
    for key in list(pairs):
        if key.startswith("problem."):
            problem_params[key[len("problem."):]] = pairs.pop(key)
        elif key.startswith("ledger."):
            ledger_overrides[key[len("ledger."):]] = float(pairs.pop(key))
    if pairs:
        raise ConfigurationError(f"unknown config keys: {sorted(pairs)}")

    return ExperimentConfig(
        problem_name=name, gamma=float(gamma), alpha=alpha, schedule=schedule,
        seed=seed, sweep=sweep, replications=replications,
        output_dir=output_dir,
        lam=None if lam is None else float(lam),
        c1=None if c1 is None else float(c1),
        c2=None if c2 is None else float(c2),
        diag_every=diag_every, init_beta=init_beta, init_theta=init_theta,
        problem_params=problem_params,
        ledger_overrides=ledger_overrides, estimate_ledger=estimate,
        workers=workers, raw_text=text,
    )


def resolve_ledger(problem: problems.BuiltinProblem,
                   config: ExperimentConfig) -> ConstantLedger:
    """Shipped or re-estimated ledger with config overrides applied."""
    if config.estimate_ledger:
        rng = seeding.substream(config.seed, 17)
        ledger = constants.estimate_ledger(
            problem.spec, sample_count=10000, probe_count=10000, rng=rng,
            beta_box=problem.beta_box, theta_box=problem.theta_box)
    else:
        ledger = problem.ledger
    if config.ledger_overrides:
        values = ledger.as_dict()
        for key, value in config.ledger_overrides.items():
            if key not in values:
                raise ConfigurationError(f"unknown ledger override {key!r}")
            values[key] = value
        provenance = dict(ledger.provenance)
        provenance.update({k: "override" for k in config.ledger_overrides})
        ledger = ConstantLedger(**values, provenance=provenance)
    return ledger


def resolve_coefficients(ledger: ConstantLedger, config: ExperimentConfig):
    """(lam, c1, c2) from the config, derived where absent."""
    lam = config.lam
    if lam is None:
        floor = constants.lambda_floor(ledger)
        lam = max(1.05 * floor, ledger.L_hess_g, 1.0)
    if config.c1 is not None and config.c2 is not None:
        return lam, config.c1, config.c2
    _, _, c1, c2 = constants.descent_coefficients(ledger, lam, config.gamma)
    return lam, c1, c2


def measure_z0_quantities(problem: problems.BuiltinProblem,
                          config: ExperimentConfig, lam: float):
    """Direction moments, W(z^0), and G_min needed for alpha tuning and bounds."""
    spec = problem.spec
    beta0 = (np.zeros(spec.dim_beta) if config.init_beta is None
             else np.asarray(config.init_beta, dtype=float))
    theta0 = (np.zeros(spec.dim_theta) if config.init_theta is None
              else np.asarray(config.init_theta, dtype=float))
    rng = seeding.substream(config.seed, STREAM_MOMENTS)
    c_d_sq, sigma_sq = diagnostics.direction_moment_stats(
        spec, beta0, theta0, config.gamma, _MOMENT_SAMPLES, rng)
    mode = "exact" if spec.has_support else "mc"
    _, w0 = diagnostics.bregman_delta_and_W(
        spec, beta0, theta0, lam, mode=mode, n_samples=_V_MC_SAMPLES,
        rng=seeding.substream(config.seed, STREAM_MOMENTS, 1))
    if problem.g_min is None:
        raise CapabilityError(
            f"problem {problem.name} has no known G_min; supply run.alpha explicitly")
    return c_d_sq, sigma_sq, w0, problem.g_min


def _run_one(problem_name: str, problem_params: dict, n_iters: int,
             replication: int, master_seed: int, gamma: float, alpha: float,
             schedule_value: str, lam: float, c1: float, c2: float,
             diag_every: int, init_beta=None, init_theta=None) -> dict:
    """Execute one replication and evaluate diagnostics at the stopped state."""
    problem = problems.by_name(problem_name, **problem_params)
    spec = problem.spec
    seed = seeding.mix(master_seed, n_iters, replication)
    run_config = engine.RunConfig(
        gamma=gamma, alpha=alpha, n_iters=n_iters,
        schedule=engine.Schedule(schedule_value), seed=seed,
        diag_every=diag_every, init_beta=init_beta, init_theta=init_theta,
    )
    start = time.perf_counter()
    record = engine.run(spec, run_config)
    wall_ms = (time.perf_counter() - start) * 1000.0

    stopped = record.stopped_state
    final = record.final_state
    diag_samples = 0
    if spec.has_support:
        mode, rng = "exact", None
    else:
        mode = "mc"
        rng = seeding.substream(seed, STREAM_V_EVAL)
        diag_samples = 3 * _V_MC_SAMPLES  # Q and grad G at S, W at z^N
    q, _ = diagnostics.tracking_error_Q(spec, stopped.beta, stopped.theta,
                                        mode, _V_MC_SAMPLES, rng)
    g, _ = diagnostics.grad_G(spec, stopped.beta, mode, _V_MC_SAMPLES, rng)
    _, w_final = diagnostics.bregman_delta_and_W(spec, final.beta, final.theta,
                                                 lam, mode, _V_MC_SAMPLES, rng)
    v = c1 * q + c2 * float(g @ g)
    return {
        "N": n_iters, "replication": replication, "seed": seed,
        "S": record.stop_index, "tau_schedule": schedule_value,
        "alpha": alpha, "gamma": gamma,
        "V_at_S": v, "Q_at_S": q,
        "normgradG_at_S": float(np.linalg.norm(g)),
        "W_final": w_final, "wall_ms": wall_ms,
        "samples_used": n_iters + diag_samples,
    }


def run_experiment(config: ExperimentConfig) -> dict:
    """Run the full sweep and write results.csv / summary.csv / manifest.jsonl.

    Returns a dict with the output paths, the per-N summary rows, and the
    resolved (ledger, lam, c1, c2, alpha).
    """
    problem = problems.by_name(config.problem_name, **config.problem_params)
    ledger = resolve_ledger(problem, config)
    lam, c1, c2 = resolve_coefficients(ledger, config)

    c_d_sq = sigma_sq = w0 = g_min = None
    alpha = config.alpha
    if alpha is None:
        c_d_sq, sigma_sq, w0, g_min = measure_z0_quantities(problem, config, lam)
        _, _, l_w = constants.lipschitz_W(ledger, lam)
        alpha = constants.optimal_alpha(l_w, np.sqrt(c_d_sq), np.sqrt(sigma_sq),
                                        w0, g_min)

    tasks = [(n, r) for n in config.sweep for r in range(config.replications)]
    args = [(config.problem_name, config.problem_params, n, r, config.seed,
             config.gamma, alpha, config.schedule.value, lam, c1, c2,
             config.diag_every, config.init_beta, config.init_theta)
            for n, r in tasks]
    workers = config.workers or (os.cpu_count() or 1)
    workers = int(os.environ.get("CTXOPT_WORKERS", workers))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_run_one_star, args, chunksize=1))
    else:
        rows = [_run_one(*a) for a in args]
    rows.sort(key=lambda row: (row["N"], row["replication"]))

    out = Path(config.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    results_path = out / "results.csv"
    with open(results_path, "w", newline="\n") as fh:
        writer = csv.DictWriter(fh, fieldnames=RESULT_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: repr(float(v)) if isinstance(v, float) else v
                             for k, v in row.items()})

    summary = []
    for n in config.sweep:
        vs = np.array([row["V_at_S"] for row in rows if row["N"] == n])
        stderr = vs.std(ddof=1) / np.sqrt(len(vs)) if len(vs) > 1 else 0.0
        summary.append({"N": n, "mean_V": float(vs.mean()),
                        "stderr_V": float(stderr), "replications": len(vs)})
    summary_path = out / "summary.csv"
    with open(summary_path, "w", newline="\n") as fh:
        writer = csv.DictWriter(fh, fieldnames=["N", "mean_V", "stderr_V",
                                                "replications"],
                                lineterminator="\n")
        writer.writeheader()
        for row in summary:
            writer.writerow({k: repr(float(v)) if isinstance(v, float) else v
                             for k, v in row.items()})

    derived = {"lambda": lam, "c1": c1, "c2": c2, "alpha": alpha}
    if c_d_sq is not None:
        derived.update({"C_d_sq": c_d_sq, "sigma_sq": sigma_sq,
                        "W0": w0, "G_min": g_min})
    manifest = {
        "config_sha256": hashlib.sha256(config.raw_text.encode()).hexdigest(),
        "problem": problem.name,
        "ledger": ledger.as_dict(),
        "ledger_provenance": ledger.provenance,
        "derived": derived,
        "versions": {"ctxopt": "0.1.0", "numpy": np.__version__},
        "timestamp": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
    }
    with open(out / "manifest.jsonl", "w") as fh:
        fh.write(json.dumps(manifest, sort_keys=True) + "\n")

    return {"results": results_path, "summary": summary_path,
            "manifest": out / "manifest.jsonl", "summary_rows": summary,
            "ledger": ledger, "lam": lam, "c1": c1, "c2": c2, "alpha": alpha,
            "moments": (c_d_sq, sigma_sq, w0, g_min)}


def _run_one_star(args):
    return _run_one(*args)


def read_summary(path) -> list:
    """Load summary.csv rows as (N, mean_V) pairs."""
    with open(path, newline="") as fh:
        return [(int(row["N"]), float(row["mean_V"]))
                for row in csv.DictReader(fh)]
