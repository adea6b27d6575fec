"""
Named sweep designs, the replication harness and per-condition summaries.

A sweep expands every (condition, replicate) pair into one independent run
whose seed is derived from (base_seed, condition_index, replicate_index).
Runs are farmed out to a process pool and merged back in (condition,
replicate) order, so the records do not depend on the worker count.
"""

import dataclasses
import json
import logging
import math
import os
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass
from enum import Enum

import numpy as np
import pandas as pd
import psutil

from diffusion_engine import SimParams, init_simulation, run_to_completion
from run_records import OUTCOME_COLUMNS, ConditionSummary, RunRecord
from simulation_errors import ParameterError, SweepError

CONFIG = {
    'MIN_DISK_SPACE': 100000000,  # 100 MB in bytes
    'MAX_CPU_USAGE': 90,  # 90%
    'PROGRESS_STEPS': 10,
}

_MASK64 = (1 << 64) - 1


class ExperimentId(Enum):
    E1 = "E1"
    E2 = "E2"
    E3 = "E3"
    E4 = "E4"
    E5 = "E5"
    THRESHOLD = "threshold"

    @classmethod
    def parse(cls, text):
        """Accepts "1".."5", "E1".."E5" (any case) and "threshold"."""
        if isinstance(text, cls):
            return text
        key = str(text).strip()
        if key.lower() in ("threshold", "thresholdsweep"):
            return cls.THRESHOLD
        if key.isdigit():
            key = f"E{key}"
        try:
            return cls(key.upper())
        except ValueError:
            allowed = ["1", "2", "3", "4", "5", "threshold"]
            raise ParameterError(f"unknown experiment {text!r}; expected one of {allowed}", field="experiment") from None


@dataclass(frozen=True)
class SweepSpec:
    experiment_id: ExperimentId
    conditions: tuple
    replications: int = 15
    base_seed: int = 0
    notes: tuple = ()

    def validate(self):
        if not self.conditions:
            raise ParameterError("a sweep needs at least one condition", field="conditions")
        if self.replications < 1:
            raise ParameterError(f"replications must be at least 1, got {self.replications}", field="replications")
        if not 0 <= self.base_seed <= _MASK64:
            raise ParameterError(f"base_seed must be a 64-bit unsigned integer, got {self.base_seed}", field="base_seed")
        for params in self.conditions:
            params.validate()
        return self

    @property
    def total_runs(self):
        return len(self.conditions) * self.replications

    def to_dict(self):
        conditions = []
        for params in self.conditions:
            values = params.to_dict()
            values.pop("seed")
            conditions.append(values)
        return {
            "experiment_id": self.experiment_id.value,
            "replications": self.replications,
            "base_seed": self.base_seed,
            "condition_count": len(self.conditions),
            "total_runs": self.total_runs,
            "notes": list(self.notes),
            "conditions": conditions,
        }


def ratio_grid(start, stop, step):
    """Inclusive arithmetic grid, rounded so 0.1-steps print as 0.1, 0.2, ..."""
    count = int(round((stop - start) / step)) + 1
    return [float(v) for v in np.round(start + step * np.arange(count), 10)]


def build_experiment(experiment, base=None, replications=15, base_seed=0):
    """SweepSpec for a named design; every other parameter comes from ``base``."""
    experiment = ExperimentId.parse(experiment)
    base = SimParams() if base is None else base
    notes = ()

    if experiment is ExperimentId.E1:
        conditions = [base.replace(alpha1=a1, alpha2=0.0, alpha3=0.0) for a1 in ratio_grid(0.1, 1.0, 0.1)]
    elif experiment is ExperimentId.E2:
        conditions = [base.replace(alpha1=0.2, alpha2=a2, alpha3=0.0) for a2 in ratio_grid(0.1, 1.5, 0.1)]
    elif experiment is ExperimentId.E3:
        conditions = [base.replace(alpha1=0.2, alpha2=0.0, alpha3=a3) for a3 in ratio_grid(0.1, 2.0, 0.1)]
    elif experiment is ExperimentId.E4:
        conditions = [
            base.replace(alpha1=a1, alpha2=a2, alpha3=0.0)
            for a1 in ratio_grid(0.1, 1.0, 0.1)
            for a2 in ratio_grid(0.1, 1.0, 0.1)
        ]
    elif experiment is ExperimentId.E5:
        conditions = [
            base.replace(alpha1=a1, alpha2=0.0, alpha3=a3)
            for a1 in ratio_grid(0.1, 2.0, 0.1)
            for a3 in ratio_grid(0.1, 1.0, 0.1)
        ]
        notes = (
            "alpha1 spans [0.1, 2.0] in steps of 0.1, giving 20 x 10 = 200 conditions "
            "rather than the 10 x 10 grid of E4.",
        )
    else:
        conditions = [
            base.replace(alpha1=0.2, alpha2=0.0, alpha3=0.0, threshold_t=t) for t in range(10, 101, 10)
        ]

    spec = SweepSpec(
        experiment_id=experiment,
        conditions=tuple(conditions),
        replications=replications,
        base_seed=base_seed,
        notes=notes,
    )
    return spec.validate()


def _splitmix64(x):
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


def derive_seed(base_seed, condition_index, replicate_index):
    """Pure 64-bit seed for one (condition, replicate) of a sweep."""
    mixed = _splitmix64(base_seed & _MASK64)
    mixed = _splitmix64(mixed ^ (condition_index & _MASK64))
    return _splitmix64(mixed ^ (replicate_index & _MASK64))


def sweep_tasks(spec):
    tasks = []
    seen = {}
    for condition_index, params in enumerate(spec.conditions):
        for replicate_index in range(spec.replications):
            seed = derive_seed(spec.base_seed, condition_index, replicate_index)
            if seed in seen:
                raise SweepError(
                    f"seed collision between {seen[seed]} and {(condition_index, replicate_index)}",
                    condition_index=condition_index,
                    replicate_index=replicate_index,
                )
            seen[seed] = (condition_index, replicate_index)
            tasks.append((spec.experiment_id.value, condition_index, replicate_index, params.replace(seed=seed)))
    return tasks


def run_replicate(task):
    """Worker entry point: one replicate, returned as a RunRecord."""
    experiment_id, condition_index, replicate_index, params = task
    state = init_simulation(params)
    outcome = run_to_completion(state)
    return RunRecord.from_run(experiment_id, condition_index, replicate_index, params, outcome)


def default_jobs():
    return psutil.cpu_count(logical=False) or psutil.cpu_count() or 1


def check_system_resources(output_dir=".", jobs=1):
    """Warn when the host looks too small for the requested sweep."""
    ok = True
    cpus = psutil.cpu_count() or 1
    if jobs > cpus:
        logging.warning(f"Requested {jobs} workers but only {cpus} CPUs are available")
        ok = False
    target = output_dir if os.path.exists(output_dir) else "."
    disk_space = psutil.disk_usage(target).free
    if disk_space < CONFIG['MIN_DISK_SPACE']:
        logging.warning(f"Low disk space: {disk_space} bytes available under {os.path.abspath(target)}")
        ok = False
    cpu_usage = psutil.cpu_percent(interval=0.1)
    if cpu_usage > CONFIG['MAX_CPU_USAGE']:
        logging.warning(f"High CPU usage before sweep: {cpu_usage}%")
        ok = False
    return ok


def _failure(task, error):
    _, condition_index, replicate_index, params = task
    logging.error(f"Replicate failed: condition {condition_index}, replicate {replicate_index} (seed {params.seed}): {error}")
    logging.debug("Exception details:", exc_info=True)
    return SweepError(
        f"condition {condition_index} replicate {replicate_index} failed: {error}",
        condition_index=condition_index,
        replicate_index=replicate_index,
    )


def run_sweep(spec, jobs=1):
    """Run every (condition, replicate) of ``spec`` once; records sorted by (condition, replicate)."""
    spec.validate()
    if jobs < 1:
        raise ParameterError(f"jobs must be at least 1, got {jobs}", field="jobs")
    tasks = sweep_tasks(spec)
    total = len(tasks)
    progress_every = max(1, total // CONFIG['PROGRESS_STEPS'])
    logging.info(
        f"Starting sweep {spec.experiment_id.value}: {len(spec.conditions)} conditions x "
        f"{spec.replications} replicates = {total} runs on {jobs} worker(s)"
    )

    records = []

    def collect(record):
        records.append(record)
        if len(records) % progress_every == 0 or len(records) == total:
            logging.info(f"Sweep {spec.experiment_id.value}: {len(records)}/{total} runs complete")

    if jobs == 1:
        for task in tasks:
            try:
                collect(run_replicate(task))
            except Exception as e:
                raise _failure(task, e) from e
    else:
        with ProcessPoolExecutor(max_workers=jobs) as executor:
            futures = {executor.submit(run_replicate, task): task for task in tasks}
            for future in as_completed(futures):
                try:
                    collect(future.result())
                except Exception as e:
                    for pending in futures:
                        pending.cancel()
                    raise _failure(futures[future], e) from e

    records.sort(key=lambda r: (r.condition_index, r.replicate_index))
    return records


def _tick_stats(ticks, runs):
    converged = [t for t in ticks if t is not None and not (isinstance(t, float) and math.isnan(t))]
    mean = float(np.mean(converged)) if converged else None
    sd = float(np.std(converged, ddof=1)) if len(converged) >= 2 else None
    return mean, sd, 1.0 - len(converged) / runs


def summarize(records):
    """One ConditionSummary per (experiment, condition), sorted by condition index."""
    if not records:
        raise ParameterError("cannot summarize an empty record list", field="records")
    frame = pd.DataFrame([dataclasses.asdict(r) for r in records])
    summaries = []
    for (experiment_id, condition_index), group in frame.groupby(["experiment_id", "condition_index"], sort=True):
        first = group.iloc[0]
        outcome_stats = {}
        for name, column in OUTCOME_COLUMNS.items():
            mean, sd, dnc = _tick_stats(group[column].tolist(), len(group))
            outcome_stats[f"{name}_mean"] = mean
            outcome_stats[f"{name}_sd"] = sd
            outcome_stats[f"{name}_dnc_fraction"] = dnc
        summaries.append(ConditionSummary(
            experiment_id=str(experiment_id),
            condition_index=int(condition_index),
            n_h=int(first["n_h"]),
            alpha1=float(first["alpha1"]),
            alpha2=float(first["alpha2"]),
            alpha3=float(first["alpha3"]),
            defender_basis=str(first["defender_basis"]),
            threshold_t=int(first["threshold_t"]),
            replicates=len(group),
            **outcome_stats,
        ))
    return summaries


def pooled_outcome(records, outcome="majority"):
    """Mean/sd/DNC of one outcome pooled over every record of a sweep."""
    if not records:
        raise ParameterError("cannot pool an empty record list", field="records")
    ticks = [r.outcome(outcome) for r in records]
    mean, sd, dnc = _tick_stats(ticks, len(records))
    return {
        "outcome": outcome,
        "runs": len(records),
        "converged": sum(t is not None for t in ticks),
        "mean": mean,
        "sd": sd,
        "dnc_fraction": dnc,
    }


def defender_dnc_threshold(summaries, column="alpha3", outcome="majority", fraction=0.5):
    """Smallest positive ratio in ``column`` whose DNC share reaches ``fraction``, else None."""
    for summary in sorted(summaries, key=lambda s: getattr(s, column)):
        value = getattr(summary, column)
        if value > 0 and getattr(summary, f"{outcome}_dnc_fraction") >= fraction:
            return value
    return None


def write_sweep_config(spec, path):
    with open(path, "w") as f:
        json.dump(spec.to_dict(), f, indent=2, sort_keys=True)
        f.write("\n")
    logging.info(f"Wrote sweep configuration to {path}")
