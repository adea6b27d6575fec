"""
Replication records and per-condition summaries, with their CSV formats.

runs.csv holds one row per (condition, replicate) in RUN_COLUMNS order.
Floats carry 6 significant digits and an absent outcome tick is an empty
field (0 is a legal tick, so it never stands in for "did not converge"), and
so is a disabled disengagement_threshold.
"""

import dataclasses
import logging
import math
from dataclasses import dataclass

import pandas as pd

from diffusion_engine import DefenderBasis, FlipRule, SimParams
from simulation_errors import RecordParseError

PARAM_COLUMNS = (
    "n_h", "alpha1", "alpha2", "alpha3", "defender_basis", "p_g", "p_c", "p_p",
    "threshold_t", "max_ticks", "mean_degree", "beta", "graph_model", "flip_rule",
    "echo_suppression", "memory_capacity", "disengagement_threshold",
)
RUN_COLUMNS = (
    ("experiment_id", "condition_index", "replicate_index", "seed")
    + PARAM_COLUMNS
    + ("bad_majority_tick", "all_bad_tick", "ticks_run")
)
SUMMARY_COLUMNS = (
    "experiment_id", "condition_index", "n_h", "alpha1", "alpha2", "alpha3", "defender_basis",
    "threshold_t", "replicates",
    "majority_mean", "majority_sd", "majority_dnc_fraction",
    "all_bad_mean", "all_bad_sd", "all_bad_dnc_fraction",
)

_INT_COLUMNS = {"condition_index", "replicate_index", "seed", "n_h", "threshold_t", "max_ticks",
                "mean_degree", "memory_capacity", "ticks_run"}
_FLOAT_COLUMNS = {"alpha1", "alpha2", "alpha3", "p_g", "p_c", "p_p", "beta"}
_OPTIONAL_INTS = {"bad_majority_tick", "all_bad_tick", "disengagement_threshold"}


def six_digits(value):
    """Round a float to the 6 significant digits used in every output file."""
    return float(f"{value:.6g}")


def format_value(value):
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        if math.isnan(value):
            return ""
        return f"{value:.6g}"
    if isinstance(value, (DefenderBasis, FlipRule)):
        return value.value
    return str(value)


@dataclass(frozen=True)
class RunRecord:
    experiment_id: str
    condition_index: int
    replicate_index: int
    seed: int
    n_h: int
    alpha1: float
    alpha2: float
    alpha3: float
    defender_basis: str
    p_g: float
    p_c: float
    p_p: float
    threshold_t: int
    max_ticks: int
    mean_degree: int
    beta: float
    graph_model: str
    flip_rule: str
    echo_suppression: bool
    memory_capacity: int
    disengagement_threshold: object
    bad_majority_tick: object
    all_bad_tick: object
    ticks_run: int

    @classmethod
    def from_run(cls, experiment_id, condition_index, replicate_index, params, outcome):
        values = params.to_dict()
        fields = {name: values[name] for name in PARAM_COLUMNS}
        for name in _FLOAT_COLUMNS:
            fields[name] = six_digits(fields[name])
        return cls(
            experiment_id=str(experiment_id),
            condition_index=condition_index,
            replicate_index=replicate_index,
            seed=params.seed,
            bad_majority_tick=outcome.bad_majority_tick,
            all_bad_tick=outcome.all_bad_tick,
            ticks_run=outcome.ticks_run,
            **fields,
        )

    def params(self):
        data = {name: getattr(self, name) for name in PARAM_COLUMNS}
        return SimParams.from_dict({**data, "seed": self.seed})

    def outcome(self, name):
        """Outcome tick by short name: 'majority' or 'all_bad'."""
        return getattr(self, OUTCOME_COLUMNS[name])

    def to_row(self):
        return {name: format_value(getattr(self, name)) for name in RUN_COLUMNS}


OUTCOME_COLUMNS = {"majority": "bad_majority_tick", "all_bad": "all_bad_tick"}


@dataclass(frozen=True)
class ConditionSummary:
    experiment_id: str
    condition_index: int
    n_h: int
    alpha1: float
    alpha2: float
    alpha3: float
    defender_basis: str
    threshold_t: int
    replicates: int
    majority_mean: object
    majority_sd: object
    majority_dnc_fraction: float
    all_bad_mean: object
    all_bad_sd: object
    all_bad_dnc_fraction: float

    def to_row(self):
        return {name: format_value(getattr(self, name)) for name in SUMMARY_COLUMNS}

    def to_dict(self):
        return dataclasses.asdict(self)


def write_records_csv(records, path):
    frame = pd.DataFrame([r.to_row() for r in records], columns=list(RUN_COLUMNS))
    frame.to_csv(path, index=False)
    logging.info(f"Wrote {len(records)} run records to {path}")


def write_summary_csv(summaries, path):
    frame = pd.DataFrame([s.to_row() for s in summaries], columns=list(SUMMARY_COLUMNS))
    frame.to_csv(path, index=False)
    logging.info(f"Wrote {len(summaries)} condition summaries to {path}")


def _parse_field(name, text):
    if name in _OPTIONAL_INTS:
        return None if text == "" else int(text)
    if name in _INT_COLUMNS:
        return int(text)
    if name in _FLOAT_COLUMNS:
        value = float(text)
        if not math.isfinite(value):
            raise ValueError(f"non-finite value {text!r}")
        return value
    if name == "echo_suppression":
        if text not in ("true", "false"):
            raise ValueError(f"expected true or false, got {text!r}")
        return text == "true"
    if name == "defender_basis":
        return DefenderBasis(text).value
    if name == "flip_rule":
        return FlipRule(text).value
    if text == "":
        raise ValueError("empty field")
    return text


def read_records_csv(path):
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    except pd.errors.EmptyDataError:
        raise RecordParseError("file is empty", line=1) from None
    except pd.errors.ParserError as e:
        raise RecordParseError(f"malformed CSV: {e}") from None
    missing = [c for c in RUN_COLUMNS if c not in frame.columns]
    if missing:
        raise RecordParseError(f"missing columns: {', '.join(missing)}", line=1)

    records = []
    for offset, row in enumerate(frame[list(RUN_COLUMNS)].itertuples(index=False, name=None)):
        line = offset + 2  # header is line 1
        values = {}
        for name, text in zip(RUN_COLUMNS, row):
            try:
                values[name] = _parse_field(name, text.strip() if isinstance(text, str) else "")
            except ValueError as e:
                raise RecordParseError(f"bad value for {name}: {e}", line=line) from None
        records.append(RunRecord(**values))
    logging.debug(f"Read {len(records)} run records from {path}")
    return records
