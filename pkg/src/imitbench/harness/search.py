"""Fixed-budget hyperparameter search with scrambled Halton sampling."""
from __future__ import annotations

import csv
import json
import logging
import math
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.stats import qmc

from ..errors import ConfigError
from .config import CHOICES, RANGES, SEARCH_KEYS, RunConfig, format_value
from .training import run_training

log = logging.getLogger(__name__)

OBJECTIVE_WINDOW = 5


@dataclass
class TrialRecord:
    index: int
    params: dict
    returns: list[float]
    seconds: float

    @property
    def objective(self) -> float | None:
        """Mean of the last five evaluation returns; ``None`` while fewer exist."""
        if len(self.returns) < OBJECTIVE_WINDOW:
            return None
        return float(np.mean(self.returns[-OBJECTIVE_WINDOW:]))

    @property
    def complete(self) -> bool:
        return self.objective is not None


def map_unit(key: str, u: float):
    if key in RANGES:
        lo, hi = RANGES[key]
        return float(math.exp(math.log(lo) + u * (math.log(hi) - math.log(lo))))
    options = CHOICES[key]
    return options[min(int(u * len(options)), len(options) - 1)]


def sample_configs(algo: str, budget: int, seed: int = 0) -> list[dict]:
    """``budget`` space-filling points over the algorithm's search space."""
    if budget < 1:
        raise ConfigError("search budget must be at least 1")
    keys = SEARCH_KEYS[algo]
    points = qmc.Halton(d=len(keys), scramble=True, seed=seed).random(budget)
    return [{k: map_unit(k, float(u)) for k, u in zip(keys, row)} for row in points]


def best_trial(trials: list[TrialRecord]) -> TrialRecord:
    """Highest objective; ties go to the earliest trial."""
    if not trials:
        raise ValueError("no trials")
    best = None
    for t in trials:
        if t.complete and (best is None or t.objective > best.objective):
            best = t
    if best is None:
        log.warning("no trial has %d evaluations; returning the first", OBJECTIVE_WINDOW)
        return trials[0]
    return best


def hyperparameter_search(base: RunConfig, budget: int = 20, search_seed: int = 0,
                          out_dir=None, expert=None) -> tuple[TrialRecord, list[TrialRecord]]:
    trials = []
    for i, params in enumerate(sample_configs(base.algo, budget, search_seed)):
        cfg = base.replace(**params)
        t0 = time.perf_counter()
        result = run_training(cfg, expert)
        trials.append(TrialRecord(i, params, [e.mean for e in result.evals],
                                  time.perf_counter() - t0))
        log.info("trial %d: %s -> %s", i, params, trials[-1].objective)
    best = best_trial(trials)
    if out_dir is not None:
        write_trials(trials, best, base, out_dir)
    return best, trials


def write_trials(trials: list[TrialRecord], best: TrialRecord, base: RunConfig, out_dir) -> None:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    keys = list(trials[0].params)
    with open(out / "trials.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["trial", *keys, "objective", "evaluations", "returns"])
        for t in trials:
            obj = "" if t.objective is None else repr(t.objective)
            w.writerow([t.index, *(format_value(t.params[k]) for k in keys), obj,
                        len(t.returns), ";".join(repr(r) for r in t.returns)])
    # wall-clock is not reproducible, so it lives outside the CSV
    with open(out / "trials.json", "w") as fh:
        json.dump([{"trial": t.index, "params": t.params, "returns": t.returns,
                    "objective": t.objective, "seconds": t.seconds} for t in trials], fh, indent=1)
    (out / "best.cfg").write_text(base.replace(**best.params).to_text())
