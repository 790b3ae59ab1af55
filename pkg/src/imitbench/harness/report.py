"""Persisted run records and the CSV / text / plot-description reports built from them."""
from __future__ import annotations

import csv
import json
from collections import defaultdict
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..errors import ConfigError
from .config import RUN_ALGORITHMS

ROW_ORDER = ("dataset", "ppo", *[a for a in RUN_ALGORITHMS if a != "ppo"])
CURVE_HEADER = ("step", "seed", "mean_return", "std_return")


@dataclass(frozen=True)
class RunRecord:
    algo: str
    env: str
    seed: int
    evals: tuple[tuple[int, float, float], ...]    # (step, mean, std)
    episodes: int

    @property
    def final(self) -> float:
        if not self.evals:
            raise ValueError("run has no evaluations")
        return self.evals[-1][1]

    def to_json(self) -> dict:
        return {"algo": self.algo, "env": self.env, "seed": self.seed,
                "episodes": self.episodes, "evals": [list(e) for e in self.evals]}

    @classmethod
    def from_json(cls, d: dict) -> "RunRecord":
        return cls(d["algo"], d["env"], int(d["seed"]),
                   tuple((int(s), float(m), float(sd)) for s, m, sd in d["evals"]),
                   int(d["episodes"]))


def save_record(record: RunRecord, path, extra: dict | None = None) -> None:
    body = {**record.to_json(), **(extra or {})}
    Path(path).write_text(json.dumps(body, indent=1, sort_keys=True) + "\n")


def load_records(paths) -> list[RunRecord]:
    """Read ``run.json`` files; directories are searched recursively."""
    files = []
    for p in map(Path, paths):
        if p.is_dir():
            files.extend(sorted(p.rglob("run.json")))
        elif p.is_file():
            files.append(p)
        else:
            raise ConfigError(f"no such run file or directory: {p}")
    out = []
    for f in files:
        try:
            out.append(RunRecord.from_json(json.loads(f.read_text())))
        except (KeyError, ValueError, TypeError) as exc:
            raise ConfigError(f"malformed run record {f}: {exc}") from None
    return out


def _fmt(x: float) -> str:
    return f"{x:.2f}"


def write_curve(records: list[RunRecord], path) -> int:
    """One CSV row per (seed, evaluation point); returns the row count."""
    rows = sorted((s, r.seed, m, sd) for r in records for s, m, sd in r.evals)
    rows.sort(key=lambda row: (row[1], row[0]))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CURVE_HEADER)
        for step, seed, mean, std in rows:
            w.writerow([step, seed, repr(float(mean)), repr(float(std))])
    return len(rows)


def summarise(records: list[RunRecord]) -> dict[tuple[str, str], tuple[float, float, int]]:
    """(algo, env) -> (mean, std over seeds of the final evaluation, seed count)."""
    groups = defaultdict(dict)
    for r in records:
        groups[(r.algo, r.env)][r.seed] = r.final
    return {k: (float(np.mean(list(v.values()))), float(np.std(list(v.values()))), len(v))
            for k, v in groups.items()}


def emit_report(records: list[RunRecord], out_dir,
                dataset_stats: dict[str, tuple[float, float]] | None = None) -> list[Path]:
    """Write per-configuration curves, the summary table (text + CSV) and a plot spec.

    ``dataset_stats`` maps environment name to the expert data's return mean/std.
    """
    if not records:
        raise ConfigError("report needs at least one completed run")
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create report directory: {exc}") from None
    dataset_stats = dataset_stats or {}
    written = []

    by_config = defaultdict(list)
    for r in records:
        by_config[(r.algo, r.env)].append(r)
    curve_files = {}
    for (algo, env), group in sorted(by_config.items()):
        path = out / f"curve_{algo}_{env}.csv"
        write_curve(group, path)
        curve_files[(algo, env)] = path.name
        written.append(path)

    summary = summarise(records)
    envs = sorted({r.env for r in records} | set(dataset_stats))
    table = []
    for algo in ROW_ORDER:
        cells = []
        for env in envs:
            if algo == "dataset":
                stat = dataset_stats.get(env)
                cells.append(None if stat is None else (stat[0], stat[1], 0))
            else:
                cells.append(summary.get((algo, env)))
        table.append((algo, cells))

    csv_path = out / "summary.csv"
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["algorithm", "environment", "mean_return", "std_return", "seeds"])
        for algo, cells in table:
            for env, cell in zip(envs, cells):
                if cell is None:
                    w.writerow([label(algo), env, "", "", ""])
                else:
                    w.writerow([label(algo), env, repr(cell[0]), repr(cell[1]), cell[2]])
    written.append(csv_path)

    header = ["Algorithm", *envs]
    body = [[label(algo)] + ["-" if c is None else f"{_fmt(c[0])} ± {_fmt(c[1])}" for c in cells]
            for algo, cells in table]
    widths = [max(len(row[i]) for row in [header, *body]) for i in range(len(header))]
    lines = ["  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip() for row in [header, *body]]
    seeds = sorted({c[2] for _, cells in table for c in cells if c is not None and c[2]})
    lines.append("")
    lines.append("Final-evaluation return, mean ± std over seeds "
                 f"(seeds per cell: {', '.join(map(str, seeds)) or '-'}; "
                 f"episodes per evaluation: {records[0].episodes}).")
    txt_path = out / "summary.txt"
    txt_path.write_text("\n".join(lines) + "\n")
    written.append(txt_path)

    plot_path = out / "plot.vl.json"
    plot_path.write_text(json.dumps(plot_spec(curve_files), indent=1, sort_keys=True) + "\n")
    written.append(plot_path)
    return written


def label(algo: str) -> str:
    return "Dataset" if algo == "dataset" else algo.upper()


def plot_spec(curve_files: dict[tuple[str, str], str]) -> dict:
    """Vega-Lite description of the learning curves (mean over seeds with a std band)."""
    layers = []
    for (algo, env), name in sorted(curve_files.items()):
        data = {"url": name, "format": {"type": "csv"}}
        tag = [{"calculate": f"'{label(algo)}'", "as": "algorithm"},
               {"calculate": f"'{env}'", "as": "environment"}]
        layers.append({
            "data": data,
            "transform": tag + [{"aggregate": [{"op": "mean", "field": "mean_return", "as": "ret"},
                                               {"op": "stdev", "field": "mean_return", "as": "sd"}],
                                 "groupby": ["step", "algorithm", "environment"]},
                                {"calculate": "datum.ret - datum.sd", "as": "lo"},
                                {"calculate": "datum.ret + datum.sd", "as": "hi"}],
            "layer": [
                {"mark": {"type": "area", "opacity": 0.2},
                 "encoding": {"x": {"field": "step", "type": "quantitative"},
                              "y": {"field": "lo", "type": "quantitative"},
                              "y2": {"field": "hi"},
                              "color": {"field": "algorithm", "type": "nominal"}}},
                {"mark": "line",
                 "encoding": {"x": {"field": "step", "type": "quantitative",
                                    "title": "environment steps"},
                              "y": {"field": "ret", "type": "quantitative",
                                    "title": "evaluation return"},
                              "color": {"field": "algorithm", "type": "nominal"}}},
            ],
        })
    return {"$schema": "https://vega.github.io/schema/vega-lite/v5.json",
            "description": "Deterministic-policy evaluation return against environment steps",
            "layer": layers}
