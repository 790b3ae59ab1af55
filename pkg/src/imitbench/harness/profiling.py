"""Wall-clock and peak-memory profiling under one standardised configuration.

Every measurement runs in a freshly spawned interpreter so that peak resident
memory is not polluted by earlier runs in the same process.
"""
from __future__ import annotations

import csv
import json
import multiprocessing as mp
import threading
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from ..rewards.kernel import GmmilProvider
from ..rl import AgentBatch
from .config import RunConfig

STANDARD = {
    "rollout_length": 2048,
    "ppo_iterations": 10,
    "imitation_epochs": 25,
    "adversarial_epochs": 5,
    "replay_multiplier": 3,
}
PRETRAINED = ("bc", "red", "dril")
SAMPLE_PERIOD = 0.1


def standardised(cfg: RunConfig) -> RunConfig:
    return cfg.replace(**STANDARD)


class PeakRss:
    """Background sampler of this process's resident set size."""

    def __init__(self, period: float = SAMPLE_PERIOD):
        try:
            import psutil
            self._proc = psutil.Process()
        except Exception:  # psutil missing or platform unsupported
            self._proc = None
        self.period = period
        self.peak = 0
        self._stop = threading.Event()
        self._thread = threading.Thread(target=self._run, daemon=True)

    @property
    def available(self) -> bool:
        return self._proc is not None

    def _sample(self) -> None:
        try:
            self.peak = max(self.peak, self._proc.memory_info().rss)
        except Exception:
            pass

    def _run(self) -> None:
        while not self._stop.wait(self.period):
            self._sample()

    def __enter__(self):
        if self.available:
            self._sample()
            self._thread.start()
        return self

    def __exit__(self, *exc):
        if self.available:
            self._stop.set()
            self._thread.join()
            self._sample()


def os_peak_rss() -> int | None:
    """This process image's peak RSS in bytes (Linux ``VmHWM``), or None.

    ``getrusage().ru_maxrss`` is not used: Linux carries it across fork and
    exec, so a spawned child would report its parent's high-water mark.
    """
    try:
        with open("/proc/self/status") as fh:
            for line in fh:
                if line.startswith("VmHWM:"):
                    return int(line.split()[1]) * 1024
    except (OSError, ValueError, IndexError):
        pass
    return None


def _child(cfg_dict: dict, queue) -> None:
    from .training import run_training
    cfg = RunConfig(**cfg_dict)
    with PeakRss() as sampler:
        result = run_training(cfg)
    peaks = [p for p in (sampler.peak if sampler.available else None, os_peak_rss()) if p]
    queue.put((result.pretrain_seconds, result.train_seconds, max(peaks) if peaks else None))


def measure(cfg: RunConfig) -> tuple[float, float, int | None]:
    """(pretraining seconds, training seconds, peak RSS bytes or None) in a fresh process."""
    ctx = mp.get_context("spawn")
    queue = ctx.Queue()
    proc = ctx.Process(target=_child, args=(cfg.as_dict(), queue))
    proc.start()
    try:
        out = queue.get()
    finally:
        proc.join()
    if proc.exitcode != 0:
        raise RuntimeError(f"profiling child exited with code {proc.exitcode}")
    return out


@dataclass
class ProfileRow:
    algo: str
    env: str
    pretrain: list[float]
    train: list[float]
    memory: list[int | None]

    @staticmethod
    def _cell(values, show: bool) -> str:
        if not show:
            return "-"
        return f"{np.mean(values):.1f} ± {np.std(values):.1f}"

    @property
    def pretrain_cell(self) -> str:
        return self._cell(self.pretrain, self.algo in PRETRAINED)

    @property
    def train_cell(self) -> str:
        return self._cell(self.train, self.algo != "bc")

    @property
    def peak_memory(self) -> int | None:
        known = [m for m in self.memory if m is not None]
        return max(known) if known else None

    @property
    def memory_cell(self) -> str:
        peak = self.peak_memory
        return "unavailable" if peak is None else f"{peak / 2**20:.0f}"


def profile(cfg: RunConfig, repeats: int = 5) -> ProfileRow:
    cfg = standardised(cfg)
    pre, train, mem = [], [], []
    for rep in range(repeats):
        p, t, m = measure(cfg.replace(seed=cfg.seed + rep))
        pre.append(p)
        train.append(t)
        mem.append(m)
    return ProfileRow(cfg.algo, cfg.env, pre, train, mem)


def gmmil_scaling(expert, batch: int = 2048, repeats: int = 5, seed: int = 0) -> tuple[float, float]:
    """Best-of-``repeats`` seconds for one GMMIL reward batch of size ``batch`` and ``2 batch``."""
    rng = np.random.default_rng(seed)
    provider = GmmilProvider(expert)
    sd, ad = expert.states.shape[1], expert.actions.shape[1]

    def fake(n):
        return AgentBatch(rng.standard_normal((n, sd)), rng.standard_normal((n, ad)),
                          rng.standard_normal((n, sd)), np.zeros(n, bool))

    provider.start(expert, fake(batch))
    times = []
    for n in (batch, 2 * batch):
        b = fake(n)
        best = float("inf")
        for _ in range(repeats):
            t0 = time.perf_counter()
            provider.reward(b)
            best = min(best, time.perf_counter() - t0)
        times.append(best)
    return times[0], times[1]


def write_profile(rows: list[ProfileRow], out_dir, scaling: tuple[float, float] | None = None,
                  cfg: RunConfig | None = None, repeats: int = 5) -> None:
    """Timing table (text + JSON) and a reproducible manifest CSV of what was measured."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    header = ("Algorithm", "Env", "Pretraining (s)", "Training (s)", "Max memory (MB)")
    body = [(r.algo.upper(), r.env, r.pretrain_cell, r.train_cell, r.memory_cell) for r in rows]
    widths = [max(len(row[i]) for row in [header, *body]) for i in range(len(header))]
    lines = ["  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip() for row in [header, *body]]
    if scaling is not None:
        lines.append("")
        lines.append(f"GMMIL reward batch: {scaling[0]:.4f} s -> {scaling[1]:.4f} s when doubled "
                     f"(x{scaling[1] / scaling[0]:.2f})")
    (out / "profile.txt").write_text("\n".join(lines) + "\n")
    with open(out / "profile.json", "w") as fh:
        json.dump({"rows": [{"algo": r.algo, "env": r.env, "pretrain_seconds": r.pretrain,
                             "train_seconds": r.train, "peak_rss_bytes": r.memory} for r in rows],
                   "gmmil_scaling_seconds": scaling}, fh, indent=1)
    with open(out / "profile_manifest.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["algorithm", "environment", "repeats", "steps", *STANDARD])
        for r in rows:
            w.writerow([r.algo, r.env, repeats, cfg.steps if cfg else "", *STANDARD.values()])
