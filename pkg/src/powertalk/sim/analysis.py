"""Multi-run estimates and scenario transforms built on the engine."""

from __future__ import annotations

import copy
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass

import numpy as np

from ..protocol.messages import MessageKind
from .config import AttackSpec, ScenarioConfig
from .engine import run


@dataclass(frozen=True)
class MuEstimate:
    mean: float | None
    stderr: float | None
    n_completed: int
    n_runs: int
    times: tuple[float, ...]


def run_seeds(seed: int, n_runs: int) -> list[int]:
    """Independent per-run seeds, fixed by (seed, run index) only."""
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(n_runs)]


def _completion_time(cfg: ScenarioConfig) -> float | None:
    _, metrics = run(cfg)
    return metrics.completion_time if metrics.handshake_completed else None


def estimate_mu(config: ScenarioConfig, n_runs: int, seed: int, workers: int = 1) -> MuEstimate:
    """Mean handshake completion time (from PTARCh access) over seeded runs.

    Runs that fail to authenticate are excluded from the mean and counted in
    ``n_runs - n_completed``.
    """
    if n_runs < 1:
        raise ValueError("n_runs must be >= 1")
    cfgs = []
    for s in run_seeds(seed, n_runs):
        c = copy.deepcopy(config)
        c.seed = s
        c.stop_after_handshake = True
        cfgs.append(c)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_completion_time, cfgs))
    else:
        results = [_completion_time(c) for c in cfgs]
    times = tuple(t for t in results if t is not None)
    if not times:
        return MuEstimate(None, None, 0, n_runs, ())
    mean = math.fsum(times) / len(times)
    if len(times) > 1:
        var = math.fsum((t - mean) ** 2 for t in times) / (len(times) - 1)
        stderr = math.sqrt(var / len(times))
    else:
        stderr = 0.0
    return MuEstimate(mean, stderr, len(times), n_runs, times)


def inject_attack(config: ScenarioConfig, target: MessageKind | str, mode: str = "corrupt_tag", occurrence: int = 0) -> ScenarioConfig:
    """Copy of ``config`` whose run has the attacker rewrite one message."""
    name = target.name if isinstance(target, MessageKind) else str(target).upper()
    if name not in MessageKind.__members__:
        raise ValueError(f"unknown message kind {target!r}")
    c = copy.deepcopy(config)
    c.attack = list(c.attack) + [AttackSpec(name, mode, occurrence)]
    c.validate()
    return c
