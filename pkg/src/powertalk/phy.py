"""Binary power talk physical layer.

A transmitting VSC shifts its droop reference by ±γ for one slot; the receiver
averages the ADC samples left after the settling interval τ and thresholds the
average against its calibrated γ=0 level.  Per-sample noise is Gaussian with
std η, so the slot average has std σ = η/√N_s with N_s = ⌊ν(T^pt − τ)⌋.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import InsufficientBlanks, NotCalibrated
from .grid import DerUnit, LoadModel, observed_voltage, solve_steady_state

# Fixed Monte Carlo chunk size; keeps results independent of the worker count.
MC_CHUNK = 1 << 20


@dataclass(frozen=True)
class PhyConfig:
    gamma: float = 0.01
    t_pt: float = 0.01
    tau: float = 2.35e-3
    nu: float = 50e6
    eta: float = 8.58e-2
    m_blank: int = 4
    s_slots: int = 5
    observe: str = "terminal"

    def __post_init__(self):
        if self.gamma < 0:
            raise ValueError(f"gamma must be >= 0, got {self.gamma}")
        if not self.t_pt > self.tau:
            raise ValueError(f"slot duration t_pt={self.t_pt} must exceed settling time tau={self.tau}")
        if self.tau < 0 or self.eta < 0 or self.nu <= 0:
            raise ValueError("tau, eta must be >= 0 and nu > 0")
        if self.n_samples < 1:
            raise ValueError(f"nu*(t_pt - tau) must give at least one sample, got {self.nu * (self.t_pt - self.tau)}")
        if int(self.s_slots) != self.s_slots or self.s_slots < 1:
            raise ValueError(f"s_slots must be a positive integer, got {self.s_slots}")
        if int(self.m_blank) != self.m_blank or self.m_blank < 0:
            raise ValueError(f"m_blank must be a non-negative integer, got {self.m_blank}")
        if self.observe not in ("terminal", "bus"):
            raise ValueError(f"observe must be 'terminal' or 'bus', got {self.observe!r}")

    @property
    def n_samples(self) -> int:
        # guard against 382499.99999 style round-off in the product
        return int(math.floor(self.nu * (self.t_pt - self.tau) + 1e-9))

    @property
    def sigma(self) -> float:
        return self.eta / math.sqrt(self.n_samples)

    @property
    def t_sc(self) -> float:
        return self.s_slots * self.t_pt

    def check_gamma(self, x: float) -> None:
        if not self.gamma < 0.05 * x:
            raise ValueError(f"gamma={self.gamma} is not small against reference x={x} (need gamma < 0.05 x)")


@dataclass(frozen=True)
class SlotObservation:
    mean_v: float
    n_samples: int
    slot_index: int = 0


@dataclass(frozen=True)
class DetectorState:
    threshold: float = 0.0
    calibrated: bool = False
    expected_levels: tuple[float, float] = (0.0, 0.0)

    @classmethod
    def from_threshold(cls, threshold: float, dv0: float, dv1: float) -> "DetectorState":
        return cls(threshold, True, (threshold - dv0, threshold + dv1))

    @property
    def separations(self) -> tuple[float, float]:
        lo, hi = self.expected_levels
        return self.threshold - lo, hi - self.threshold


def modulate(bit: int | None, config: PhyConfig) -> float:
    """Reference deviation for one slot; ``None`` is a blank slot."""
    if bit is None:
        return 0.0
    return config.gamma if bit else -config.gamma


def _as_rng(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def sample_slot(true_v: float, config: PhyConfig, rng, slot_index: int = 0) -> SlotObservation:
    """Average of the N_s post-settling samples, drawn as one Gaussian.

    ``rng`` is a numpy Generator (advanced in place) or a seed.
    """
    n = config.n_samples
    if config.eta == 0:
        return SlotObservation(float(true_v), n, slot_index)
    z = _as_rng(rng).normal(0.0, config.sigma)
    return SlotObservation(float(true_v + z), n, slot_index)


def detect(obs: SlotObservation, det: DetectorState) -> int:
    if not det.calibrated:
        raise NotCalibrated("detector has no threshold yet")
    return 1 if obs.mean_v > det.threshold else 0


def load_change_margin(det: DetectorState, config: PhyConfig) -> float:
    return 4.0 * config.sigma + 0.5 * min(det.separations)


def detect_load_change(obs: SlotObservation, det: DetectorState, config: PhyConfig) -> bool:
    """True when the slot average sits farther than κ from both expected levels."""
    if not det.calibrated:
        raise NotCalibrated("detector has no threshold yet")
    kappa = load_change_margin(det, config)
    lo, hi = det.expected_levels
    return abs(obs.mean_v - lo) > kappa and abs(obs.mean_v - hi) > kappa


def recalibrate(
    blank_observations: Sequence[SlotObservation],
    config: PhyConfig,
    separations: tuple[float, float] = (0.0, 0.0),
) -> DetectorState:
    """New threshold from M blank slots; ``separations`` is (Δv(0), Δv(1)) at the new point."""
    m = config.m_blank
    if len(blank_observations) < m or not blank_observations:
        raise InsufficientBlanks(f"need {max(m, 1)} blank observations, got {len(blank_observations)}")
    used = blank_observations[-m:] if m else blank_observations
    thr = math.fsum(o.mean_v for o in used) / len(used)
    return DetectorState.from_threshold(thr, *separations)


def q_func(x: float) -> float:
    return 0.5 * math.erfc(x / math.sqrt(2.0))


def ber_paper(delta_v0: float, delta_v1: float, sigma: float) -> float:
    """1 − ½erf(Δv(1)/(σ√2)) − ½erf(Δv(0)/(σ√2)), written with erfc to keep precision."""
    if not sigma > 0:
        raise ValueError("sigma must be > 0")
    s = sigma * math.sqrt(2.0)
    # 1 - a/2 - b/2 == erfc(a)/2 + erfc(b)/2 exactly in real arithmetic
    return 0.5 * math.erfc(delta_v1 / s) + 0.5 * math.erfc(delta_v0 / s)


def ber_standard(delta_v0: float, delta_v1: float, sigma: float) -> float:
    """Error probability of the threshold detector with equiprobable bits."""
    if not sigma > 0:
        raise ValueError("sigma must be > 0")
    return 0.5 * q_func(delta_v1 / sigma) + 0.5 * q_func(delta_v0 / sigma)


@dataclass(frozen=True)
class BerEstimate:
    estimate: float
    stderr: float
    errors: int
    n_trials: int


def link_levels(
    units: Sequence[DerUnit],
    load: LoadModel,
    config: PhyConfig,
    tx: int,
    rx: int,
    offsets: Mapping[int, float] | None = None,
) -> tuple[float, float, float]:
    """(v_rx for bit 0, threshold, v_rx for bit 1), straight from the solver."""
    levels = []
    for g in (-config.gamma, 0.0, config.gamma):
        grid = [u.with_gamma(g) if u.id == tx else u.with_gamma(0.0) for u in units]
        st = solve_steady_state(grid, load, offsets)
        levels.append(observed_voltage(st, rx, config.observe))
    return levels[0], levels[1], levels[2]


def _mc_chunk(args) -> int:
    seed_seq, n, lo, thr, hi, sigma = args
    rng = np.random.default_rng(seed_seq)
    bits = rng.integers(0, 2, size=n, dtype=np.int8)
    noise = rng.normal(0.0, sigma, size=n) if sigma > 0 else np.zeros(n)
    v = np.where(bits == 1, hi, lo) + noise
    decided = (v > thr).astype(np.int8)
    return int(np.count_nonzero(decided != bits))


def ber_monte_carlo(
    units: Sequence[DerUnit],
    load: LoadModel,
    config: PhyConfig,
    tx: int,
    rx: int,
    n_trials: int,
    seed: int,
    offsets: Mapping[int, float] | None = None,
    workers: int = 1,
) -> BerEstimate:
    """End-to-end bit error rate: random bits → solver levels → noisy slot average → threshold.

    The receiver threshold is the exact γ=0 level.  Trials are split into
    fixed-size chunks with their own spawned seeds, so the count does not
    depend on ``workers``.
    """
    if n_trials < 1:
        raise ValueError("n_trials must be >= 1")
    lo, thr, hi = link_levels(units, load, config, tx, rx, offsets)
    sigma = config.sigma if config.eta > 0 else 0.0
    n_chunks = -(-n_trials // MC_CHUNK)
    seeds = np.random.SeedSequence(seed).spawn(n_chunks)
    jobs = []
    for k, ss in enumerate(seeds):
        n = min(MC_CHUNK, n_trials - k * MC_CHUNK)
        jobs.append((ss, n, lo, thr, hi, sigma))
    if workers > 1 and n_chunks > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            counts = list(pool.map(_mc_chunk, jobs))
    else:
        counts = [_mc_chunk(j) for j in jobs]
    errors = sum(counts)
    p = errors / n_trials
    return BerEstimate(p, math.sqrt(p * (1.0 - p) / n_trials), errors, n_trials)


def mu_closed_form(D: int, R: int, S: int, t_pt: float, lam: float, M: int) -> float:
    """Average handshake completion time, (D+R)·S·T^pt·(1 − e^{−λ} + e^{λM})."""
    if D < 1 or R < 1 or S < 1:
        raise ValueError("D, R, S must be >= 1")
    if lam < 0 or M < 0:
        raise ValueError("lambda and M must be >= 0")
    return (D + R) * S * t_pt * (1.0 - math.exp(-lam) + math.exp(lam * M))
