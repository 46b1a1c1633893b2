"""Parameter sweeps over scenario configs: BER grid and mean handshake time grid.

A sweep file is YAML::

    kind: ber                 # or: mu
    base: paper_fig7          # bundled scenario name, or a path relative to the sweep file
    trials: 1000000           # ber: Monte Carlo trials per point; mu: runs per point
    seed: 1
    axes:
      gamma: [0.0, 0.005, 0.01]
      t_pt: {logspace: [-3, -2, 5]}   # also {linspace: [start, stop, n]}

Axis names are short aliases (``gamma``, ``t_pt``, ``nu``, ``eta``, ``tau``,
``lambda``, ``M``) or dotted config paths such as ``grid.r_load``.
"""

from __future__ import annotations

import copy
import itertools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, is_dataclass
from pathlib import Path

import numpy as np

from ..errors import ConfigError
from ..grid import LoadModel
from ..phy import ber_monte_carlo, ber_paper, ber_standard, link_levels, mu_closed_form
from . import config as cfgmod
from .analysis import estimate_mu
from .config import ScenarioConfig

ALIASES = {
    "gamma": "phy.gamma",
    "t_pt": "phy.t_pt",
    "nu": "phy.nu",
    "eta": "phy.eta",
    "tau": "phy.tau",
    "lambda": "load.poisson_rate",
    "M": "phy.m_blank",
}
BER_COLUMNS = ("gamma", "t_pt", "nu", "ber_paper", "ber_standard", "ber_mc", "mc_stderr", "n_trials")
MU_COLUMNS = ("lambda", "M", "mu_closed_form", "mu_empirical", "stderr", "n_runs")
INT_PATHS = {"phy.m_blank", "phy.s_slots", "protocol.D", "protocol.R", "protocol.L", "duration"}


@dataclass
class SweepSpec:
    kind: str
    base: ScenarioConfig
    axes: dict[str, list] = field(default_factory=dict)
    trials: int = 1000
    seed: int = 0

    def points(self) -> list[tuple]:
        names = list(self.axes)
        return [tuple(p) for p in itertools.product(*(self.axes[n] for n in names))]

    def config_at(self, point: tuple) -> ScenarioConfig:
        c = copy.deepcopy(self.base)
        for name, value in zip(self.axes, point):
            set_path(c, ALIASES.get(name, name), value)
        return c


def set_path(cfg: ScenarioConfig, path: str, value) -> None:
    obj = cfg
    parts = path.split(".")
    for p in parts[:-1]:
        obj = getattr(obj, p)
    setattr(obj, parts[-1], value)


def _has_path(cfg: ScenarioConfig, path: str) -> bool:
    obj = cfg
    for p in path.split("."):
        if not is_dataclass(obj) or not hasattr(obj, p):
            return False
        obj = getattr(obj, p)
    return not is_dataclass(obj)


def _axis_values(spec, path: str, lines) -> list[float]:
    line = lines.get(path)
    if isinstance(spec, list):
        vals = spec
    elif isinstance(spec, dict) and len(spec) == 1 and next(iter(spec)) in ("logspace", "linspace"):
        how, args = next(iter(spec.items()))
        if not (isinstance(args, list) and len(args) == 3 and int(args[2]) == args[2] and args[2] >= 1):
            raise ConfigError(f"{how} takes [start, stop, n]", field=path, line=line)
        fn = np.logspace if how == "logspace" else np.linspace
        vals = [float(v) for v in fn(float(args[0]), float(args[1]), int(args[2]))]
    else:
        raise ConfigError("axis must be a list or {logspace|linspace: [start, stop, n]}", field=path, line=line)
    if not vals:
        raise ConfigError("axis has no values", field=path, line=line)
    for k, v in enumerate(vals):
        if isinstance(v, bool) or not isinstance(v, (int, float)):
            raise ConfigError(f"expected a number, got {v!r}", field=f"{path}[{k}]", line=lines.get(f"{path}[{k}]", line))
    return vals


def loads_sweep(text: str, base_dir: Path | None = None) -> SweepSpec:
    data, lines = cfgmod.parse_yaml(text)
    known = {"kind", "base", "axes", "trials", "seed"}
    for key in data:
        if key not in known:
            raise ConfigError("unknown field", field=str(key), line=lines.get(str(key)))
    kind = data.get("kind")
    if kind not in ("ber", "mu"):
        raise ConfigError(f"must be 'ber' or 'mu', got {kind!r}", field="kind", line=lines.get("kind"))
    for key in ("trials", "seed"):
        v = data.get(key, 1000 if key == "trials" else 0)
        if isinstance(v, bool) or not isinstance(v, int) or v < (1 if key == "trials" else 0):
            raise ConfigError(f"expected a {'positive' if key == 'trials' else 'non-negative'} integer, got {v!r}", field=key, line=lines.get(key))
    base_ref = data.get("base")
    if not isinstance(base_ref, str):
        raise ConfigError("expected a scenario name or path", field="base", line=lines.get("base"))
    p = Path(base_ref)
    if not p.is_absolute() and base_dir is not None and (base_dir / p).exists():
        p = base_dir / p
    try:
        base = cfgmod.load(p if p.exists() else base_ref)
    except ConfigError as exc:
        raise ConfigError(f"in base scenario {base_ref}: {exc}", field="base", line=lines.get("base")) from None
    axes_raw = data.get("axes")
    if not isinstance(axes_raw, dict) or not axes_raw:
        raise ConfigError("at least one axis is required", field="axes", line=lines.get("axes"))
    axes = {}
    for name, spec in axes_raw.items():
        path = f"axes.{name}"
        target = ALIASES.get(name, name)
        if not _has_path(base, target):
            raise ConfigError("not a scenario parameter", field=path, line=lines.get(path))
        vals = _axis_values(spec, path, lines)
        if target in INT_PATHS:
            if any(int(v) != v for v in vals):
                raise ConfigError("values must be integers", field=path, line=lines.get(path))
            vals = [int(v) for v in vals]
        else:
            vals = [float(v) for v in vals]
        axes[name] = vals
    sweep = SweepSpec(kind, base, axes, data.get("trials", 1000), data.get("seed", 0))
    for point in sweep.points():
        try:
            sweep.config_at(point).validate()
        except ConfigError as exc:
            bad = ", ".join(f"{n}={v!r}" for n, v in zip(axes, point))
            raise ConfigError(f"point ({bad}) is invalid: {exc}", field="axes", line=lines.get("axes")) from None
    return sweep


def load_sweep(path: str | Path) -> SweepSpec:
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {p}: {exc.strerror}") from None
    return loads_sweep(text, p.parent)


def _fmt(v) -> str:
    if isinstance(v, float):
        return "nan" if math.isnan(v) else repr(v)
    return str(v)


def _csv(columns, rows) -> str:
    rows = sorted(rows)
    return ",".join(columns) + "\n" + "".join(",".join(_fmt(v) for v in r) + "\n" for r in rows)


def point_seeds(seed: int, n: int) -> list[int]:
    return [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(seed).spawn(n)]


def ber_point(cfg: ScenarioConfig, n_trials: int, seed: int) -> tuple:
    phy = cfg.phy.to_phy()
    tx, rx = cfg.link_pair()
    units, load = cfg.units(), LoadModel(cfg.grid.r_load)
    lo, thr, hi = link_levels(units, load, phy, tx, rx)
    dv0, dv1 = thr - lo, hi - thr
    if phy.eta > 0:
        bp, bs = ber_paper(dv0, dv1, phy.sigma), ber_standard(dv0, dv1, phy.sigma)
    else:
        bs = 0.5 if dv0 == 0 and dv1 == 0 else 0.0
        bp = 2 * bs
    mc = ber_monte_carlo(units, load, phy, tx, rx, n_trials, seed)
    return (phy.gamma, phy.t_pt, phy.nu, bp, bs, mc.estimate, mc.stderr, mc.n_trials)


def _ber_job(args):
    return ber_point(*args)


def run_ber_sweep(sweep: SweepSpec, workers: int = 1) -> str:
    """CSV text for a BER sweep; rows sorted, identical for any worker count."""
    pts = sweep.points()
    seeds = point_seeds(sweep.seed, len(pts))
    jobs = [(sweep.config_at(p), sweep.trials, s) for p, s in zip(pts, seeds)]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_ber_job, jobs))
    else:
        rows = [_ber_job(j) for j in jobs]
    return _csv(BER_COLUMNS, rows)


def mu_point(cfg: ScenarioConfig, n_runs: int, seed: int, workers: int = 1) -> tuple:
    sched = cfg.schedule()
    lam, M = cfg.load.poisson_rate, cfg.phy.m_blank
    closed = mu_closed_form(sched.D, sched.R, sched.S, cfg.t_pt, lam, M)
    est = estimate_mu(cfg, n_runs, seed, workers)
    mean = est.mean if est.mean is not None else float("nan")
    err = est.stderr if est.stderr is not None else float("nan")
    return (lam, M, closed, mean, err, est.n_completed)


def run_mu_sweep(sweep: SweepSpec, workers: int = 1) -> str:
    """CSV text for a mean-handshake-time sweep.

    Every point reuses the same run seeds, so neighbouring points share
    their random numbers and differ only in the swept parameter.
    """
    rows = [mu_point(sweep.config_at(p), sweep.trials, sweep.seed, workers) for p in sweep.points()]
    return _csv(MU_COLUMNS, rows)
