from .analysis import MuEstimate, estimate_mu, inject_attack
from .config import ScenarioConfig, dumps, load, loads
from .engine import Engine, RunMetrics, run
from .eventlog import EventLog
