"""Experiment configuration: a JSON document with one block per command.

Grammar (all blocks and keys optional; unknown keys are rejected)::

    {
      "seed": 0,                       master seed for the whole run
      "out": "out",                    output directory
      "market":  {"A": 1, "B": 1, "C": 0.7, "sigma2": 0.0025},
      "simulate": {"gain": 0.01, "gain_kind": "constant", "gain_offset": 100,
                   "horizon": 10000, "runs": 1, "spec": "averaging",
                   "pi0": 0.5, "pi_lo": 0.01, "pi_hi": 0.99,
                   "hi_frac": 0.5, "lo_frac": 0.25},
      "payoff_matrix": {"gain": 0.01, "horizon": 100000, "runs": 10},
      "rate_function": {"rhos": [...], "sigma2s": [...], "specs": ["m0", "m1"],
                        "restarts": 16, "maxfev": 400, "Tmax": 50, "dt": 0.005,
                        "alpha_scale": 0.1, "r_scale": 0.1},
      "mean_dynamics": {"sigma2s": [...], "r_points": 200, "ode_T": 40,
                        "ode_dt": 0.01, "ode_starts": [0.1]},
      "escape_stats": {"gains": [0.02, 0.01, 0.005], "runs": 50, "rho": 0.3,
                       "sigma2": 0.01, "max_periods": 3000000,
                       "episode_horizon": 20000, "episode_runs": 5}
    }

Command-line flags override file values.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

from ..errors import ConfigError
from ..market import MarketParams

SPECS = ("averaging", "m0", "m1")


def _build(cls, data: dict | None, where: str):
    data = dict(data or {})
    known = {f.name for f in fields(cls)}
    extra = set(data) - known
    if extra:
        raise ConfigError(f"unknown key(s) in {where}: {sorted(extra)}")
    try:
        return cls(**data)
    except (TypeError, ValueError) as e:
        raise ConfigError(f"invalid {where}: {e}") from e


def _positive(name, x):
    if not x > 0:
        raise ValueError(f"{name} must be positive, got {x}")


@dataclass
class SimulateBlock:
    gain: float = 0.01
    gain_kind: str = "constant"
    gain_offset: float = 100.0
    horizon: int = 10_000
    runs: int = 1
    spec: str = "averaging"
    pi0: float = 0.5
    pi_lo: float = 0.01
    pi_hi: float = 0.99
    hi_frac: float = 0.5
    lo_frac: float = 0.25

    def __post_init__(self):
        if self.gain_kind not in ("constant", "decreasing"):
            raise ValueError(f"gain_kind must be constant or decreasing, got {self.gain_kind!r}")
        if self.spec not in SPECS:
            raise ValueError(f"spec must be one of {SPECS}, got {self.spec!r}")
        if self.gain_kind == "constant" and not 0 < self.gain <= 1:
            raise ValueError(f"gain must be in (0, 1], got {self.gain}")
        if self.horizon < 1 or self.runs < 1:
            raise ValueError("horizon and runs must be >= 1")
        if not 0 < self.lo_frac < self.hi_frac < 1:
            raise ValueError("need 0 < lo_frac < hi_frac < 1")


@dataclass
class PayoffBlock:
    gain: float = 0.01
    horizon: int = 100_000
    runs: int = 10

    def __post_init__(self):
        if self.runs < 5:
            raise ValueError(f"payoff matrix needs >= 5 runs, got {self.runs}")
        if not 0 < self.gain <= 1 or self.horizon < 1:
            raise ValueError("need gain in (0, 1] and horizon >= 1")


@dataclass
class RateBlock:
    rhos: list = field(default_factory=lambda: [0.05, 0.1, 0.15, 0.2, 0.3, 0.4, 0.5, 0.6, 0.8, 1.0])
    sigma2s: list = field(default_factory=lambda: [0.0025, 0.01])
    specs: list = field(default_factory=lambda: ["m0", "m1"])
    restarts: int = 16
    maxfev: int = 400
    Tmax: float = 50.0
    dt: float = 0.005
    alpha_scale: float = 0.1
    r_scale: float = 0.1

    def __post_init__(self):
        if not self.rhos:
            raise ValueError("rhos must be nonempty")
        if any(b <= a for a, b in zip(self.rhos, self.rhos[1:])) or min(self.rhos) <= 0:
            raise ValueError("rhos must be positive and strictly increasing")
        if not self.sigma2s or min(self.sigma2s) <= 0:
            raise ValueError("sigma2s must be nonempty and positive")
        if set(self.specs) - {"m0", "m1"} or not self.specs:
            raise ValueError("specs must be a nonempty subset of ['m0', 'm1']")
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")
        _positive("Tmax", self.Tmax)
        _positive("dt", self.dt)


@dataclass
class MeanDynamicsBlock:
    sigma2s: list = field(default_factory=lambda: [0.001, 0.0025, 0.005, 0.01])
    r_points: int = 200
    ode_T: float = 40.0
    ode_dt: float = 0.01
    ode_starts: list = field(default_factory=lambda: [0.1])

    def __post_init__(self):
        if not self.sigma2s or min(self.sigma2s) <= 0:
            raise ValueError("sigma2s must be nonempty and positive")
        if self.r_points < 2:
            raise ValueError("r_points must be >= 2")
        if any(not 0 < s < 1 for s in self.ode_starts):
            raise ValueError("ode_starts are fractions of the ray in (0, 1)")
        _positive("ode_T", self.ode_T)
        _positive("ode_dt", self.ode_dt)


@dataclass
class EscapeBlock:
    gains: list = field(default_factory=lambda: [0.02, 0.01, 0.005])
    runs: int = 50
    rho: float = 0.3
    sigma2: float = 0.01
    max_periods: int = 3_000_000
    episode_horizon: int = 20_000
    episode_runs: int = 5

    def __post_init__(self):
        if len(self.gains) < 2:
            raise ValueError("need at least two gains")
        if any(not 0 < g <= 1 for g in self.gains):
            raise ValueError("gains must lie in (0, 1]")
        if self.runs < 20:
            raise ValueError(f"escape statistics need >= 20 runs per gain, got {self.runs}")
        _positive("rho", self.rho)
        _positive("sigma2", self.sigma2)


@dataclass
class ExperimentConfig:
    seed: int = 0
    out: str = "out"
    market: MarketParams = field(default_factory=MarketParams)
    simulate: SimulateBlock = field(default_factory=SimulateBlock)
    payoff_matrix: PayoffBlock = field(default_factory=PayoffBlock)
    rate_function: RateBlock = field(default_factory=RateBlock)
    mean_dynamics: MeanDynamicsBlock = field(default_factory=MeanDynamicsBlock)
    escape_stats: EscapeBlock = field(default_factory=EscapeBlock)

    _BLOCKS = {
        "market": MarketParams,
        "simulate": SimulateBlock,
        "payoff_matrix": PayoffBlock,
        "rate_function": RateBlock,
        "mean_dynamics": MeanDynamicsBlock,
        "escape_stats": EscapeBlock,
    }

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        if not isinstance(data, dict):
            raise ConfigError("config must be a JSON object")
        extra = set(data) - set(cls._BLOCKS) - {"seed", "out"}
        if extra:
            raise ConfigError(f"unknown top-level key(s): {sorted(extra)}")
        kw = {name: _build(blk, data.get(name), name) for name, blk in cls._BLOCKS.items()}
        seed = data.get("seed", 0)
        if not isinstance(seed, int) or not 0 <= seed < 2**64:
            raise ConfigError(f"seed must be a 64-bit unsigned integer, got {seed!r}")
        return cls(seed=seed, out=str(data.get("out", "out")), **kw)

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        try:
            text = Path(path).read_text()
        except OSError as e:
            raise ConfigError(f"cannot read config {path}: {e}") from e
        try:
            return cls.from_dict(json.loads(text))
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: not valid JSON ({e})") from e

    def to_dict(self) -> dict:
        d = {"seed": self.seed, "out": self.out}
        for name in self._BLOCKS:
            d[name] = asdict(getattr(self, name))
        return d

    def override(self, command: str | None = None, **flags) -> "ExperimentConfig":
        """Apply non-None command-line flags and revalidate.

        ``--sigma2`` always sets the market variance and, for grid commands,
        replaces that command's variance grid. ``--gain``, ``--horizon`` and
        ``--spec`` apply to the block of the command being run (all blocks
        that have the field when ``command`` is None).
        """
        d = self.to_dict()
        mine = lambda block: command is None or _COMMAND_BLOCK.get(command) == block
        if flags.get("seed") is not None:
            d["seed"] = flags["seed"]
        if flags.get("out") is not None:
            d["out"] = flags["out"]
        s2 = flags.get("sigma2")
        if s2 is not None:
            d["market"]["sigma2"] = s2
            for block, key in (("rate_function", "sigma2s"), ("mean_dynamics", "sigma2s")):
                if mine(block):
                    d[block][key] = [s2]
            if mine("escape_stats"):
                d["escape_stats"]["sigma2"] = s2
        for key in ("gain", "horizon"):
            if flags.get(key) is not None:
                for block in ("simulate", "payoff_matrix"):
                    if mine(block):
                        d[block][key] = flags[key]
        spec = flags.get("spec")
        if spec is not None:
            if mine("simulate"):
                d["simulate"]["spec"] = spec
            if mine("rate_function") and spec in ("m0", "m1"):
                d["rate_function"]["specs"] = [spec]
        return ExperimentConfig.from_dict(d)


_COMMAND_BLOCK = {
    "simulate": "simulate",
    "payoff-matrix": "payoff_matrix",
    "rate-function": "rate_function",
    "mean-dynamics": "mean_dynamics",
    "escape-stats": "escape_stats",
}
