"""Run configuration: a JSON file with a fixed schema plus command-line overrides.

Schema (all sections optional unless a subcommand needs them)::

    {
      "data":       {"spikes": "spikes.csv", "stimulus": "stimulus.csv",
                     "bin_width": 0.001, "test_trials": [5]},
      "design":     {"p": 50, "q": 5, "band_edges": null},
      "irls":       {"max_iter": 100, "score_tol": 1e-8, "step_tol": 1e-8,
                     "step_halving": false},
      "strategies": [{"name": "standard_irls"}, {"name": "ridge", "lam": 0.1}],
      "cv":         {"strategy": {"name": "ridge"}, "grid": [0.0, 0.1, 0.5],
                     "folds": "loo"},
      "bootstrap":  {"strategy": {"name": "standard_irls"}, "B": 200, "level": 0.95},
      "gof":        {"ks_exact": false},
      "detect":     {"augment_spikes": null, "augment_stimulus": null},
      "simulation": {"beta": [...], "p": 50, "q": 5, "n_bins": 3000,
                     "n_trials": 6, "n_test_trials": 1, "bin_width": 0.001,
                     "stimulus": {"mean_pA": 0, "sd_pA": 100, "tau_s": 0.02}},
      "seed": 0, "threads": null, "out": "results"
    }

Relative paths are resolved against the directory of the config file.
Coefficients may be written as ``"-inf"``.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .glm import IrlsConfig
from .strategies import STRATEGIES, StrategyConfig, strategy_from_dict

SECTIONS = {
    "data", "design", "irls", "strategies", "cv", "bootstrap", "gof", "detect",
    "simulation", "seed", "threads", "out",
}


def _section(raw: dict, key: str, allowed: set) -> dict:
    sec = raw.get(key) or {}
    if not isinstance(sec, dict):
        raise ConfigError(f"{key}: expected an object")
    extra = set(sec) - allowed
    if extra:
        raise ConfigError(f"{key}: unknown key(s) {sorted(extra)}")
    return sec


def _number(value, key: str, kind=float, positive: bool = False):
    if isinstance(value, bool) or value is None:
        raise ConfigError(f"{key}: expected a number, got {value!r}")
    try:
        v = kind(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: expected a number, got {value!r}") from None
    if kind is int and v != value:
        raise ConfigError(f"{key}: expected an integer, got {value!r}")
    if positive and not v > 0:
        raise ConfigError(f"{key}: must be positive, got {value!r}")
    return v


def _coef(value, key: str) -> float:
    if isinstance(value, str):
        text = value.strip().lower()
        if text in ("-inf", "-infinity"):
            return -math.inf
        raise ConfigError(f"{key}: only '-inf' is accepted as a string coefficient, got {value!r}")
    v = _number(value, key)
    if math.isnan(v) or v == math.inf:
        raise ConfigError(f"{key}: coefficient must be finite or -inf")
    return v


@dataclass
class RunConfig:
    base_dir: Path = field(default_factory=Path.cwd)
    spikes: Path | None = None
    stimulus: Path | None = None
    bin_width: float = 0.001
    test_trials: list = field(default_factory=list)
    p: int = 20
    q: int = 5
    band_edges: list | None = None
    irls: IrlsConfig = field(default_factory=IrlsConfig)
    strategies: list = field(default_factory=list)
    cv: dict = field(default_factory=dict)
    bootstrap: dict = field(default_factory=dict)
    gof: dict = field(default_factory=dict)
    detect: dict = field(default_factory=dict)
    simulation: dict = field(default_factory=dict)
    seed: int = 0
    threads: int | None = None
    out: Path = Path("results")

    def strategy(self, spec, where: str) -> StrategyConfig:
        return strategy_from_dict(spec, self.irls, where)

    def resolve(self, value) -> Path | None:
        if value is None:
            return None
        p = Path(value)
        return p if p.is_absolute() else self.base_dir / p

    def worker_count(self) -> int:
        return self.threads or os.cpu_count() or 1


def parse_config(raw: dict, base_dir: Path = Path(".")) -> RunConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config: top level must be an object")
    extra = set(raw) - SECTIONS
    if extra:
        raise ConfigError(f"config: unknown section(s) {sorted(extra)}")
    cfg = RunConfig(base_dir=Path(base_dir))

    data = _section(raw, "data", {"spikes", "stimulus", "bin_width", "test_trials"})
    cfg.spikes = cfg.resolve(data.get("spikes"))
    cfg.stimulus = cfg.resolve(data.get("stimulus"))
    if "bin_width" in data:
        cfg.bin_width = _number(data["bin_width"], "data.bin_width", positive=True)
    tt = data.get("test_trials", [])
    if not isinstance(tt, list):
        raise ConfigError("data.test_trials: expected a list of trial ids")
    cfg.test_trials = tt

    design = _section(raw, "design", {"p", "q", "band_edges"})
    if "p" in design:
        cfg.p = _number(design["p"], "design.p", int)
        if cfg.p < 0:
            raise ConfigError("design.p: must be >= 0")
    if "q" in design:
        cfg.q = _number(design["q"], "design.q", int, positive=True)
    edges = design.get("band_edges")
    if edges is not None:
        if not isinstance(edges, list) or len(edges) != cfg.q + 1:
            raise ConfigError(f"design.band_edges: expected a list of q+1 = {cfg.q + 1} numbers")
        vals = []
        for i, e in enumerate(edges):
            if isinstance(e, str) and e.strip().lower() in ("-inf", "inf", "+inf"):
                vals.append(float(e))
            else:
                vals.append(_number(e, f"design.band_edges[{i}]"))
        if any(b <= a for a, b in zip(vals, vals[1:])):
            raise ConfigError("design.band_edges: must be strictly increasing")
        cfg.band_edges = vals

    irls = _section(raw, "irls", {"max_iter", "score_tol", "step_tol", "step_halving", "max_halvings"})
    try:
        cfg.irls = IrlsConfig(**{k: v for k, v in irls.items()})
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"irls: {exc}") from exc

    strategies = raw.get("strategies", [])
    if not isinstance(strategies, list):
        raise ConfigError("strategies: expected a list")
    cfg.strategies = [cfg.strategy(s, f"strategies[{i}]") for i, s in enumerate(strategies)]
    names = [s.name for s in cfg.strategies]
    if len(set(names)) != len(names):
        raise ConfigError("strategies: each strategy may appear only once")

    cfg.cv = _section(raw, "cv", {"strategy", "grid", "folds"})
    if cfg.cv:
        if "strategy" not in cfg.cv:
            raise ConfigError("cv.strategy: required")
        cfg.cv = dict(cfg.cv)
        cfg.cv["strategy"] = cfg.strategy(cfg.cv["strategy"], "cv.strategy")
        folds = cfg.cv.get("folds", "loo")
        if folds != "loo" and (isinstance(folds, bool) or not isinstance(folds, int) or folds < 2):
            raise ConfigError("cv.folds: expected 'loo' or an integer >= 2")
        grid = cfg.cv.get("grid")
        if grid is not None and (not isinstance(grid, list) or not grid):
            raise ConfigError("cv.grid: expected a non-empty list")

    cfg.bootstrap = _section(raw, "bootstrap", {"strategy", "B", "level"})
    if cfg.bootstrap:
        cfg.bootstrap = dict(cfg.bootstrap)
        cfg.bootstrap["strategy"] = cfg.strategy(
            cfg.bootstrap.get("strategy", {"name": "standard_irls"}), "bootstrap.strategy"
        )
        cfg.bootstrap["B"] = _number(cfg.bootstrap.get("B", 200), "bootstrap.B", int)
        cfg.bootstrap["level"] = _number(cfg.bootstrap.get("level", 0.95), "bootstrap.level")

    cfg.gof = _section(raw, "gof", {"ks_exact"})
    cfg.detect = _section(raw, "detect", {"augment_spikes", "augment_stimulus"})
    cfg.simulation = _section(
        raw, "simulation",
        {"beta", "p", "q", "n_bins", "n_trials", "n_test_trials", "bin_width", "stimulus", "band_edges"},
    )
    if "seed" in raw:
        cfg.seed = _number(raw["seed"], "seed", int)
        if cfg.seed < 0:
            raise ConfigError("seed: must be >= 0")
    if raw.get("threads") is not None:
        cfg.threads = _number(raw["threads"], "threads", int, positive=True)
    if "out" in raw:
        cfg.out = cfg.resolve(raw["out"])
    return cfg


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config ({exc.strerror})") from exc
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}: invalid JSON ({exc.msg})") from exc
    return parse_config(raw, path.parent)


def simulation_spec(cfg: RunConfig):
    """:class:`~sepglm.data.SimSpec` from the ``simulation`` section."""
    from .data import OUStimulus, SimSpec

    sim = cfg.simulation
    if not sim:
        raise ConfigError("simulation: section required")
    for key in ("beta", "p", "q", "n_bins"):
        if key not in sim:
            raise ConfigError(f"simulation.{key}: required")
    if not isinstance(sim["beta"], list):
        raise ConfigError("simulation.beta: expected a list")
    beta = [_coef(v, f"simulation.beta[{i}]") for i, v in enumerate(sim["beta"])]
    p = _number(sim["p"], "simulation.p", int)
    q = _number(sim["q"], "simulation.q", int)
    if len(beta) != 1 + p + q:
        raise ConfigError(f"simulation.beta: expected 1+p+q = {1 + p + q} values, got {len(beta)}")
    stim = sim.get("stimulus") or {}
    if not isinstance(stim, dict) or set(stim) - {"mean_pA", "sd_pA", "tau_s"}:
        raise ConfigError("simulation.stimulus: expected keys mean_pA, sd_pA, tau_s")
    process = OUStimulus(
        **{k: _number(v, f"simulation.stimulus.{k}", positive=(k != "mean_pA")) for k, v in stim.items()}
    )
    n_trials = _number(sim.get("n_trials", 1), "simulation.n_trials", int, positive=True)
    n_test = _number(sim.get("n_test_trials", 0), "simulation.n_test_trials", int)
    if not 0 <= n_test < n_trials:
        raise ConfigError("simulation.n_test_trials: must be in [0, n_trials)")
    edges = sim.get("band_edges")
    return (
        SimSpec(
            beta=beta,
            p=p,
            q=q,
            n_bins=_number(sim["n_bins"], "simulation.n_bins", int, positive=True),
            n_trials=n_trials,
            seed=cfg.seed,
            bin_width=_number(sim.get("bin_width", cfg.bin_width), "simulation.bin_width", positive=True),
            stimulus=process,
            band_edges=None if edges is None else [float(e) for e in edges],
        ),
        n_test,
    )


__all__ = ["RunConfig", "STRATEGIES", "load_config", "parse_config", "simulation_spec"]
