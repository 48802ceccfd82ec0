"""Strict JSON experiment configuration."""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Optional

from ..samplers import ALGORITHMS, BOUNDARY_MODES, SamplerConfig
from ..integrators import RULES

__all__ = ["ConfigError", "Variant", "ExperimentConfig", "load_config", "TARGETS"]

TARGETS = (
    "rosenbrock",
    "truncgauss",
    "gaussian",
    "reservoir-full-a",
    "reservoir-full-b",
    "reservoir-full-c",
    "reservoir-lightweight",
    "custom",
)

TARGET_OPTIONS = {
    "rosenbrock": {"a", "cov_scale", "dim"},
    "truncgauss": {"a"},
    "gaussian": {"a", "dim", "cov"},
    "custom": {"factory", "kwargs"},
}
RESERVOIR_OPTIONS = {"model_file", "obs_file", "base_file", "rescale_prior"}

REQUIRED = ("target", "algorithm", "boundary_mode", "delta", "n_samples", "seeds")


class ConfigError(ValueError):
    """Invalid or incomplete experiment configuration."""


@dataclass(frozen=True)
class Variant:
    label: str
    algorithm: str
    boundary_mode: str
    i_param: Optional[float] = None


@dataclass(frozen=True)
class ExperimentConfig:
    target: str
    algorithm: str
    boundary_mode: str
    delta: float
    n_samples: int
    seeds: tuple[int, ...]
    target_options: dict = field(default_factory=dict)
    n_inner: int = 1
    i_param: float = 0.5
    burn_in: Optional[int] = None
    target_accept: Optional[float] = None
    reflection_rule: str = "reflect"
    x0: Any = "zero"
    workers: Optional[int] = None
    save_chains: bool = True
    save_momenta: bool = False
    diagnose_momenta: bool = False
    window_factor: float = 10.0
    tau_onesided: bool = False
    chunk_size: int = 100_000
    box_sizes: Optional[tuple[float, ...]] = None
    variants: Optional[tuple[Variant, ...]] = None
    overlap_from: Optional[float] = None

    def sampler_config(self, seed: int, **override) -> SamplerConfig:
        kw = dict(algorithm=self.algorithm, boundary_mode=self.boundary_mode, delta=self.delta,
                  n_inner=self.n_inner, i_param=self.i_param, n_samples=self.n_samples,
                  burn_in=self.burn_in, target_accept=self.target_accept, seed=int(seed),
                  reflection_rule=self.reflection_rule)
        kw.update(override)
        return SamplerConfig(**kw)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["seeds"] = list(self.seeds)
        if isinstance(self.x0, tuple):
            d["x0"] = list(self.x0)
        if self.box_sizes is not None:
            d["box_sizes"] = list(self.box_sizes)
        if self.variants is not None:
            d["variants"] = [asdict(v) for v in self.variants]
        return d

    def to_json(self) -> str:
        """Canonical one-line JSON used for provenance headers."""
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))


def _require(cond: bool, msg: str):
    if not cond:
        raise ConfigError(msg)


def parse_config(raw: dict, base_dir: Path | None = None) -> ExperimentConfig:
    _require(isinstance(raw, dict), "config must be a JSON object")
    known = {f.name for f in fields(ExperimentConfig)}
    unknown = sorted(set(raw) - known)
    _require(not unknown, f"unknown config key(s): {', '.join(unknown)}")
    for key in REQUIRED:
        _require(key in raw, f"missing required config key: {key!r}")
    d = dict(raw)

    _require(d["target"] in TARGETS, f"target must be one of {list(TARGETS)}, got {d['target']!r}")
    opts = dict(d.get("target_options") or {})
    allowed = RESERVOIR_OPTIONS if d["target"].startswith("reservoir") else TARGET_OPTIONS[d["target"]]
    bad = sorted(set(opts) - allowed)
    _require(not bad, f"unknown target_options for {d['target']}: {', '.join(bad)}")
    if d["target"].startswith("reservoir"):
        for key in ("model_file", "obs_file"):
            _require(key in opts, f"target_options.{key} is required for reservoir targets")
        if base_dir is not None:
            for key in ("model_file", "obs_file", "base_file"):
                if key in opts and not Path(opts[key]).is_absolute():
                    opts[key] = str(base_dir / opts[key])
    if d["target"] == "custom":
        _require("factory" in opts, "target_options.factory ('module:function') is required")
    d["target_options"] = opts

    seeds = d["seeds"]
    _require(isinstance(seeds, list) and seeds and all(isinstance(s, int) for s in seeds),
             "seeds must be a non-empty list of integers")
    _require(len(set(seeds)) == len(seeds), "seeds must be distinct")
    d["seeds"] = tuple(seeds)
    if d.get("box_sizes") is not None:
        sizes = d["box_sizes"]
        _require(isinstance(sizes, list) and len(sizes) > 0, "box_sizes must be a non-empty list")
        _require(all(isinstance(a, (int, float)) and a > 0 for a in sizes),
                 "box_sizes must be positive numbers")
        d["box_sizes"] = tuple(float(a) for a in sizes)
    if d.get("variants") is not None:
        vs = d["variants"]
        _require(isinstance(vs, list) and len(vs) > 0, "variants must be a non-empty list")
        parsed = []
        for v in vs:
            _require(isinstance(v, dict), "each variant must be an object")
            extra = sorted(set(v) - {"label", "algorithm", "boundary_mode", "i_param"})
            _require(not extra, f"unknown variant key(s): {', '.join(extra)}")
            _require("algorithm" in v and "boundary_mode" in v,
                     "variants need 'algorithm' and 'boundary_mode'")
            label = v.get("label", f"{v['algorithm']}-{v['boundary_mode']}")
            parsed.append(Variant(label, v["algorithm"], v["boundary_mode"], v.get("i_param")))
        labels = [v.label for v in parsed]
        _require(len(set(labels)) == len(labels), "variant labels must be distinct")
        d["variants"] = tuple(parsed)

    _require(d["algorithm"] in ALGORITHMS, f"algorithm must be one of {list(ALGORITHMS)}")
    _require(d["boundary_mode"] in BOUNDARY_MODES, f"boundary_mode must be one of {list(BOUNDARY_MODES)}")
    _require(d.get("reflection_rule", "reflect") in RULES, f"reflection_rule must be one of {list(RULES)}")
    _require(isinstance(d["n_samples"], int) and d["n_samples"] >= 0, "n_samples must be an integer >= 0")
    x0 = d.get("x0", "zero")
    _require(x0 in ("zero", "map") or (isinstance(x0, list) and all(isinstance(v, (int, float)) for v in x0)),
             "x0 must be 'zero', 'map' or a list of numbers")
    if isinstance(x0, list):
        d["x0"] = tuple(float(v) for v in x0)
    try:
        cfg = ExperimentConfig(**d)
        for v in cfg.variants or ():
            cfg.sampler_config(cfg.seeds[0], algorithm=v.algorithm, boundary_mode=v.boundary_mode,
                               **({} if v.i_param is None else {"i_param": v.i_param}))
        cfg.sampler_config(cfg.seeds[0])
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
    _require(cfg.window_factor > 0, "window_factor must be positive")
    _require(cfg.chunk_size >= 1, "chunk_size must be >= 1")
    _require(cfg.workers is None or cfg.workers >= 1, "workers must be >= 1")
    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        raw = json.loads(path.read_text())
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    return parse_config(raw, base_dir=path.parent)
