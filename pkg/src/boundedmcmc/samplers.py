"""HMC, Horowitz and SOL-HMC transition kernels and the chain runner.

HMC resamples the momentum every step and integrates with ``chi_H``.
Horowitz and SOL-HMC refresh the momentum partially (Ornstein-Uhlenbeck step
with parameter ``i``), integrate with ``chi_H`` and ``chi_S`` respectively, and
flip the momentum on rejection, which makes them non-reversible.

In ``bounce`` mode the drifts reflect off the box faces; in ``reject`` mode
trajectories may leave the box and proposals ending outside are rejected.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from . import _kernels as K
from .core import ChainOutput, PhaseState, TargetModel
from .integrators import RULES

__all__ = [
    "ALGORITHMS",
    "BOUNDARY_MODES",
    "SamplerConfig",
    "StepDiagnostics",
    "hmc_step",
    "horowitz_step",
    "solhmc_step",
    "run_chain",
    "adapt_step_size",
]

ALGORITHMS = {"HMC": K.HMC, "Horowitz": K.HOROWITZ, "SOLHMC": K.SOLHMC}
BOUNDARY_MODES = {"bounce": K.BOUNCE, "reject": K.REJECT}
ADAPT_WINDOW = 20


@dataclass(frozen=True)
class SamplerConfig:
    algorithm: str = "SOLHMC"
    boundary_mode: str = "bounce"
    delta: float = 0.1
    n_inner: int = 1
    i_param: float = 0.5
    n_samples: int = 1000
    burn_in: Optional[int] = None
    target_accept: Optional[float] = None
    seed: int = 0
    reflection_rule: str = "reflect"

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}; expected one of {list(ALGORITHMS)}")
        if self.boundary_mode not in BOUNDARY_MODES:
            raise ValueError(f"unknown boundary_mode {self.boundary_mode!r}")
        if self.reflection_rule not in RULES:
            raise ValueError(f"unknown reflection_rule {self.reflection_rule!r}")
        if not (self.delta >= 0 and math.isfinite(self.delta)):
            raise ValueError("delta must be finite and non-negative")
        if self.n_inner < 1:
            raise ValueError("n_inner must be >= 1")
        if not 0.0 <= self.i_param <= 1.0:
            raise ValueError("i_param must lie in [0, 1]")
        if self.n_samples < 0:
            raise ValueError("n_samples must be >= 0")
        if self.burn_in is not None and self.burn_in < 0:
            raise ValueError("burn_in must be >= 0")
        if self.target_accept is not None and not 0.0 < self.target_accept < 1.0:
            raise ValueError("target_accept must lie in (0, 1)")
        if (self.algorithm == "SOLHMC" and self.boundary_mode == "bounce"
                and not self.delta < math.pi):
            raise ValueError("SOL-HMC with reflections needs delta < pi")
        if self.algorithm == "HMC" and self.i_param != 1.0:
            # HMC always refreshes the momentum completely.
            object.__setattr__(self, "i_param", 1.0)

    @property
    def n_burn(self) -> int:
        return self.burn_in if self.burn_in is not None else self.n_samples // 10

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class StepDiagnostics:
    alpha: float
    energy: float
    bounces: int
    failed: bool
    value: float = field(repr=False, default=np.nan)
    grad: np.ndarray = field(repr=False, default=None)


def _kernel_args(cfg: SamplerConfig):
    return (ALGORITHMS[cfg.algorithm], BOUNDARY_MODES[cfg.boundary_mode], RULES[cfg.reflection_rule])


def _value_grad(tm: TargetModel, x: np.ndarray):
    value, g = tm.value_and_grad(np.ascontiguousarray(x, dtype=float))
    return float(value), np.ascontiguousarray(g, dtype=float)


def _transition(s: PhaseState, cfg: SamplerConfig, tm: TargetModel, rng, algorithm: str):
    if not tm.domain.contains(s.x):
        raise ValueError("current state lies outside the box")
    cfg = replace(cfg, algorithm=algorithm)
    kern = K.for_target(tm)
    value, g = _value_grad(tm, s.x)
    x, p, value, g, accepted, alpha, h, nb, failed = kern.transition(
        *_kernel_args(cfg), s.x, s.p, value, g, float(cfg.delta), int(cfg.n_inner),
        float(cfg.i_param), tm.covariance, tm.cov_inv, tm.domain.half_widths,
        tm.value_and_grad, rng)
    diag = StepDiagnostics(float(alpha), float(h), int(nb), bool(failed), float(value), g)
    return PhaseState(x, p), bool(accepted), diag


def hmc_step(x, cfg: SamplerConfig, tm: TargetModel, rng: np.random.Generator):
    """One HMC transition from position ``x``; returns ``(x', accepted, diag)``."""
    x = np.asarray(x, dtype=float)
    s, accepted, diag = _transition(PhaseState(x, np.zeros_like(x)), cfg, tm, rng, "HMC")
    return s.x, accepted, diag


def solhmc_step(s: PhaseState, cfg: SamplerConfig, tm: TargetModel, rng: np.random.Generator):
    """One SOL-HMC transition; returns ``(s', accepted, diag)``."""
    return _transition(s, cfg, tm, rng, "SOLHMC")


def horowitz_step(s: PhaseState, cfg: SamplerConfig, tm: TargetModel, rng: np.random.Generator):
    """One Horowitz transition (SOL-HMC with the leapfrog integrator)."""
    return _transition(s, cfg, tm, rng, "Horowitz")


def adapt_step_size(history, current_delta: float, target_accept: float) -> float:
    """Robbins-Monro update of ``log(delta)`` from the latest window acceptance.

    ``history`` holds the mean acceptance probability of every window so far;
    the gain for the ``k``-th window is ``k^-0.6``.
    """
    history = list(history)
    if not history:
        return current_delta
    return K.PY.adapt_rule(float(history[-1]), len(history), float(current_delta),
                           float(target_accept))


def run_chain(x0, cfg: SamplerConfig, tm: TargetModel, *, chunk_size: int = 100_000,
              sink: Optional[Callable] = None, keep: bool = True,
              kernels=None) -> ChainOutput:
    """Run ``burn_in + n_samples`` transitions from ``x0``.

    Step-size adaptation (when ``cfg.target_accept`` is set) is confined to
    burn-in.  The post-burn-in chain is produced in chunks; ``sink``, if
    given, receives each chunk as a dict of arrays.  With ``keep=False`` only
    the sink sees the samples and the returned arrays are empty.  ``kernels``
    overrides the kernel family (see ``_kernels.build_kernels``).
    """
    x0 = np.ascontiguousarray(x0, dtype=float)
    if x0.shape != (tm.dim,):
        raise ValueError(f"x0 must have shape ({tm.dim},)")
    if not tm.domain.contains(x0):
        raise ValueError("x0 lies outside the box")
    kern = K.for_target(tm) if kernels is None else kernels
    rng = np.random.default_rng(cfg.seed)
    algo, mode, rule = _kernel_args(cfg)
    n = tm.dim
    p = rng.standard_normal(n)
    value, g = _value_grad(tm, x0)
    if not (math.isfinite(value) and np.all(np.isfinite(g))):
        raise ValueError("potential cannot be evaluated at x0")
    x = x0
    delta = float(cfg.delta)
    target = cfg.target_accept if cfg.target_accept is not None else 0.0
    common = (tm.covariance, tm.cov_inv, tm.domain.half_widths, tm.value_and_grad, rng)

    def empty(m):
        return (np.empty((m, n)), np.empty((m, n)), np.empty(m, dtype=np.bool_),
                np.empty(m), np.empty(m), np.empty(m, dtype=np.int64))

    oob = 0
    if cfg.n_burn:
        x, p, value, g, delta, _, _, _, k_oob = kern.advance(
            algo, mode, rule, x, p, value, g, delta, int(cfg.n_inner), float(cfg.i_param),
            *common, int(cfg.n_burn), cfg.target_accept is not None, float(target),
            ADAPT_WINDOW, 0, 0.0, 0, False, *empty(0))
        oob += k_oob

    parts = []
    done = 0
    while done < cfg.n_samples:
        m = min(chunk_size, cfg.n_samples - done)
        buf = empty(m)
        x, p, value, g, delta, _, _, _, k_oob = kern.advance(
            algo, mode, rule, x, p, value, g, delta, int(cfg.n_inner), float(cfg.i_param),
            *common, m, False, 0.0, ADAPT_WINDOW, 0, 0.0, 0, True, *buf)
        oob += k_oob
        chunk = dict(zip(("samples", "momenta", "accepted", "alpha", "energy", "bounces"), buf))
        if sink is not None:
            sink(chunk)
        if keep:
            parts.append(buf)
        done += m

    if keep and parts:
        arrays = [np.concatenate([part[k] for part in parts]) for k in range(6)]
    else:
        arrays = list(empty(0))
    return ChainOutput(
        samples=arrays[0], momenta=arrays[1], acceptance_flags=arrays[2],
        accept_prob=arrays[3], energy_trace=arrays[4], bounce_counts=arrays[5],
        oob_rejections=int(oob), seed=int(cfg.seed), config_echo=cfg.to_dict(),
        final_delta=float(delta),
    )
