"""Phase-space types, box domains and the target-measure interface.

A target on the box ``B = prod[-a_i, a_i]`` has unnormalised density

    pi(x) ~ exp(-V(x) - 0.5 <x, C^{-1} x>),   x in B,

and the samplers work on the extended space with Hamiltonian

    H(x, p) = V(x) + 0.5 <x, C^{-1} x> + 0.5 |p|^2.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np
from numba.core.dispatcher import Dispatcher

__all__ = [
    "EvaluationError",
    "PhaseState",
    "BoxDomain",
    "TargetModel",
    "ChainOutput",
    "hamiltonian",
    "log_target_density",
]


class EvaluationError(RuntimeError):
    """The potential or its gradient could not be evaluated (non-finite)."""


@dataclass(frozen=True)
class PhaseState:
    x: np.ndarray
    p: np.ndarray

    def __post_init__(self):
        x = np.array(self.x, dtype=float, ndmin=1)
        p = np.array(self.p, dtype=float, ndmin=1)
        if x.ndim != 1 or x.shape != p.shape or x.size < 1:
            raise ValueError(f"x and p must be 1-D of equal length, got {x.shape} and {p.shape}")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(p))):
            raise ValueError("phase state has non-finite entries")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "p", p)

    @property
    def dim(self) -> int:
        return self.x.size

    def flip(self) -> PhaseState:
        return PhaseState(self.x, -self.p)


@dataclass(frozen=True)
class BoxDomain:
    half_widths: np.ndarray

    def __post_init__(self):
        a = np.array(self.half_widths, dtype=float, ndmin=1)
        if a.ndim != 1 or not np.all(a > 0) or not np.all(np.isfinite(a)):
            raise ValueError("box half-widths must be finite and positive")
        object.__setattr__(self, "half_widths", a)

    @classmethod
    def uniform(cls, a: float, dim: int) -> BoxDomain:
        return cls(np.full(dim, float(a)))

    @property
    def dim(self) -> int:
        return self.half_widths.size

    def contains(self, x) -> bool:
        return bool(np.all(np.abs(np.asarray(x, dtype=float)) <= self.half_widths))

    def sample_uniform(self, rng: np.random.Generator, shrink: float = 1.0) -> np.ndarray:
        return rng.uniform(-shrink * self.half_widths, shrink * self.half_widths)


@dataclass
class TargetModel:
    """Smooth potential ``V`` plus Gaussian reference measure ``N(0, C)`` on a box.

    ``value_and_grad(x)`` returns ``(V(x), grad V(x))``.  Failure to evaluate is
    signalled by a non-finite value, never by an exception, so that samplers
    can turn it into a rejected proposal.  When ``value_and_grad`` is a numba
    dispatcher the samplers run fully compiled.
    """

    dim: int
    value_and_grad: Callable[[np.ndarray], tuple[float, np.ndarray]]
    covariance: np.ndarray
    domain: BoxDomain
    name: str = "target"
    meta: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        cov = np.array(self.covariance, dtype=float)
        if cov.ndim == 0:
            cov = np.eye(self.dim) * float(cov)
        elif cov.ndim == 1:
            cov = np.diag(cov)
        if cov.shape != (self.dim, self.dim):
            raise ValueError(f"covariance shape {cov.shape} does not match dim {self.dim}")
        if not np.allclose(cov, cov.T, rtol=0, atol=1e-14 * np.abs(cov).max()):
            raise ValueError("covariance must be symmetric")
        try:
            self.cov_factor = np.linalg.cholesky(cov)
        except np.linalg.LinAlgError as exc:
            raise ValueError("covariance must be positive definite") from exc
        self.covariance = np.ascontiguousarray(cov)
        inv = np.linalg.inv(cov)
        self.cov_inv = np.ascontiguousarray(0.5 * (inv + inv.T))
        if self.domain.dim != self.dim:
            raise ValueError("domain dimension does not match target dimension")

    @property
    def compiled(self) -> bool:
        return isinstance(self.value_and_grad, Dispatcher)

    def potential(self, x) -> float:
        return float(self.value_and_grad(np.ascontiguousarray(x, dtype=float))[0])

    def gradient(self, x) -> np.ndarray:
        return np.asarray(self.value_and_grad(np.ascontiguousarray(x, dtype=float))[1])

    def quadratic(self, x) -> float:
        x = np.asarray(x, dtype=float)
        return 0.5 * float(x @ (self.cov_inv @ x))

    def apply_cov(self, v) -> np.ndarray:
        return self.covariance @ np.asarray(v, dtype=float)

    def sample_prior(self, rng: np.random.Generator) -> np.ndarray:
        return self.cov_factor @ rng.standard_normal(self.dim)


@dataclass
class ChainOutput:
    samples: np.ndarray
    momenta: np.ndarray
    acceptance_flags: np.ndarray
    accept_prob: np.ndarray
    energy_trace: np.ndarray
    bounce_counts: np.ndarray
    oob_rejections: int
    seed: int
    config_echo: Any
    final_delta: float

    @property
    def acceptance_rate(self) -> float:
        if self.acceptance_flags.size == 0:
            return float("nan")
        return float(np.mean(self.acceptance_flags))


def _energy_x(x: np.ndarray, t: TargetModel) -> float:
    value = float(t.value_and_grad(np.ascontiguousarray(x, dtype=float))[0])
    if not np.isfinite(value):
        return np.inf
    return value + t.quadratic(x)


def hamiltonian(s: PhaseState, t: TargetModel) -> float:
    """``V(x) + 0.5 <x, C^-1 x> + 0.5 |p|^2``; ``+inf`` if ``V`` cannot be evaluated."""
    if s.dim != t.dim:
        raise ValueError(f"state has dim {s.dim}, target has dim {t.dim}")
    return _energy_x(s.x, t) + 0.5 * float(s.p @ s.p)


def log_target_density(x, t: TargetModel) -> float:
    """Unnormalised log density; ``-inf`` outside the box or where ``V`` fails."""
    x = np.asarray(x, dtype=float)
    if x.shape != (t.dim,):
        raise ValueError(f"expected shape ({t.dim},), got {x.shape}")
    if not t.domain.contains(x):
        return -np.inf
    return -_energy_x(x, t)
