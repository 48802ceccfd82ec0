"""Split-flow maps, momentum refresh, reflective drifts and composed integrators.

The Hamiltonian flow ``x' = p, p' = -x - C grad V(x)`` is split two ways:

* position/momentum: ``M^t`` (kick by ``x + C grad V``) and ``P^t`` (drift),
  composed as ``chi_H = M^{d/2} P^d M^{d/2}``;
* linear/nonlinear: ``Theta^t`` (kick by ``C grad V``) and the exact rotation
  ``R^t``, composed as ``chi_S = Theta^{d/2} R^d Theta^{d/2}``.

The ``*_bounce`` variants replace the drift by a trajectory that reflects the
momentum component normal to any box face it meets, so positions never leave
the box.
"""

from __future__ import annotations

import numpy as np

from . import _kernels as K
from .core import BoxDomain, EvaluationError, PhaseState, TargetModel

__all__ = [
    "ReflectionLimitError",
    "RULES",
    "map_M",
    "map_P",
    "map_Theta",
    "map_R",
    "ou_refresh",
    "bounce_linear",
    "bounce_rotation",
    "chi_H",
    "chi_S",
    "chi_H_bounce",
    "chi_S_bounce",
    "flip",
]

# "reflect": reflect at every face crossing along the arc.
# "endpoint": skip reflections whenever the unreflected endpoint is inside.
RULES = {"reflect": K.RULE_REFLECT, "endpoint": K.RULE_ENDPOINT}


class ReflectionLimitError(RuntimeError):
    """A single drift needed more than ``MAX_REFLECTIONS`` reflections."""


def _grad(tm: TargetModel, x: np.ndarray) -> np.ndarray:
    value, g = tm.value_and_grad(np.ascontiguousarray(x))
    g = np.asarray(g, dtype=float)
    if not (np.isfinite(value) and np.all(np.isfinite(g))):
        raise EvaluationError("potential evaluation failed")
    return g


def _check_status(status: int):
    if status == K.TOO_MANY:
        raise ReflectionLimitError(f"more than {K.MAX_REFLECTIONS} reflections in one step")
    if status == K.FAILED:
        raise EvaluationError("potential evaluation failed")


def flip(s: PhaseState) -> PhaseState:
    return s.flip()


def map_M(s: PhaseState, t: float, tm: TargetModel) -> PhaseState:
    force = s.x + tm.covariance @ _grad(tm, s.x)
    return PhaseState(s.x, s.p - t * force)


def map_Theta(s: PhaseState, t: float, tm: TargetModel) -> PhaseState:
    return PhaseState(s.x, s.p - t * (tm.covariance @ _grad(tm, s.x)))


def map_P(s: PhaseState, t: float) -> PhaseState:
    return PhaseState(*K.PY.map_P(s.x, s.p, float(t)))


def map_R(s: PhaseState, t: float) -> PhaseState:
    return PhaseState(*K.PY.map_R(s.x, s.p, float(t)))


def ou_refresh(s: PhaseState, i: float, rng: np.random.Generator) -> PhaseState:
    """Ornstein-Uhlenbeck momentum refresh ``p sqrt(1 - i^2) + i xi``."""
    if not 0.0 <= i <= 1.0:
        raise ValueError(f"i must lie in [0, 1], got {i}")
    return PhaseState(s.x, K.PY.ou_refresh(s.p, float(i), rng))


def _box_args(s: PhaseState, box: BoxDomain, t: float):
    if box.dim != s.dim:
        raise ValueError("box and state dimensions differ")
    if not box.contains(s.x):
        raise ValueError("initial position lies outside the box")
    if t < 0:
        raise ValueError("drift time must be non-negative")
    return s.x, s.p, float(t), box.half_widths


def bounce_linear(s: PhaseState, t: float, box: BoxDomain) -> tuple[PhaseState, int]:
    """Drift for time ``t`` with specular reflection at the box faces."""
    x, p, nb, status = K.JIT.bounce_linear(*_box_args(s, box, t))
    _check_status(status)
    return PhaseState(x, p), int(nb)


def bounce_rotation(s: PhaseState, t: float, box: BoxDomain,
                    rule: str = "reflect") -> tuple[PhaseState, int]:
    """Rotate for time ``t`` (``0 <= t < pi``) reflecting momenta at the faces.

    With ``rule="endpoint"`` no reflection is made when the unreflected
    rotation ends inside the box, even if the arc left it in between; that
    variant is not reversible under momentum flip.
    """
    if not t < np.pi:
        raise ValueError("rotation time must be below pi")
    x, p, nb, status = K.JIT.bounce_rotation(*_box_args(s, box, t), RULES[rule])
    _check_status(status)
    return PhaseState(x, p), int(nb)


def _initial_grad(s: PhaseState, tm: TargetModel):
    if s.dim != tm.dim:
        raise ValueError("state and target dimensions differ")
    return np.ascontiguousarray(_grad(tm, s.x))


def chi_H(s: PhaseState, delta: float, tm: TargetModel) -> PhaseState:
    k = K.for_target(tm)
    x, p, _, _, _, status = k.chi_H(s.x, s.p, _initial_grad(s, tm), float(delta),
                                    tm.covariance, tm.domain.half_widths, False, tm.value_and_grad)
    _check_status(status)
    return PhaseState(x, p)


def chi_S(s: PhaseState, delta: float, tm: TargetModel) -> PhaseState:
    k = K.for_target(tm)
    x, p, _, _, _, status = k.chi_S(s.x, s.p, _initial_grad(s, tm), float(delta),
                                    tm.covariance, tm.domain.half_widths, False,
                                    K.RULE_REFLECT, tm.value_and_grad)
    _check_status(status)
    return PhaseState(x, p)


def chi_H_bounce(s: PhaseState, delta: float, box: BoxDomain,
                 tm: TargetModel) -> tuple[PhaseState, int]:
    _box_args(s, box, delta)
    k = K.for_target(tm)
    x, p, _, _, nb, status = k.chi_H(s.x, s.p, _initial_grad(s, tm), float(delta),
                                     tm.covariance, box.half_widths, True, tm.value_and_grad)
    _check_status(status)
    return PhaseState(x, p), int(nb)


def chi_S_bounce(s: PhaseState, delta: float, box: BoxDomain, tm: TargetModel,
                 rule: str = "reflect") -> tuple[PhaseState, int]:
    _box_args(s, box, delta)
    if not delta < np.pi:
        raise ValueError("chi_S_bounce requires delta < pi")
    k = K.for_target(tm)
    x, p, _, _, nb, status = k.chi_S(s.x, s.p, _initial_grad(s, tm), float(delta),
                                     tm.covariance, box.half_widths, True, RULES[rule],
                                     tm.value_and_grad)
    _check_status(status)
    return PhaseState(x, p), int(nb)
