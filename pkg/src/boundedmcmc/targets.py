"""Concrete target measures and the parameter transforms used by the reservoir posteriors."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numba
import numpy as np
import scipy.sparse as sp
from scipy.special import erf

from .core import BoxDomain, TargetModel
from .reservoir import ObservationSet, ReservoirModel, SimulationError, Simulator

__all__ = [
    "rosenbrock_f",
    "rosenbrock_grad",
    "tilted_rosenbrock_target",
    "gaussian_target",
    "truncated_gaussian_2d",
    "truncated_normal_moments",
    "ParameterTransform",
    "LightweightMap",
    "lightweight_expand",
    "lightweight_covariance",
    "unit_prior_rescaling",
    "map_estimate",
    "RESERVOIR_CASES",
    "LIGHTWEIGHT_CENTERS",
    "lightweight_map",
    "reservoir_transform",
    "reservoir_posterior",
]


@numba.njit
def _rosenbrock_value_grad(x):
    n = x.size
    f = 0.0
    g = np.zeros(n)
    for i in range(n - 1):
        d = x[i + 1] - x[i] * x[i]
        e = 1.0 - x[i]
        f += 100.0 * d * d + e * e
        g[i] += -400.0 * x[i] * d - 2.0 * e
        g[i + 1] += 200.0 * d
    return f, g


def rosenbrock_f(x) -> float:
    """``sum_i 100 (x_{i+1} - x_i^2)^2 + (1 - x_i)^2``."""
    return float(_rosenbrock_value_grad(np.ascontiguousarray(x, dtype=float))[0])


def rosenbrock_grad(x) -> np.ndarray:
    return _rosenbrock_value_grad(np.ascontiguousarray(x, dtype=float))[1]


@numba.njit
def _half_rosenbrock(x):
    f, g = _rosenbrock_value_grad(x)
    return 0.5 * f, 0.5 * g


@numba.njit
def _zero_potential(x):
    return 0.0, np.zeros(x.size)


def tilted_rosenbrock_target(a: float = 1.0, cov_scale: float = 0.3, dim: int = 5) -> TargetModel:
    """``pi(x) ~ exp(-f(x)/2 - <x, C^-1 x>/2)`` on ``[-a, a]^dim`` with ``C = cov_scale * I``."""
    return TargetModel(
        dim=dim,
        value_and_grad=_half_rosenbrock,
        covariance=np.eye(dim) * cov_scale,
        domain=BoxDomain.uniform(a, dim),
        name="rosenbrock",
        meta={"a": float(a), "cov_scale": float(cov_scale)},
    )


def gaussian_target(dim: int, a: float = 1e6, cov=1.0) -> TargetModel:
    """Pure Gaussian reference measure (``V = 0``) on a box."""
    return TargetModel(dim=dim, value_and_grad=_zero_potential, covariance=cov,
                       domain=BoxDomain.uniform(a, dim), name="gaussian",
                       meta={"a": float(a)})


def truncated_gaussian_2d(a: float = 1.0) -> TargetModel:
    """Standard normal position restricted to ``[-a, a]``; the momentum makes it 2-D."""
    t = gaussian_target(1, a=a, cov=1.0)
    t.name = "truncgauss"
    return t


def truncated_normal_moments(a: float) -> dict[str, float]:
    """Exact ``Z_a``, ``E[x]`` and ``E[x^2]`` for ``N(0, 1)`` truncated to ``[-a, a]``."""
    mass = float(erf(a / math.sqrt(2.0)))
    phi = math.exp(-0.5 * a * a) / math.sqrt(2.0 * math.pi)
    return {
        "Z": math.sqrt(2.0 * math.pi) * mass,
        "mean": 0.0,
        "second": 1.0 - 2.0 * a * phi / mass,
    }


@dataclass(frozen=True)
class ParameterTransform:
    """Affine map of ``log10`` physical values onto ``[-a, a]``.

    Physical bounds are ``L = lower_ratio * base`` and ``U = upper_ratio * base``.
    """

    base: np.ndarray
    lower_ratio: np.ndarray
    upper_ratio: np.ndarray
    half_width: np.ndarray

    def __post_init__(self):
        base = np.asarray(self.base, dtype=float)
        shape = base.shape
        lo = np.broadcast_to(np.asarray(self.lower_ratio, dtype=float), shape).copy()
        hi = np.broadcast_to(np.asarray(self.upper_ratio, dtype=float), shape).copy()
        hw = np.broadcast_to(np.asarray(self.half_width, dtype=float), shape).copy()
        if np.any(base <= 0):
            raise ValueError("base values must be positive")
        if np.any(lo <= 0) or np.any(lo >= 1) or np.any(hi <= 1) or np.any(hw <= 0):
            raise ValueError("need 0 < lower_ratio < 1 < upper_ratio and half_width > 0")
        object.__setattr__(self, "base", base)
        object.__setattr__(self, "lower_ratio", lo)
        object.__setattr__(self, "upper_ratio", hi)
        object.__setattr__(self, "half_width", hw)
        object.__setattr__(self, "_log_lo", np.log10(lo * base))
        object.__setattr__(self, "_log_span", np.log10(hi / lo))

    @classmethod
    def uniform(cls, base, lower_ratio: float, upper_ratio: float, half_width: float):
        return cls(np.asarray(base, dtype=float), lower_ratio, upper_ratio, half_width)

    @property
    def dim(self) -> int:
        return self.base.size

    def domain(self) -> BoxDomain:
        return BoxDomain(self.half_width)

    def to_transformed(self, phys) -> np.ndarray:
        u = (np.log10(np.asarray(phys, dtype=float)) - self._log_lo) / self._log_span
        return self.half_width * (2.0 * u - 1.0)

    def to_physical(self, t) -> np.ndarray:
        u = 0.5 * (np.asarray(t, dtype=float) / self.half_width + 1.0)
        with np.errstate(over="ignore"):
            return 10.0 ** (self._log_lo + u * self._log_span)

    def dphys_dt(self, phys) -> np.ndarray:
        """Diagonal Jacobian of ``to_physical`` evaluated at ``phys``."""
        return np.asarray(phys) * math.log(10.0) * self._log_span / (2.0 * self.half_width)


@dataclass(frozen=True)
class LightweightMap:
    """Expansion ``X(y) = (fixed_head, M y)`` from per-layer multipliers to all parameters."""

    fixed_head: np.ndarray
    expansion_matrix: sp.csr_matrix

    @property
    def n_out(self) -> int:
        return self.fixed_head.size + self.expansion_matrix.shape[0]

    @property
    def n_in(self) -> int:
        return self.expansion_matrix.shape[1]

    @classmethod
    def from_groups(cls, base: np.ndarray, n_head: int, groups: list[np.ndarray]) -> LightweightMap:
        """Column ``k`` scales the base values of the parameter indices in ``groups[k]``.

        Every index ``>= n_head`` must belong to exactly one group.
        """
        base = np.asarray(base, dtype=float)
        n_tail = base.size - n_head
        rows, cols, vals = [], [], []
        for k, idx in enumerate(groups):
            idx = np.asarray(idx, dtype=int)
            if np.any(idx < n_head):
                raise ValueError("group indices must lie in the expanded tail")
            rows.append(idx - n_head)
            cols.append(np.full(idx.size, k))
            vals.append(base[idx])
        rows = np.concatenate(rows) if rows else np.zeros(0, int)
        if np.bincount(rows, minlength=n_tail).tolist() != [1] * n_tail:
            raise ValueError("each expanded parameter must belong to exactly one group")
        m = sp.csr_matrix((np.concatenate(vals), (rows, np.concatenate(cols))),
                          shape=(n_tail, len(groups)))
        return cls(base[:n_head].copy(), m)


def lightweight_expand(lm: LightweightMap, y_phys) -> np.ndarray:
    return np.concatenate([lm.fixed_head, lm.expansion_matrix @ np.asarray(y_phys, dtype=float)])


def lightweight_covariance(n_layers: int = 7, var: float = 0.25, tj_cov: float = 0.1) -> np.ndarray:
    """Prior covariance of the ``(V~, T~, J~)`` multipliers: diagonal plus T~_n / J~_n cross terms."""
    c = np.eye(3 * n_layers) * var
    for n in range(n_layers):
        c[n_layers + n, 2 * n_layers + n] = tj_cov
        c[2 * n_layers + n, n_layers + n] = tj_cov
    return c


def unit_prior_rescaling(tm: TargetModel) -> tuple[TargetModel, np.ndarray]:
    """Rescale coordinates by ``s = sqrt(diag C)`` so the reference covariance has unit diagonal.

    Returns the rescaled target (in ``z = x / s``) and ``s``.  Positions map
    back as ``x = s * z``; per-coordinate autocorrelations are unchanged.
    """
    s = np.sqrt(np.diag(tm.covariance))
    vg = tm.value_and_grad
    if tm.compiled:
        @numba.njit
        def scaled(z):
            value, g = vg(z * s)
            return value, g * s
    else:
        def scaled(z):
            value, g = vg(z * s)
            return value, np.asarray(g) * s
    cov = tm.covariance / np.outer(s, s)
    out = TargetModel(tm.dim, scaled, cov, BoxDomain(tm.domain.half_widths / s),
                      name=tm.name, meta=dict(tm.meta, rescaled=True))
    return out, s


def map_estimate(tm: TargetModel, x0, tol: float = 1e-6, max_iter: int = 5000) -> np.ndarray:
    """Maximise the log posterior by gradient ascent with backtracking.

    Step lengths start from the Barzilai-Borwein estimate and are halved until
    the Armijo condition holds.  Close to the optimum, where the decrease is
    below the rounding of the objective, a step is accepted instead if it
    shrinks the gradient.  Stops when ``max|grad| < tol``.
    """
    def objective(x):
        value, g = tm.value_and_grad(np.ascontiguousarray(x))
        ci_x = tm.cov_inv @ x
        return value + 0.5 * float(x @ ci_x), np.asarray(g) + ci_x

    x = np.array(x0, dtype=float)
    f, g = objective(x)
    if not np.isfinite(f):
        raise ValueError("objective is not finite at the starting point")
    step = 1.0 / max(np.abs(g).max(), 1.0)
    for _ in range(max_iter):
        if np.abs(g).max() < tol:
            return x
        while True:
            x_new = x - step * g
            f_new, g_new = objective(x_new)
            if np.isfinite(f_new) and f_new <= f - 1e-4 * step * float(g @ g):
                break
            flat = abs(f_new - f) <= 1e-12 * max(1.0, abs(f))
            if flat and np.abs(g_new).max() < np.abs(g).max():
                break
            step *= 0.5
            if step < 1e-300:
                warnings.warn("map_estimate: line search failed", RuntimeWarning, stacklevel=2)
                return x
        s_vec, y_vec = x_new - x, g_new - g
        x, f, g = x_new, f_new, g_new
        sy = float(s_vec @ y_vec)
        step = float(s_vec @ s_vec) / sy if sy > 0 else 2.0 * step
    warnings.warn("map_estimate did not converge; returning the last iterate", RuntimeWarning,
                  stacklevel=2)
    return x


# (lower_ratio, upper_ratio, half_width, prior variance) per parameterisation.
RESERVOIR_CASES = {
    "full-a": (0.1, 10.0, 1.0, 0.25),
    "full-b": (1e-3, 1e3, 3.0, 0.25),
    "full-c": (1e-3, 1e3, 3.0, 2.25),
    "lightweight": (0.1, 10.0, 1.0, 0.25),
}
# Centres of the per-layer (V~, T~, J~) multiplier ranges.
LIGHTWEIGHT_CENTERS = (1.5, 0.7, 1.1)


def lightweight_map(model: ReservoirModel, base=None) -> LightweightMap:
    """Per-layer multiplier map for ``model``.

    Non-aquifer pore volumes are frozen at ``base``; column ``n`` scales the
    aquifer volumes of layer ``n``, column ``L + n`` its transmissibilities and
    column ``2L + n`` its perforation productivities.  Requires the blocks to
    be stored with all non-aquifer blocks first.
    """
    base = model.parameters() if base is None else np.asarray(base, dtype=float)
    aquifer = np.array([b.is_aquifer for b in model.blocks])
    n_head = int(np.sum(~aquifer))
    if np.any(aquifer[:n_head]):
        raise ValueError("non-aquifer blocks must precede aquifer blocks")
    nl, nb, nc = model.n_layers, model.n_blocks, model.n_connections
    block_layer = np.array([b.layer for b in model.blocks])
    conn_layer = np.array([model.connection_layer(k) for k in range(nc)], dtype=int)
    perf_layer = np.array([model.perforation_layer(k) for k in range(model.n_perforations)],
                          dtype=int)
    groups = [n_head + np.flatnonzero(block_layer[n_head:] == n) for n in range(nl)]
    groups += [nb + np.flatnonzero(conn_layer == n) for n in range(nl)]
    groups += [nb + nc + np.flatnonzero(perf_layer == n) for n in range(nl)]
    return LightweightMap.from_groups(base, n_head, groups)


def reservoir_transform(case: str, model: ReservoirModel, base=None) -> ParameterTransform:
    if case not in RESERVOIR_CASES:
        raise ValueError(f"unknown reservoir case {case!r}")
    lo, hi, a, _ = RESERVOIR_CASES[case]
    if case == "lightweight":
        centers = np.repeat(LIGHTWEIGHT_CENTERS, model.n_layers)
        return ParameterTransform.uniform(centers, lo, hi, a)
    base = model.parameters() if base is None else np.asarray(base, dtype=float)
    return ParameterTransform.uniform(base, lo, hi, a)


def reservoir_posterior(model: ReservoirModel, obs: ObservationSet, tform: ParameterTransform,
                        prior_cov, mode: str = "full",
                        lmap: LightweightMap | None = None) -> TargetModel:
    """Posterior over transformed reservoir parameters.

    ``V(t) = -log L(d0 | X(t))`` with ``X = to_physical`` (``mode="full"``) or
    ``X = lightweight_expand(lmap, to_physical(t))`` (``mode="lightweight"``).
    The gradient comes from the adjoint sweep and the chain rule through the
    transform.  Simulator failure yields ``V = inf``.
    """
    sim = Simulator(model)
    obs.validate(model)
    if mode == "full":
        if tform.dim != model.n_params:
            raise ValueError(f"transform has dim {tform.dim}, model has {model.n_params} parameters")

        def expand(y):
            return y

        def pull_back(g):
            return g
    elif mode == "lightweight":
        if lmap is None:
            lmap = lightweight_map(model)
        if lmap.n_out != model.n_params or tform.dim != lmap.n_in:
            raise ValueError("lightweight map does not match the model or the transform")
        n_head, m_t = lmap.fixed_head.size, lmap.expansion_matrix.T.tocsr()

        def expand(y):
            return lightweight_expand(lmap, y)

        def pull_back(g):
            return m_t @ g[n_head:]
    else:
        raise ValueError(f"mode must be 'full' or 'lightweight', got {mode!r}")

    def value_and_grad(t):
        y = tform.to_physical(t)
        try:
            loglik, g = sim.log_likelihood_and_gradient(obs, expand(y))
        except SimulationError:
            return np.inf, np.full(t.size, np.nan)
        return -loglik, -pull_back(g) * tform.dphys_dt(y)

    domain = tform.domain()
    return TargetModel(domain.dim, value_and_grad, prior_cov, domain, name=f"reservoir-{mode}",
                       meta={"mode": mode})
