"""Single-phase implicit pressure simulator, data extraction, likelihood and adjoint gradient.

Unknowns per time step are the block pressures ``P`` followed by the well
bottom-hole pressures ``Pw``.  Backward Euler on

    c_l V_l dP_l/dt = sum_j T_lj (P_j - P_l + rho g h_lj) - sum_w J_wl (P_l - Pw_w - rho g h_wl)

together with the rate constraints ``sum_l J_wl (P_l - Pw_w - rho g h_wl) = q_w``
gives a symmetric positive definite system ``A u^{n+1} = D u^n + b^{n+1}``
whose matrix does not change between steps.  It is factored once per
parameter vector.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import LinAlgError, cho_factor
from scipy.linalg.lapack import dpotrs

from .model import ObservationSet, ReservoirModel

__all__ = [
    "SimulationError",
    "SimulationResult",
    "Simulator",
    "forward_simulate",
    "extract_data",
    "log_likelihood",
    "adjoint_gradient",
    "step_residuals",
]


class SimulationError(RuntimeError):
    """Forward or adjoint solve failed (invalid parameters, singular system, non-finite values)."""


@dataclass
class SimulationResult:
    """Pressures at steps ``0..n_steps``; ``bhp[0]`` is undefined (NaN)."""

    pressures: np.ndarray  # (n_steps + 1, n_blocks)
    bhp: np.ndarray  # (n_steps + 1, n_wells)
    params: np.ndarray

    @property
    def states(self) -> np.ndarray:
        return np.hstack([self.pressures, self.bhp])


class Simulator:
    """Precomputed index structure of one model; evaluations are re-entrant."""

    def __init__(self, model: ReservoirModel):
        self.model = model
        nb, nw = model.n_blocks, model.n_wells
        self.nb, self.nw, self.n = nb, nw, nb + nw
        rg = model.rho_g
        self.comp = np.array([b.compressibility for b in model.blocks])
        self.p0 = np.array([b.initial_pressure for b in model.blocks])
        self.ca = np.array([c.a for c in model.connections], dtype=np.intp)
        self.cb = np.array([c.b for c in model.connections], dtype=np.intp)
        self.gc = rg * np.array([c.depth_difference for c in model.connections])
        self.pb = np.array([p.block for p in model.perforations], dtype=np.intp)
        self.pw = nb + np.array([p.well for p in model.perforations], dtype=np.intp)
        self.gp = rg * np.array([p.depth_difference for p in model.perforations])
        self.rates = model.rates()
        n = self.n
        # Flat positions of the (i, i), (j, j), (i, j), (j, i) entries of each coupling.
        pairs_i = np.concatenate([self.ca, self.pb])
        pairs_j = np.concatenate([self.cb, self.pw])
        self._flat = np.concatenate([pairs_i * n + pairs_i, pairs_j * n + pairs_j,
                                     pairs_i * n + pairs_j, pairs_j * n + pairs_i])
        self._diag = np.arange(nb) * (n + 1)

    # assembly

    def _check_params(self, params):
        v, t, j = self.model.split_parameters(params)
        if not (np.all(np.isfinite(params)) and np.all(np.asarray(params) > 0)):
            raise SimulationError("parameters must be finite and positive")
        return v, t, j

    def assemble(self, params):
        """Return ``(A, storage, b0)``: the step matrix, ``c V / dt`` and the gravity source."""
        v, t, j = self._check_params(np.asarray(params, dtype=float))
        n, nb = self.n, self.nb
        storage = self.comp * v / self.model.dt
        w = np.concatenate([t, j])
        a = np.zeros(n * n)
        np.add.at(a, self._flat, np.concatenate([w, w, -w, -w]))
        a[self._diag] += storage
        b0 = np.zeros(n)
        np.add.at(b0, self.ca, t * self.gc)
        np.add.at(b0, self.cb, -t * self.gc)
        np.add.at(b0, self.pb, j * self.gp)
        np.add.at(b0, self.pw, -j * self.gp)
        return a.reshape(n, n), storage, b0

    def _factor(self, a):
        try:
            c, _ = cho_factor(a, lower=True, check_finite=True)
        except (LinAlgError, ValueError) as exc:
            raise SimulationError(f"step matrix factorization failed: {exc}") from exc
        return c

    @staticmethod
    def _solve(c, rhs):
        x, info = dpotrs(c, rhs, lower=1)
        if info != 0:
            raise SimulationError("triangular solve failed")
        return x

    # forward

    def forward(self, params) -> SimulationResult:
        params = np.asarray(params, dtype=float)
        a, storage, b0 = self.assemble(params)
        c = self._factor(a)
        u = self._march(c, storage, b0)
        nb = self.nb
        return SimulationResult(u[:, :nb].copy(), u[:, nb:].copy(), params)

    def _march(self, c, storage, b0):
        nt, nb = self.model.n_steps, self.nb
        u = np.empty((nt + 1, self.n))
        u[0, :nb] = self.p0
        u[0, nb:] = np.nan
        rhs = b0.copy()
        for k in range(nt):
            rhs[:nb] = b0[:nb] + storage * u[k, :nb]
            rhs[nb:] = b0[nb:] - self.rates[k]
            u[k + 1] = self._solve(c, rhs)
        if not np.all(np.isfinite(u[1:])):
            raise SimulationError("non-finite pressures")
        return u

    # observations

    def _obs_index(self, obs: ObservationSet):
        obs.validate(self.model)
        steps = np.array([p.step for p in obs.points], dtype=np.intp)
        cols = np.array([p.id if p.kind == "block" else self.nb + p.id for p in obs.points],
                        dtype=np.intp)
        return steps, cols

    def extract(self, result: SimulationResult, obs: ObservationSet) -> np.ndarray:
        steps, cols = self._obs_index(obs)
        return result.states[steps, cols] if steps.size else np.zeros(0)

    def log_likelihood(self, obs: ObservationSet, params) -> float:
        return self.log_likelihood_and_gradient(obs, params, gradient=False)[0]

    def log_likelihood_and_gradient(self, obs: ObservationSet, params, gradient: bool = True):
        """``log L`` and its gradient in the physical ``(V, T, J)`` parameters."""
        params = np.asarray(params, dtype=float)
        a, storage, b0 = self.assemble(params)
        c = self._factor(a)
        nt, nb, n = self.model.n_steps, self.nb, self.n
        u = self._march(c, storage, b0)
        steps, cols = self._obs_index(obs)
        sig2 = obs.sigmas ** 2
        resid = u[steps, cols] - obs.values if steps.size else np.zeros(0)
        loglik = -0.5 * float(np.sum(resid * resid / sig2))
        if not gradient:
            return loglik, None

        # Adjoint sweep: A lam^n = dlogL/du^n + D lam^{n+1}, n = nt..1.
        src = np.zeros((nt + 1, n))
        np.add.at(src, (steps, cols), -resid / sig2)
        lam = np.zeros((nt + 1, n))
        carry = np.zeros(n)
        for k in range(nt, 0, -1):
            rhs = src[k].copy()
            rhs[:nb] += carry[:nb]
            lam[k] = self._solve(c, rhs)
            carry[:nb] = storage * lam[k, :nb]
        if not np.all(np.isfinite(lam)):
            raise SimulationError("non-finite adjoint state")

        lam, cur, prev = lam[1:], u[1:], u[:-1]
        d_v = -(self.comp / self.model.dt) * np.sum(lam[:, :nb] * (cur[:, :nb] - prev[:, :nb]), axis=0)
        ca, cb, pb, pw = self.ca, self.cb, self.pb, self.pw
        d_t = -np.sum((lam[:, ca] - lam[:, cb]) * (cur[:, ca] - cur[:, cb] - self.gc), axis=0)
        d_j = -np.sum((lam[:, pb] - lam[:, pw]) * (cur[:, pb] - cur[:, pw] - self.gp), axis=0)
        return loglik, np.concatenate([d_v, d_t, d_j])


def forward_simulate(model: ReservoirModel, params=None) -> SimulationResult:
    """Run the full horizon; ``params`` defaults to the values stored in ``model``."""
    return Simulator(model).forward(model.parameters() if params is None else params)


def extract_data(result: SimulationResult, obs: ObservationSet, model: ReservoirModel) -> np.ndarray:
    """Simulated values at the observation points, in ``obs.points`` order."""
    return Simulator(model).extract(result, obs)


def log_likelihood(model: ReservoirModel, obs: ObservationSet, params=None) -> float:
    """``-0.5 sum_i (d_i(x) - d0_i)^2 / sigma_i^2``."""
    sim = Simulator(model)
    return sim.log_likelihood(obs, model.parameters() if params is None else params)


def adjoint_gradient(model: ReservoirModel, obs: ObservationSet, params=None) -> np.ndarray:
    """Gradient of ``log_likelihood`` with respect to ``(V, T, J)``."""
    sim = Simulator(model)
    return sim.log_likelihood_and_gradient(obs, model.parameters() if params is None else params)[1]


def step_residuals(model: ReservoirModel, result: SimulationResult) -> dict[str, np.ndarray]:
    """Per-step diagnostics of a forward run.

    ``balance``: ``|sum_l c V dP/dt + sum_w q_w|`` divided by
    ``sum_l |c V dP/dt| + sum_w |q_w|`` (floored at 1 m^3/day so that steps at
    rest do not divide roundoff by zero).  ``well``: largest absolute
    rate-constraint residual.  ``linear``: relative residual of the step's
    linear system.
    """
    sim = Simulator(model)
    a, storage, b0 = sim.assemble(result.params)
    u = result.states
    nb, nt = sim.nb, model.n_steps
    _, t, j = model.split_parameters(result.params)
    out = {k: np.zeros(nt) for k in ("balance", "well", "linear")}
    for k in range(nt):
        acc = storage * (u[k + 1, :nb] - u[k, :nb])
        q = sim.rates[k]
        scale = max(np.abs(acc).sum() + np.abs(q).sum(), 1.0)
        out["balance"][k] = abs(acc.sum() + q.sum()) / scale
        flow = j * (u[k + 1, sim.pb] - u[k + 1, sim.pw] - sim.gp)
        per_well = np.bincount(sim.pw - nb, weights=flow, minlength=sim.nw)
        out["well"][k] = np.abs(per_well - q).max() if sim.nw else 0.0
        rhs = b0.copy()
        rhs[:nb] += storage * u[k, :nb]
        rhs[nb:] -= q
        res = a @ u[k + 1] - rhs
        out["linear"][k] = np.linalg.norm(res) / max(np.linalg.norm(rhs), np.finfo(float).tiny)
    return out
