"""Release-gate check battery: integrator geometry, invariant measure, non-reversibility, adjoint.

Each suite returns a ``CheckReport`` whose ``lines`` hold one human-readable
result per sub-check.  ``run_suite("all")`` runs everything.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import mpmath
import numpy as np

from . import _kernels as K
from .diagnostics import default_flux_regions, reversibility_flux_test, stationarity_moment_test
from .reservoir import PRESETS, Simulator, build_synthetic_model, generate_synthetic_observations
from .samplers import SamplerConfig, run_chain
from .targets import gaussian_target, tilted_rosenbrock_target, truncated_gaussian_2d, truncated_normal_moments

__all__ = [
    "CheckReport",
    "SUITES",
    "run_suite",
    "integrator_suite",
    "stationarity_suite",
    "reversibility_suite",
    "adjoint_suite",
    "reference_log_likelihood",
]


@dataclass
class CheckReport:
    name: str
    passed: bool = True
    lines: list[str] = field(default_factory=list)
    data: dict = field(default_factory=dict)

    def add(self, label: str, ok: bool, detail: str = ""):
        self.passed &= bool(ok)
        self.lines.append(f"[{'PASS' if ok else 'FAIL'}] {label}" + (f": {detail}" if detail else ""))

    def __str__(self) -> str:
        head = f"{self.name}: {'PASS' if self.passed else 'FAIL'}"
        return "\n".join([head] + ["  " + ln for ln in self.lines])


# ---------------------------------------------------------------------------
# integrators


def _phase_map(kind: str, tm, a, delta, rule=K.RULE_REFLECT):
    kern = K.JIT
    vg, cov = tm.value_and_grad, tm.covariance
    bounce = kind.endswith("bounce")

    def f(z):
        n = z.size // 2
        x, p = np.ascontiguousarray(z[:n]), np.ascontiguousarray(z[n:])
        _, g = vg(x)
        if kind.startswith("chi_S"):
            x1, p1, _, _, nb, status = kern.chi_S(x, p, g, delta, cov, a, bounce, rule, vg)
        else:
            x1, p1, _, _, nb, status = kern.chi_H(x, p, g, delta, cov, a, bounce, vg)
        if status != K.OK:
            raise RuntimeError(f"{kind}: integrator status {status}")
        return np.concatenate([x1, p1]), nb
    return f


def _flip(z):
    n = z.size // 2
    return np.concatenate([z[:n], -z[n:]])


def _jacobian(f, z, h, count):
    """Central-difference Jacobian; ``None`` if a perturbation changes the reflection count."""
    m = z.size
    jac = np.empty((m, m))
    for k in range(m):
        zp, zm = z.copy(), z.copy()
        zp[k] += h
        zm[k] -= h
        fp, cp = f(zp)
        fm, cm = f(zm)
        if cp != count or cm != count:
            return None
        jac[:, k] = (fp - fm) / (2.0 * h)
    return jac


def integrator_suite(n_states: int = 10_000, seed: int = 0, dim: int = 5,
                     jac_h: float = 1e-6) -> CheckReport:
    """Flip-reversibility and unit Jacobian determinant of the four integrators.

    States are drawn on tilted-Rosenbrock targets with random box sizes and
    step lengths; bounce states are stratified into 0, 1 and 2+ reflections.
    Reversibility tolerance is 1e-10 (plain) / 1e-8 (bounce) relative to
    ``max(1, |state|_inf)``; the determinant tolerance is 1e-5.
    """
    rep = CheckReport("integrators")
    rng = np.random.default_rng(seed)
    tm = tilted_rosenbrock_target(a=1.0, dim=dim)
    t0 = time.perf_counter()
    for kind in ("chi_H", "chi_S", "chi_H_bounce", "chi_S_bounce"):
        bounce = kind.endswith("bounce")
        quota = {0: n_states // 3, 1: n_states // 3, 2: n_states - 2 * (n_states // 3)}
        if not bounce:
            quota = {0: n_states}
        worst_rev, worst_det, skipped, done, draws = 0.0, 0.0, 0, 0, 0
        while done < n_states:
            draws += 1
            if draws > 200 * n_states:
                rep.add(f"{kind} state generation", False, "could not fill reflection classes")
                break
            a_box = rng.uniform(0.2, 1.0)
            a = np.full(dim, a_box if bounce else 1e6)
            delta = rng.uniform(0.02, 0.3)
            x = rng.uniform(-a_box, a_box, dim)
            p = rng.standard_normal(dim) * rng.uniform(0.5, 2.0)
            z = np.concatenate([x, p])
            f = _phase_map(kind, tm, a, delta)
            z1, nb = f(z)
            cls = min(nb, 2)
            if quota.get(cls, 0) == 0:
                continue
            z2, _ = f(_flip(z1))
            scale = max(1.0, np.abs(z).max())
            worst_rev = max(worst_rev, np.abs(_flip(z2) - z).max() / scale)
            jac = _jacobian(f, z, jac_h, nb)
            if jac is None:
                skipped += 1
                continue
            worst_det = max(worst_det, abs(np.linalg.det(jac) - 1.0))
            quota[cls] -= 1
            done += 1
        tol = 1e-8 if bounce else 1e-10
        rep.add(f"{kind} flip-reversibility ({n_states} states)", worst_rev < tol,
                f"max error {worst_rev:.2e} (tol {tol:.0e})")
        rep.add(f"{kind} volume preservation", worst_det < 1e-5,
                f"max |det J - 1| = {worst_det:.2e}, {skipped} near-degenerate states resampled")
    # The endpoint-only reflection rule is reported, not gated: it is not
    # reversible whenever the arc leaves and re-enters the box within a step.
    # One dimension: in more, the shortcut needs every coordinate back inside at once.
    tm1 = gaussian_target(1, a=1e6)
    broken = 0
    for _ in range(n_states):
        a_box = rng.uniform(0.2, 1.0)
        a = np.full(1, a_box)
        delta = rng.uniform(0.5, 1.5)
        z = np.array([rng.uniform(-a_box, a_box), rng.standard_normal() * rng.uniform(0.5, 2.0)])
        f = _phase_map("chi_S_bounce", tm1, a, delta, rule=K.RULE_ENDPOINT)
        z1, _ = f(z)
        z2, _ = f(_flip(z1))
        broken += np.abs(_flip(z2) - z).max() > 1e-8 * max(1.0, np.abs(z).max())
    rep.lines.append(f"[INFO] chi_S_bounce with the endpoint rule: {broken} of {n_states} "
                     "states not flip-reversible")
    rep.data["endpoint_rule_failures"] = int(broken)
    rep.data["seconds"] = time.perf_counter() - t0
    return rep


# ---------------------------------------------------------------------------
# invariant measure


KERNEL_GRID = [(alg, mode) for mode in ("bounce", "reject") for alg in ("SOLHMC", "Horowitz", "HMC")]


def truncated_gaussian_chain(algorithm: str, mode: str, n_steps: int, seed: int,
                             delta: float = 0.3, i_param: float = 0.6, kernels=None):
    tm = truncated_gaussian_2d(1.0)
    cfg = SamplerConfig(algorithm=algorithm, boundary_mode=mode, delta=delta, i_param=i_param,
                        n_samples=n_steps, burn_in=1000, seed=seed)
    return run_chain(np.zeros(1), cfg, tm, kernels=kernels)


def stationarity_suite(n_steps: int = 1_000_000, seed: int = 11, threshold: float = 3.0,
                       kernels=None, delta: float = 0.3) -> CheckReport:
    """Moments ``E[x], E[x^2], E[p], E[p^2]`` on the truncated Gaussian (``a = 1``) for all six kernels."""
    rep = CheckReport("stationarity")
    exact = truncated_normal_moments(1.0)
    expected = {"x": 0.0, "x^2": exact["second"], "p": 0.0, "p^2": 1.0}
    for k, (alg, mode) in enumerate(KERNEL_GRID):
        out = truncated_gaussian_chain(alg, mode, n_steps, seed + k, delta=delta, kernels=kernels)
        x, p = out.samples[:, 0], out.momenta[:, 0]
        res = stationarity_moment_test({"x": x, "x^2": x * x, "p": p, "p^2": p * p}, expected,
                                       threshold=threshold)
        zs = ", ".join(f"z[{m}]={z:+.2f}" for m, z in res.z.items())
        rep.add(f"{alg}-{mode}", res.passed,
                f"E[x^2]={res.estimates['x^2']:.5f}, acc={out.acceptance_rate:.3f}, {zs}")
        rep.data[f"{alg}-{mode}"] = res
    return rep


def mutation_suite(n_steps: int = 200_000, seed: int = 5) -> CheckReport:
    """The stationarity battery must fail when the accept/reject test is removed."""
    rep = CheckReport("mutation")
    mutant = K.build_kernels(jit=True, metropolis=False)
    inner = stationarity_suite(n_steps=n_steps, seed=seed, kernels=mutant, threshold=4.0,
                               delta=0.8)
    failed = [ln for ln in inner.lines if ln.startswith("[FAIL]")]
    rep.add("broken acceptance rule is detected", not inner.passed,
            f"{len(failed)} of {len(inner.lines)} kernels flagged")
    return rep


# ---------------------------------------------------------------------------
# non-reversibility


def reversibility_suite(n_steps: int = 1_000_000, seed: int = 3) -> CheckReport:
    """Flux asymmetry: SOL-HMC-bounce must show ``|z| > 5``; HMC position fluxes ``|z| < 4``."""
    rep = CheckReport("reversibility")
    out = truncated_gaussian_chain("SOLHMC", "bounce", n_steps, seed)
    res = reversibility_flux_test(out.samples, out.momenta, default_flux_regions())
    rep.add("SOL-HMC-bounce phase-space flux", abs(res.z) > 5.0,
            f"F={res.flux:+.4e}, z={res.z:+.2f}")
    rep.data["solhmc"] = res
    out = truncated_gaussian_chain("HMC", "bounce", n_steps, seed + 1)
    pairs = {
        "x<0 -> x>0": (lambda x, p: x[:, 0] < 0, lambda x, p: x[:, 0] > 0),
        "x<-0.25 -> x>0.25": (lambda x, p: x[:, 0] < -0.25, lambda x, p: x[:, 0] > 0.25),
    }
    for label, regions in pairs.items():
        res = reversibility_flux_test(out.samples, None, regions)
        rep.add(f"HMC-bounce position flux {label}", abs(res.z) < 4.0,
                f"F={res.flux:+.4e}, z={res.z:+.2f}")
        rep.data[f"hmc {label}"] = res
    return rep


# ---------------------------------------------------------------------------
# adjoint


def reference_log_likelihood(model, obs, params, dps: int = 40):
    """Log-likelihood in ``dps``-digit arithmetic, assembled equation by equation.

    Independent of ``Simulator``: each block and well row is written directly
    from the flux laws and solved with mpmath's LU.  Returns an ``mpf``.
    """
    with mpmath.workdps(dps):
        mpf = mpmath.mpf
        nb, nw = model.n_blocks, model.n_wells
        v, t, j = model.split_parameters(params)
        rg = mpf(model.rho) * mpf(model.g) / mpf(100000)
        dt = mpf(model.dt)
        store = [mpf(b.compressibility) * mpf(x) / dt for b, x in zip(model.blocks, v)]
        a = mpmath.zeros(nb + nw, nb + nw)
        src = [mpf(0)] * (nb + nw)
        for ell in range(nb):
            a[ell, ell] += store[ell]
        for c, tk in zip(model.connections, t):
            tk = mpf(tk)
            for me, other, sign in ((c.a, c.b, 1), (c.b, c.a, -1)):
                # outflow T (P_me - P_other - rho g h_me,other)
                a[me, me] += tk
                a[me, other] -= tk
                src[me] += sign * tk * rg * mpf(c.depth_difference)
        for pf, jk in zip(model.perforations, j):
            jk, w = mpf(jk), nb + pf.well
            hh = rg * mpf(pf.depth_difference)
            a[pf.block, pf.block] += jk
            a[pf.block, w] -= jk
            src[pf.block] += jk * hh
            # well row: sum_l J (P_l - Pw - rho g h) = q_w
            a[w, pf.block] -= jk
            a[w, w] += jk
            src[w] -= jk * hh
        rates = model.rates()
        states = [[mpf(b.initial_pressure) for b in model.blocks] + [mpmath.nan] * nw]
        for k in range(model.n_steps):
            rhs = mpmath.matrix([src[i] + (store[i] * states[-1][i] if i < nb else -mpf(rates[k, i - nb]))
                                 for i in range(nb + nw)])
            sol = mpmath.lu_solve(a, rhs)
            states.append([sol[i] for i in range(nb + nw)])
        total = mpf(0)
        for pt in obs.points:
            col = pt.id if pt.kind == "block" else nb + pt.id
            r = (states[pt.step][col] - mpf(pt.value)) / mpf(pt.sigma)
            total += r * r
        return -total / 2


def adjoint_fd_errors(model, obs, params, rel_h: float = 1e-6, dps: int = 40):
    """Adjoint gradient, extended-precision central differences and their relative errors."""
    params = np.asarray(params, dtype=float)
    _, grad = Simulator(model).log_likelihood_and_gradient(obs, params)
    fd = np.empty_like(grad)
    with mpmath.workdps(dps):
        for k in range(params.size):
            h = mpmath.mpf(rel_h) * mpmath.mpf(params[k])
            up = [mpmath.mpf(x) for x in params]
            dn = list(up)
            up[k] += h
            dn[k] -= h
            diff = (reference_log_likelihood(model, obs, up, dps)
                    - reference_log_likelihood(model, obs, dn, dps)) / (2 * h)
            fd[k] = float(diff)
    err = np.abs(grad - fd) / np.maximum(np.abs(fd), np.finfo(float).tiny)
    return grad, fd, err


def adjoint_suite(seed: int = 0, noise_seed: int = 1) -> CheckReport:
    """Adjoint gradient vs central differences (``h = 1e-6`` relative) on the 5-block desk model."""
    rep = CheckReport("adjoint")
    model = build_synthetic_model(PRESETS["desk"].__class__(**{**PRESETS["desk"].to_dict(),
                                                               "seed": seed}))
    obs = generate_synthetic_observations(model, noise_seed=noise_seed)
    grad, fd, err = adjoint_fd_errors(model, obs, model.parameters())
    rep.add(f"adjoint vs finite differences ({grad.size} components)", bool(np.all(err < 1e-5)),
            f"max relative error {err.max():.2e}")
    rep.data.update(grad=grad, fd=fd, err=err)
    return rep


SUITES = {
    "integrators": integrator_suite,
    "stationarity": stationarity_suite,
    "mutation": mutation_suite,
    "reversibility": reversibility_suite,
    "adjoint": adjoint_suite,
}


def run_suite(name: str, **kwargs) -> list[CheckReport]:
    if name == "all":
        return [fn() for fn in SUITES.values()]
    if name not in SUITES:
        raise ValueError(f"unknown suite {name!r}; choose from {sorted(SUITES) + ['all']}")
    return [SUITES[name](**kwargs)]
