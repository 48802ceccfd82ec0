"""Integrator, transition and chain-loop kernels.

All routines are written in the subset of Python that numba compiles.
``build_kernels`` instantiates the family twice from the same source: as plain
Python (for targets whose ``value_and_grad`` is an ordinary callable, e.g. the
reservoir posterior) and under ``numba.njit`` (for analytic targets with a
jitted ``value_and_grad``).  Both flavours consume the ``np.random.Generator``
stream identically, so they produce the same chains.

Kernels never mutate their array arguments.
"""

import math
from types import SimpleNamespace

import numba
import numpy as np

HMC, HOROWITZ, SOLHMC = 0, 1, 2
BOUNCE, REJECT = 0, 1
RULE_REFLECT, RULE_ENDPOINT = 0, 1
OK, FAILED, TOO_MANY = 0, 1, 2

MAX_REFLECTIONS = 1000
TIE_TOL = 1e-12
WRAP_TOL = 1e-9
DELTA_MIN = 1e-8
DELTA_MAX = math.pi - 1e-8
ADAPT_EXPONENT = 0.6


def _identity(fn):
    return fn


def build_kernels(jit: bool, metropolis: bool = True) -> SimpleNamespace:
    """Build the kernel family.

    ``metropolis=False`` removes the accept/reject test: every evaluable
    proposal is accepted, even outside the box in reject mode.  It exists only
    so the stationarity checks can be shown to catch a broken acceptance rule.
    """
    deco = numba.njit if jit else _identity

    @deco
    def in_box(x, a):
        for j in range(x.size):
            if abs(x[j]) > a[j]:
                return False
        return True

    @deco
    def map_P(x, p, t):
        return x + t * p, p.copy()

    @deco
    def map_R(x, p, t):
        c = math.cos(t)
        s = math.sin(t)
        return x * c + p * s, p * c - x * s

    @deco
    def kick(p, force, t):
        return p - t * force

    @deco
    def all_finite(v):
        for j in range(v.size):
            if not math.isfinite(v[j]):
                return False
        return True

    @deco
    def energy(x, p, value, cov_inv):
        return value + 0.5 * np.dot(x, np.dot(cov_inv, x)) + 0.5 * np.dot(p, p)

    @deco
    def ou_refresh(p, i_param, rng):
        xi = rng.standard_normal(p.size)
        return p * math.sqrt(1.0 - i_param * i_param) + i_param * xi

    @deco
    def bounce_linear(x, p, t, a):
        # Drift x' = p with reflection of p_j at the faces x_j = +-a_j.
        x = x.copy()
        p = p.copy()
        n = x.size
        remaining = t
        count = 0
        while True:
            tj = np.full(n, np.inf)
            for j in range(n):
                if p[j] > 0.0:
                    tj[j] = max((a[j] - x[j]) / p[j], 0.0)
                elif p[j] < 0.0:
                    tj[j] = max((-a[j] - x[j]) / p[j], 0.0)
            tmin = tj.min()
            if tmin >= remaining:
                x = x + remaining * p
                break
            x = x + tmin * p
            for j in range(n):
                if tj[j] <= tmin + TIE_TOL:
                    x[j] = a[j] if p[j] > 0.0 else -a[j]
                    p[j] = -p[j]
                    count += 1
            remaining -= tmin
            if count > MAX_REFLECTIONS:
                return x, p, count, TOO_MANY
        return np.minimum(np.maximum(x, -a), a), p, count, OK

    @deco
    def rotation_crossings(x, p, a):
        # Earliest exit time of x_j(tau) = x_j cos(tau) + p_j sin(tau) per
        # coordinate, and the face (+1/-1) it exits through.
        n = x.size
        tj = np.full(n, np.inf)
        face = np.zeros(n)
        two_pi = 2.0 * math.pi
        for j in range(n):
            amp = math.hypot(x[j], p[j])
            if amp <= a[j]:
                continue
            if x[j] >= a[j] and p[j] > 0.0:
                tj[j] = 0.0
                face[j] = 1.0
                continue
            if x[j] <= -a[j] and p[j] < 0.0:
                tj[j] = 0.0
                face[j] = -1.0
                continue
            phi = math.atan2(p[j], x[j])
            beta = math.acos(min(a[j] / amp, 1.0))
            t_plus = (phi - beta) % two_pi
            t_minus = (phi + math.pi - beta) % two_pi
            if t_plus > two_pi - WRAP_TOL:
                t_plus = 0.0 if p[j] > 0.0 else np.inf
            if t_minus > two_pi - WRAP_TOL:
                t_minus = 0.0 if p[j] < 0.0 else np.inf
            if t_plus <= t_minus:
                tj[j] = t_plus
                face[j] = 1.0
            else:
                tj[j] = t_minus
                face[j] = -1.0
        return tj, face

    @deco
    def bounce_rotation(x, p, t, a, rule):
        # Rotation x' = p, p' = -x with reflection of p_j at the faces.
        x = x.copy()
        p = p.copy()
        remaining = t
        count = 0
        while True:
            if rule == RULE_ENDPOINT:
                xe, pe = map_R(x, p, remaining)
                if in_box(xe, a):
                    return xe, pe, count, OK
            tj, face = rotation_crossings(x, p, a)
            tmin = tj.min()
            if tmin >= remaining:
                x, p = map_R(x, p, remaining)
                break
            x, p = map_R(x, p, tmin)
            for j in range(x.size):
                if tj[j] <= tmin + TIE_TOL:
                    x[j] = face[j] * a[j]
                    p[j] = -p[j]
                    count += 1
            remaining -= tmin
            if count > MAX_REFLECTIONS:
                return x, p, count, TOO_MANY
        return np.minimum(np.maximum(x, -a), a), p, count, OK

    @deco
    def chi_H(x, p, g, delta, cov, a, bounce, vg):
        # M^{delta/2} P^{delta} M^{delta/2}; M kicks with force x + C grad V.
        p = kick(p, x + np.dot(cov, g), 0.5 * delta)
        nb = 0
        if bounce:
            x, p, nb, status = bounce_linear(x, p, delta, a)
            if status != OK:
                return x, p, np.inf, g, nb, status
        else:
            x, p = map_P(x, p, delta)
        value, g_new = vg(x)
        if not (math.isfinite(value) and all_finite(g_new)):
            return x, p, np.inf, g, nb, FAILED
        p = kick(p, x + np.dot(cov, g_new), 0.5 * delta)
        return x, p, value, g_new, nb, OK

    @deco
    def chi_S(x, p, g, delta, cov, a, bounce, rule, vg):
        # Theta^{delta/2} R^{delta} Theta^{delta/2}; Theta kicks with C grad V.
        p = kick(p, np.dot(cov, g), 0.5 * delta)
        nb = 0
        if bounce:
            x, p, nb, status = bounce_rotation(x, p, delta, a, rule)
            if status != OK:
                return x, p, np.inf, g, nb, status
        else:
            x, p = map_R(x, p, delta)
        value, g_new = vg(x)
        if not (math.isfinite(value) and all_finite(g_new)):
            return x, p, np.inf, g, nb, FAILED
        p = kick(p, np.dot(cov, g_new), 0.5 * delta)
        return x, p, value, g_new, nb, OK

    @deco
    def transition(algo, mode, rule, x, p, value, g, delta, n_inner, i_param,
                   cov, cov_inv, a, vg, rng):
        """One Markov transition.

        Returns ``(x, p, value, grad, accepted, alpha, H, bounces, failed)``
        where ``H`` is the energy of the returned state and ``failed`` is 1 if
        the proposal left the box (reject mode) or could not be evaluated.
        """
        if algo == HMC:
            p0 = rng.standard_normal(x.size)
        else:
            p0 = ou_refresh(p, i_param, rng)
        h0 = energy(x, p0, value, cov_inv)
        bounce = mode == BOUNCE
        x1 = x
        p1 = p0
        v1 = value
        g1 = g
        nb = 0
        status = OK
        for _ in range(n_inner):
            if algo == SOLHMC:
                x1, p1, v1, g1, k, status = chi_S(x1, p1, g1, delta, cov, a, bounce, rule, vg)
            else:
                x1, p1, v1, g1, k, status = chi_H(x1, p1, g1, delta, cov, a, bounce, vg)
            nb += k
            if status != OK:
                break
        u = rng.random()
        failed = 0
        alpha = 0.0
        h1 = np.inf
        if status != OK or (mode == REJECT and not in_box(x1, a)):
            failed = 1
        else:
            h1 = energy(x1, p1, v1, cov_inv)
            dh = h1 - h0
            if dh <= 0.0:
                alpha = 1.0
            elif dh < np.inf:
                alpha = math.exp(-dh)
        if not metropolis and status == OK:
            alpha = 1.0
        if u < alpha:
            return x1, p1, v1, g1, True, alpha, h1, nb, failed
        if algo == HMC:
            return x, p0, value, g, False, alpha, h0, nb, failed
        return x, -p0, value, g, False, alpha, h0, nb, failed

    @deco
    def adapt_rule(mean_alpha, k, delta, target):
        # Robbins-Monro on log(delta), gain k^-0.6.
        log_delta = math.log(delta) + (mean_alpha - target) * k ** (-ADAPT_EXPONENT)
        return min(max(math.exp(log_delta), DELTA_MIN), DELTA_MAX)

    @deco
    def advance(algo, mode, rule, x, p, value, g, delta, n_inner, i_param,
                cov, cov_inv, a, vg, rng, n_steps, adapt, target, window,
                k_adapt, win_sum, win_count, record,
                xs, ps, acc, alphas, energies, bounces):
        oob = 0
        for s in range(n_steps):
            x, p, value, g, accepted, alpha, h, nb, failed = transition(
                algo, mode, rule, x, p, value, g, delta, n_inner, i_param,
                cov, cov_inv, a, vg, rng)
            oob += failed
            if record:
                xs[s] = x
                ps[s] = p
                acc[s] = accepted
                alphas[s] = alpha
                energies[s] = h
                bounces[s] = nb
            if adapt:
                win_sum += alpha
                win_count += 1
                if win_count == window:
                    k_adapt += 1
                    delta = adapt_rule(win_sum / window, k_adapt, delta, target)
                    win_sum = 0.0
                    win_count = 0
        return x, p, value, g, delta, k_adapt, win_sum, win_count, oob

    return SimpleNamespace(
        jit=jit,
        in_box=in_box,
        map_P=map_P,
        map_R=map_R,
        kick=kick,
        energy=energy,
        ou_refresh=ou_refresh,
        bounce_linear=bounce_linear,
        bounce_rotation=bounce_rotation,
        rotation_crossings=rotation_crossings,
        chi_H=chi_H,
        chi_S=chi_S,
        transition=transition,
        adapt_rule=adapt_rule,
        advance=advance,
    )


PY = build_kernels(jit=False)
JIT = build_kernels(jit=True)


def for_target(target) -> SimpleNamespace:
    return JIT if target.compiled else PY
