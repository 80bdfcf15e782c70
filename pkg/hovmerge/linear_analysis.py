"""
Closed-form response of a follower to a slower vehicle cutting in ahead of it.

Linearizing the follow law with no response time gives the characteristic
polynomial s^2 + (alpha + k) s + alpha / h.  Its two real roots fix the time of
peak deceleration, the peak deceleration per unit velocity contrast, and the
recovery time used to release enhanced braking.
"""
import math
from dataclasses import dataclass

import numpy as np
import sympy
from scipy.integrate import solve_ivp


class UnderdampedSpectrumError(ValueError):
    """The follow law has complex roots; the closed forms do not apply."""


@dataclass(frozen=True)
class LinearSpectrum:
    lambda1: float
    lambda2: float
    theta_peak: float
    peak_factor: float
    T_recover: float


def discriminant(p):
    return (p.alpha + p.k) ** 2 - 4 * p.alpha / p.h


def eigenvalues(p):
    """Roots of the follow law, lambda1 on the + branch so that lambda2 <= lambda1 < 0."""
    disc = discriminant(p)
    if disc < 0:
        raise UnderdampedSpectrumError(
            f"(alpha + k)^2 - 4 alpha / h >= 0 violated: discriminant = {disc:.6g}")
    root = math.sqrt(disc)
    return 0.5 * (-(p.alpha + p.k) + root), 0.5 * (-(p.alpha + p.k) - root)


def _peak_time_and_factor(lambda1, lambda2):
    if lambda1 == lambda2:
        # repeated root: limits of the two-root expressions
        theta = -1.0 / lambda1
        return theta, -lambda1 / math.e
    theta = math.log(lambda2 / lambda1) / (lambda1 - lambda2)
    factor = lambda1 * lambda2 / (lambda1 - lambda2) * (math.exp(lambda1 * theta) - math.exp(lambda2 * theta))
    return theta, factor


def peak_deceleration(delta_v, p):
    """
    Largest deceleration of a follower at v_max after a vehicle slower by
    delta_v merges at equilibrium distance ahead of it (response time neglected).

    Returns (deceleration, time of the peak).
    """
    theta, factor = _peak_time_and_factor(*eigenvalues(p))
    return factor * delta_v, theta


def recovery_time(p):
    _, factor = _peak_time_and_factor(*eigenvalues(p))
    return 1.0 / factor


def spectrum(p):
    lambda1, lambda2 = eigenvalues(p)
    theta, factor = _peak_time_and_factor(lambda1, lambda2)
    return LinearSpectrum(lambda1=lambda1, lambda2=lambda2, theta_peak=theta, peak_factor=factor,
                          T_recover=1.0 / factor)


def characteristic_polynomial(p):
    s = sympy.Symbol('s')
    alpha, k, h = (sympy.nsimplify(value) for value in (p.alpha, p.k, p.h))
    return sympy.expand(s ** 2 + (alpha + k) * s + alpha / h), s


def exact_roots(p):
    poly, s = characteristic_polynomial(p)
    return sorted(sympy.solve(poly, s), key=lambda root: sympy.N(sympy.re(root)), reverse=True)


def linear_response_oracle(delta_v, p, dt, t_end=20.0, tau=None, xi=0.0):
    """
    Integrate the unclamped follow law for a follower starting at v_max and
    equilibrium distance behind a lead that holds v_max - delta_v.

    With tau=None the follower has no actuator lag.  Returns (times, accelerations).
    """
    v_lead = p.v_max - delta_v
    t_eval = np.arange(0.0, t_end + 0.5 * dt, dt)

    def desired(spacing, v):
        return (p.alpha / p.h) * (spacing - p.D - p.h * v) + p.k * (v_lead - v)

    if tau is None:
        def rhs(t, y):
            spacing, v = y
            return [v_lead - v, desired(spacing, v)]

        y0 = [p.D + p.h * p.v_max, p.v_max]
    else:
        def rhs(t, y):
            spacing, v, a = y
            return [v_lead - v, a, (desired(spacing, v) - xi * a - a) / tau]

        y0 = [p.D + p.h * p.v_max, p.v_max, 0.0]

    solution = solve_ivp(rhs, (0.0, t_eval[-1]), y0, t_eval=t_eval, method='RK45',
                         rtol=1e-10, atol=1e-12, max_step=max(dt, 1e-2))

    if tau is None:
        accel = desired(solution.y[0], solution.y[1])
    else:
        accel = solution.y[2]
    return solution.t, np.asarray(accel)
