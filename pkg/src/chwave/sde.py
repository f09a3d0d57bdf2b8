"""One-step SDE integrators shared by the scalar and field solvers.

``noise(y, dW)`` must return the already-contracted stochastic increment
sum_i g_i(y) dW_i, linear in ``dW``.
"""

import numpy as np


def heun_step(drift, noise, y, dt, dW):
    """Stratonovich Heun (predictor-corrector trapezoid) step."""
    f0 = drift(y)
    g0 = noise(y, dW)
    pred = y + f0 * dt + g0
    return y + 0.5 * (f0 + drift(pred)) * dt + 0.5 * (g0 + noise(pred, dW))


def euler_maruyama_step(drift, noise, y, dt, dW):
    """Ito Euler-Maruyama step."""
    return y + drift(y) * dt + noise(y, dW)


def rk4_step(drift, y, dt):
    k1 = drift(y)
    k2 = drift(y + 0.5 * dt * k1)
    k3 = drift(y + 0.5 * dt * k2)
    k4 = drift(y + dt * k3)
    return y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def strong_order(dts, errors):
    """Least-squares slope of log(error) against log(dt)."""
    slope, _ = np.polyfit(np.log(dts), np.log(errors), 1)
    return float(slope)
