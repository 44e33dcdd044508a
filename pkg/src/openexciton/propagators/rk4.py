"""Fixed-step classical fourth-order Runge-Kutta integration."""

import numpy as np


class PropagationError(RuntimeError):
    """Raised when a trajectory becomes non-finite or diverges."""

    def __init__(self, message, step):
        super().__init__(f"{message} at step {step}")
        self.step = step


def rk4_step(f, y, dt):
    k1 = f(y)
    k2 = f(y + (0.5 * dt) * k1)
    k3 = f(y + (0.5 * dt) * k2)
    k4 = f(y + dt * k3)
    return y + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def n_steps_for(t_end, dt):
    if not dt > 0:
        raise ValueError(f"time step must be positive, got {dt}")
    n = int(round(t_end / dt))
    if not np.isclose(n * dt, t_end, rtol=1e-9, atol=1e-12):
        raise ValueError(f"t_end={t_end} is not a multiple of dt={dt}")
    return n


def integrate(f, y0, dt, n_steps, observe=None, stride=1, check=None, limit=1e8):
    """Propagate ``y0`` for ``n_steps`` RK4 steps.

    Parameters
    ----------
    observe : callable, optional
        ``observe(y)`` is recorded at step 0 and every ``stride`` steps.
    check : callable, optional
        Returns the array used for divergence detection; defaults to ``y``.

    Returns
    -------
    y : final state
    records : list of observations
    """
    y = y0
    records = [] if observe is None else [observe(y)]
    for step in range(1, n_steps + 1):
        y = rk4_step(f, y, dt)
        probe = y if check is None else check(y)
        if not np.all(np.isfinite(probe)) or np.max(np.abs(probe)) > limit:
            raise PropagationError("non-finite or diverging state", step)
        if observe is not None and step % stride == 0:
            records.append(observe(y))
    return y, records
