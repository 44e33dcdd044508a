"""Scalar summaries of trajectories: population crossing and decay times."""

import numpy as np


def _first_crossing(times, diff):
    """First time where ``diff`` becomes <= 0, linearly interpolated."""
    t = np.asarray(times, dtype=float)
    d = np.asarray(diff, dtype=float)
    if d[0] <= 0:
        return float(t[0])
    hit = np.flatnonzero(d <= 0)
    if hit.size == 0:
        return np.inf
    i = hit[0]
    return float(t[i - 1] + (t[i] - t[i - 1]) * d[i - 1] / (d[i - 1] - d[i]))


def thermalization_metric(times, populations) -> float:
    """Time at which the highest eigenstate's population drops below the lowest's.

    Parameters
    ----------
    times : array_like, shape (T,)
    populations : array_like, shape (T, N)
        Exciton-basis populations with eigenstates in ascending energy.

    Returns
    -------
    float
        Crossing time in fs, ``inf`` if the populations never cross.
    """
    p = np.asarray(populations, dtype=float)
    return _first_crossing(times, p[:, -1] - p[:, 0])


def decay_time(times, signal, level=np.exp(-1.0)) -> float:
    """First time the envelope ``|signal| / |signal[0]|`` falls below ``level``.

    The envelope is the running maximum of ``|signal|`` taken backwards in
    time, so oscillation zeros of a damped cosine do not count as decay.
    """
    a = np.abs(np.asarray(signal))
    if a[0] == 0:
        raise ValueError("signal vanishes at t = 0")
    envelope = np.maximum.accumulate(a[::-1])[::-1] / a[0]
    return _first_crossing(times, envelope - level)
