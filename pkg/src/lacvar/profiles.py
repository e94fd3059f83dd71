"""Radial transition profiles shared by cutoffs and frequency plateaus.

A profile maps t in R to [0, 1]; it equals 1 for t <= 0, 0 for t >= 1 and
is nonincreasing in between.
"""
import numpy as np


def bump_step(t):
    """exp(1 - 1/(1 - t^2)) on (0, 1). C^1 at t = 0, C^inf at t = 1."""
    t = np.asarray(t, dtype=float)
    out = np.where(t <= 0, 1.0, 0.0)
    m = (t > 0) & (t < 1)
    u = t[m]
    out[m] = np.exp(1.0 - 1.0 / (1.0 - u * u))
    return out


def smooth_step(t):
    """C^inf step g(1-t)/(g(1-t)+g(t)) with g(u) = exp(-1/u)."""
    t = np.asarray(t, dtype=float)
    out = np.where(t <= 0, 1.0, 0.0)
    m = (t > 0) & (t < 1)
    u = t[m]
    a = np.exp(-1.0 / (1.0 - u))
    b = np.exp(-1.0 / u)
    out[m] = a / (a + b)
    return out


PROFILES = {"bump": bump_step, "smooth": smooth_step}


def get_profile(name):
    try:
        return PROFILES[name]
    except KeyError:
        raise ValueError(f"unknown profile {name!r}; expected one of {sorted(PROFILES)}") from None


def plateau(r, inner, outer, profile="bump"):
    """1 on [0, inner], 0 on [outer, inf), profile transition in between."""
    r = np.asarray(r, dtype=float)
    return get_profile(profile)((r - inner) / (outer - inner))
