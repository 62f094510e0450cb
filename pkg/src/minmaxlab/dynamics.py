"""Mean dynamics: RK4 flow integration, trajectory interpolation, APT deviation."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Union

import numpy as np

from .core import DivergenceError, Trajectory, OVERFLOW_LIMIT
from .problems import Problem


@dataclass
class FlowPath:
    """Sampled orbit of dz/dt = V(z): times from 0, one state per sample."""

    times: np.ndarray
    states: np.ndarray
    h_int: float
    method: str = "rk4"
    problem_label: str = ""

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]

    def radii(self) -> np.ndarray:
        return np.linalg.norm(self.states, axis=1)


def _rk4_step(field, z, h):
    k1 = field(z)
    k2 = field(z + 0.5 * h * k1)
    k3 = field(z + 0.5 * h * k2)
    k4 = field(z + h * k3)
    return z + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def integrate_flow(problem: Problem, z0, T: float, h_int: float = 1e-3,
                   record_every: int = 1, time_reversed: bool = False) -> FlowPath:
    """Classical fixed-step RK4 over [0, T]; the final partial step is shortened."""
    if T <= 0 or h_int <= 0:
        raise ValueError("integrate_flow needs T > 0 and h_int > 0")
    field = problem.field
    if time_reversed:
        base = problem.field
        field = lambda z: -base(z)
    z = np.asarray(z0, dtype=float).copy()
    n_full = int(math.floor(T / h_int + 1e-9))
    rem = T - n_full * h_int
    if rem < 1e-9 * h_int:
        rem = 0.0
    times = [0.0]
    states = [z.copy()]
    t = 0.0
    for i in range(1, n_full + 1):
        z = _rk4_step(field, z, h_int)
        t = i * h_int
        if np.max(np.abs(z)) > OVERFLOW_LIMIT or not np.all(np.isfinite(z)):
            raise DivergenceError(i, z)
        if i % record_every == 0 or (i == n_full and rem == 0.0):
            times.append(t)
            states.append(z.copy())
    if rem > 0.0:
        z = _rk4_step(field, z, rem)
        if not np.all(np.isfinite(z)):
            raise DivergenceError(n_full + 1, z)
        times.append(T)
        states.append(z.copy())
    return FlowPath(times=np.array(times), states=np.array(states), h_int=h_int,
                    problem_label=problem.label)


def flow_from(problem: Problem, start: Union[np.ndarray, FlowPath], t: float,
              h_int: float = 1e-3) -> np.ndarray:
    """State of the flow at time t >= 0 from a point (or along a recorded path).

    For a FlowPath the nearest earlier recorded sample seeds the remaining
    integration, so repeated evaluations reuse the cached steps.
    """
    if t < 0:
        raise ValueError(f"flow time must be >= 0, got {t}")
    if isinstance(start, FlowPath):
        idx = int(np.searchsorted(start.times, t, side="right") - 1)
        idx = max(idx, 0)
        z = start.states[idx].copy()
        t0 = float(start.times[idx])
        if t == t0:
            return z
        return _integrate_to(problem, z, t - t0, h_int)
    z = np.asarray(start, dtype=float).copy()
    if t == 0.0:
        return z
    return _integrate_to(problem, z, t, h_int)


def _integrate_to(problem, z, duration, h_int):
    path = integrate_flow(problem, z, duration, h_int, record_every=10 ** 9)
    return path.final_state


def interpolate(trajectory: Trajectory, t: float) -> np.ndarray:
    """Piecewise-affine evaluation in effective time; exact at the knots."""
    taus = trajectory.effective_times
    if t < taus[0] or t > taus[-1]:
        raise ValueError(f"time {t} outside recorded range [{taus[0]}, {taus[-1]}]")
    idx = int(np.searchsorted(taus, t, side="right") - 1)
    if idx >= len(taus) - 1:
        return trajectory.iterates[-1].copy()
    t0, t1 = taus[idx], taus[idx + 1]
    w = (t - t0) / (t1 - t0)
    return (1.0 - w) * trajectory.iterates[idx] + w * trajectory.iterates[idx + 1]


def apt_deviation(trajectory: Trajectory, problem: Problem, t: float,
                  T_window: float, h_cap: float = 1e-2) -> float:
    """sup_h ||X(t+h) - Phi_h(X(t))|| over a dense grid of h in [0, T_window].

    The grid step is the smallest recorded step inside the window (a finite
    grid makes this a lower bound of the true sup); the flow is integrated
    with substeps of at most h_cap so grid nodes are hit exactly.
    """
    taus = trajectory.effective_times
    if t < taus[0] or t + T_window > taus[-1]:
        raise ValueError(f"window [{t}, {t + T_window}] outside recorded range "
                         f"[{taus[0]}, {taus[-1]}]")
    in_win = (taus >= t) & (taus <= t + T_window)
    steps = trajectory.step_values[in_win]
    steps = steps[steps > 0]
    grid = float(steps.min()) if steps.size else min(h_cap, T_window / 10.0)
    grid = min(grid, T_window)

    z = interpolate(trajectory, t)
    sub = max(1, int(math.ceil(grid / h_cap)))
    h_flow = grid / sub
    worst = 0.0
    h = 0.0
    while True:
        worst = max(worst, float(np.linalg.norm(interpolate(trajectory, t + h) - z)))
        if h >= T_window:
            break
        nxt = min(h + grid, T_window)
        span = nxt - h
        m = max(1, int(round(span / h_flow))) if span >= h_flow else 1
        hh = span / m
        for _ in range(m):
            z = _rk4_step(problem.field, z, hh)
        h = nxt
    return worst
