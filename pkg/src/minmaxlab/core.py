"""Shared domain types: step schedules, noise models, RNG streams, trajectories.

Conventions used throughout the package:

* A state z is a plain float ndarray of length d = d1 + d2, where the first
  d1 coordinates form the minimizing block and the last d2 the maximizing one.
* Iteration indices start at n = 1; the recorded point with index 0 is the
  initial state at effective time 0, and tau_n = sum_{k<=n} gamma_k.
* Randomness flows through counter-based Philox generators derived from
  (seed, run_index) so independent Monte Carlo runs are reproducible and
  order-independent.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

OVERFLOW_LIMIT = 1e15


def derive_rng(seed: int, run_index: int = 0) -> np.random.Generator:
    """Independent, reproducible stream for a given (seed, run_index) pair."""
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(run_index),))
    return np.random.Generator(np.random.Philox(ss))


class ScheduleError(ValueError):
    """Raised on invalid schedule parameters."""


@dataclass(frozen=True)
class ScheduleReport:
    satisfies_prop1_window: bool
    witness_constants: tuple  # (A, B, eps)
    lower_ok: bool
    upper_ok: bool
    zeroth_order_summable: Optional[bool] = None


@dataclass(frozen=True)
class StepSchedule:
    """Step-size sequence gamma_n, optionally paired with a sampling radius delta_n."""

    kind: str  # "power" | "constant" | "explicit"
    A: float = 0.0
    p: float = 1.0
    gamma: float = 0.0
    values: Optional[np.ndarray] = None
    sampling_radius: Optional["StepSchedule"] = None
    # Optional declared witnesses for the step-size window A/n <= gamma_n <= B/sqrt(n log^(1+eps) n)
    witness_A: Optional[float] = None
    witness_B: Optional[float] = None
    witness_eps: Optional[float] = None

    @staticmethod
    def power(A: float, p: float, sampling_radius: Optional["StepSchedule"] = None,
              witness: Optional[tuple] = None) -> "StepSchedule":
        if A <= 0 or p <= 0:
            raise ScheduleError(f"power schedule needs A > 0 and p > 0, got A={A}, p={p}")
        wA, wB, we = witness if witness is not None else (None, None, None)
        return StepSchedule(kind="power", A=float(A), p=float(p),
                            sampling_radius=sampling_radius,
                            witness_A=wA, witness_B=wB, witness_eps=we)

    @staticmethod
    def constant(gamma: float, sampling_radius: Optional["StepSchedule"] = None) -> "StepSchedule":
        if gamma <= 0:
            raise ScheduleError(f"constant schedule needs gamma > 0, got {gamma}")
        return StepSchedule(kind="constant", gamma=float(gamma), sampling_radius=sampling_radius)

    @staticmethod
    def explicit(values: Sequence[float],
                 sampling_radius: Optional["StepSchedule"] = None) -> "StepSchedule":
        arr = np.asarray(values, dtype=float)
        if arr.ndim != 1 or arr.size == 0 or np.any(arr <= 0) or not np.all(np.isfinite(arr)):
            raise ScheduleError("explicit schedule needs a non-empty sequence of positive steps")
        return StepSchedule(kind="explicit", values=arr, sampling_radius=sampling_radius)

    def value(self, n: int) -> float:
        """gamma_n for iteration n >= 1; deterministic."""
        if n < 1:
            raise ScheduleError(f"iteration index must be >= 1, got {n}")
        if self.kind == "power":
            return self.A / float(n) ** self.p
        if self.kind == "constant":
            return self.gamma
        if self.kind == "explicit":
            if n > self.values.size:
                raise ScheduleError(f"explicit schedule has {self.values.size} entries, asked for n={n}")
            return float(self.values[n - 1])
        raise ScheduleError(f"unknown schedule kind {self.kind!r}")

    def gamma_delta(self, n: int) -> tuple:
        """(gamma_n, delta_n or None)."""
        delta = self.sampling_radius.value(n) if self.sampling_radius is not None else None
        return self.value(n), delta

    def prefix(self, horizon: int, start: int = 1) -> np.ndarray:
        """gamma_n for n = start..horizon as an array."""
        if self.kind == "power":
            n = np.arange(start, horizon + 1, dtype=float)
            return self.A / n ** self.p
        if self.kind == "constant":
            return np.full(horizon - start + 1, self.gamma)
        return np.array([self.value(n) for n in range(start, horizon + 1)])


def schedule_value(schedule: StepSchedule, n: int) -> tuple:
    """(gamma_n, delta_n or None) for iteration n >= 1."""
    return schedule.gamma_delta(n)


def _tail_flat(u: np.ndarray) -> bool:
    # A finite scan always admits witnesses; certify only when the bound ratio
    # peaks in the first half of the range (i.e. flattens instead of growing).
    return int(np.argmax(u)) <= (u.size // 2)


def validate_schedule(schedule: StepSchedule, horizon: int) -> ScheduleReport:
    """Numerically check the step-size window over n = 2..horizon.

    Declared witness constants are checked directly; missing ones are derived
    from the scan, in which case the upper (and lower) bounds are certified
    only when their ratios flatten over the scanned range.
    """
    if horizon < 2:
        raise ScheduleError("validate_schedule needs horizon >= 2")
    if schedule.kind == "explicit":
        horizon = min(horizon, schedule.values.size)  # report over the defined range
    n = np.arange(2, horizon + 1, dtype=float)
    g = schedule.prefix(horizon, start=2)
    eps = schedule.witness_eps if schedule.witness_eps is not None else 0.5
    upper_env = np.sqrt(n * np.log(n) ** (1.0 + eps))

    lower_ratio = n * g          # best A is min of this
    upper_ratio = g * upper_env  # best B is max of this

    tol = 1.0 + 1e-12
    if schedule.witness_A is not None:
        A = schedule.witness_A
        lower_ok = bool(np.all(A / n <= g * tol))
    else:
        A = float(lower_ratio.min())
        lower_ok = A > 0 and int(np.argmin(lower_ratio)) <= (lower_ratio.size // 2)
    if schedule.witness_B is not None:
        B = schedule.witness_B
        upper_ok = bool(np.all(g <= (B / upper_env) * tol))
    else:
        B = float(upper_ratio.max())
        upper_ok = _tail_flat(upper_ratio)

    summable = None
    if schedule.sampling_radius is not None:
        d = schedule.sampling_radius.prefix(horizon, start=1)
        gs = schedule.prefix(horizon, start=1)
        partial = np.cumsum(gs ** 2 / d ** 2)
        # Dyadic increments of the partial sums must decay for sum gamma^2/delta^2 < inf.
        ks = []
        k = 2
        while 2 ** k <= horizon:
            ks.append(2 ** k)
            k += 1
        if len(ks) >= 4:
            inc = np.diff([partial[j - 1] for j in [ks[0] // 2] + ks])
            ratios = inc[1:] / np.maximum(inc[:-1], 1e-300)
            summable = bool(np.all(ratios[-3:] <= 0.95))
        else:
            summable = False

    return ScheduleReport(
        satisfies_prop1_window=bool(lower_ok and upper_ok),
        witness_constants=(A, B, eps),
        lower_ok=bool(lower_ok),
        upper_ok=bool(upper_ok),
        zeroth_order_summable=summable,
    )


class NoiseError(ValueError):
    """Raised on invalid noise-model parameters."""


@dataclass(frozen=True)
class NoiseModel:
    """Zero-mean oracle noise: none, gaussian(sigma) or bounded-uniform(K).

    Gaussian total variance sigma^2 is split equally across coordinates.
    Bounded-uniform draws are uniform in the L2 ball of radius K.
    """

    kind: str = "none"
    sigma: float = 0.0
    K: float = 0.0

    @staticmethod
    def none() -> "NoiseModel":
        return NoiseModel(kind="none")

    @staticmethod
    def gaussian(sigma: float) -> "NoiseModel":
        if sigma <= 0:
            raise NoiseError(f"gaussian noise needs sigma > 0, got {sigma}")
        return NoiseModel(kind="gaussian", sigma=float(sigma))

    @staticmethod
    def bounded_uniform(K: float) -> "NoiseModel":
        if K <= 0:
            raise NoiseError(f"bounded-uniform noise needs K > 0, got {K}")
        return NoiseModel(kind="bounded-uniform", K=float(K))

    @property
    def is_none(self) -> bool:
        return self.kind == "none"

    def draw(self, rng: np.random.Generator, dim: int) -> np.ndarray:
        """One noise vector; advances the stream deterministically."""
        return self.draw_many(rng, 1, dim)[0]

    def draw_many(self, rng: np.random.Generator, count: int, dim: int) -> np.ndarray:
        """(count, dim) block of consecutive draws, identical to repeated draw()."""
        if dim < 1:
            raise NoiseError(f"dim must be >= 1, got {dim}")
        if self.kind == "none":
            return np.zeros((count, dim))
        if self.kind == "gaussian":
            return rng.normal(size=(count, dim)) * (self.sigma / math.sqrt(dim))
        if self.kind == "bounded-uniform":
            # direction from normalized gaussians, radius K * u^(1/dim)
            out = np.empty((count, dim))
            for i in range(count):
                v = rng.normal(size=dim)
                u = rng.uniform()
                norm = np.linalg.norm(v)
                if norm == 0.0:
                    out[i] = 0.0
                else:
                    out[i] = v / norm * (self.K * u ** (1.0 / dim))
            return out
        raise NoiseError(f"unknown noise kind {self.kind!r}")


def draw_noise(model: NoiseModel, dim: int, rng: np.random.Generator) -> np.ndarray:
    """Functional alias for NoiseModel.draw."""
    return model.draw(rng, dim)


@dataclass(frozen=True)
class OracleSample:
    """One oracle answer: the realized signal and the queries it consumed."""

    value: np.ndarray
    queries_used: int = 1


class DivergenceError(RuntimeError):
    """A coordinate exceeded the overflow limit during iteration."""

    def __init__(self, iteration: int, point: np.ndarray):
        super().__init__(f"iterate diverged at iteration {iteration} "
                         f"(coordinate magnitude > {OVERFLOW_LIMIT:g})")
        self.iteration = iteration
        self.point = point


@dataclass
class Trajectory:
    """Recorded iterate sequence with exact effective times.

    iterates[0] is the initial point at effective time 0; step_values[k] is
    the gamma used to reach iterates[k] (0 for the initial point), so with
    record_every=1, effective_times[k] - effective_times[k-1] == step_values[k].
    """

    iterates: np.ndarray
    effective_times: np.ndarray
    step_values: np.ndarray
    d1: int
    d2: int
    record_every: int = 1
    max_norm: float = 0.0
    queries_total: int = 0
    indices: Optional[np.ndarray] = None  # iteration index of each recorded point

    def __post_init__(self):
        self.iterates = np.asarray(self.iterates, dtype=float)
        self.effective_times = np.asarray(self.effective_times, dtype=float)
        self.step_values = np.asarray(self.step_values, dtype=float)
        n = len(self.iterates)
        if len(self.effective_times) != n or len(self.step_values) != n:
            raise ValueError("iterates, effective_times and step_values must have equal length")
        if n > 1 and not np.all(np.diff(self.effective_times) > 0):
            raise ValueError("effective times must be strictly increasing")
        if self.indices is None:
            self.indices = np.arange(n)
        else:
            self.indices = np.asarray(self.indices, dtype=int)
            if len(self.indices) != n:
                raise ValueError("indices must match the number of recorded points")

    @property
    def d(self) -> int:
        return self.iterates.shape[1]

    @property
    def final_point(self) -> np.ndarray:
        return self.iterates[-1]

    def radii(self) -> np.ndarray:
        return np.linalg.norm(self.iterates, axis=1)
