"""Limiting-structure detection: critical points, cycles, Abelian-integral
predictions and Monte Carlo attraction/avoidance statistics."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field as dc_field
from typing import List, Optional, Union

import numpy as np

from .core import (DivergenceError, NoiseModel, StepSchedule, Trajectory,
                   derive_rng)
from .dynamics import FlowPath
from .problems import PolynomialPerturbation, Problem
from . import algorithms


# ---------------------------------------------------------------------------
# Abelian integrals for the perturbed rotation x' = -y, y' = x + eps*phi'(y)


def abelian_integral(pert: PolynomialPerturbation, h: float) -> float:
    """Closed form of I(h) = -contour integral of phi' dx over the circle of radius h.

    Only even degrees contribute: I(h) = 4*pi * sum_k a_{2k} k h^{2k} prod_{i<=k} (2i-1)/(2i).
    """
    if h <= 0:
        raise ValueError(f"oval radius must be positive, got {h}")
    total = 0.0
    for deg, a in pert.coefficients.items():
        if deg % 2 == 1:
            continue
        k = deg // 2
        prod = 1.0
        for i in range(1, k + 1):
            prod *= (2.0 * i - 1.0) / (2.0 * i)
        total += a * k * h ** (2 * k) * prod
    return 4.0 * math.pi * total


def abelian_integral_contour(pert: PolynomialPerturbation, h: float,
                             nodes: int = 10_000) -> float:
    """Independent oracle: trapezoid rule for the contour integral on ||z|| = h."""
    theta = np.linspace(0.0, 2.0 * math.pi, nodes, endpoint=False)
    y = h * np.sin(theta)
    dphi = np.zeros_like(y)
    for k, a in pert.coefficients.items():
        dphi += a * k * y ** (k - 1)
    # integrand is periodic; trapezoid == mean * period
    return float(np.mean(dphi * y) * 2.0 * math.pi)


@dataclass(frozen=True)
class CyclePrediction:
    h_star: Optional[float]
    identically_zero: bool = False


def predict_cycle_radius(pert: PolynomialPerturbation,
                         lo: float = 1e-6, hi: float = 1e3,
                         tol: float = 1e-9) -> CyclePrediction:
    """Positive root of I(h) = 0 by sign-change bisection, or none."""
    even = [k for k in pert.coefficients if k % 2 == 0]
    if not even:
        return CyclePrediction(h_star=None, identically_zero=True)

    def f(h):
        return abelian_integral(pert, h)

    grid = np.geomspace(lo, hi, 400)
    vals = np.array([f(h) for h in grid])
    if np.all(vals == 0.0):
        return CyclePrediction(h_star=None, identically_zero=True)
    sign = np.sign(vals)
    idx = None
    for i in range(len(grid) - 1):
        if sign[i] != 0 and sign[i + 1] != 0 and sign[i] != sign[i + 1]:
            idx = i
            break
        if sign[i + 1] == 0:
            return CyclePrediction(h_star=float(grid[i + 1]))
    if idx is None:
        return CyclePrediction(h_star=None)
    a, b = grid[idx], grid[idx + 1]
    fa = f(a)
    while b - a > tol:
        mid = 0.5 * (a + b)
        fm = f(mid)
        if fm == 0.0:
            return CyclePrediction(h_star=mid)
        if (fa < 0) == (fm < 0):
            a, fa = mid, fm
        else:
            b = mid
    return CyclePrediction(h_star=0.5 * (a + b))


# ---------------------------------------------------------------------------
# Critical points


@dataclass(frozen=True)
class CriticalPoint:
    location: np.ndarray
    eigenvalues: np.ndarray
    classification: str  # "stable" | "unstable" | "center"

    def to_json_dict(self) -> dict:
        return {
            "location": [float(v) for v in self.location],
            "eigenvalues": [[lam.real, lam.imag] for lam in self.eigenvalues],
            "classification": self.classification,
        }


def classify_eigenvalues(eigs: np.ndarray) -> str:
    scale = max(1.0, float(np.max(np.abs(eigs))) if eigs.size else 1.0)
    tol = 1e-9 * scale
    re = eigs.real
    if np.max(re) > tol:
        return "unstable"
    if np.max(re) < -tol:
        return "stable"
    return "center"


def find_critical_points(problem: Problem, search_box=(-2.0, 2.0, -2.0, 2.0),
                         grid_n: int = 21, newton_tol: float = 1e-13,
                         max_newton: int = 100, dedupe_tol: float = 1e-6,
                         diagnostics: Optional[list] = None) -> List[CriticalPoint]:
    """Newton iterations seeded on a grid; converged roots deduplicated and classified."""
    if grid_n < 2:
        raise ValueError("grid_n must be >= 2")
    xmin, xmax, ymin, ymax = search_box
    roots: List[np.ndarray] = []
    for xs in np.linspace(xmin, xmax, grid_n):
        for ys in np.linspace(ymin, ymax, grid_n):
            z = np.array([xs, ys], dtype=float)
            ok = True
            for _ in range(max_newton):
                f = problem.field(z)
                try:
                    step = np.linalg.solve(problem.jacobian(z), f)
                except np.linalg.LinAlgError:
                    if diagnostics is not None:
                        diagnostics.append({"seed": (xs, ys), "reason": "singular jacobian"})
                    ok = False
                    break
                z = z - step
                if not np.all(np.isfinite(z)) or np.max(np.abs(z)) > 1e6:
                    ok = False
                    break
                if np.linalg.norm(step) < newton_tol:
                    break
            if not ok or np.linalg.norm(problem.field(z)) > 1e-10:
                continue
            if not (xmin - 1.0 <= z[0] <= xmax + 1.0 and ymin - 1.0 <= z[1] <= ymax + 1.0):
                continue
            if any(np.linalg.norm(z - r) < dedupe_tol for r in roots):
                continue
            roots.append(z)
    out = []
    for r in sorted(roots, key=lambda p: (p[0], p[1])):
        eigs = np.linalg.eigvals(problem.jacobian(r))
        out.append(CriticalPoint(location=r, eigenvalues=eigs,
                                 classification=classify_eigenvalues(eigs)))
    return out


# ---------------------------------------------------------------------------
# Cycle detection via a Poincare section on the positive x half-line


@dataclass(frozen=True)
class CycleDescriptor:
    period: float
    radius_min: float
    radius_mean: float
    radius_max: float
    section_point: np.ndarray
    stability: str  # "attracting" | "repelling" | "undetermined"
    section_radius: float
    center: np.ndarray
    crossings: int

    def to_json_dict(self) -> dict:
        return {
            "period": self.period,
            "radius_min": self.radius_min,
            "radius_mean": self.radius_mean,
            "radius_max": self.radius_max,
            "section_point": [float(v) for v in self.section_point],
            "stability": self.stability,
            "section_radius": self.section_radius,
            "center": [float(v) for v in self.center],
            "crossings": self.crossings,
        }


@dataclass(frozen=True)
class CycleSearch:
    cycle: Optional[CycleDescriptor]
    reason: str = "cycle"  # "cycle" | "no-recurrence" | "radius-disagreement"


def _section_crossings(times, pts, center):
    """Upward crossings of {y = cy, x > cx} with linear refinement and winding filter."""
    rel = pts - center
    x, y = rel[:, 0], rel[:, 1]
    raw = np.nonzero((y[:-1] < 0.0) & (y[1:] >= 0.0) & (x[:-1] > 0.0))[0]
    theta = np.arctan2(y, x)
    cross_t, cross_p = [], []
    prev_idx = None
    for i in raw:
        denom = y[i + 1] - y[i]
        w = 0.0 if denom == 0.0 else -y[i] / denom
        p = pts[i] * (1.0 - w) + pts[i + 1] * w
        t = times[i] * (1.0 - w) + times[i + 1] * w
        if prev_idx is not None:
            # a genuine return must wind once around the center
            dth = np.diff(theta[prev_idx:i + 1])
            dth = np.mod(dth + math.pi, 2.0 * math.pi) - math.pi
            if abs(float(np.sum(dth)) - 2.0 * math.pi) > 0.5 * math.pi:
                prev_idx = i
                cross_t, cross_p = [t], [p]
                continue
        cross_t.append(t)
        cross_p.append(p)
        prev_idx = i
    return cross_t, cross_p


def detect_cycle(path: Union[FlowPath, Trajectory], burn_in: float = 0.5,
                 mode: Optional[str] = None, rel_tol: Optional[float] = None,
                 center: Optional[np.ndarray] = None) -> CycleSearch:
    """Detect a closed orbit from successive positive-x section crossings.

    Declares a cycle when the last three crossing radii agree within rel_tol
    (1e-3 for flows, 5e-2 for stochastic trajectories); the period is the time
    between the last two crossings and stability comes from the contraction
    ratio of successive radius gaps.  When no crossing is found around the
    origin the section is recentered on the tail mean.
    """
    if isinstance(path, FlowPath):
        times, pts = path.times, path.states
        mode = mode or "flow"
    else:
        times, pts = path.effective_times, path.iterates
        mode = mode or "stochastic"
    if rel_tol is None:
        rel_tol = 1e-3 if mode == "flow" else 5e-2
    if not 0.0 <= burn_in < 1.0:
        raise ValueError("burn_in must lie in [0, 1)")
    start = int(len(pts) * burn_in)
    times = np.asarray(times, dtype=float)[start:]
    pts = np.asarray(pts, dtype=float)[start:]
    if len(pts) < 4:
        return CycleSearch(cycle=None, reason="no-recurrence")

    used_center = np.zeros(pts.shape[1]) if center is None else np.asarray(center, float)
    cross_t, cross_p = _section_crossings(times, pts, used_center)
    if len(cross_t) < 3 and center is None:
        tail = pts[len(pts) // 2:]
        used_center = tail.mean(axis=0)
        cross_t, cross_p = _section_crossings(times, pts, used_center)
    if len(cross_t) < 3:
        return CycleSearch(cycle=None, reason="no-recurrence")

    radii = np.array([np.linalg.norm(p - used_center) for p in cross_p])
    last = radii[-3:]
    spread = (last.max() - last.min()) / max(last.mean(), 1e-30)
    if spread > rel_tol:
        return CycleSearch(cycle=None, reason="radius-disagreement")

    period = float(cross_t[-1] - cross_t[-2])
    seg = (times >= cross_t[-2]) & (times <= cross_t[-1])
    seg_r = np.linalg.norm(pts[seg], axis=1)
    if seg_r.size == 0:
        seg_r = np.linalg.norm(np.array(cross_p[-2:]), axis=1)

    # contraction of the return map, from gap ratios over the whole crossing
    # sequence; gaps below the crossing-measurement floor carry no signal
    stability = "undetermined"
    gaps = np.abs(np.diff(radii))
    scale = max(np.abs(radii[-1]), 1e-30)
    floor = max(1e-7, 0.05 * rel_tol) * scale
    sig = gaps > floor
    ratios = [gaps[i + 1] / gaps[i]
              for i in range(len(gaps) - 1) if sig[i] and sig[i + 1]]
    if len(ratios) >= 2:
        med = float(np.median(ratios))
        if med < 0.97:
            stability = "attracting"
        elif med > 1.03:
            stability = "repelling"

    return CycleSearch(cycle=CycleDescriptor(
        period=period,
        radius_min=float(seg_r.min()),
        radius_mean=float(seg_r.mean()),
        radius_max=float(seg_r.max()),
        section_point=np.asarray(cross_p[-1]),
        stability=stability,
        section_radius=float(radii[-1]),
        center=used_center,
        crossings=len(cross_t),
    ))


# ---------------------------------------------------------------------------
# Forsaken annulus report


def forsaken_annulus_check(samples: int = 10_000) -> dict:
    """Radial derivative on the circles r^2 = 4/3 and r^2 = 2, measured from the field.

    Reports measured minima/maxima of (1/2) d(r^2)/dt = <V(z), z> on dense
    circle samples plus a critical-point scan of the annulus; the claimed
    strict signs do not hold pointwise, so the booleans record what holds.
    """
    from .problems import make_forsaken, shell_points

    problem = make_forsaken()
    report = {}
    for name, r2 in (("inner", 4.0 / 3.0), ("outer", 2.0)):
        pts = shell_points(math.sqrt(r2), samples)
        vals = np.array([float(problem.field(p) @ p) for p in pts])
        report[name] = {
            "radius_sq": r2,
            "min": float(vals.min()),
            "max": float(vals.max()),
            "argmin_point": pts[int(np.argmin(vals))],
            "all_positive": bool(np.all(vals > 0.0)),
            "all_negative": bool(np.all(vals < 0.0)),
        }
    pts = find_critical_points(problem, search_box=(-1.6, 1.6, -1.6, 1.6), grid_n=25)
    inside = [p for p in pts
              if 4.0 / 3.0 <= float(p.location @ p.location) <= 2.0]
    report["critical_points_in_annulus"] = [p.to_json_dict() for p in inside]
    report["annulus_empty"] = len(inside) == 0
    return report


# ---------------------------------------------------------------------------
# Monte Carlo attraction / avoidance


@dataclass(frozen=True)
class TargetSet:
    """Ball around a point or an annulus in radius; distance in state space."""

    kind: str  # "point" | "annulus"
    center: np.ndarray = dc_field(default_factory=lambda: np.zeros(2))
    r_min: float = 0.0
    r_max: float = 0.0

    @staticmethod
    def point(center) -> "TargetSet":
        return TargetSet(kind="point", center=np.asarray(center, dtype=float))

    @staticmethod
    def annulus(r_min: float, r_max: float, center=(0.0, 0.0)) -> "TargetSet":
        if not 0.0 <= r_min <= r_max:
            raise ValueError("annulus needs 0 <= r_min <= r_max")
        return TargetSet(kind="annulus", center=np.asarray(center, dtype=float),
                         r_min=float(r_min), r_max=float(r_max))

    def distance(self, pts: np.ndarray) -> np.ndarray:
        rel = np.atleast_2d(pts) - self.center
        r = np.linalg.norm(rel, axis=1)
        if self.kind == "point":
            return r
        below = np.maximum(self.r_min - r, 0.0)
        above = np.maximum(r - self.r_max, 0.0)
        return np.maximum(below, above)

    def to_json_dict(self) -> dict:
        out = {"kind": self.kind, "center": [float(v) for v in self.center]}
        if self.kind == "annulus":
            out.update(r_min=self.r_min, r_max=self.r_max)
        return out


def sample_ball(rng: np.random.Generator, center: np.ndarray, radius: float) -> np.ndarray:
    """Uniform draw from the closed ball; consumes d normals and one uniform."""
    center = np.asarray(center, dtype=float)
    d = center.size
    v = rng.normal(size=d)
    u = rng.uniform()
    norm = np.linalg.norm(v)
    if norm == 0.0:
        return center.copy()
    return center + radius * u ** (1.0 / d) * v / norm


@dataclass
class MonteCarloReport:
    runs: int
    target: TargetSet
    threshold: float
    fraction_converged: float
    terminal_distances: np.ndarray
    n_diverged: int
    config_fingerprint: str

    def to_json_dict(self) -> dict:
        return {
            "runs": self.runs,
            "target": self.target.to_json_dict(),
            "threshold": self.threshold,
            "fraction_converged": self.fraction_converged,
            "n_diverged": self.n_diverged,
            "terminal_distances": [float(v) for v in self.terminal_distances],
            "config_fingerprint": self.config_fingerprint,
        }


def _fingerprint(payload: dict) -> str:
    blob = json.dumps(payload, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


def monte_carlo(scheme_name: str, problem: Problem, init_center, init_radius: float,
                noise: NoiseModel, n_runs: int, horizon: int, schedule: StepSchedule,
                target: TargetSet, threshold: float, seed: int = 0,
                tail_fraction: float = 0.01, scheme_hyper: Optional[dict] = None) -> MonteCarloReport:
    """Independent runs from a ball of initial points; terminal distance is the
    minimum distance to the target over the final tail_fraction of iterates.

    Diverged runs are counted separately and never as converged.  Results are
    deterministic in (seed, n_runs, config) and independent of batching order.
    """
    if n_runs < 1:
        raise ValueError("n_runs must be >= 1")
    init_center = np.asarray(init_center, dtype=float)
    # one stream per run: initial point first, then that run's noise draws
    rngs = [derive_rng(seed, r) for r in range(n_runs)]
    z0s = np.stack([sample_ball(rngs[r], init_center, init_radius)
                    for r in range(n_runs)])
    fingerprint = _fingerprint({
        "scheme": scheme_name, "problem": problem.label, "params": problem.params,
        "init_center": init_center.tolist(), "init_radius": init_radius,
        "noise": (noise.kind, noise.sigma, noise.K), "runs": n_runs,
        "horizon": horizon, "schedule": (schedule.kind, schedule.A, schedule.p, schedule.gamma),
        "target": target.to_json_dict(), "threshold": threshold, "seed": seed,
    })

    dist_fn = target.distance
    if (scheme_name in ("sgda", "seg", "peg") and not scheme_hyper
            and noise.kind in ("none", "gaussian")):
        min_dist, _final, diverged_at = algorithms.batch_tail_distance(
            scheme_name, problem, z0s, schedule, noise, horizon, seed,
            dist_fn, tail_fraction=tail_fraction, rngs=rngs)
        diverged = diverged_at >= 0
    else:
        min_dist = np.full(n_runs, np.inf)
        diverged = np.zeros(n_runs, dtype=bool)
        tail_start = horizon - max(1, int(math.ceil(horizon * tail_fraction))) + 1
        for r in range(n_runs):
            rng = rngs[r]
            scheme = algorithms.make_scheme(scheme_name, **(scheme_hyper or {}))
            try:
                scheme.reset(problem, z0s[r], noise, rng)
                z = z0s[r]
                for n in range(1, horizon + 1):
                    gamma, delta = schedule.gamma_delta(n)
                    out = scheme.step(problem, z, gamma, noise, rng, delta)
                    z = out.next_point
                    if np.max(np.abs(z)) > 1e15 or not np.all(np.isfinite(z)):
                        raise DivergenceError(n, z)
                    if n >= tail_start:
                        min_dist[r] = min(min_dist[r], float(dist_fn(z[None, :])[0]))
            except DivergenceError:
                diverged[r] = True
                min_dist[r] = np.inf

    converged = (~diverged) & (min_dist <= threshold)
    return MonteCarloReport(
        runs=n_runs,
        target=target,
        threshold=threshold,
        fraction_converged=float(np.count_nonzero(converged)) / n_runs,
        terminal_distances=min_dist,
        n_diverged=int(np.count_nonzero(diverged)),
        config_fingerprint=fingerprint,
    )


def radius_series(path: Union[FlowPath, Trajectory]):
    """(times, ||z||) at the recorded samples."""
    if isinstance(path, FlowPath):
        return path.times.copy(), path.radii()
    return path.effective_times.copy(), path.radii()
