"""Generalized Robbins-Monro schemes with a uniform step interface.

Every scheme produces a StepOutcome whose signal satisfies
next_point == z + gamma_eff * signal exactly, where gamma_eff is the
schedule step scaled by the scheme's time_scale (alpha for averaged
wrappers, 1 otherwise).  Oracle queries are accounted per step: SGDA,
steady-state PEG and SPSA use one, SEG uses two, PPM is implicit and
uses the exact field.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import Callable, Optional

import numpy as np

from .core import (DivergenceError, NoiseModel, StepSchedule, Trajectory,
                   OVERFLOW_LIMIT, derive_rng)
from .problems import Problem, sfo_query, spsa_query


@dataclass
class StepOutcome:
    """One scheme step: the new point, the realized signal and accounting."""

    next_point: np.ndarray
    signal: np.ndarray
    bias_estimate: Optional[np.ndarray] = None
    queries_used: int = 0
    extras: dict = dc_field(default_factory=dict)


class SchemeError(RuntimeError):
    """Raised on scheme misconfiguration or inner-solver failure."""


class Scheme:
    """Base class; one instance drives one trajectory."""

    name = "scheme"
    time_scale = 1.0

    def reset(self, problem: Problem, z0: np.ndarray, noise: NoiseModel,
              rng: np.random.Generator) -> int:
        """Initialize internal state; returns bootstrap queries consumed."""
        return 0

    def step(self, problem: Problem, z: np.ndarray, gamma: float,
             noise: NoiseModel, rng: np.random.Generator,
             delta: Optional[float] = None) -> StepOutcome:
        raise NotImplementedError


class SGDA(Scheme):
    """Simultaneous stochastic gradient descent/ascent: z+ = z + gamma * sfo(z)."""

    name = "sgda"

    def step(self, problem, z, gamma, noise, rng, delta=None):
        s = sfo_query(problem, z, noise, rng)
        return StepOutcome(next_point=z + gamma * s.value, signal=s.value,
                           bias_estimate=np.zeros(problem.d), queries_used=1)


class PPM(Scheme):
    """Implicit proximal point step z+ = z + gamma * V(z+), solved to tolerance.

    Affine fields (constant Jacobian) are solved directly; otherwise a
    fixed-point iteration runs to `solver_tol` within `max_inner` iterations.
    """

    name = "ppm"

    def __init__(self, solver_tol: float = 1e-12, max_inner: int = 1000):
        self.solver_tol = solver_tol
        self.max_inner = max_inner

    def _solve(self, problem, z, gamma):
        if problem.jacobian_constant:
            A = problem.jacobian(z)
            c = problem.field(np.zeros(problem.d))
            w = np.linalg.solve(np.eye(problem.d) - gamma * A, z + gamma * c)
            return w
        w = z + gamma * problem.field(z)
        for _ in range(self.max_inner):
            w_new = z + gamma * problem.field(w)
            if np.linalg.norm(w_new - w) <= self.solver_tol:
                return w_new
            w = w_new
        raise SchemeError(f"PPM inner solver did not reach tol {self.solver_tol:g} "
                          f"within {self.max_inner} iterations")

    def step(self, problem, z, gamma, noise, rng, delta=None):
        w = self._solve(problem, z, gamma)
        signal = problem.field(w)
        # recompose so the signal identity is exact; the residual of the
        # returned point is <= gamma*L*solver_tol on Lipschitz regions
        nxt = z + gamma * signal
        return StepOutcome(next_point=nxt, signal=signal,
                           bias_estimate=signal - problem.field(z), queries_used=0)


class SEG(Scheme):
    """Stochastic extra-gradient: lead query then update query (two per step)."""

    name = "seg"

    def step(self, problem, z, gamma, noise, rng, delta=None):
        s1 = sfo_query(problem, z, noise, rng)
        lead = z + gamma * s1.value
        s2 = sfo_query(problem, lead, noise, rng)
        bias = problem.field(lead) - problem.field(z)
        return StepOutcome(next_point=z + gamma * s2.value, signal=s2.value,
                           bias_estimate=bias, queries_used=2,
                           extras={"lead": lead})


class PEG(Scheme):
    """Optimistic / Popov extra-gradient: one fresh query per step.

    The first iteration issues one extra bootstrap query at z0 to initialize
    the carried signal.
    """

    name = "peg"

    def __init__(self):
        self.carried: Optional[np.ndarray] = None

    def reset(self, problem, z0, noise, rng):
        self.carried = sfo_query(problem, z0, noise, rng).value
        return 1

    def step(self, problem, z, gamma, noise, rng, delta=None):
        if self.carried is None:
            self.reset(problem, z, noise, rng)
        lead = z + gamma * self.carried
        s = sfo_query(problem, lead, noise, rng)
        self.carried = s.value
        bias = problem.field(lead) - problem.field(z)
        return StepOutcome(next_point=z + gamma * s.value, signal=s.value,
                           bias_estimate=bias, queries_used=1,
                           extras={"lead": lead})


class SPSA(Scheme):
    """Zeroth-order scheme driven by the signed-basis single-evaluation estimator."""

    name = "spsa"

    def step(self, problem, z, gamma, noise, rng, delta=None):
        if delta is None:
            raise SchemeError("SPSA needs a sampling-radius schedule (delta_n)")
        s = spsa_query(problem, z, delta, rng)
        return StepOutcome(next_point=z + gamma * s.value, signal=s.value,
                           queries_used=1)


def second_order_field(problem: Problem, z: np.ndarray, kind: str,
                       lam: float = 0.0) -> np.ndarray:
    """Driving vector field of the second-order methods.

    HD:   -(hess f) grad f   (descent on ||grad f||^2 / 2)
    ConO: (I - lam*J) V
    SGA:  (I - lam*(J - J^T)/2) V
    """
    if kind == "hd":
        if problem.hessian_objective is None:
            raise SchemeError(f"problem {problem.label!r} provides no objective Hessian; "
                              "HD is unsupported")
        H = problem.hessian_objective(z)
        signs = problem.min_block_signs()
        grad = signs * problem.field(z)  # field = (-grad_x f, grad_y f) = signs * grad f
        return -(H @ grad)
    J = problem.jacobian(z)
    V = problem.field(z)
    if kind == "cono":
        return (np.eye(problem.d) - lam * J) @ V
    if kind == "sga":
        A = 0.5 * (J - J.T)
        return (np.eye(problem.d) - lam * A) @ V
    raise SchemeError(f"unknown second-order kind {kind!r}")


class SecondOrder(Scheme):
    """RM scheme on a second-order driving field, optionally with product noise."""

    def __init__(self, kind: str, lam: float = 0.0):
        if kind not in ("hd", "sga", "cono"):
            raise SchemeError(f"unknown second-order kind {kind!r}")
        self.kind = kind
        self.lam = lam
        self.name = kind

    def step(self, problem, z, gamma, noise, rng, delta=None):
        v = second_order_field(problem, z, self.kind, self.lam)
        v = v + noise.draw(rng, problem.d)
        return StepOutcome(next_point=z + gamma * v, signal=v, queries_used=1)


class Adam(Scheme):
    """Adam driven by the SFO signal; extra=True mirrors ExtraAdam.

    The schedule value plays the role of the learning rate eta_n; PyTorch
    defaults are beta1=0.9, beta2=0.999, stabilizer 1e-8.
    """

    name = "adam"

    def __init__(self, beta1: float = 0.9, beta2: float = 0.999,
                 stabilizer: float = 1e-8, extra: bool = False):
        if not (0.0 <= beta1 < 1.0 and 0.0 <= beta2 < 1.0):
            raise SchemeError(f"Adam needs 0 <= beta1, beta2 < 1, got {beta1}, {beta2}")
        self.beta1, self.beta2, self.stab = beta1, beta2, stabilizer
        self.extra = extra
        if extra:
            self.name = "extraadam"
        self.m: Optional[np.ndarray] = None
        self.v: Optional[np.ndarray] = None
        self.t = 0

    def reset(self, problem, z0, noise, rng):
        self.m = np.zeros(problem.d)
        self.v = np.zeros(problem.d)
        self.t = 0
        return 0

    def _update_moments(self, g):
        self.t += 1
        self.m = self.beta1 * self.m + (1 - self.beta1) * g
        self.v = self.beta2 * self.v + (1 - self.beta2) * g * g

    def _direction(self):
        mh = self.m / (1 - self.beta1 ** self.t)
        vh = self.v / (1 - self.beta2 ** self.t)
        return mh / (np.sqrt(vh) + self.stab)

    def step(self, problem, z, gamma, noise, rng, delta=None):
        if self.m is None:
            self.reset(problem, z, noise, rng)
        queries = 1
        g = sfo_query(problem, z, noise, rng).value
        self._update_moments(g)
        if self.extra:
            lead = z + gamma * self._direction()
            g2 = sfo_query(problem, lead, noise, rng).value
            self._update_moments(g2)
            queries = 2
        direction = self._direction()
        return StepOutcome(next_point=z + gamma * direction, signal=direction,
                           queries_used=queries)


class AveragedScheme(Scheme):
    """alpha-averaged wrapper: z+ = alpha * base_step(z) + (1 - alpha) * z.

    Equals z + alpha*gamma*signal exactly, so it is the base RM scheme run
    with step alpha*gamma; effective times advance by alpha*gamma.
    """

    def __init__(self, base: Scheme, alpha: float):
        if not 0.0 < alpha < 1.0:
            raise SchemeError(f"averaging weight must satisfy 0 < alpha < 1, got {alpha}")
        self.base = base
        self.alpha = alpha
        self.name = f"averaged({alpha})-{base.name}"

    @property
    def time_scale(self):
        return self.alpha * self.base.time_scale

    def reset(self, problem, z0, noise, rng):
        return self.base.reset(problem, z0, noise, rng)

    def step(self, problem, z, gamma, noise, rng, delta=None):
        out = self.base.step(problem, z, gamma, noise, rng, delta)
        nxt = self.alpha * out.next_point + (1.0 - self.alpha) * z
        return StepOutcome(next_point=nxt, signal=out.signal,
                           bias_estimate=out.bias_estimate,
                           queries_used=out.queries_used,
                           extras={"base_next": out.next_point})


class AlternatingScheme(Scheme):
    """(k1, k2) alternating wrapper: k1 min-block updates, then k2 max-block updates.

    Each sub-update runs the base rule at the current point with fresh oracle
    draws and applies only its own block; gamma stays fixed within the macro
    iteration and n advances once.  For (1, 1) the outcome satisfies the exact
    decomposition z+ = z + gamma*(V(z) + e + correction) with
    correction = (0, V_y(x+, y) - V_y(x, y)) and e the per-block query errors.
    """

    def __init__(self, base: Scheme, k1: int = 1, k2: int = 1):
        if k1 < 1 or k2 < 1:
            raise SchemeError(f"alternating counts must be >= 1, got ({k1}, {k2})")
        self.base = base
        self.k1, self.k2 = int(k1), int(k2)
        self.name = f"alternating({k1},{k2})-{base.name}"

    def reset(self, problem, z0, noise, rng):
        return self.base.reset(problem, z0, noise, rng)

    def step(self, problem, z, gamma, noise, rng, delta=None):
        d1 = problem.d1
        cur = z.copy()
        queries = 0
        block_signals = []
        block_points = []
        biases = []
        for block, count in ((0, self.k1), (1, self.k2)):
            sl = slice(0, d1) if block == 0 else slice(d1, problem.d)
            for _ in range(count):
                if sl.start == sl.stop:
                    continue  # empty block (pure descent problems)
                out = self.base.step(problem, cur, gamma, noise, rng, delta)
                block_points.append(cur.copy())
                block_signals.append(out.signal.copy())
                biases.append(None if out.bias_estimate is None else out.bias_estimate.copy())
                nxt = cur.copy()
                nxt[sl] = cur[sl] + gamma * out.signal[sl]
                cur = nxt
                queries += out.queries_used
        total_signal = (cur - z) / gamma
        bias = None
        if self.k1 == 1 and self.k2 == 1 and len(block_points) == 2:
            base_bias = np.zeros(problem.d)
            if biases[0] is not None and biases[1] is not None:
                base_bias[:d1] = biases[0][:d1]
                base_bias[d1:] = biases[1][d1:]
            corr = np.zeros(problem.d)
            corr[d1:] = problem.field(block_points[1])[d1:] - problem.field(z)[d1:]
            bias = base_bias + corr
        return StepOutcome(next_point=cur, signal=total_signal,
                           bias_estimate=bias, queries_used=queries,
                           extras={"block_points": block_points,
                                   "block_signals": block_signals})


def wrap_averaged(scheme: Scheme, alpha: float) -> Scheme:
    return AveragedScheme(scheme, alpha)


def wrap_alternating(scheme: Scheme, k1: int, k2: int) -> Scheme:
    return AlternatingScheme(scheme, k1, k2)


_FIRST_ORDER = {"sgda": SGDA, "seg": SEG, "peg": PEG}


def make_scheme(name: str, **hyper) -> Scheme:
    """Scheme factory used by configs; wrapper handling lives in experiments."""
    key = name.lower()
    if key in _FIRST_ORDER:
        return _FIRST_ORDER[key]()
    if key in ("og", "optimistic"):
        return PEG()
    if key == "ppm":
        return PPM(solver_tol=hyper.pop("solver_tol", 1e-12),
                   max_inner=hyper.pop("max_inner", 1000))
    if key == "spsa":
        return SPSA()
    if key in ("hd", "sga", "cono"):
        return SecondOrder(key, lam=hyper.pop("lam", 0.0 if key == "hd" else 0.2))
    if key == "adam":
        return Adam(beta1=hyper.pop("beta1", 0.9), beta2=hyper.pop("beta2", 0.999),
                    stabilizer=hyper.pop("stabilizer", 1e-8), extra=False)
    if key == "extraadam":
        return Adam(beta1=hyper.pop("beta1", 0.9), beta2=hyper.pop("beta2", 0.999),
                    stabilizer=hyper.pop("stabilizer", 1e-8), extra=True)
    raise SchemeError(f"unknown scheme {name!r}")


def run(scheme: Scheme, problem: Problem, z0, schedule: StepSchedule,
        noise: NoiseModel, horizon: int, record_every: int = 1,
        seed: int = 0, run_index: int = 0,
        rng: Optional[np.random.Generator] = None) -> Trajectory:
    """Iterate the scheme for `horizon` steps, recording every record_every-th point.

    Raises DivergenceError when a coordinate magnitude exceeds 1e15.
    """
    if horizon < 1:
        raise ValueError(f"horizon must be >= 1, got {horizon}")
    if rng is None:
        rng = derive_rng(seed, run_index)
    z = np.asarray(z0, dtype=float).copy()
    if z.shape != (problem.d,) or not np.all(np.isfinite(z)):
        raise ValueError(f"z0 must be a finite vector of dimension {problem.d}")
    queries = scheme.reset(problem, z, noise, rng)
    pts = [z.copy()]
    taus = [0.0]
    steps = [0.0]
    idx = [0]
    tau = 0.0
    max_norm = float(np.linalg.norm(z))
    scale = scheme.time_scale
    for n in range(1, horizon + 1):
        gamma, delta = schedule.gamma_delta(n)
        out = scheme.step(problem, z, gamma, noise, rng, delta)
        z = out.next_point
        queries += out.queries_used
        tau += scale * gamma
        if np.max(np.abs(z)) > OVERFLOW_LIMIT or not np.all(np.isfinite(z)):
            raise DivergenceError(n, z)
        max_norm = max(max_norm, float(np.linalg.norm(z)))
        if n % record_every == 0 or n == horizon:
            pts.append(z.copy())
            taus.append(tau)
            steps.append(scale * gamma)
            idx.append(n)
    return Trajectory(iterates=np.array(pts), effective_times=np.array(taus),
                      step_values=np.array(steps), d1=problem.d1, d2=problem.d2,
                      record_every=record_every, max_norm=max_norm,
                      queries_total=queries, indices=np.array(idx))


def batch_tail_distance(scheme_name: str, problem: Problem, z0s: np.ndarray,
                        schedule: StepSchedule, noise: NoiseModel, horizon: int,
                        seed: int, distance_fn: Callable[[np.ndarray], np.ndarray],
                        tail_fraction: float = 0.01, chunk: int = 2048,
                        rngs: Optional[list] = None):
    """Vectorized independent runs of an explicit first-order scheme.

    Per-run draws replicate what sequential run(seed, run_index=r) would
    produce, so results are independent of batching.  Pass `rngs` when the
    per-run streams were already consumed (e.g. to sample initial points).
    Returns (min tail distances, final points, diverged_at with -1 for none).
    """
    if scheme_name not in ("sgda", "seg", "peg"):
        raise SchemeError(f"batch runner supports sgda/seg/peg, not {scheme_name!r}")
    z = np.array(z0s, dtype=float)
    R, d = z.shape
    q_per = {"sgda": 1, "seg": 2, "peg": 1}[scheme_name]
    if rngs is None:
        rngs = [derive_rng(seed, r) for r in range(R)]

    fb = _batch_field(problem)
    carried = fb(z) if scheme_name == "peg" else None
    if scheme_name == "peg" and not noise.is_none:
        boot = np.stack([noise.draw(rngs[r], d) for r in range(R)])
        carried = carried + boot

    tail_start = horizon - max(1, int(math.ceil(horizon * tail_fraction))) + 1
    min_dist = np.full(R, np.inf)
    final = z.copy()
    diverged_at = np.full(R, -1, dtype=int)
    alive = np.ones(R, dtype=bool)

    n = 1
    while n <= horizon:
        m = min(chunk, horizon - n + 1)
        if noise.is_none:
            draws = None
        else:
            draws = np.stack([noise.draw_many(rngs[r], m * q_per, d) for r in range(R)])
            draws = draws.reshape(R, m, q_per, d)
        for j in range(m):
            step_n = n + j
            gamma = schedule.value(step_n)
            if scheme_name == "sgda":
                v = fb(z)
                if draws is not None:
                    v = v + draws[:, j, 0, :]
                z = z + gamma * v
            elif scheme_name == "seg":
                v1 = fb(z)
                if draws is not None:
                    v1 = v1 + draws[:, j, 0, :]
                lead = z + gamma * v1
                v2 = fb(lead)
                if draws is not None:
                    v2 = v2 + draws[:, j, 1, :]
                z = z + gamma * v2
            else:  # peg
                lead = z + gamma * carried
                v = fb(lead)
                if draws is not None:
                    v = v + draws[:, j, 0, :]
                carried = v
                z = z + gamma * v
            bad = alive & (np.max(np.abs(z), axis=1) > OVERFLOW_LIMIT)
            bad |= alive & ~np.all(np.isfinite(z), axis=1)
            if np.any(bad):
                diverged_at[bad] = step_n
                alive &= ~bad
                z[~alive & (diverged_at == step_n)] = np.nan
            if step_n >= tail_start:
                dist = distance_fn(z)
                ok = alive & np.isfinite(dist)
                min_dist[ok] = np.minimum(min_dist[ok], dist[ok])
            final[alive] = z[alive]
        n += m
    return min_dist, final, diverged_at


def _batch_field(problem: Problem) -> Callable[[np.ndarray], np.ndarray]:
    """Row-wise field evaluation over an (R, d) array."""
    fb = problem.params.get("field_batch")
    if callable(fb):
        return fb
    label = problem.label
    if label == "bilinear":
        return lambda Z: np.stack([-Z[:, 1], Z[:, 0]], axis=1)
    if label == "almost-bilinear":
        eps = problem.params["epsilon"]
        coeffs = {int(k): float(v) for k, v in problem.params["perturbation"].items()}

        def field_ab(Z):
            y = Z[:, 1]
            dphi = np.zeros_like(y)
            for k, a in coeffs.items():
                dphi += a * k * y ** (k - 1)
            return np.stack([-y, Z[:, 0] + eps * dphi], axis=1)
        return field_ab
    if label == "forsaken":
        def field_f(Z):
            x, y = Z[:, 0], Z[:, 1]
            return np.stack([-(y - 0.5) - 0.5 * x + 2 * x ** 3 - x ** 5,
                             x - 0.5 * y + 2 * y ** 3 - y ** 5], axis=1)
        return field_f
    if label == "gradient-well":
        def field_g(Z):
            r2 = np.sum(Z * Z, axis=1, keepdims=True)
            return -(r2 - 1.0) * Z
        return field_g
    field = problem.field
    return lambda Z: np.apply_along_axis(field, 1, Z)
