"""Problem zoo: objectives, min-max fields V = (-grad_x f, grad_y f), Jacobians, oracles.

Every problem exposes the analytic field and Jacobian used by the schemes and
the flow integrator, plus the scalar objective needed by zeroth-order and
Hamiltonian-descent style methods.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import Callable, Dict, Optional

import numpy as np

from .core import NoiseModel, OracleSample


@dataclass(frozen=True)
class PolynomialPerturbation:
    """phi(y) = sum_k a_k y^k with finitely many nonzero coefficients (k >= 1)."""

    coefficients: Dict[int, float]

    def __post_init__(self):
        clean = {int(k): float(v) for k, v in self.coefficients.items() if v != 0.0}
        if any(k < 1 for k in clean):
            raise ValueError("perturbation degrees must be >= 1")
        object.__setattr__(self, "coefficients", clean)

    @staticmethod
    def default() -> "PolynomialPerturbation":
        """The running example phi(y) = y^2/2 - y^4/4."""
        return PolynomialPerturbation({2: 0.5, 4: -0.25})

    def phi(self, y: float) -> float:
        return sum(a * y ** k for k, a in self.coefficients.items())

    def dphi(self, y: float) -> float:
        return sum(a * k * y ** (k - 1) for k, a in self.coefficients.items())

    def d2phi(self, y: float) -> float:
        return sum(a * k * (k - 1) * y ** (k - 2) for k, a in self.coefficients.items() if k >= 2)

    def to_degree_map(self) -> Dict[str, float]:
        """Serialized form: degree -> coefficient."""
        return {str(k): v for k, v in sorted(self.coefficients.items())}


@dataclass(frozen=True)
class Problem:
    """A min-max objective with its field, Jacobian and optional extras."""

    label: str
    d1: int
    d2: int
    objective: Callable[[np.ndarray], float]
    field: Callable[[np.ndarray], np.ndarray]
    jacobian: Callable[[np.ndarray], np.ndarray]
    hessian_objective: Optional[Callable[[np.ndarray], np.ndarray]] = None
    jacobian_constant: bool = False
    params: dict = dc_field(default_factory=dict)

    @property
    def d(self) -> int:
        return self.d1 + self.d2

    def min_block_signs(self) -> np.ndarray:
        """Per-coordinate sign for zeroth-order estimators: -1 on the min block, +1 on the max block."""
        return np.concatenate([-np.ones(self.d1), np.ones(self.d2)])


def make_bilinear() -> Problem:
    """f(x, y) = x*y; V(x, y) = (-y, x); the unique critical point is the origin."""

    def objective(z):
        return float(z[0] * z[1])

    def field(z):
        return np.array([-z[1], z[0]])

    J = np.array([[0.0, -1.0], [1.0, 0.0]])
    H = np.array([[0.0, 1.0], [1.0, 0.0]])
    return Problem(label="bilinear", d1=1, d2=1, objective=objective, field=field,
                   jacobian=lambda z: J, hessian_objective=lambda z: H,
                   jacobian_constant=True)


def make_almost_bilinear(pert: Optional[PolynomialPerturbation] = None,
                         epsilon: float = 0.01) -> Problem:
    """f(x, y) = x*y + eps*phi(y); V(x, y) = (-y, x + eps*phi'(y))."""
    if pert is None:
        pert = PolynomialPerturbation.default()
    eps = float(epsilon)

    def objective(z):
        return float(z[0] * z[1] + eps * pert.phi(z[1]))

    def field(z):
        return np.array([-z[1], z[0] + eps * pert.dphi(z[1])])

    def jacobian(z):
        return np.array([[0.0, -1.0], [1.0, eps * pert.d2phi(z[1])]])

    def hessian(z):
        d2 = sum(a * k * (k - 1) * z[1] ** (k - 2)
                 for k, a in pert.coefficients.items() if k >= 2)
        return np.array([[0.0, 1.0], [1.0, eps * d2]])

    return Problem(label="almost-bilinear", d1=1, d2=1, objective=objective,
                   field=field, jacobian=jacobian, hessian_objective=hessian,
                   params={"epsilon": eps, "perturbation": pert.to_degree_map()})


def _psi(t: float) -> float:
    return t * t / 4.0 - t ** 4 / 2.0 + t ** 6 / 6.0


def _dpsi(t: float) -> float:
    return t / 2.0 - 2.0 * t ** 3 + t ** 5


def _d2psi(t: float) -> float:
    return 0.5 - 6.0 * t * t + 5.0 * t ** 4


def make_forsaken() -> Problem:
    """The forsaken-solution example.

    V(x, y) = (-(y - 0.5) - x/2 + 2x^3 - x^5, x - y/2 + 2y^3 - y^5), which is
    the min-max field of f(x, y) = x*(y - 0.5) + psi(x) - psi(y) with
    psi(t) = t^2/4 - t^4/2 + t^6/6.
    """

    def objective(z):
        x, y = z
        return float(x * (y - 0.5) + _psi(x) - _psi(y))

    def field(z):
        x, y = z
        return np.array([-(y - 0.5) - _dpsi(x), x - _dpsi(y)])

    def jacobian(z):
        x, y = z
        return np.array([[-_d2psi(x), -1.0], [1.0, -_d2psi(y)]])

    def hessian(z):
        x, y = z
        return np.array([[_d2psi(x), 1.0], [1.0, -_d2psi(y)]])

    return Problem(label="forsaken", d1=1, d2=1, objective=objective, field=field,
                   jacobian=jacobian, hessian_objective=hessian)


def make_gradient_well() -> Problem:
    """Pure gradient system V = -grad g with g(z) = ||z||^4/4 - ||z||^2/2.

    All coordinates sit in the min block (d1=2, d2=0): a descent field cannot
    be realized as the min-max field of a single objective with a nonempty max
    block, so zeroth-order sign handling treats both coordinates as minimizing.
    Critical points are the origin and the whole unit circle.
    """

    def objective(z):
        r2 = float(z @ z)
        return 0.25 * r2 * r2 - 0.5 * r2

    def field(z):
        r2 = float(z @ z)
        return -(r2 - 1.0) * z

    def jacobian(z):
        r2 = float(z @ z)
        return -((r2 - 1.0) * np.eye(2) + 2.0 * np.outer(z, z))

    def hessian(z):
        return -jacobian(z)

    return Problem(label="gradient-well", d1=2, d2=0, objective=objective,
                   field=field, jacobian=jacobian, hessian_objective=hessian)


_ZOO = {
    "bilinear": make_bilinear,
    "almost-bilinear": make_almost_bilinear,
    "forsaken": make_forsaken,
    "gradient-well": make_gradient_well,
}


def get_problem(label: str, **params) -> Problem:
    """Zoo lookup by label; label 'almost-bilinear' accepts epsilon/perturbation."""
    if label not in _ZOO:
        raise KeyError(f"unknown problem label {label!r}; known: {sorted(_ZOO)}")
    if label == "almost-bilinear":
        pert = params.pop("perturbation", None)
        if isinstance(pert, dict):
            pert = PolynomialPerturbation({int(k): float(v) for k, v in pert.items()})
        eps = params.pop("epsilon", 0.01)
        if params:
            raise KeyError(f"unknown problem parameters {sorted(params)}")
        return make_almost_bilinear(pert, eps)
    if params:
        raise KeyError(f"problem {label!r} takes no parameters, got {sorted(params)}")
    return _ZOO[label]()


def problem_labels() -> list:
    return sorted(_ZOO)


def sfo_query(problem: Problem, z: np.ndarray, noise: NoiseModel,
              rng: np.random.Generator) -> OracleSample:
    """Stochastic first-order oracle: V(z) plus one noise draw; one query."""
    value = problem.field(z) + noise.draw(rng, problem.d)
    return OracleSample(value=value, queries_used=1)


def spsa_query(problem: Problem, z: np.ndarray, delta: float,
               rng: np.random.Generator) -> OracleSample:
    """Single-evaluation zeroth-order estimator on the signed basis.

    Draws w uniformly from the 2d signed basis vectors {+-e_i}; the sign
    factor is -1 when the touched coordinate lies in the min block and +1 in
    the max block; returns sign * (d/delta) * f(z + delta*w) * w.  Averaged
    over all 2d draws this is exactly the symmetric-difference estimate of V.
    """
    if delta <= 0:
        raise ValueError(f"sampling radius must be positive, got {delta}")
    d = problem.d
    k = int(rng.integers(0, 2 * d))
    coord, orientation = divmod(k, 2)
    w = np.zeros(d)
    w[coord] = 1.0 if orientation == 0 else -1.0
    sign = problem.min_block_signs()[coord]
    value = sign * (d / delta) * problem.objective(z + delta * w) * w
    return OracleSample(value=value, queries_used=1)


def spsa_mean(problem: Problem, z: np.ndarray, delta: float) -> np.ndarray:
    """Exact expectation of spsa_query over its 2d equiprobable seeds."""
    d = problem.d
    signs = problem.min_block_signs()
    out = np.zeros(d)
    for coord in range(d):
        e = np.zeros(d)
        e[coord] = delta
        diff = problem.objective(z + e) - problem.objective(z - e)
        out[coord] = signs[coord] * diff / (2.0 * delta)
    return out


def shell_points(radius: float, count: int, dim: int = 2,
                 rng: Optional[np.random.Generator] = None) -> np.ndarray:
    """Points on the sphere of given radius: equispaced angles in 2D, uniform otherwise."""
    if dim == 2:
        theta = np.linspace(0.0, 2.0 * math.pi, count, endpoint=False)
        return radius * np.stack([np.cos(theta), np.sin(theta)], axis=1)
    if rng is None:
        rng = np.random.default_rng(0)
    v = rng.normal(size=(count, dim))
    return radius * v / np.linalg.norm(v, axis=1, keepdims=True)


def check_wac(problem: Problem, radius: float, samples: int = 1000) -> dict:
    """Scan <V(z), z> on the shell ||z|| = radius; WAC passes when max <= 0."""
    if radius <= 0 or samples < 1:
        raise ValueError("check_wac needs radius > 0 and samples >= 1")
    pts = shell_points(radius, samples, problem.d)
    inner = np.array([float(problem.field(p) @ p) for p in pts])
    worst = int(np.argmax(inner))
    # FMA in the dot product exposes product rounding, so "<= 0" carries a
    # machine-precision allowance proportional to the shell radius squared
    dust = 16.0 * np.finfo(float).eps * radius * radius
    violating = [pts[i] for i in np.nonzero(inner > dust)[0]]
    return {
        "radius": radius,
        "samples": samples,
        "max_inner": float(inner[worst]),
        "argmax_point": pts[worst],
        "violating_points": violating,
        "passes": bool(inner[worst] <= dust),
    }
