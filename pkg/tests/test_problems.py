"""Problem zoo: fields vs finite differences, oracles, WAC scans."""

import math

import numpy as np
import pytest

from minmaxlab import (NoiseModel, PolynomialPerturbation, check_wac,
                       derive_rng, get_problem, make_almost_bilinear,
                       make_bilinear, make_forsaken, make_gradient_well,
                       problem_labels, sfo_query, spsa_mean, spsa_query)

ALL_PROBLEMS = [make_bilinear(), make_almost_bilinear(epsilon=0.01),
                make_forsaken(), make_gradient_well()]


def fd_gradient(f, z, h=1e-6):
    g = np.zeros_like(z)
    for i in range(z.size):
        e = np.zeros_like(z)
        e[i] = h
        g[i] = (f(z + e) - f(z - e)) / (2 * h)
    return g


def fd_jacobian(field, z, h=1e-6):
    d = z.size
    J = np.zeros((d, d))
    for j in range(d):
        e = np.zeros(d)
        e[j] = h
        J[:, j] = (field(z + e) - field(z - e)) / (2 * h)
    return J


@pytest.mark.parametrize("problem", ALL_PROBLEMS, ids=lambda p: p.label)
def test_field_matches_finite_differences_of_objective(problem):
    rng = derive_rng(100)
    signs = problem.min_block_signs()
    for _ in range(100):
        z = rng.uniform(-1.5, 1.5, size=problem.d)
        grad = fd_gradient(problem.objective, z)
        expected = signs * grad  # (-grad_x f, +grad_y f)
        got = problem.field(z)
        scale = max(1.0, np.linalg.norm(expected))
        assert np.linalg.norm(got - expected) <= 1e-6 * scale


@pytest.mark.parametrize("problem", ALL_PROBLEMS, ids=lambda p: p.label)
def test_jacobian_matches_finite_differences_of_field(problem):
    rng = derive_rng(101)
    for _ in range(100):
        z = rng.uniform(-1.5, 1.5, size=problem.d)
        J_fd = fd_jacobian(problem.field, z)
        J = problem.jacobian(z)
        scale = max(1.0, np.linalg.norm(J_fd))
        assert np.linalg.norm(J - J_fd) <= 1e-5 * scale


@pytest.mark.parametrize("problem", ALL_PROBLEMS, ids=lambda p: p.label)
def test_hessian_matches_finite_differences_of_gradient(problem):
    signs = problem.min_block_signs()
    rng = derive_rng(102)
    grad = lambda z: signs * problem.field(z)  # grad f = signs * V
    for _ in range(20):
        z = rng.uniform(-1.2, 1.2, size=problem.d)
        H_fd = fd_jacobian(grad, z)
        H = problem.hessian_objective(z)
        assert np.linalg.norm(H - H_fd) <= 1e-5 * max(1.0, np.linalg.norm(H_fd))


class TestBilinear:
    def test_field_values(self):
        p = make_bilinear()
        assert np.allclose(p.field(np.array([1.0, 0.0])), [0.0, 1.0])
        assert np.allclose(p.field(np.array([0.0, 0.0])), [0.0, 0.0])

    def test_radial_component_zero_to_machine_precision(self):
        p = make_bilinear()
        rng = derive_rng(0)
        for _ in range(50):
            z = rng.uniform(-5, 5, size=2)
            # FMA in the dot product can expose the product rounding error
            assert abs(float(p.field(z) @ z)) <= 16 * np.finfo(float).eps * float(z @ z)

    def test_jacobian_everywhere(self):
        p = make_bilinear()
        J = np.array([[0.0, -1.0], [1.0, 0.0]])
        assert np.array_equal(p.jacobian(np.array([3.0, -2.0])), J)


class TestAlmostBilinear:
    def test_default_perturbation_values(self):
        p = make_almost_bilinear(epsilon=0.01)
        assert np.allclose(p.field(np.array([1.0, 0.0])), [0.0, 1.0], atol=1e-15)
        # phi'(1) = 1 - 1 = 0
        assert np.allclose(p.field(np.array([0.0, 1.0])), [-1.0, 0.0], atol=1e-15)

    def test_jacobian_at_origin(self):
        p = make_almost_bilinear(epsilon=0.01)
        assert np.allclose(p.jacobian(np.zeros(2)), [[0.0, -1.0], [1.0, 0.01]])

    def test_custom_perturbation(self):
        pert = PolynomialPerturbation({3: 2.0})
        p = make_almost_bilinear(pert, epsilon=0.5)
        # V_y = x + eps * 6 y^2
        assert p.field(np.array([0.0, 1.0]))[1] == pytest.approx(3.0)


class TestForsaken:
    def test_field_value_above_center(self):
        p = make_forsaken()
        assert np.allclose(p.field(np.array([0.0, 0.5])), [0.0, -0.03125], atol=1e-15)

    def test_radial_derivative_formula_on_inner_circle(self):
        # on r^2 = 4/3 the x^2 y^2 term vanishes and <V,z> = 0.5x + 14/27
        p = make_forsaken()
        r = math.sqrt(4.0 / 3.0)
        for theta in np.linspace(0, 2 * math.pi, 17):
            z = r * np.array([math.cos(theta), math.sin(theta)])
            assert float(p.field(z) @ z) == pytest.approx(0.5 * z[0] + 14.0 / 27.0, abs=1e-12)

    def test_radial_derivative_closed_form_everywhere(self):
        # <V,z> = 0.5x - r^2/2 + 2r^4 - r^6 + x^2 y^2 (3 r^2 - 4)
        p = make_forsaken()
        rng = derive_rng(11)
        for _ in range(100):
            z = rng.uniform(-1.6, 1.6, size=2)
            x, y = z
            r2 = x * x + y * y
            expected = 0.5 * x - 0.5 * r2 + 2 * r2 ** 2 - r2 ** 3 + x * x * y * y * (3 * r2 - 4)
            assert float(p.field(z) @ z) == pytest.approx(expected, abs=1e-10)

    def test_radial_derivative_at_diagonal_point_is_positive(self):
        # direct arithmetic at (1,1): 0.5 - 1 + 8 - 8 + 2 = +1.5, so the outer
        # circle r^2 = 2 is not everywhere inward for this field
        p = make_forsaken()
        z = np.array([1.0, 1.0])
        assert float(p.field(z) @ z) == pytest.approx(1.5, abs=1e-12)


class TestGradientWell:
    def test_critical_set(self):
        p = make_gradient_well()
        assert np.allclose(p.field(np.zeros(2)), 0.0)
        for theta in np.linspace(0, 2 * math.pi, 9):
            z = np.array([math.cos(theta), math.sin(theta)])
            assert np.linalg.norm(p.field(z)) <= 1e-15

    def test_descent_block_structure(self):
        p = make_gradient_well()
        assert (p.d1, p.d2) == (2, 0)
        assert np.array_equal(p.min_block_signs(), [-1.0, -1.0])

    def test_flow_converges_to_unit_circle(self):
        from minmaxlab import integrate_flow
        p = make_gradient_well()
        path = integrate_flow(p, [0.1, 0.1], T=30.0, h_int=1e-3, record_every=100)
        assert abs(np.linalg.norm(path.final_state) - 1.0) <= 1e-6


class TestZooLookup:
    def test_labels(self):
        assert problem_labels() == ["almost-bilinear", "bilinear", "forsaken", "gradient-well"]

    def test_lookup_with_params(self):
        p = get_problem("almost-bilinear", epsilon=0.1, perturbation={"2": 0.5, "4": -0.25})
        assert p.params["epsilon"] == 0.1

    def test_unknown_label(self):
        with pytest.raises(KeyError):
            get_problem("sgdaa")
        with pytest.raises(KeyError):
            get_problem("bilinear", epsilon=0.1)


class TestSfoQuery:
    def test_noiseless_returns_field(self):
        p = make_bilinear()
        s = sfo_query(p, np.array([1.0, 0.0]), NoiseModel.none(), derive_rng(0))
        assert np.array_equal(s.value, [0.0, 1.0])
        assert s.queries_used == 1

    def test_unbiasedness_monte_carlo(self):
        p = make_bilinear()
        rng = derive_rng(202)
        model = NoiseModel.gaussian(0.1)
        z = np.array([1.0, 0.0])
        draws = np.stack([sfo_query(p, z, model, rng).value for _ in range(10 ** 5)])
        bound = 3 * 0.1 / math.sqrt(10 ** 5)
        assert np.all(np.abs(draws.mean(axis=0) - [0.0, 1.0]) <= bound)

    def test_second_moment_bounded_by_sigma_sq(self):
        p = make_forsaken()
        rng = derive_rng(203)
        model = NoiseModel.gaussian(0.2)
        z = np.array([0.3, -0.2])
        errs = np.stack([sfo_query(p, z, model, rng).value - p.field(z) for _ in range(20000)])
        mean_sq = float(np.mean(np.sum(errs ** 2, axis=1)))
        assert mean_sq <= 0.04 * (1 + 5 / math.sqrt(20000))


class _FixedSeedRng:
    """Stand-in generator that forces a particular signed-basis draw."""

    def __init__(self, k):
        self.k = k

    def integers(self, low, high):
        assert low <= self.k < high
        return self.k


def enumerate_spsa(problem, z, delta):
    """All 2d equiprobable outputs of spsa_query."""
    return [spsa_query(problem, z, delta, _FixedSeedRng(k)).value
            for k in range(2 * problem.d)]


class TestSpsaQuery:
    def test_seed_enumeration_reproduces_field_on_bilinear(self):
        # the 4 signed-basis draws average to exactly (-1, 1) = V(1, 1)
        p = make_bilinear()
        z = np.array([1.0, 1.0])
        values = enumerate_spsa(p, z, 0.01)
        assert len(values) == 4
        mean = np.mean(values, axis=0)
        assert np.allclose(mean, [-1.0, 1.0], atol=1e-12)
        assert np.allclose(mean, spsa_mean(p, z, 0.01), atol=1e-15)

    def test_enumeration_equals_symmetric_difference_estimate(self):
        # algebraic identity on any problem: the seed average is the
        # signed central-difference gradient estimate
        for problem in (make_forsaken(), make_almost_bilinear(epsilon=0.1)):
            z = np.array([0.37, -0.81])
            mean = np.mean(enumerate_spsa(problem, z, 0.05), axis=0)
            assert np.allclose(mean, spsa_mean(problem, z, 0.05), atol=1e-12)

    def test_single_draw_form(self):
        p = make_bilinear()
        z = np.array([1.0, 1.0])
        rng = derive_rng(32)
        s = spsa_query(p, z, 0.01, rng)
        assert s.queries_used == 1
        # value is supported on a single coordinate with magnitude (d/delta)*|f|
        nonzero = np.nonzero(s.value)[0]
        assert nonzero.size == 1

    def test_empirical_mean_matches_enumeration(self):
        p = make_almost_bilinear(epsilon=0.1)
        z = np.array([0.7, -0.3])
        rng = derive_rng(33)
        draws = np.stack([spsa_query(p, z, 0.05, rng).value for _ in range(40000)])
        mean = spsa_mean(p, z, 0.05)
        assert np.all(np.abs(draws.mean(axis=0) - mean) <= 0.1)

    def test_bias_scales_quadratically_in_delta(self):
        # the signed-basis estimator averages to a central difference, so the
        # measured bias drops by ~4x when delta halves on a smooth objective
        p = make_forsaken()
        z = np.array([0.4, 0.3])
        V = p.field(z)
        b1 = np.linalg.norm(spsa_mean(p, z, 0.1) - V)
        b2 = np.linalg.norm(spsa_mean(p, z, 0.05) - V)
        assert b2 / b1 == pytest.approx(0.25, rel=0.15)

    def test_second_moment_scales_like_inverse_delta_sq(self):
        p = make_almost_bilinear(epsilon=0.1)
        z = np.array([0.9, 0.7])  # objective nonzero here
        second = {}
        for delta in (0.1, 0.05, 0.025):
            rng = derive_rng(34)
            draws = np.stack([spsa_query(p, z, delta, rng).value for _ in range(20000)])
            second[delta] = float(np.mean(np.sum(draws ** 2, axis=1)))
        assert second[0.05] / second[0.1] == pytest.approx(4.0, rel=0.2)
        assert second[0.025] / second[0.05] == pytest.approx(4.0, rel=0.2)


class TestCheckWac:
    def test_bilinear_zero_to_machine_precision_at_any_radius(self):
        for R in (1.0, 10.0, 100.0):
            rep = check_wac(make_bilinear(), R, samples=500)
            assert abs(rep["max_inner"]) <= 16 * np.finfo(float).eps * R * R
            assert rep["passes"]
            assert rep["violating_points"] == []

    def test_forsaken_strongly_coercive_far_out(self):
        rep = check_wac(make_forsaken(), 10.0, samples=1000)
        assert rep["max_inner"] < 0.0
        assert rep["passes"]

    def test_almost_bilinear_positive_strip_measured(self):
        # <V,z> = eps*(y^2 - y^4) is positive for sampled |y| < 1 on any shell,
        # peaking at eps/4; the shell scan reports that honestly
        rep = check_wac(make_almost_bilinear(epsilon=0.01), 10.0, samples=1000)
        assert 0.0024 <= rep["max_inner"] <= 0.0025 + 1e-12
        assert not rep["passes"]
        assert len(rep["violating_points"]) > 0

    def test_gradient_well_coercive(self):
        rep = check_wac(make_gradient_well(), 5.0, samples=400)
        assert rep["max_inner"] < 0.0
