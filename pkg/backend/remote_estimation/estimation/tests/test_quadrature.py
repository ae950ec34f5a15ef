import math

import numpy as np
from django.test import SimpleTestCase
from scipy.integrate import quad
from scipy.stats import norm

from estimation.exceptions import DegenerateIntervalError, OutOfRangeError
from estimation.process import PlantModel
from estimation.quadrature import (
    ErrorGrid, GridFunction, check_quasi_convexity, difference_quotients, directional_difference_quotient,
    gaussian_expectation, is_symmetric_nondecreasing, partial_moments, pointwise_min, truncated_moments,
)
from estimation.verification import random_step_function


class ErrorGridTests(SimpleTestCase):
    """Test cases for the symmetric error grid"""

    def test_points_are_exactly_symmetric(self):
        """points[i] == -points[-1 - i] bitwise, with 0 in the middle"""
        grid = ErrorGrid(half_width=7.3, num_points=1001)
        self.assertTrue(np.array_equal(grid.points, -grid.points[::-1]))
        self.assertEqual(grid.points[grid.center], 0.0)

    def test_even_point_count_rejected(self):
        """An even number of points has no centre"""
        with self.assertRaises(ValueError):
            ErrorGrid(half_width=1.0, num_points=100)

    def test_default_grid_for_plant(self):
        """8 sigma times the growth factor, capped"""
        grid = ErrorGrid.for_plant(PlantModel(a=1.1, sigma2=1.0, horizon=20), 2001)
        self.assertAlmostEqual(grid.half_width, 8 * 1.1 ** 20)
        capped = ErrorGrid.for_plant(PlantModel(a=2.0, sigma2=1.0, horizon=20), 2001)
        self.assertAlmostEqual(capped.half_width, 64.0)


class TruncatedMomentTests(SimpleTestCase):
    """Test cases for Gaussian moments over intervals"""

    def test_whole_line(self):
        """Mass 1, mean 0, second moment sigma2"""
        moments = truncated_moments(2.0, -np.inf, np.inf)
        self.assertAlmostEqual(moments.mass, 1.0)
        self.assertAlmostEqual(moments.mean, 0.0)
        self.assertAlmostEqual(moments.second_moment, 2.0)

    def test_half_line(self):
        """Half-normal mean sigma * sqrt(2/pi)"""
        moments = truncated_moments(4.0, 0.0, np.inf)
        self.assertAlmostEqual(moments.mass, 0.5)
        self.assertAlmostEqual(moments.mean, 2.0 * math.sqrt(2 / math.pi))
        self.assertAlmostEqual(moments.variance, 4.0 * (1 - 2 / math.pi))

    def test_matches_quadrature(self):
        """Closed form against adaptive integration on a finite interval"""
        sigma2, lo, hi = 1.7, -0.4, 2.2
        pdf = norm(scale=math.sqrt(sigma2)).pdf
        mass, m1, m2 = partial_moments(sigma2, lo, hi)
        self.assertAlmostEqual(float(mass), quad(pdf, lo, hi)[0], places=12)
        self.assertAlmostEqual(float(m1), quad(lambda x: x * pdf(x), lo, hi)[0], places=12)
        self.assertAlmostEqual(float(m2), quad(lambda x: x * x * pdf(x), lo, hi)[0], places=12)

    def test_infinite_endpoints_have_zero_density(self):
        """Unbounded ends contribute no density terms to the first two moments"""
        mass, m1, m2 = partial_moments(1.0, np.array([-np.inf, 1.0]), np.array([np.inf, np.inf]))
        self.assertTrue(np.allclose(mass, [1.0, norm.sf(1.0)]))
        self.assertTrue(np.allclose(m1, [0.0, norm.pdf(1.0)]))
        self.assertTrue(np.allclose(m2, [1.0, norm.sf(1.0) + norm.pdf(1.0)]))
        self.assertTrue(np.isfinite(m2).all())

    def test_empty_interval_raises(self):
        """Conditional moments of an empty region are undefined"""
        with self.assertRaises(DegenerateIntervalError):
            truncated_moments(1.0, 1.0, 1.0)
        with self.assertRaises(DegenerateIntervalError):
            truncated_moments(1.0, 60.0, np.inf)


class GaussianExpectationTests(SimpleTestCase):
    """Test cases for h(e) = E[f(a e + W)] on the grid"""

    def setUp(self):
        self.grid = ErrorGrid(half_width=12.0, num_points=801)

    def test_quadratic_is_exact(self):
        """E[(a e + W)^2] = a^2 e^2 + sigma2"""
        f = GridFunction.from_callable(self.grid, np.square)
        h = gaussian_expectation(f, 1.1, 0.8)
        expected = 1.21 * self.grid.points ** 2 + 0.8
        self.assertLess(np.max(np.abs(h.values - expected) / expected), 1e-6)

    def test_against_adaptive_integration(self):
        """A clipped quadratic checked pointwise against quad"""
        f = GridFunction.from_callable(self.grid, lambda e: np.minimum(e ** 2, 4.0))
        h = gaussian_expectation(f, 0.9, 1.0)
        for e in (0.0, 0.7, 2.1, 3.3):
            expected = quad(lambda w: min((0.9 * e + w) ** 2, 4.0) * norm.pdf(w), -np.inf, np.inf)[0]
            self.assertAlmostEqual(float(h.evaluate(e)), expected, places=3)

    def test_linearity(self):
        """h(alpha f + beta g) = alpha h(f) + beta h(g) up to round-off"""
        rng = np.random.default_rng(8)
        f = GridFunction(self.grid, rng.normal(size=self.grid.num_points))
        g = GridFunction.from_callable(self.grid, lambda e: np.minimum(e ** 2, 9.0))
        for alpha, beta in ((2.0, -0.5), (-1.3, 4.0)):
            combined = gaussian_expectation(GridFunction(self.grid, alpha * f.values + beta * g.values), 1.1, 0.8)
            separate = (alpha * gaussian_expectation(f, 1.1, 0.8).values
                        + beta * gaussian_expectation(g, 1.1, 0.8).values)
            self.assertTrue(np.allclose(combined.values, separate, rtol=0.0, atol=1e-9))

    def test_preserves_symmetric_nondecreasing(self):
        """Random symmetric step functions stay symmetric non-decreasing after smoothing"""
        rng = np.random.default_rng(3)
        grid = ErrorGrid(half_width=8.0, num_points=401)
        for _ in range(20):
            f = random_step_function(rng, grid)
            g = random_step_function(rng, grid)
            h = gaussian_expectation(f, float(rng.uniform(0.5, 1.5)), 1.0)
            self.assertTrue(is_symmetric_nondecreasing(h, 1e-8 * max(h.value_range(), 1.0)))
            self.assertTrue(is_symmetric_nondecreasing(pointwise_min(f, g)))


class ShapeCheckTests(SimpleTestCase):
    """Test cases for symmetry, monotonicity and quasi-convexity checks"""

    def setUp(self):
        self.grid = ErrorGrid(half_width=4.0, num_points=81)
        self.square = GridFunction.from_callable(self.grid, np.square)

    def test_planted_asymmetry(self):
        """A perturbed right edge is reported as asymmetry at that point"""
        values = self.square.values.copy()
        values[-1] -= 1.0
        check = is_symmetric_nondecreasing(GridFunction(self.grid, values))
        self.assertFalse(check)
        self.assertEqual(check.violation.kind, 'asymmetry')
        self.assertAlmostEqual(check.violation.e, 4.0)

    def test_planted_decrease(self):
        """A symmetric dip away from zero is reported as a decrease"""
        values = np.abs(self.grid.points)
        values[self.grid.center + 10] = values[self.grid.center - 10] = 0.0
        check = is_symmetric_nondecreasing(GridFunction(self.grid, values))
        self.assertFalse(check)
        self.assertEqual(check.violation.kind, 'decrease')

    def test_quasi_convexity(self):
        """e^2 passes, a double well fails with a witness"""
        rng = np.random.default_rng(0)
        self.assertIsNone(check_quasi_convexity(self.square, rng))
        well = GridFunction.from_callable(self.grid, lambda e: (e ** 2 - 1) ** 2)
        x, y, lam = check_quasi_convexity(well, rng)
        mid = lam * x + (1 - lam) * y
        self.assertGreater(float(well.evaluate(mid)), max(float(well.evaluate(x)), float(well.evaluate(y))))

    def test_difference_quotient_of_square(self):
        """The quotient of e^2 against e^2 is one"""
        self.assertAlmostEqual(directional_difference_quotient(self.square, 1.0), 1.0)
        es, quotients = difference_quotients(self.square)
        self.assertEqual(es[0], 0.0)
        self.assertTrue(np.allclose(quotients, 1.0))

    def test_difference_quotient_range(self):
        """Negative e and points at or beyond the edge are rejected"""
        with self.assertRaises(OutOfRangeError):
            directional_difference_quotient(self.square, -0.5)
        with self.assertRaises(OutOfRangeError):
            directional_difference_quotient(self.square, 5.0)
        with self.assertRaises(OutOfRangeError):
            directional_difference_quotient(self.square, 4.0)
