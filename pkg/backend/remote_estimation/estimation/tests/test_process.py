import numpy as np
from django.core.exceptions import ValidationError
from django.test import SimpleTestCase

from estimation.process import EstimatorState, PlantModel, error_step, predicted_open_loop_cost


class ErrorRecursionTests(SimpleTestCase):
    """Test cases for the estimation error under symmetric policies"""

    def test_undelivered_error_propagates(self):
        """a*e + w when nothing gets through"""
        plant = PlantModel(a=1.1, sigma2=1.0, horizon=1)
        self.assertAlmostEqual(error_step(plant, 2.0, False, 0.5), 2.7)

    def test_delivery_resets_error(self):
        """A delivered sample leaves zero error"""
        plant = PlantModel(a=1.1, sigma2=1.0, horizon=1)
        self.assertEqual(error_step(plant, 123.0, True, -4.0), 0.0)

    def test_white_source_collapses_to_noise(self):
        """With a = 0 only the fresh noise remains"""
        plant = PlantModel(a=0.0, sigma2=1.0, horizon=1)
        self.assertEqual(error_step(plant, 5.0, False, -1.0), -1.0)

    def test_vectorised_step(self):
        """Arrays of trials are handled elementwise"""
        plant = PlantModel(a=2.0, sigma2=1.0, horizon=1)
        out = error_step(plant, np.array([1.0, 1.0]), np.array([True, False]), np.array([0.5, 0.5]))
        self.assertEqual(out.tolist(), [0.0, 2.5])

    def test_recursion_matches_direct_plant_run(self):
        """Chaining error steps reproduces x - xhat from simulating the plant and estimator directly"""
        plant = PlantModel(a=0.9, sigma2=1.0, x0=1.5, horizon=60)
        rng = np.random.default_rng(4)
        x = estimate = plant.x0
        e = 0.0
        for _ in range(plant.horizon):
            w = float(rng.normal(scale=plant.sigma))
            delivered = bool(rng.random() < 0.4)
            x = plant.a * x + w
            estimate = x if delivered else plant.a * estimate
            e = error_step(plant, e, delivered, w)
            self.assertAlmostEqual(e, x - estimate, places=10)

    def test_estimator_state_update(self):
        """The estimate is the state minus the error"""
        state = EstimatorState(estimate=0.0)
        state.update(3.0, 0.5, (0.1, -0.1))
        self.assertEqual(state.estimate, 2.5)
        self.assertEqual(state.conditional_estimates, (0.1, -0.1))
        state.update(3.0, 0.0)
        self.assertEqual(state.estimate, 3.0)


class PlantModelTests(SimpleTestCase):
    """Test cases for plant validation and the open-loop cost"""

    def test_open_loop_cost(self):
        """sigma2 * sum of a^(2j) over the horizon"""
        self.assertAlmostEqual(predicted_open_loop_cost(PlantModel(a=1.0, sigma2=1.0, horizon=2)), 3.0)
        self.assertAlmostEqual(predicted_open_loop_cost(PlantModel(a=0.0, sigma2=2.0, horizon=5)), 10.0)
        self.assertAlmostEqual(predicted_open_loop_cost(PlantModel(a=2.0, sigma2=1.0, horizon=2)), 1.0 + 5.0)

    def test_invalid_plants(self):
        """Noise variance must be positive and horizon at least one"""
        with self.assertRaises(ValidationError):
            PlantModel(a=1.0, sigma2=0.0, horizon=2)
        with self.assertRaises(ValidationError):
            PlantModel(a=1.0, sigma2=1.0, horizon=0)

    def test_dict_round_trip(self):
        """to_dict / from_dict keep every field"""
        plant = PlantModel(a=1.1, sigma2=0.5, x0=2.0, horizon=7)
        self.assertEqual(PlantModel.from_dict(plant.to_dict()), plant)
