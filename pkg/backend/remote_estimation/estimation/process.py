"""
Scalar Gauss-Markov plant X_{n+1} = a X_n + W_n and the remote estimator's error.
"""
from dataclasses import dataclass, asdict
import math

import numpy as np
from django.core.exceptions import ValidationError


@dataclass(frozen=True)
class PlantModel:
    a: float
    sigma2: float
    x0: float = 0.0
    horizon: int = 1

    def __post_init__(self):
        if not self.sigma2 > 0:
            raise ValidationError(f"Noise variance must be positive (got {self.sigma2})")
        if int(self.horizon) != self.horizon or self.horizon < 1:
            raise ValidationError(f"Horizon must be a positive integer (got {self.horizon})")
        object.__setattr__(self, 'horizon', int(self.horizon))

    @property
    def sigma(self):
        return math.sqrt(self.sigma2)

    def to_dict(self):
        return asdict(self)

    @classmethod
    def from_dict(cls, data):
        return cls(a=data['a'], sigma2=data['sigma2'], x0=data.get('x0', 0.0), horizon=data['horizon'])


@dataclass
class EstimatorState:
    """Remote estimate, the error it leaves and the a=0 branch means X^0 / X^1.

    Fields hold scalars or per-trial arrays.
    """
    estimate: object
    error: object = 0.0
    conditional_estimates: tuple = (0.0, 0.0)

    def update(self, x, error, conditional_estimates=None):
        self.error = error
        self.estimate = x - error
        if conditional_estimates is not None:
            self.conditional_estimates = conditional_estimates


def error_step(plant, e, delivered, w):
    """Error recursion under a symmetric policy: a*e + w unless the next sample is delivered."""
    if np.ndim(delivered) == 0:
        return 0.0 if delivered else plant.a * e + w
    return np.where(delivered, 0.0, plant.a * e + w)


def predicted_open_loop_cost(plant):
    """Sum over n=1..N of Var(E_n) when nothing is ever delivered and E_0 = 0."""
    variance = 0.0
    total = 0.0
    for _ in range(plant.horizon):
        variance = plant.a ** 2 * variance + plant.sigma2
        total += variance
    return total
