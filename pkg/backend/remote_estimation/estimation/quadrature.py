"""
Gaussian integration kernels on a symmetric error grid.

Value functions are sampled on an ErrorGrid and extended beyond it with a
quadratic tail. The Gaussian expectation h(e) = E_W[f(a e + W)] is computed
by a discrete convolution on a lattice aligned with the grid followed by a
cubic-spline read-out at the scaled points a*e.
"""
from dataclasses import dataclass, field
from functools import cached_property
import logging
import math

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.special import ndtr
from scipy.stats import norm

from .exceptions import DegenerateIntervalError, OutOfRangeError

logger = logging.getLogger(__name__)

# Kernel support and the fraction of grid points each tail fit uses.
KERNEL_SIGMAS = 8.0
TAIL_FRACTION = 0.1
# Finest lattice spacing used for the kernel, in units of sigma.
MAX_KERNEL_STEP = 0.25
MASS_UNDERFLOW = 1e-300


@dataclass(frozen=True)
class ErrorGrid:
    half_width: float
    num_points: int

    def __post_init__(self):
        if not self.half_width > 0:
            raise ValueError(f"Grid half width must be positive (got {self.half_width})")
        if self.num_points < 3 or self.num_points % 2 == 0:
            raise ValueError(f"Grid needs an odd number of points >= 3 (got {self.num_points})")

    @classmethod
    def for_plant(cls, plant, num_points, cap_sigmas=64.0):
        """Default grid: 8 sigma times the open-loop growth max(1, |a|)^N, capped."""
        half = KERNEL_SIGMAS * plant.sigma * max(1.0, abs(plant.a)) ** plant.horizon
        half = min(half, cap_sigmas * plant.sigma)
        return cls(half_width=half, num_points=num_points)

    @property
    def center(self):
        return (self.num_points - 1) // 2

    @property
    def spacing(self):
        return self.half_width / self.center

    @cached_property
    def points(self):
        # Integer multiples of the spacing keep points[i] == -points[-1 - i] exactly.
        return np.arange(-self.center, self.center + 1) * self.spacing

    def index_of(self, e):
        return int(np.clip(np.rint(e / self.spacing), -self.center, self.center)) + self.center

    def to_dict(self):
        return {'half_width': self.half_width, 'num_points': self.num_points}


@dataclass(eq=False)
class GridFunction:
    grid: ErrorGrid
    values: np.ndarray
    tail_model: tuple = field(init=False)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.shape != (self.grid.num_points,):
            raise ValueError(f"Expected {self.grid.num_points} values, got shape {self.values.shape}")
        self.tail_model = (self._fit_tail(slice(0, None)), self._fit_tail(slice(None, None, -1)))

    @classmethod
    def from_callable(cls, grid, fn):
        return cls(grid, fn(grid.points))

    def _fit_tail(self, order):
        # f(x) ~ f(edge) + c (x^2 - edge^2), least squares over the outer points on one side.
        xs = self.grid.points[order]
        fs = self.values[order]
        k = max(2, int(round(TAIL_FRACTION * self.grid.num_points)))
        dx = xs[1:k] ** 2 - xs[0] ** 2
        df = fs[1:k] - fs[0]
        denom = np.dot(dx, dx)
        return float(np.dot(df, dx) / denom) if denom > 0 else 0.0

    def evaluate(self, x):
        """Piecewise-linear inside the grid, quadratic tail model outside."""
        x = np.asarray(x, dtype=float)
        e_max = self.grid.half_width
        out = np.interp(x, self.grid.points, self.values)
        c_left, c_right = self.tail_model
        left = x < -e_max
        right = x > e_max
        if left.any():
            out = np.where(left, self.values[0] + c_left * (x ** 2 - e_max ** 2), out)
        if right.any():
            out = np.where(right, self.values[-1] + c_right * (x ** 2 - e_max ** 2), out)
        return out

    def __call__(self, x):
        return self.evaluate(x)

    def value_range(self):
        return float(self.values.max() - self.values.min())


@dataclass(frozen=True)
class TruncatedMoments:
    mass: float
    mean: float
    second_moment: float

    @property
    def variance(self):
        return self.second_moment - self.mean ** 2


@dataclass(frozen=True)
class ShapeViolation:
    index: int
    e: float
    kind: str
    amount: float


@dataclass(frozen=True)
class ShapeCheck:
    ok: bool
    violation: ShapeViolation = None

    def __bool__(self):
        return self.ok


def _z_pdf(z):
    finite = np.isfinite(z)
    return np.where(finite, np.where(finite, z, 0.0) * norm.pdf(z), 0.0)


def partial_moments(sigma2, lo, hi):
    """Unnormalised moments (P, E[X; A], E[X^2; A]) of X ~ N(0, sigma2) on A = [lo, hi].

    Vectorised over lo/hi; infinite endpoints are allowed and lo >= hi gives zeros.
    """
    sigma = math.sqrt(sigma2)
    alpha = np.asarray(lo, dtype=float) / sigma
    beta = np.asarray(hi, dtype=float) / sigma
    # Subtract upper tails when both ends sit on the right, for accuracy far out.
    mass = np.where(alpha > 0, ndtr(-alpha) - ndtr(-beta), ndtr(beta) - ndtr(alpha))
    m1 = sigma * (norm.pdf(alpha) - norm.pdf(beta))
    m2 = sigma2 * (mass + _z_pdf(alpha) - _z_pdf(beta))
    empty = ~(beta > alpha)
    return (np.where(empty, 0.0, np.maximum(mass, 0.0)),
            np.where(empty, 0.0, m1),
            np.where(empty, 0.0, np.maximum(m2, 0.0)))


def truncated_moments(sigma2, lo, hi):
    mass, m1, m2 = (float(v) for v in partial_moments(sigma2, lo, hi))
    if not hi > lo or mass < MASS_UNDERFLOW:
        raise DegenerateIntervalError(f"Interval [{lo}, {hi}] carries no Gaussian mass (sigma2={sigma2})")
    return TruncatedMoments(mass=mass, mean=m1 / mass, second_moment=m2 / mass)


def _kernel(grid, sigma2):
    sigma = math.sqrt(sigma2)
    refine = max(1, math.ceil(grid.spacing / (MAX_KERNEL_STEP * sigma)))
    step = grid.spacing / refine
    half = math.ceil(KERNEL_SIGMAS * sigma / step)
    offsets = np.arange(-half, half + 1) * step
    weights = norm.pdf(offsets / sigma)
    weights[0] *= 0.5
    weights[-1] *= 0.5
    return step, half, weights / weights.sum()


def gaussian_expectation(f, a, sigma2):
    """h(e) = E_W[f(a e + W)], W ~ N(0, sigma2), sampled on f's grid."""
    grid = f.grid
    step, half, weights = _kernel(grid, sigma2)
    reach = math.ceil(abs(a) * grid.half_width / step) + 1
    lattice = np.arange(-reach, reach + 1) * step
    extended = f.evaluate(np.arange(-reach - half, reach + half + 1) * step)
    smoothed = np.convolve(extended, weights, mode='valid')
    values = CubicSpline(lattice, smoothed)(a * grid.points)
    return GridFunction(grid, values)


def is_symmetric_nondecreasing(f, tol=0.0):
    """Check f(e) == f(-e) and f non-decreasing in |e| on the grid, both up to ``tol``."""
    v = f.values
    c = f.grid.center
    points = f.grid.points
    for i in range(1, c + 1):
        right, left = v[c + i], v[c - i]
        gap = abs(right - left)
        if gap > tol:
            return ShapeCheck(False, ShapeViolation(c + i, float(points[c + i]), 'asymmetry', float(gap)))
        for idx, prev in ((c + i, c + i - 1), (c - i, c - i + 1)):
            drop = v[prev] - v[idx]
            if drop > tol:
                return ShapeCheck(False, ShapeViolation(idx, float(points[idx]), 'decrease', float(drop)))
    return ShapeCheck(True)


def pointwise_min(f, g):
    return GridFunction(f.grid, np.minimum(f.values, g.values))


def check_quasi_convexity(f, rng, samples=1000, tol=0.0):
    """Sample triples and test f(lx + (1-l)y) <= max(f(x), f(y)); returns the first failure or None."""
    e_max = f.grid.half_width
    x = rng.uniform(-e_max, e_max, samples)
    y = rng.uniform(-e_max, e_max, samples)
    lam = rng.uniform(0.0, 1.0, samples)
    mid = f.evaluate(lam * x + (1 - lam) * y)
    bound = np.maximum(f.evaluate(x), f.evaluate(y))
    bad = np.flatnonzero(mid > bound + tol)
    if bad.size:
        k = bad[0]
        return float(x[k]), float(y[k]), float(lam[k])
    return None


def directional_difference_quotient(f, e):
    """(f(e + d) - f(e)) / ((e + d)^2 - e^2) with d one grid spacing; e is snapped to the grid."""
    if e < 0:
        raise OutOfRangeError(f"Difference quotients are taken at e >= 0 (got {e})")
    grid = f.grid
    if e > grid.half_width:
        raise OutOfRangeError(f"e={e} lies outside the grid [-{grid.half_width}, {grid.half_width}]")
    i = grid.index_of(e)
    if i + 1 >= grid.num_points:
        raise OutOfRangeError(f"e={e} is too close to the grid boundary for a forward difference")
    x = grid.points
    return float((f.values[i + 1] - f.values[i]) / (x[i + 1] ** 2 - x[i] ** 2))


def difference_quotients(f):
    """All forward quotients at grid points e >= 0 except the last; returns (e, quotient) arrays."""
    c = f.grid.center
    x = f.grid.points[c:]
    v = f.values[c:]
    return x[:-1], np.diff(v) / np.diff(x ** 2)
