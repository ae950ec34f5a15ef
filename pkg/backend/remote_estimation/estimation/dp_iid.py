"""
Channel-state-only dynamic program for a white Gaussian source (a = 0).

With X_n ~ N(0, sigma2) independent across stages the value depends on the
channel state alone, and each (n, q) reduces to choosing one no-transmit
interval [tau_lo, tau_hi]. The stage cost splits into the silent branch,
estimated by its conditional mean, and the dropped-transmission branch,
estimated by the conditional mean of the transmit region.
"""
from dataclasses import dataclass, field
import csv
import logging
import math

import numpy as np
from scipy.optimize import minimize_scalar

from .exceptions import DegenerateIntervalError
from .policy import TransmitPolicy
from .quadrature import MASS_UNDERFLOW, partial_moments
from .utils import format_float

logger = logging.getLogger(__name__)

SEARCH_HALF_WIDTH = 6.0
DEFAULT_SEARCH_POINTS = 121
REFINE_TOL = 1e-6
MAX_SWEEPS = 50


@dataclass(frozen=True)
class IidStageCost:
    cost: float
    p_transmit: float
    silent_mean: float = None
    transmit_mean: float = None


def _branch_moments(sigma2, lo, hi):
    silent = partial_moments(sigma2, lo, hi)
    below = partial_moments(sigma2, -np.inf, np.where(lo == hi, np.inf, lo))
    above = partial_moments(sigma2, np.where(lo == hi, np.inf, hi), np.inf)
    # lo == hi is the empty silent region, so the transmit region is the whole line
    transmit = tuple(b + a for b, a in zip(below, above))
    return silent, transmit


def _within_variance(m0, m1, m2):
    safe = np.where(m0 > MASS_UNDERFLOW, m0, 1.0)
    return np.where(m0 > MASS_UNDERFLOW, np.maximum(m2 - m1 ** 2 / safe, 0.0), 0.0)


def stage_cost_arrays(sigma2, p_drop, lo, hi):
    """Vectorised stage cost and transmit probability over arrays of interval endpoints."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    silent, transmit = _branch_moments(sigma2, lo, hi)
    cost = _within_variance(*silent) + p_drop * _within_variance(*transmit)
    return cost, transmit[0]


def conditional_means(sigma2, lo, hi):
    """Estimator outputs for the silent and dropped branches; 0 where a branch has no mass."""
    silent, transmit = _branch_moments(sigma2, np.asarray(lo, dtype=float), np.asarray(hi, dtype=float))
    means = []
    for m0, m1, _ in (silent, transmit):
        safe = np.where(m0 > MASS_UNDERFLOW, m0, 1.0)
        means.append(np.where(m0 > MASS_UNDERFLOW, m1 / safe, 0.0))
    return means[0], means[1]


def iid_stage_cost(sigma2, p_drop, tau_lo, tau_hi, with_means=False):
    if tau_lo > tau_hi:
        raise ValueError(f"Need tau_lo <= tau_hi (got [{tau_lo}, {tau_hi}])")
    lo = np.float64(tau_lo)
    hi = np.float64(tau_hi)
    silent, transmit = _branch_moments(sigma2, lo, hi)
    cost = float(_within_variance(*silent) + p_drop * _within_variance(*transmit))
    p_transmit = float(transmit[0])
    if not with_means:
        return IidStageCost(cost, p_transmit)

    masses = (float(silent[0]), float(transmit[0]))
    if min(masses) < MASS_UNDERFLOW:
        raise DegenerateIntervalError(
            f"Region split at [{tau_lo}, {tau_hi}] leaves a branch with no mass; its conditional mean is undefined")
    return IidStageCost(cost, p_transmit, float(silent[1]) / masses[0], float(transmit[1]) / masses[1])


@dataclass(frozen=True)
class IntervalOptimum:
    tau_lo: float
    tau_hi: float
    objective: float
    p_transmit: float

    @property
    def symmetric(self):
        return self.tau_lo == -self.tau_hi


def _objective(sigma2, p_drop, gap):
    def fn(lo, hi):
        cost, p_tx = stage_cost_arrays(sigma2, p_drop, lo, hi)
        return cost + p_tx * gap
    return fn


def _candidates(sigma2, search_points):
    sigma = math.sqrt(sigma2)
    finite = sigma * np.linspace(-SEARCH_HALF_WIDTH, SEARCH_HALF_WIDTH, search_points)
    return np.concatenate(([-np.inf], finite, [np.inf]))


def _bracket(candidates, value):
    # Neighbouring finite candidates around value, for the bounded refinement.
    finite = candidates[np.isfinite(candidates)]
    i = int(np.searchsorted(finite, value))
    return finite[max(i - 1, 0)], finite[min(i + 1, len(finite) - 1)]


def _refine(fn, lo, hi, candidates, tol):
    best = float(fn(lo, hi))
    for _ in range(MAX_SWEEPS):
        moved = 0.0
        if np.isfinite(lo):
            left, right = _bracket(candidates, lo)
            right = min(right, hi)
            if right > left:
                res = minimize_scalar(lambda x: float(fn(x, hi)), bounds=(left, right),
                                      method='bounded', options={'xatol': tol})
                if res.fun < best:
                    moved = max(moved, abs(res.x - lo))
                    lo, best = float(res.x), float(res.fun)
        if np.isfinite(hi):
            left, right = _bracket(candidates, hi)
            left = max(left, lo)
            if right > left:
                res = minimize_scalar(lambda x: float(fn(lo, x)), bounds=(left, right),
                                      method='bounded', options={'xatol': tol})
                if res.fun < best:
                    moved = max(moved, abs(res.x - hi))
                    hi, best = float(res.x), float(res.fun)
        if moved < tol:
            break
    return lo, hi, best


def optimize_interval(sigma2, p_drop, continuation_gap, search_points=DEFAULT_SEARCH_POINTS, tol=REFINE_TOL):
    """Minimise stage cost + p_transmit * continuation_gap over no-transmit intervals.

    Coarse search over all ordered candidate pairs on [-6 sigma, 6 sigma] plus
    the infinite sentinels, then coordinate descent on the finite endpoints.
    """
    fn = _objective(sigma2, p_drop, continuation_gap)
    cands = _candidates(sigma2, search_points)
    lo_grid, hi_grid = np.meshgrid(cands, cands, indexing='ij')
    values = np.where(lo_grid <= hi_grid, fn(lo_grid, hi_grid), np.inf)
    i, j = np.unravel_index(int(np.argmin(values)), values.shape)
    lo, hi = float(cands[i]), float(cands[j])

    if lo == hi:
        lo = hi = 0.0
        objective = float(fn(lo, hi))
    else:
        lo, hi, objective = _refine(fn, lo, hi, cands, tol * math.sqrt(sigma2))
    _, p_tx = stage_cost_arrays(sigma2, p_drop, lo, hi)
    return IntervalOptimum(lo, hi, objective, float(p_tx))


def optimize_symmetric(sigma2, p_drop, continuation_gap, search_points=DEFAULT_SEARCH_POINTS, tol=REFINE_TOL):
    """Same objective restricted to tau_lo = -tau_hi."""
    fn = _objective(sigma2, p_drop, continuation_gap)
    cands = _candidates(sigma2, search_points)
    taus = np.concatenate((cands[(cands >= 0) & np.isfinite(cands)], [np.inf]))
    values = fn(-taus, taus)
    k = int(np.argmin(values))
    tau, objective = float(taus[k]), float(values[k])
    if 0 < k < len(taus) - 1:
        res = minimize_scalar(lambda t: float(fn(-t, t)), bounds=(taus[k - 1], taus[k + 1]),
                              method='bounded', options={'xatol': tol * math.sqrt(sigma2)})
        if res.fun < objective:
            tau, objective = float(res.x), float(res.fun)
    _, p_tx = stage_cost_arrays(sigma2, p_drop, -tau, tau)
    return IntervalOptimum(-tau, tau, objective, float(p_tx))


@dataclass(frozen=True)
class AsymmetryRecord:
    n: int
    q: int
    interval: tuple
    objective: float
    symmetric_objective: float

    @property
    def improvement(self):
        return self.symmetric_objective - self.objective


@dataclass(eq=False)
class IidValueTable:
    horizon: int
    num_states: int
    sigma2: float
    # values[n - 1, q] for n = 1..N+1
    values: np.ndarray
    tau_lo: np.ndarray
    tau_hi: np.ndarray
    p_transmit: np.ndarray
    symmetric_objective: np.ndarray
    masked: np.ndarray
    asymmetry_log: list = field(default_factory=list)
    provenance: str = ''

    def value(self, n, q):
        return float(self.values[n - 1, q])

    def policy(self):
        return TransmitPolicy.interval_pair(self.tau_lo, self.tau_hi, self.masked, self.provenance)


def iid_backward_induction(fsm, sigma2, horizon, search_points=DEFAULT_SEARCH_POINTS, tol=REFINE_TOL,
                           provenance=''):
    m = fsm.num_states
    masked = fsm.masked_states
    values = np.zeros((horizon + 1, m))
    tau_lo = np.full((horizon, m), -np.inf)
    tau_hi = np.full((horizon, m), np.inf)
    p_tx = np.zeros((horizon, m))
    sym_obj = np.full((horizon, m), sigma2)
    log = []
    improvement_floor = 10 * tol * sigma2

    for n in range(horizon, 0, -1):
        for q in fsm.states:
            stay = values[n, fsm.silent_next(q)]
            if masked[q]:
                values[n - 1, q] = sigma2 + stay
                continue
            gap = values[n, fsm.transmit_next(q)] - stay
            best = optimize_interval(sigma2, fsm.drop_prob(q), gap, search_points, tol)
            sym = optimize_symmetric(sigma2, fsm.drop_prob(q), gap, search_points, tol)
            if sym.objective <= best.objective:
                best = sym
            elif sym.objective - best.objective > improvement_floor:
                record = AsymmetryRecord(n, q, (best.tau_lo, best.tau_hi), best.objective, sym.objective)
                log.append(record)
                logger.warning(f"Stage {n}, state {q}: asymmetric interval [{best.tau_lo:.6g}, {best.tau_hi:.6g}] "
                               f"beats the best symmetric rule by {record.improvement:.3g}")
            tau_lo[n - 1, q], tau_hi[n - 1, q] = best.tau_lo, best.tau_hi
            p_tx[n - 1, q] = best.p_transmit
            sym_obj[n - 1, q] = sym.objective
            values[n - 1, q] = best.objective + stay
        logger.debug(f"Stage {n}: V = {values[n - 1].tolist()}")

    logger.info(f"Solved white-source program: N={horizon}, m={m}, V1(q1)={values[0, fsm.initial_state]:.6g}, "
                f"{len(log)} asymmetric improvement(s)")
    return IidValueTable(horizon, m, sigma2, values, tau_lo, tau_hi, p_tx, sym_obj, masked, log, provenance)


def export_iid_table_csv(table, path):
    with open(path, 'w', newline='') as fh:
        fh.write(f"# provenance={table.provenance}\n")
        writer = csv.writer(fh)
        writer.writerow(['n', 'q', 'V', 'tau_lo', 'tau_hi', 'p_transmit', 'symmetric_objective'])
        for n in range(1, table.horizon + 2):
            for q in range(table.num_states):
                if n <= table.horizon:
                    tail = [format_float(table.tau_lo[n - 1, q]), format_float(table.tau_hi[n - 1, q]),
                            format_float(table.p_transmit[n - 1, q]), format_float(table.symmetric_objective[n - 1, q])]
                else:
                    tail = ['', '', '', '']
                writer.writerow([n, q, format_float(table.values[n - 1, q]), *tail])
    return path
