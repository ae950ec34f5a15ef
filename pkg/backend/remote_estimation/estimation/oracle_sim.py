"""
Closed-loop Monte Carlo simulation and exact brute-force oracles on small discrete instances.
"""
from dataclasses import dataclass, field
import csv
import logging
import math

import numpy as np
from django.core.exceptions import ValidationError

from .channel import ChannelFsm, reachable_states
from .dp_iid import conditional_means
from .exceptions import EnumerationLimitError, UnsupportedPolicyError
from .policy import PolicyKind, decide_batch
from .process import EstimatorState, error_step
from .quadrature import partial_moments
from .utils import format_float

logger = logging.getLogger(__name__)

ENUMERATION_LIMIT = 10 ** 7
EXACT_TOL = 1e-12


@dataclass(eq=False)
class SimSummary:
    mode: str
    trials: int
    seed: int
    # one entry per cost epoch
    stage_mse: np.ndarray
    stage_se: np.ndarray
    total: float
    total_se: float
    # one entry per decision stage
    transmit_rate: np.ndarray
    # occupancy[n - 1, q]: fraction of trials in state q at decision stage n
    occupancy: np.ndarray
    trace: list = field(default_factory=list)

    def within(self, reference, num_se=3.0):
        return abs(self.total - reference) <= num_se * self.total_se

    def to_dict(self):
        return {
            'mode': self.mode,
            'trials': self.trials,
            'seed': self.seed,
            'stage_mse': self.stage_mse.tolist(),
            'stage_se': self.stage_se.tolist(),
            'total': self.total,
            'total_se': self.total_se,
            'transmit_rate': self.transmit_rate.tolist(),
            'occupancy': self.occupancy.tolist(),
        }


def _draw_streams(seed, trials, horizon):
    """Per-trial Philox substreams keyed by (seed, trial index): N+1 normals and N uniforms each."""
    normals = np.empty((trials, horizon + 1))
    uniforms = np.empty((trials, horizon))
    for t in range(trials):
        gen = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(t,))))
        normals[t] = gen.standard_normal(horizon + 1)
        uniforms[t] = gen.random(horizon)
    return normals, uniforms


def _transition_arrays(fsm):
    silent = np.array([fsm.silent_next(q) for q in fsm.states], dtype=int)
    transmit = np.array([silent[q] if fsm.is_masked(q) else fsm.transmit_next(q) for q in fsm.states], dtype=int)
    return silent, transmit, np.array(fsm.drop_probs)


def _simulation_mode(plant, policy):
    if policy.kind is PolicyKind.INTERVAL_PAIR and plant.a == 0:
        return 'interval'
    if policy.symmetric:
        return 'error_recursion'
    raise UnsupportedPolicyError(
        f"Asymmetric {policy.kind.value} policy with a={plant.a}: the error recursion only holds for symmetric "
        "policies and interval estimators are only derived for a = 0")


def simulate(plant, fsm, policy, trials, seed, trace_trials=0):
    if int(trials) != trials or trials < 1:
        raise ValidationError(f"Number of trials must be a positive integer (got {trials})")
    if policy.horizon != plant.horizon or policy.num_states != fsm.num_states:
        raise ValidationError(
            f"Policy covers N={policy.horizon}, m={policy.num_states}; "
            f"the run has N={plant.horizon}, m={fsm.num_states}")
    mode = _simulation_mode(plant, policy)
    trials = int(trials)
    N = plant.horizon
    normals, uniforms = _draw_streams(seed, trials, N)
    silent_next, transmit_next, drops = _transition_arrays(fsm)

    q = np.full(trials, fsm.initial_state, dtype=int)
    x = np.full(trials, float(plant.x0))
    # x0 is known to the estimator, so the first decision sees a zero error
    estimator = EstimatorState(estimate=x.copy(), error=np.zeros(trials))
    w = np.zeros(trials)
    epochs = N + 1 if mode == 'error_recursion' else N
    costs = np.empty((trials, epochs))
    rate = np.empty(N)
    occupancy = np.empty((N, fsm.num_states))
    trace = []

    for n in range(1, N + 1):
        occupancy[n - 1] = np.bincount(q, minlength=fsm.num_states) / trials
        if mode == 'interval':
            x = plant.sigma * normals[:, n - 1]
            e = x
        else:
            e = plant.a * estimator.error + w
        r = decide_batch(policy, n, q, e)
        c = uniforms[:, n - 1] >= drops[q]
        delivered = r & c
        if mode == 'interval':
            mu0, mu1 = conditional_means(plant.sigma2, policy.tau_lo[n - 1, q], policy.tau_hi[n - 1, q])
            estimator.update(x, np.where(delivered, 0.0, np.where(r, x - mu1, x - mu0)), (mu0, mu1))
        else:
            estimator.update(x, error_step(plant, estimator.error, delivered, w))
        costs[:, n - 1] = estimator.error ** 2
        rate[n - 1] = r.mean()
        for t in range(min(trace_trials, trials)):
            trace.append((t, n, x[t], estimator.estimate[t], estimator.error[t], int(r[t]), int(c[t]), int(q[t])))

        q = np.where(r, transmit_next[q], silent_next[q])
        if mode == 'error_recursion':
            w = plant.sigma * normals[:, n - 1]
            x = plant.a * x + w

    if mode == 'error_recursion':
        estimator.update(x, plant.a * estimator.error + w)
        costs[:, N] = estimator.error ** 2
        for t in range(min(trace_trials, trials)):
            trace.append((t, N + 1, x[t], estimator.estimate[t], estimator.error[t], 0, 0, int(q[t])))

    per_trial = costs.sum(axis=1)
    stage_mse = costs.mean(axis=0)
    scale = math.sqrt(trials)
    stage_se = costs.std(axis=0, ddof=1) / scale if trials > 1 else np.zeros(epochs)
    total_se = float(per_trial.std(ddof=1) / scale) if trials > 1 else 0.0
    summary = SimSummary(mode, trials, int(seed), stage_mse, stage_se, math.fsum(stage_mse), total_se,
                         rate, occupancy, trace)
    logger.info(f"Simulated {trials} trials ({mode}): total {summary.total:.6g} +/- {summary.total_se:.3g}")
    return summary


def write_trace_csv(summary, path):
    with open(path, 'w', newline='') as fh:
        writer = csv.writer(fh)
        writer.writerow(['trial', 'n', 'x', 'xhat', 'e', 'r', 'c', 'q'])
        for t, n, x, xhat, e, r, c, q in summary.trace:
            writer.writerow([t, n, format_float(x), format_float(xhat), format_float(e), r, c, q])
    return path


@dataclass(eq=False)
class DiscreteInstance:
    """White source drawn from a finite support, sent over ``fsm`` for ``horizon`` stages."""
    values: np.ndarray
    probs: np.ndarray
    fsm: ChannelFsm
    horizon: int
    limit: int = ENUMERATION_LIMIT
    within_variance: float = 0.0

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        probs = np.asarray(self.probs, dtype=float)
        if values.shape != probs.shape or values.ndim != 1 or values.size == 0:
            raise ValidationError("Support values and probabilities must be equal-length, non-empty lists")
        if np.any(probs < 0) or not math.isclose(probs.sum(), 1.0, abs_tol=1e-9):
            raise ValidationError(f"Support probabilities must be non-negative and sum to 1 (got {probs.sum()})")
        order = np.argsort(values, kind='stable')
        self.values = values[order]
        self.probs = probs[order]

    @property
    def support_size(self):
        return self.values.size

    def slots(self):
        """Reachable (n, q) decision slots with their admissible mask indices."""
        reach = reachable_states(self.fsm, self.horizon)
        full = list(range(2 ** self.support_size))
        return [(n, q, [0] if self.fsm.is_masked(q) else full)
                for n in range(1, self.horizon + 1) for q in sorted(reach[n - 1])]

    def enumeration_size(self):
        return math.prod(len(choices) for _, _, choices in self.slots())


def _mask_bits(k):
    return ((np.arange(2 ** k)[:, None] >> np.arange(k)) & 1).astype(bool)


def _branch_within(bits, values, probs):
    # sum over the branch of P(x) (x - E[X | branch])^2, one entry per mask
    w = bits * probs
    mass = w.sum(axis=1)
    mean = np.divide(w @ values, mass, out=np.zeros_like(mass), where=mass > 0)
    return (w * (values[None, :] - mean[:, None]) ** 2).sum(axis=1), mass


def stage_tables(inst):
    """Per-state (stage cost, transmit probability) for every transmit mask over the support."""
    bits = _mask_bits(inst.support_size)
    silent_cost, _ = _branch_within(~bits, inst.values, inst.probs)
    transmit_cost, p_tx = _branch_within(bits, inst.values, inst.probs)
    return {q: (silent_cost + inst.fsm.drop_prob(q) * transmit_cost, p_tx) for q in inst.fsm.states}


def is_interval_complement(mask, support_size):
    """True iff the silent points of ``mask`` are empty or contiguous in support order."""
    silent = [k for k in range(support_size) if not (mask >> k) & 1]
    return not silent or silent[-1] - silent[0] + 1 == len(silent)


def mask_to_tuple(mask, support_size):
    return tuple(bool((mask >> k) & 1) for k in range(support_size))


@dataclass(eq=False)
class ExhaustiveResult:
    optimal_cost: float
    # each minimiser maps (n, q) -> transmit flags over the sorted support
    minimizers: list
    evaluated: int

    def has_interval_optimizer(self):
        return any(all(is_interval_complement(sum(b << k for k, b in enumerate(flags)), len(flags))
                       for flags in policy.values())
                   for policy in self.minimizers)


def exhaustive_policy_search(inst):
    """Exact expected cost of every deterministic stage-wise policy, evaluated forward over channel states."""
    size = inst.enumeration_size()
    if size > inst.limit:
        raise EnumerationLimitError(f"{size} policies exceed the enumeration limit {inst.limit}")

    fsm = inst.fsm
    m = fsm.num_states
    tables = stage_tables(inst)
    cost = np.zeros(1)
    dist = np.zeros((1, m))
    dist[0, fsm.initial_state] = 1.0
    slots = inst.slots()

    for n in range(1, inst.horizon + 1):
        nxt = np.zeros_like(dist)
        for slot_n, q, choices in slots:
            if slot_n != n:
                continue
            k = len(choices)
            c, p_tx = (arr[choices] for arr in tables[q])
            move = np.zeros((k, m))
            move[:, fsm.silent_next(q)] += 1 - p_tx
            if not fsm.is_masked(q):
                move[:, fsm.transmit_next(q)] += p_tx
            w = dist[:, q]
            cost = (cost[:, None] + w[:, None] * c[None, :]).reshape(-1)
            nxt = (nxt[:, None, :] + w[:, None, None] * move[None, :, :]).reshape(-1, m)
            dist = np.repeat(dist, k, axis=0)
        dist = nxt

    best = float(cost.min())
    winners = np.flatnonzero(cost <= best + EXACT_TOL * max(1.0, abs(best)))
    shape = [len(choices) for _, _, choices in slots]
    picks = np.unravel_index(winners, shape)
    minimizers = []
    for i in range(winners.size):
        minimizers.append({
            (n, q): mask_to_tuple(choices[picks[s][i]], inst.support_size)
            for s, (n, q, choices) in enumerate(slots)
        })
    logger.debug(f"Exhaustive search over {size} policies: optimum {best:.12g}, {len(minimizers)} minimiser(s)")
    return ExhaustiveResult(best, minimizers, size)


@dataclass(eq=False)
class DiscreteSolution:
    value: float
    values: np.ndarray
    policy: dict


def discrete_dp(inst):
    """Exact backward induction on the finite instance.

    Ties prefer masks whose silent set is one interval, then fewer transmitting points.
    """
    fsm = inst.fsm
    k = inst.support_size
    tables = stage_tables(inst)
    values = np.zeros((inst.horizon + 1, fsm.num_states))
    policy = {}
    popcount = np.array([bin(j).count('1') for j in range(2 ** k)])
    interval = np.array([is_interval_complement(j, k) for j in range(2 ** k)])

    for n in range(inst.horizon, 0, -1):
        for q in fsm.states:
            c, p_tx = tables[q]
            stay = values[n, fsm.silent_next(q)]
            if fsm.is_masked(q):
                values[n - 1, q] = c[0] + stay
                policy[(n, q)] = mask_to_tuple(0, k)
                continue
            obj = c + p_tx * values[n, fsm.transmit_next(q)] + (1 - p_tx) * stay
            best = obj.min()
            ties = np.flatnonzero(obj <= best + EXACT_TOL * max(1.0, abs(best)))
            pick = min(ties, key=lambda j: (not interval[j], popcount[j], j))
            values[n - 1, q] = obj[pick]
            policy[(n, q)] = mask_to_tuple(int(pick), k)
    return DiscreteSolution(float(values[0, fsm.initial_state]), values, policy)


def quantized_gaussian_instance(sigma2, num_points, fsm, horizon, span=2.0, cell_means=True):
    """Quantise N(0, sigma2) onto ``num_points`` evenly spaced points over [-span, span] sigma.

    Cells split the line at the midpoints; with ``cell_means`` each point is
    replaced by its cell's conditional mean, which makes the cost of any
    cell-measurable policy on the continuous source exceed the discrete cost by
    at most ``horizon * within_variance`` (exactly that much when p = 1).
    """
    sigma = math.sqrt(sigma2)
    points = np.linspace(-span, span, num_points) * sigma if num_points > 1 else np.zeros(1)
    edges = np.concatenate(([-np.inf], 0.5 * (points[1:] + points[:-1]), [np.inf]))
    mass, m1, _ = partial_moments(sigma2, edges[:-1], edges[1:])
    values = m1 / mass if cell_means else points
    within = sigma2 - float(np.sum(mass * values ** 2)) if cell_means else 0.0
    return DiscreteInstance(values, mass / mass.sum(), fsm, horizon, within_variance=max(within, 0.0))


def random_discrete_instance(rng, max_support=5, max_states=3, max_horizon=2, symmetric=True):
    k = int(rng.integers(1, max_support + 1))
    if symmetric:
        half = np.sort(rng.uniform(0.1, 3.0, k // 2))
        weights = rng.uniform(0.1, 1.0, k // 2)
        middle = [0.0] if k % 2 else []
        values = np.concatenate((-half[::-1], middle, half))
        probs = np.concatenate((weights[::-1], rng.uniform(0.1, 1.0, len(middle)), weights))
    else:
        values = rng.normal(0.0, 1.0, k)
        probs = rng.uniform(0.1, 1.0, k)

    m = int(rng.integers(1, max_states + 1))
    masked = rng.random(m) < 0.25
    transitions = [(int(rng.integers(m)), None if masked[q] else int(rng.integers(m))) for q in range(m)]
    drops = [1.0 if masked[q] else float(rng.uniform(0.0, 1.0)) for q in range(m)]
    fsm = ChannelFsm(num_states=m, transitions=transitions, drop_probs=drops,
                     initial_state=int(rng.integers(m)), transmit_allowed=[not b for b in masked])
    horizon = int(rng.integers(1, max_horizon + 1))
    return DiscreteInstance(values, probs / probs.sum(), fsm, horizon)
