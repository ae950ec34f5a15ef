"""
Backward induction for symmetric transmission policies and the checks run on its output.

Stage n decides on the current error e with the channel in state q:

    C0_n(e, q) = e^2 + h_{n+1}^{q0}(e)
    C1_n(e, q) = p_q e^2 + p_q h_{n+1}^{q1}(e) + (1 - p_q) E_W[V_{n+1}(W, q1)]
    V_n(e, q)  = min(C0_n, C1_n),   V_{N+1}(e, q) = e^2

with h_{n+1}^{q}(e) = E_W[V_{n+1}(a e + W, q)], q0/q1 the silent/transmit
successors and p_q the drop probability. Ties stay silent.
"""
from dataclasses import dataclass, field
import csv
import logging

import numpy as np

from .channel import reachable_states, energy_harvesting_fsm, workload_chain_fsm, ChannelFsm
from .exceptions import GridOverflowError
from .policy import TransmitPolicy, ThresholdRule, NotThreshold, NEVER, extract_threshold, rules_to_policy
from .process import PlantModel
from .quadrature import (
    ErrorGrid, GridFunction, KERNEL_SIGMAS,
    gaussian_expectation, is_symmetric_nondecreasing, difference_quotients,
)
from .utils import provenance_hash, format_float

logger = logging.getLogger(__name__)

DEFAULT_VALUE_CAP = 1e12


@dataclass(eq=False)
class ValueTable:
    grid: ErrorGrid
    horizon: int
    num_states: int
    # values[n - 1, q] holds V_n on the grid for n = 1..N+1
    values: np.ndarray
    # c0/c1[n - 1, q] for n = 1..N; c1 is +inf at masked states
    c0: np.ndarray
    c1: np.ndarray
    provenance: str = ''

    def value(self, n, q):
        return GridFunction(self.grid, self.values[n - 1, q])

    def value_at(self, n, q, e):
        return float(self.value(n, q).evaluate(e))

    def initial_value(self, fsm):
        return float(self.values[0, fsm.initial_state, self.grid.center])


@dataclass(frozen=True)
class TheoremBound:
    v_prime: tuple
    v: float
    threshold_condition: float

    @classmethod
    def for_plant(cls, plant):
        a2 = plant.a ** 2
        N = plant.horizon
        v_prime = tuple(2 * a2 * (N + 1 - n) + a2 for n in range(1, N + 2))
        return cls(v_prime=v_prime, v=v_prime[0], threshold_condition=1.0 / (1.0 + v_prime[0]))

    def at_stage(self, n):
        return self.v_prime[n - 1]


@dataclass(frozen=True)
class ThresholdConditionResult:
    v: float
    threshold: float
    satisfied: bool
    offending_states: tuple = ()


def backward_induction(plant, fsm, grid, value_cap=DEFAULT_VALUE_CAP, provenance=None):
    N = plant.horizon
    m = fsm.num_states
    P = grid.num_points
    e2 = grid.points ** 2
    masked = fsm.masked_states
    if provenance is None:
        provenance = provenance_hash(plant, fsm, {'grid': grid.to_dict(), 'value_cap': value_cap})

    values = np.empty((N + 1, m, P))
    c0 = np.empty((N, m, P))
    c1 = np.empty((N, m, P))
    values[N, :, :] = e2

    transmit_targets = {fsm.transmit_next(q) for q in fsm.states if not masked[q]}
    successors = transmit_targets | {fsm.silent_next(q) for q in fsm.states}
    for n in range(N, 0, -1):
        nxt = {q: GridFunction(grid, values[n, q]) for q in successors}
        h = {q: gaussian_expectation(f, plant.a, plant.sigma2).values for q, f in nxt.items()}
        # mirror-average so that c0, c1 and the transmit set are exactly symmetric about e = 0
        h = {q: 0.5 * (v + v[::-1]) for q, v in h.items()}
        # E_W[V_{n+1}(W, q1)] is h_{n+1}^{q1} read at e = 0; it does not depend on e
        fresh = {q: h[q][grid.center] for q in transmit_targets}

        for q in fsm.states:
            c0[n - 1, q] = e2 + h[fsm.silent_next(q)]
            if masked[q]:
                c1[n - 1, q] = np.inf
                values[n - 1, q] = c0[n - 1, q]
                continue
            p = fsm.drop_prob(q)
            q1 = fsm.transmit_next(q)
            c1[n - 1, q] = p * e2 + p * h[q1] + (1 - p) * fresh[q1]
            values[n - 1, q] = np.minimum(c0[n - 1, q], c1[n - 1, q])

        peak = float(np.max(np.abs(values[n - 1])))
        if not np.isfinite(peak) or peak > value_cap:
            raise GridOverflowError(
                f"Stage {n} values reach {peak:.3g} (cap {value_cap:.3g}); "
                f"the grid half width {grid.half_width:.4g} is too small for this plant"
            )
        logger.debug(f"Stage {n}: V(0, q) = {values[n - 1, :, grid.center].tolist()}")

    table = ValueTable(grid, N, m, values, c0, c1, provenance)
    transmit = c1 < c0
    transmit[:, masked, :] = False
    policy = TransmitPolicy.gridded(transmit, grid, masked, symmetric=True, provenance=provenance)
    logger.info(f"Solved symmetric program: N={N}, m={m}, grid={P} points, "
                f"V1(0, q1)={table.initial_value(fsm):.6g}")
    return table, policy


@dataclass(frozen=True)
class StructureViolation:
    n: int
    q: int
    e: float
    kind: str
    amount: float


@dataclass
class StructureReport:
    violations: list = field(default_factory=list)

    @property
    def ok(self):
        return not self.violations

    def __bool__(self):
        return self.ok


def check_value_structure(table, tol=1e-8):
    """Every V_n(., q) must be symmetric, non-decreasing in |e| and minimal at e = 0.

    ``tol`` is relative to each slice's value range.
    """
    report = StructureReport()
    c = table.grid.center
    for n in range(1, table.horizon + 2):
        for q in range(table.num_states):
            f = table.value(n, q)
            slack = tol * max(f.value_range(), 1.0)
            check = is_symmetric_nondecreasing(f, slack)
            if not check:
                v = check.violation
                report.violations.append(StructureViolation(n, q, v.e, v.kind, v.amount))
            lowest = int(np.argmin(f.values))
            if f.values[c] > f.values[lowest] + slack:
                report.violations.append(StructureViolation(
                    n, q, float(table.grid.points[lowest]), 'argmin', float(f.values[c] - f.values[lowest])))
    if report.violations:
        logger.warning(f"Value structure check found {len(report.violations)} violation(s)")
    return report


def _interior_mask(grid, plant, e):
    # Points whose Gaussian expectation never leaves the sampled grid.
    return abs(plant.a) * e + KERNEL_SIGMAS * plant.sigma <= grid.half_width


@dataclass(frozen=True)
class BoundViolation:
    n: int
    q: int
    e: float
    quotient: float
    bound: float


def check_lemma4_bound(table, plant, slack=None):
    """Difference quotients of h_n^q against the stage bound 2a^2(N+1-n) + a^2."""
    grid = table.grid
    if slack is None:
        slack = 10 * grid.spacing
    bound = TheoremBound.for_plant(plant)
    report = StructureReport()
    for n in range(1, table.horizon + 2):
        limit = bound.at_stage(n) + slack
        for q in range(table.num_states):
            h = gaussian_expectation(table.value(n, q), plant.a, plant.sigma2)
            es, quotients = difference_quotients(h)
            keep = _interior_mask(grid, plant, es + grid.spacing)
            bad = np.flatnonzero(keep & (quotients > limit))
            if bad.size:
                k = bad[0]
                report.violations.append(BoundViolation(n, q, float(es[k]), float(quotients[k]), limit))
    if report.violations:
        logger.warning(f"Difference-quotient bound exceeded at {len(report.violations)} (n, q) pair(s)")
    return report


def theorem2_condition(plant, fsm):
    bound = TheoremBound.for_plant(plant)
    offending = tuple(q for q in fsm.states
                      if not fsm.is_masked(q) and not fsm.drop_prob(q) < bound.threshold_condition)
    return ThresholdConditionResult(v=bound.v, threshold=bound.threshold_condition,
                                    satisfied=not offending, offending_states=offending)


@dataclass(frozen=True)
class StageCertificate:
    n: int
    q: int
    certified: bool
    failing_e: float = None


def check_stage_condition(table, plant, fsm):
    """Per-stage sufficient condition p_q O(e, q1) < (1 - p_q) + O(e, q0) at every interior e >= 0."""
    grid = table.grid
    quotients = {}

    def stage_quotients(n, q):
        if (n, q) not in quotients:
            h = gaussian_expectation(table.value(n, q), plant.a, plant.sigma2)
            quotients[(n, q)] = difference_quotients(h)
        return quotients[(n, q)]

    certificates = []
    for n in range(1, table.horizon + 1):
        for q in fsm.states:
            if fsm.is_masked(q):
                certificates.append(StageCertificate(n, q, True))
                continue
            p = fsm.drop_prob(q)
            es, o1 = stage_quotients(n + 1, fsm.transmit_next(q))
            _, o0 = stage_quotients(n + 1, fsm.silent_next(q))
            keep = _interior_mask(grid, plant, es + grid.spacing)
            bad = np.flatnonzero(keep & ~(p * o1 < (1 - p) + o0))
            if bad.size:
                certificates.append(StageCertificate(n, q, False, float(es[bad[0]])))
            else:
                certificates.append(StageCertificate(n, q, True))
    return certificates


@dataclass(eq=False)
class ThresholdReport:
    table: ValueTable
    gridded_policy: TransmitPolicy
    # rules[n - 1][q]: ThresholdRule or NotThreshold
    rules: list
    reachable: list
    masked: np.ndarray

    @property
    def witnesses(self):
        return [(n, q, rule)
                for n, states in enumerate(self.reachable[:-1], start=1)
                for q in sorted(states)
                if isinstance(rule := self.rules[n - 1][q], NotThreshold)]

    @property
    def all_threshold(self):
        return not self.witnesses

    def tau_table(self):
        return np.array([[r.tau_hi if isinstance(r, ThresholdRule) else np.nan for r in row] for row in self.rules])

    def threshold_policy(self):
        """Symmetric-threshold policy; pairs never reached from q1 fall back to never-transmit."""
        if self.witnesses:
            n, q, rule = self.witnesses[0]
            raise ValueError(f"Stage {n}, state {q} is not of threshold form: {rule}")
        rules = [[r if isinstance(r, ThresholdRule) else NEVER for r in row] for row in self.rules]
        return rules_to_policy(rules, self.masked, symmetric=True, provenance=self.table.provenance)


def solve_and_extract(plant, fsm, grid, value_cap=DEFAULT_VALUE_CAP):
    table, policy = backward_induction(plant, fsm, grid, value_cap)
    rules = [[NEVER if fsm.is_masked(q) else extract_threshold(grid, policy.transmit[n - 1, q], symmetric=True)
              for q in fsm.states]
             for n in range(1, plant.horizon + 1)]
    report = ThresholdReport(table, policy, rules, reachable_states(fsm, plant.horizon), fsm.masked_states)
    for n, q, rule in report.witnesses:
        logger.warning(f"Stage {n}, state {q}: optimal symmetric policy is not threshold ({rule})")
    return report


@dataclass(frozen=True)
class SweepRow:
    p: float
    state: object
    theorem2_satisfied: bool
    all_threshold: bool
    witnesses: int
    v1: float


def drop_probability_sweep(plant, builder, params, probabilities, grid, value_cap=DEFAULT_VALUE_CAP):
    """Re-solve for each drop probability.

    energy_harvesting: every transmit-capable state takes p. workload_chain:
    each state takes p in turn, the others keep ``params['drop_probs']``.
    """
    rows = []
    for p in probabilities:
        if builder == 'energy_harvesting':
            variants = [(None, energy_harvesting_fsm(**{**params, 'p_tx': p}))]
        elif builder == 'workload_chain':
            variants = []
            for i in range(len(params['drop_probs'])):
                drops = list(params['drop_probs'])
                drops[i] = p
                variants.append((i, workload_chain_fsm(params['window'], drops)))
        else:
            raise ValueError(f"Unknown channel builder '{builder}'")

        for state, fsm in variants:
            report = solve_and_extract(plant, fsm, grid, value_cap)
            rows.append(SweepRow(
                p=float(p),
                state=state,
                theorem2_satisfied=theorem2_condition(plant, fsm).satisfied,
                all_threshold=report.all_threshold,
                witnesses=len(report.witnesses),
                v1=report.table.initial_value(fsm),
            ))
            logger.info(f"Sweep p={p:g} state={state}: threshold={rows[-1].all_threshold}")
    return rows


def random_theorem2_instance(rng, max_states=5, max_horizon=10, a_range=(0.5, 1.2), sigma2=1.0):
    """Random unmasked FSM and plant with every drop probability below the threshold condition 1/(1+v)."""
    m = int(rng.integers(1, max_states + 1))
    horizon = int(rng.integers(1, max_horizon + 1))
    a = float(rng.uniform(*a_range))
    plant = PlantModel(a=a, sigma2=sigma2, horizon=horizon)
    threshold = TheoremBound.for_plant(plant).threshold_condition
    transitions = [(int(rng.integers(m)), int(rng.integers(m))) for _ in range(m)]
    drops = [float(rng.uniform(0.0, threshold)) * (1 - 1e-9) for _ in range(m)]
    fsm = ChannelFsm(num_states=m, transitions=transitions, drop_probs=drops,
                     initial_state=int(rng.integers(m)), transmit_allowed=[True] * m)
    return plant, fsm


def export_value_table_csv(table, policy, path):
    with open(path, 'w', newline='') as fh:
        fh.write(f"# provenance={table.provenance}\n")
        writer = csv.writer(fh)
        writer.writerow(['n', 'q', 'e', 'V', 'C0', 'C1', 'transmit'])
        points = table.grid.points
        for n in range(1, table.horizon + 2):
            for q in range(table.num_states):
                for i, e in enumerate(points):
                    if n <= table.horizon:
                        tail = [format_float(table.c0[n - 1, q, i]), format_float(table.c1[n - 1, q, i]),
                                int(policy.transmit[n - 1, q, i])]
                    else:
                        tail = ['', '', '']
                    writer.writerow([n, q, format_float(e), format_float(table.values[n - 1, q, i]), *tail])
    return path
