"""
Transmission policies and the threshold-structure extractor.

Orientation: a threshold rule names the NO-transmit region. The encoder stays
silent while the error lies inside [tau_lo, tau_hi] and transmits outside it;
the symmetric form transmits iff |e| > tau. A degenerate interval
(tau_lo == tau_hi, tau == 0) is the empty silent region, i.e. always transmit,
and (-inf, +inf) is never transmit.
"""
from dataclasses import dataclass
from enum import Enum
import csv
import logging

import numpy as np

from .quadrature import ErrorGrid

logger = logging.getLogger(__name__)


class PolicyKind(str, Enum):
    GRIDDED = 'gridded'
    SYMMETRIC_THRESHOLD = 'symmetric_threshold'
    INTERVAL_PAIR = 'interval_pair'


@dataclass(frozen=True)
class ThresholdRule:
    tau_lo: float
    tau_hi: float
    symmetric: bool = False

    @property
    def tau(self):
        return 0.5 * (self.tau_hi - self.tau_lo)

    @property
    def always_transmits(self):
        return self.tau_lo == self.tau_hi

    @property
    def never_transmits(self):
        return self.tau_lo == -np.inf and self.tau_hi == np.inf

    @property
    def finite(self):
        return np.isfinite(self.tau_lo) and np.isfinite(self.tau_hi)

    def transmits(self, e):
        e = np.asarray(e, dtype=float)
        return (self.tau_lo == self.tau_hi) | (e < self.tau_lo) | (e > self.tau_hi)


NEVER = ThresholdRule(-np.inf, np.inf, symmetric=True)
ALWAYS = ThresholdRule(0.0, 0.0, symmetric=True)


@dataclass(frozen=True)
class NotThreshold:
    reason: str
    witness: tuple = None

    def __str__(self):
        if self.witness:
            e1, e2, e3 = self.witness
            return f"{self.reason}: silent at {e1:.6g} and {e3:.6g}, transmits at {e2:.6g}"
        return self.reason


def extract_threshold(grid, transmit, symmetric=False):
    """Recover the threshold rule behind a gridded transmit set, or report why there is none.

    Boundaries are placed half-way between the last silent and the first
    transmitting grid point. The symmetric variant also requires the silent
    interval to be the exact mirror image of itself about 0.
    """
    transmit = np.asarray(transmit, dtype=bool)
    points = grid.points
    silent = np.flatnonzero(~transmit)
    if silent.size == 0:
        return ALWAYS if symmetric else ThresholdRule(0.0, 0.0)
    if silent.size == transmit.size:
        return NEVER if symmetric else ThresholdRule(-np.inf, np.inf)

    i_lo, i_hi = silent[0], silent[-1]
    inside = np.flatnonzero(transmit[i_lo:i_hi + 1])
    if inside.size:
        witness = (float(points[i_lo]), float(points[i_lo + inside[0]]), float(points[i_hi]))
        return NotThreshold('transmit set is not the complement of one interval', witness)

    tau_lo = -np.inf if i_lo == 0 else 0.5 * (points[i_lo - 1] + points[i_lo])
    tau_hi = np.inf if i_hi == len(points) - 1 else 0.5 * (points[i_hi] + points[i_hi + 1])
    if not symmetric:
        return ThresholdRule(float(tau_lo), float(tau_hi))

    if not (np.isfinite(tau_lo) and np.isfinite(tau_hi)) or i_lo + i_hi != len(points) - 1:
        return NotThreshold(f'silent interval [{tau_lo:.6g}, {tau_hi:.6g}] is not centred on 0')
    return ThresholdRule(-float(tau_hi), float(tau_hi), symmetric=True)


@dataclass(eq=False)
class TransmitPolicy:
    kind: PolicyKind
    horizon: int
    num_states: int
    masked: np.ndarray
    symmetric: bool
    tau_lo: np.ndarray = None
    tau_hi: np.ndarray = None
    transmit: np.ndarray = None
    grid: ErrorGrid = None
    provenance: str = ''

    def __post_init__(self):
        self.kind = PolicyKind(self.kind)
        self.masked = np.asarray(self.masked, dtype=bool)
        if self.kind is PolicyKind.GRIDDED:
            self.transmit = np.array(self.transmit, dtype=bool)
            self.transmit[:, self.masked, :] = False
            return

        self.tau_lo = np.array(self.tau_lo, dtype=float)
        self.tau_hi = np.array(self.tau_hi, dtype=float)
        self.tau_lo[:, self.masked] = -np.inf
        self.tau_hi[:, self.masked] = np.inf
        if np.any(self.tau_lo > self.tau_hi):
            raise ValueError("Interval rules need tau_lo <= tau_hi")
        if self.kind is PolicyKind.SYMMETRIC_THRESHOLD:
            if np.any(self.tau_hi < 0) or not np.array_equal(self.tau_lo, -self.tau_hi):
                raise ValueError("Symmetric thresholds need tau_lo == -tau_hi with tau >= 0")
            self.symmetric = True

    @classmethod
    def gridded(cls, transmit, grid, masked, symmetric=True, provenance=''):
        transmit = np.asarray(transmit, dtype=bool)
        horizon, num_states, _ = transmit.shape
        return cls(PolicyKind.GRIDDED, horizon, num_states, masked, symmetric,
                   transmit=transmit, grid=grid, provenance=provenance)

    @classmethod
    def symmetric_threshold(cls, tau, masked, provenance=''):
        tau = np.asarray(tau, dtype=float)
        horizon, num_states = tau.shape
        return cls(PolicyKind.SYMMETRIC_THRESHOLD, horizon, num_states, masked, True,
                   tau_lo=-tau, tau_hi=tau, provenance=provenance)

    @classmethod
    def interval_pair(cls, tau_lo, tau_hi, masked, provenance=''):
        tau_lo = np.asarray(tau_lo, dtype=float)
        tau_hi = np.asarray(tau_hi, dtype=float)
        horizon, num_states = tau_lo.shape
        symmetric = bool(np.array_equal(tau_lo, -tau_hi))
        return cls(PolicyKind.INTERVAL_PAIR, horizon, num_states, masked, symmetric,
                   tau_lo=tau_lo, tau_hi=tau_hi, provenance=provenance)

    @classmethod
    def constant(cls, rule, horizon, masked, provenance=''):
        masked = np.asarray(masked, dtype=bool)
        shape = (horizon, masked.size)
        if rule.symmetric:
            return cls.symmetric_threshold(np.full(shape, rule.tau_hi), masked, provenance)
        return cls.interval_pair(np.full(shape, rule.tau_lo), np.full(shape, rule.tau_hi), masked, provenance)

    def rule(self, n, q):
        if self.kind is PolicyKind.GRIDDED:
            raise TypeError("Gridded policies have no closed-form rule; use extract_threshold")
        return ThresholdRule(float(self.tau_lo[n - 1, q]), float(self.tau_hi[n - 1, q]),
                             symmetric=self.kind is PolicyKind.SYMMETRIC_THRESHOLD)


def decide_batch(policy, n, q, e):
    """Vectorised decide: ``q`` and ``e`` are arrays of equal shape; returns a boolean array."""
    q = np.asarray(q, dtype=int)
    e = np.asarray(e, dtype=float)
    if policy.kind is PolicyKind.GRIDDED:
        idx = np.clip(np.rint(e / policy.grid.spacing).astype(int), -policy.grid.center, policy.grid.center)
        act = policy.transmit[n - 1, q, idx + policy.grid.center]
    else:
        lo = policy.tau_lo[n - 1, q]
        hi = policy.tau_hi[n - 1, q]
        act = (lo == hi) | (e < lo) | (e > hi)
    return act & ~policy.masked[q]


def decide(policy, n, q, e):
    return int(decide_batch(policy, n, np.array([q]), np.array([e]))[0])


def rules_to_policy(rules, masked, symmetric, provenance=''):
    """Assemble an (N x m) table of ThresholdRule into a policy; NotThreshold entries are rejected."""
    horizon = len(rules)
    num_states = len(rules[0])
    lo = np.empty((horizon, num_states))
    hi = np.empty((horizon, num_states))
    for i, row in enumerate(rules):
        for q, rule in enumerate(row):
            if not isinstance(rule, ThresholdRule):
                raise ValueError(f"Stage {i + 1}, state {q} has no threshold rule ({rule})")
            lo[i, q], hi[i, q] = rule.tau_lo, rule.tau_hi
    if symmetric:
        return TransmitPolicy.symmetric_threshold(hi, masked, provenance)
    return TransmitPolicy.interval_pair(lo, hi, masked, provenance)


def _header_line(policy):
    masked = ';'.join(str(int(m)) for m in policy.masked)
    return f"# provenance={policy.provenance} symmetric={int(policy.symmetric)} masked={masked}"


def export_policy_csv(policy, path):
    with open(path, 'w', newline='') as fh:
        fh.write(_header_line(policy) + '\n')
        writer = csv.writer(fh)
        if policy.kind is PolicyKind.GRIDDED:
            writer.writerow(['n', 'q', 'e', 'transmit'])
            points = policy.grid.points
            for n in range(1, policy.horizon + 1):
                for q in range(policy.num_states):
                    for e, t in zip(points, policy.transmit[n - 1, q]):
                        writer.writerow([n, q, repr(float(e)), int(t)])
        else:
            writer.writerow(['n', 'q', 'kind', 'tau_lo', 'tau_hi'])
            for n in range(1, policy.horizon + 1):
                for q in range(policy.num_states):
                    writer.writerow([n, q, policy.kind.value,
                                     repr(float(policy.tau_lo[n - 1, q])), repr(float(policy.tau_hi[n - 1, q]))])
    return path


def _parse_header(line):
    meta = dict(token.split('=', 1) for token in line.lstrip('#').split())
    masked = [bool(int(m)) for m in meta.get('masked', '').split(';') if m != '']
    return meta.get('provenance', ''), bool(int(meta.get('symmetric', '0'))), masked


def load_policy_csv(path):
    with open(path, newline='') as fh:
        provenance, symmetric, masked = _parse_header(fh.readline())
        reader = csv.DictReader(fh)
        rows = list(reader)
        fields = reader.fieldnames

    horizon = max(int(r['n']) for r in rows)
    num_states = max(int(r['q']) for r in rows) + 1
    if 'transmit' in fields:
        points = sorted({float(r['e']) for r in rows})
        grid = ErrorGrid(half_width=points[-1], num_points=len(points))
        transmit = np.zeros((horizon, num_states, len(points)), dtype=bool)
        for r in rows:
            transmit[int(r['n']) - 1, int(r['q']), grid.index_of(float(r['e']))] = r['transmit'] == '1'
        return TransmitPolicy.gridded(transmit, grid, masked, symmetric, provenance)

    lo = np.empty((horizon, num_states))
    hi = np.empty((horizon, num_states))
    kind = PolicyKind(rows[0]['kind'])
    for r in rows:
        lo[int(r['n']) - 1, int(r['q'])] = float(r['tau_lo'])
        hi[int(r['n']) - 1, int(r['q'])] = float(r['tau_hi'])
    if kind is PolicyKind.SYMMETRIC_THRESHOLD:
        return TransmitPolicy.symmetric_threshold(hi, masked, provenance)
    return TransmitPolicy.interval_pair(lo, hi, masked, provenance)
