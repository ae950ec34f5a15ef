"""
Use-dependent packet-drop channels.

A channel is a finite state machine whose state q moves with the transmit
decision r (q' = transition(q, r)) and whose state sets the drop probability
of an attempted transmission. States are labelled 0..m-1, matching the
battery-level and workload-count figures the presets come from.
"""
from dataclasses import dataclass, field
import logging

import numpy as np
from django.core.exceptions import ValidationError

from .exceptions import ForbiddenActionError, OutOfRangeError

logger = logging.getLogger(__name__)

# Payload seen by the estimator when nothing was delivered.
ERASURE = None


@dataclass(frozen=True)
class ChannelFsm:
    num_states: int
    # transitions[q] = (target when silent, target when transmitting or None if masked)
    transitions: tuple
    drop_probs: tuple
    initial_state: int = 0
    transmit_allowed: tuple = None

    def __post_init__(self):
        object.__setattr__(self, 'transitions', tuple(tuple(t) for t in self.transitions))
        object.__setattr__(self, 'drop_probs', tuple(float(p) for p in self.drop_probs))
        if self.transmit_allowed is None:
            allowed = tuple(t[1] is not None for t in self.transitions)
        else:
            allowed = tuple(bool(a) for a in self.transmit_allowed)
        object.__setattr__(self, 'transmit_allowed', allowed)

    @property
    def states(self):
        return range(self.num_states)

    def silent_next(self, q):
        return self.transitions[q][0]

    def transmit_next(self, q):
        return self.transitions[q][1]

    def drop_prob(self, q):
        return self.drop_probs[q]

    def is_masked(self, q):
        return not self.transmit_allowed[q]

    @property
    def masked_states(self):
        return np.array([not a for a in self.transmit_allowed], dtype=bool)


@dataclass(frozen=True)
class ChannelOutcome:
    attempted: bool
    success: bool
    payload: object = ERASURE
    delivered: bool = field(init=False)

    def __post_init__(self):
        delivered = bool(self.attempted and self.success)
        object.__setattr__(self, 'delivered', delivered)
        if not delivered:
            object.__setattr__(self, 'payload', ERASURE)

    @property
    def erased(self):
        return self.payload is ERASURE


@dataclass(frozen=True)
class Violation:
    state: object
    reason: str

    def __str__(self):
        return f"state {self.state}: {self.reason}"


def validate_fsm(fsm):
    """Return every invariant violation of ``fsm``; an empty list means it is valid."""
    violations = []
    m = fsm.num_states
    if m < 1:
        return [Violation(None, "num_states must be a positive integer")]

    for name in ('transitions', 'drop_probs', 'transmit_allowed'):
        if len(getattr(fsm, name)) != m:
            violations.append(Violation(None, f"length mismatch: {name} has {len(getattr(fsm, name))} entries, expected {m}"))
    if violations:
        return violations

    for q in range(m):
        silent, transmit = fsm.transitions[q]
        if silent is None or not 0 <= silent < m:
            violations.append(Violation(q, f"dangling transition on r=0 (target {silent})"))
        if fsm.transmit_allowed[q]:
            if transmit is None:
                violations.append(Violation(q, "missing transition on r=1 for a transmit-capable state"))
            elif not 0 <= transmit < m:
                violations.append(Violation(q, f"dangling transition on r=1 (target {transmit})"))
        elif transmit is not None and not 0 <= transmit < m:
            violations.append(Violation(q, f"dangling transition on r=1 (target {transmit})"))

        p = fsm.drop_probs[q]
        if not (0.0 <= p <= 1.0):
            violations.append(Violation(q, f"probability out of range ({p})"))
        if not fsm.transmit_allowed[q] and p != 1.0:
            violations.append(Violation(q, f"masked state must have drop probability 1 (got {p})"))

    if not (isinstance(fsm.initial_state, (int, np.integer)) and 0 <= fsm.initial_state < m):
        violations.append(Violation(fsm.initial_state, "invalid initial state"))
    return violations


def _check_state(fsm, q):
    if not 0 <= q < fsm.num_states:
        raise OutOfRangeError(f"Channel state {q} is not in 0..{fsm.num_states - 1}")


def step(fsm, q, r):
    _check_state(fsm, q)
    if r:
        if fsm.is_masked(q):
            raise ForbiddenActionError(f"Transmitting is not allowed in channel state {q}")
        return fsm.transmit_next(q)
    return fsm.silent_next(q)


def sample_drop(fsm, q, rng):
    """Draw the success indicator C_n for state ``q``; consumes one uniform from ``rng``."""
    _check_state(fsm, q)
    return bool(rng.random() >= fsm.drop_prob(q))


def use_channel(fsm, q, r, z, rng):
    """Push payload ``z`` through the channel with decision ``r``.

    Returns the outcome seen by the estimator and the next channel state. The
    uniform draw is consumed whether or not a transmission is attempted, so the
    random stream stays aligned across policies.
    """
    success = sample_drop(fsm, q, rng)
    outcome = ChannelOutcome(attempted=bool(r), success=success, payload=z)
    return outcome, step(fsm, q, r)


def energy_harvesting_fsm(capacity, tx_cost, p_tx):
    """Battery channel: +1 unit per silent step up to ``capacity``, ``tx_cost`` units per attempt."""
    if tx_cost < 1 or capacity < tx_cost:
        raise ValidationError(f"Need capacity >= tx_cost >= 1 (got capacity={capacity}, tx_cost={tx_cost})")
    if not 0.0 <= p_tx <= 1.0:
        raise ValidationError(f"Drop probability must lie in [0, 1] (got {p_tx})")

    transitions = []
    drops = []
    allowed = []
    for q in range(capacity + 1):
        can_transmit = q >= tx_cost
        transitions.append((min(q + 1, capacity), q - tx_cost if can_transmit else None))
        drops.append(p_tx if can_transmit else 1.0)
        allowed.append(can_transmit)
    return ChannelFsm(
        num_states=capacity + 1,
        transitions=transitions,
        drop_probs=drops,
        initial_state=capacity,
        transmit_allowed=allowed,
    )


def workload_chain_fsm(window, drop_probs):
    """Operator-workload chain: state i counts recent requests, +1 per request, -1 per quiet step."""
    if window < 1:
        raise ValidationError(f"Window must be at least 1 (got {window})")
    if len(drop_probs) != window + 1:
        raise ValidationError(f"Expected {window + 1} drop probabilities, got {len(drop_probs)}")
    for p in drop_probs:
        if not 0.0 <= p <= 1.0:
            raise ValidationError(f"Drop probability must lie in [0, 1] (got {p})")

    transitions = [(max(i - 1, 0), min(i + 1, window)) for i in range(window + 1)]
    return ChannelFsm(
        num_states=window + 1,
        transitions=transitions,
        drop_probs=drop_probs,
        initial_state=0,
        transmit_allowed=[True] * (window + 1),
    )


def single_state_fsm(p_drop, transmit_allowed=True):
    return ChannelFsm(
        num_states=1,
        transitions=[(0, 0 if transmit_allowed else None)],
        drop_probs=[p_drop],
        initial_state=0,
        transmit_allowed=[transmit_allowed],
    )


BUILDERS = {
    'energy_harvesting': energy_harvesting_fsm,
    'workload_chain': workload_chain_fsm,
}


def reachable_states(fsm, horizon):
    """Channel states reachable at stages 1..horizon+1 from the initial state."""
    stages = [frozenset([fsm.initial_state])]
    for _ in range(horizon):
        nxt = set()
        for q in stages[-1]:
            nxt.add(fsm.silent_next(q))
            if not fsm.is_masked(q):
                nxt.add(fsm.transmit_next(q))
        stages.append(frozenset(nxt))
    return stages


def fsm_to_dict(fsm):
    return {
        'num_states': fsm.num_states,
        'transitions': [[t[0], t[1] if fsm.transmit_allowed[q] else None] for q, t in enumerate(fsm.transitions)],
        'drop_probs': list(fsm.drop_probs),
        'initial_state': fsm.initial_state,
        'transmit_allowed': list(fsm.transmit_allowed),
    }


def fsm_from_dict(data):
    return ChannelFsm(
        num_states=data['num_states'],
        transitions=data['transitions'],
        drop_probs=data['drop_probs'],
        initial_state=data.get('initial_state', 0),
        transmit_allowed=data.get('transmit_allowed'),
    )
