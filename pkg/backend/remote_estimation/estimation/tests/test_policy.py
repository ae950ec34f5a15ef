import shutil
import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from estimation.policy import (
    ALWAYS, NEVER, NotThreshold, PolicyKind, ThresholdRule, TransmitPolicy, decide, decide_batch,
    export_policy_csv, extract_threshold, load_policy_csv, rules_to_policy,
)
from estimation.quadrature import ErrorGrid


class DecideTests(SimpleTestCase):
    """Test cases for evaluating a policy at a single (n, q, e)"""

    def setUp(self):
        tau = np.array([[1.0, 1.0], [0.0, 2.0]])
        self.policy = TransmitPolicy.symmetric_threshold(tau, masked=[False, True])

    def test_transmits_outside_threshold(self):
        """|e| > tau transmits, |e| <= tau stays silent"""
        self.assertEqual(decide(self.policy, 1, 0, 1.5), 1)
        self.assertEqual(decide(self.policy, 1, 0, -1.5), 1)
        self.assertEqual(decide(self.policy, 1, 0, 0.5), 0)

    def test_tie_stays_silent(self):
        """Exactly on the threshold the encoder does not transmit"""
        self.assertEqual(decide(self.policy, 1, 0, 1.0), 0)
        self.assertEqual(decide(self.policy, 1, 0, -1.0), 0)

    def test_zero_threshold_always_transmits(self):
        """tau = 0 is the empty silent region, including e = 0"""
        self.assertEqual(decide(self.policy, 2, 0, 0.0), 1)
        self.assertEqual(decide(self.policy, 2, 0, 1e-9), 1)

    def test_masked_state_never_transmits(self):
        """The action mask overrides any stored rule"""
        self.assertEqual(decide(self.policy, 1, 1, 100.0), 0)
        self.assertTrue(self.policy.rule(2, 1).never_transmits)

    def test_batch_matches_scalar(self):
        """decide_batch agrees with decide elementwise"""
        q = np.array([0, 0, 1, 0])
        e = np.array([0.2, -3.0, 5.0, 1.0])
        expected = [decide(self.policy, 1, int(qi), float(ei)) for qi, ei in zip(q, e)]
        self.assertEqual(decide_batch(self.policy, 1, q, e).astype(int).tolist(), expected)

    def test_constant_rules(self):
        """ALWAYS and NEVER build stage-independent policies"""
        always = TransmitPolicy.constant(ALWAYS, horizon=3, masked=[False])
        never = TransmitPolicy.constant(NEVER, horizon=3, masked=[False])
        for n in (1, 2, 3):
            self.assertEqual(decide(always, n, 0, 0.0), 1)
            self.assertEqual(decide(never, n, 0, 1e6), 0)

    def test_interval_pair(self):
        """Asymmetric silent intervals transmit on both sides of [lo, hi]"""
        policy = TransmitPolicy.interval_pair([[-0.5]], [[2.0]], masked=[False])
        self.assertFalse(policy.symmetric)
        self.assertEqual(decide(policy, 1, 0, -0.6), 1)
        self.assertEqual(decide(policy, 1, 0, 1.9), 0)
        self.assertEqual(decide(policy, 1, 0, 2.1), 1)


class PolicyValidationTests(SimpleTestCase):
    """Test cases for malformed rule tables"""

    def test_inverted_interval_rejected(self):
        """tau_lo > tau_hi is not a rule"""
        with self.assertRaises(ValueError):
            TransmitPolicy.interval_pair([[1.0]], [[0.0]], masked=[False])

    def test_unbalanced_symmetric_rejected(self):
        """A symmetric kind with tau_lo != -tau_hi is rejected"""
        with self.assertRaises(ValueError):
            TransmitPolicy(PolicyKind.SYMMETRIC_THRESHOLD, 1, 1, [False], True,
                           tau_lo=[[-1.0]], tau_hi=[[2.0]])

    def test_rules_to_policy_rejects_non_threshold(self):
        """A NotThreshold entry cannot become a closed-form policy"""
        rules = [[ThresholdRule(-1.0, 1.0, True), NotThreshold('split')]]
        with self.assertRaises(ValueError):
            rules_to_policy(rules, masked=[False, False], symmetric=True)

    def test_gridded_policy_has_no_rule(self):
        """rule() is only defined for closed-form policies"""
        grid = ErrorGrid(half_width=1.0, num_points=5)
        policy = TransmitPolicy.gridded(np.ones((1, 1, 5), dtype=bool), grid, masked=[False])
        with self.assertRaises(TypeError):
            policy.rule(1, 0)


class ExtractThresholdTests(SimpleTestCase):
    """Test cases for recovering threshold rules from gridded transmit sets"""

    def setUp(self):
        self.grid = ErrorGrid(half_width=4.0, num_points=81)
        self.points = self.grid.points

    def test_symmetric_threshold(self):
        """The boundary sits half-way between the last silent and first transmitting point"""
        rule = extract_threshold(self.grid, np.abs(self.points) > 1.0, symmetric=True)
        self.assertIsInstance(rule, ThresholdRule)
        self.assertTrue(rule.symmetric)
        self.assertAlmostEqual(rule.tau, 1.05)
        self.assertEqual(rule.tau_lo, -rule.tau_hi)

    def test_extremes(self):
        """All silent is never transmit; all transmitting is always transmit"""
        self.assertEqual(extract_threshold(self.grid, np.zeros(81, dtype=bool), symmetric=True), NEVER)
        self.assertEqual(extract_threshold(self.grid, np.ones(81, dtype=bool), symmetric=True), ALWAYS)
        self.assertTrue(extract_threshold(self.grid, np.ones(81, dtype=bool)).always_transmits)

    def test_split_silent_region_has_witness(self):
        """Transmitting at 0 between two silent points is not a threshold"""
        transmit = np.abs(self.points) > 1.0
        transmit[self.grid.center] = True
        result = extract_threshold(self.grid, transmit, symmetric=True)
        self.assertIsInstance(result, NotThreshold)
        e1, e2, e3 = result.witness
        self.assertLess(e1, e2)
        self.assertLess(e2, e3)
        self.assertAlmostEqual(e2, 0.0)

    def test_off_centre_interval(self):
        """An off-centre silent interval is an interval rule but not a symmetric one"""
        transmit = (self.points < -1.0) | (self.points > 2.0)
        self.assertIsInstance(extract_threshold(self.grid, transmit, symmetric=True), NotThreshold)
        rule = extract_threshold(self.grid, transmit)
        self.assertAlmostEqual(rule.tau_lo, -1.05)
        self.assertAlmostEqual(rule.tau_hi, 2.05)

    def test_one_sided_region(self):
        """A silent region touching the grid edge is unbounded on that side"""
        rule = extract_threshold(self.grid, self.points > 0.5)
        self.assertEqual(rule.tau_lo, -np.inf)
        self.assertAlmostEqual(rule.tau_hi, 0.55)

    def test_symmetric_rejects_set_one_cell_off_centre(self):
        """Silent on [-2, 3] over a unit-spaced grid is not mirrored and yields no symmetric rule"""
        grid = ErrorGrid(half_width=5.0, num_points=11)
        transmit = (grid.points < -2.0) | (grid.points > 3.0)
        self.assertIsInstance(extract_threshold(grid, transmit, symmetric=True), NotThreshold)
        rule = extract_threshold(grid, transmit)
        self.assertTrue(np.array_equal(rule.transmits(grid.points), transmit))

    def test_extracted_rule_reproduces_transmit_set(self):
        """Every mirrored silent interval round-trips through its extracted rule"""
        grid = ErrorGrid(half_width=5.0, num_points=11)
        for k in range(6):
            transmit = np.abs(grid.points) > k - 0.5
            rule = extract_threshold(grid, transmit, symmetric=True)
            self.assertIsInstance(rule, ThresholdRule)
            self.assertIs(type(rule.tau_hi), float)
            self.assertTrue(np.array_equal(rule.transmits(grid.points), transmit))


class PolicyCsvTests(SimpleTestCase):
    """Test cases for writing and re-reading policy files"""

    def setUp(self):
        self.dir = Path(tempfile.mkdtemp())
        self.addCleanup(shutil.rmtree, self.dir, ignore_errors=True)
        self.errors = np.linspace(-5.0, 5.0, 201)

    def assertSameDecisions(self, first, second):
        for n in range(1, first.horizon + 1):
            for q in range(first.num_states):
                qs = np.full(self.errors.shape, q)
                self.assertTrue(np.array_equal(decide_batch(first, n, qs, self.errors),
                                               decide_batch(second, n, qs, self.errors)))

    def test_threshold_policy(self):
        """Thresholds, mask and provenance survive the file"""
        tau = np.array([[0.1234567890123, 0.0, 2.0], [np.inf, 1.0 / 3.0, 0.7]])
        policy = TransmitPolicy.symmetric_threshold(tau, masked=[False, False, True], provenance='abc123')
        loaded = load_policy_csv(export_policy_csv(policy, self.dir / 'policy.csv'))
        self.assertIs(loaded.kind, PolicyKind.SYMMETRIC_THRESHOLD)
        self.assertEqual(loaded.provenance, 'abc123')
        self.assertEqual(loaded.masked.tolist(), [False, False, True])
        self.assertTrue(np.array_equal(loaded.tau_hi, policy.tau_hi))
        self.assertSameDecisions(policy, loaded)

    def test_interval_pair_policy(self):
        """Asymmetric intervals keep both endpoints"""
        policy = TransmitPolicy.interval_pair([[-0.3, -np.inf]], [[1.7, 0.2]], masked=[False, False])
        loaded = load_policy_csv(export_policy_csv(policy, self.dir / 'pair.csv'))
        self.assertIs(loaded.kind, PolicyKind.INTERVAL_PAIR)
        self.assertFalse(loaded.symmetric)
        self.assertTrue(np.array_equal(loaded.tau_lo, policy.tau_lo))
        self.assertSameDecisions(policy, loaded)

    def test_gridded_policy(self):
        """A gridded transmit set reloads onto the same grid"""
        grid = ErrorGrid(half_width=3.0, num_points=61)
        transmit = np.zeros((2, 2, 61), dtype=bool)
        transmit[0, 0] = np.abs(grid.points) > 0.8
        transmit[1, 0] = np.abs(grid.points) > 1.5
        transmit[:, 1] = True
        policy = TransmitPolicy.gridded(transmit, grid, masked=[False, False], provenance='grid')
        loaded = load_policy_csv(export_policy_csv(policy, self.dir / 'gridded.csv'))
        self.assertIs(loaded.kind, PolicyKind.GRIDDED)
        self.assertEqual(loaded.grid.num_points, 61)
        self.assertTrue(np.array_equal(loaded.transmit, policy.transmit))
        self.assertSameDecisions(policy, loaded)

    def test_header_comment(self):
        """The first line records provenance, symmetry and the mask"""
        policy = TransmitPolicy.constant(NEVER, horizon=1, masked=[True, False], provenance='p0')
        path = export_policy_csv(policy, self.dir / 'header.csv')
        with open(path) as fh:
            self.assertEqual(fh.readline().strip(), '# provenance=p0 symmetric=1 masked=1;0')
