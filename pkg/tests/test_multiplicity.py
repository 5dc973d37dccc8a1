import unittest

import numpy as np


def _bh(pvals):
    """Бенджамини-Хохберг в лоб: для сверки"""
    m = len(pvals)
    order = sorted(range(m), key=lambda i: pvals[i])
    q = [0.0] * m
    running = 1.0
    for pos in range(m - 1, -1, -1):
        i = order[pos]
        running = min(running, pvals[i] * m / (pos + 1))
        q[i] = running
    return q


def _result(group, p, skipped=False):
    from services.scarcity import ScarcityResult

    return ScarcityResult(
        group=group,
        n_people=100,
        n_distinct=50,
        p_hat=None if skipped else p,
        n_sims=999,
        seed=0,
        pool_size=1000,
        pool_distinct=600,
        skipped=skipped,
    )


class TestQValues(unittest.TestCase):
    def test_worked_example(self):
        from services.multiplicity import qvalues

        report = qvalues([0.01, 0.02, 0.9], pi0=1.0)

        for got, want in zip(report.qvalues, [0.03, 0.03, 0.9]):
            self.assertAlmostEqual(got, want, places=12)
        self.assertTrue(report.pi0_forced)

    def test_forced_pi0_matches_bh(self):
        from services.multiplicity import qvalues

        rng = np.random.default_rng(17)
        for _ in range(100):
            m = int(rng.integers(1, 501))
            # смесь равномерных и маленьких p
            p = rng.uniform(size=m) ** rng.uniform(1, 4)
            p = np.clip(p, 1e-12, 1.0).tolist()
            self.assertEqual(qvalues(p, pi0=1.0).qvalues, _bh(p))

    def test_pi0_is_clamped(self):
        from services.multiplicity import qvalues

        tiny = qvalues([1e-8] * 10)
        ones = qvalues([1.0] * 10)

        self.assertGreaterEqual(tiny.pi0_hat, 1 / 10)
        self.assertLessEqual(tiny.pi0_hat, 1.0)
        self.assertEqual(ones.pi0_hat, 1.0)
        self.assertEqual(ones.qvalues, [1.0] * 10)

    def test_q_monotone_in_p(self):
        from services.multiplicity import qvalues

        rng = np.random.default_rng(5)
        p = rng.uniform(size=200).tolist()
        q = qvalues(p, seed=1).qvalues
        pairs = sorted(zip(p, q))

        self.assertTrue(all(a[1] <= b[1] for a, b in zip(pairs, pairs[1:])))
        self.assertTrue(all(0.0 <= qi <= 1.0 for _, qi in pairs))

    def test_bootstrap_is_seeded(self):
        from services.multiplicity import qvalues

        rng = np.random.default_rng(8)
        p = np.concatenate([rng.uniform(size=80), rng.uniform(0, 0.01, size=20)]).tolist()

        self.assertEqual(qvalues(p, seed=3).pi0_hat, qvalues(p, seed=3).pi0_hat)

    def test_mostly_null_pi0_near_one(self):
        from services.multiplicity import qvalues

        rng = np.random.default_rng(21)
        report = qvalues(rng.uniform(size=2000).tolist(), seed=0)

        self.assertGreater(report.pi0_hat, 0.85)

    def test_uniform_pi0_mean_over_trials(self):
        from services.multiplicity import estimate_pi0

        rng = np.random.default_rng(5)
        estimates = [estimate_pi0(rng.uniform(size=200), seed=trial) for trial in range(100)]

        self.assertGreaterEqual(np.mean(estimates), 0.9)
        self.assertLessEqual(np.mean(estimates), 1.1)

    def test_input_errors(self):
        from services.multiplicity import EmptyInput, InvalidPValue, LabelMismatch, qvalues

        with self.assertRaises(EmptyInput):
            qvalues([])
        with self.assertRaises(InvalidPValue):
            qvalues([0.0, 0.5])
        with self.assertRaises(InvalidPValue):
            qvalues([0.5, 1.5])
        with self.assertRaises(LabelMismatch):
            qvalues([0.1, 0.2], labels=["A"])
        with self.assertRaises(ValueError):
            qvalues([0.1], pi0=0.0)


class TestClassify(unittest.TestCase):
    def test_highly_significant_needs_p_and_q(self):
        from services.multiplicity import classify, qvalues_for_results

        results = [
            _result("A", 0.001),
            _result("B", 0.04),
            _result("C", 0.5),
            _result("D", None, skipped=True),
        ]
        report = qvalues_for_results(results, pi0=1.0)
        classified = {c.result.group: c for c in classify(results, report, alpha=0.05)}

        # q_A = 3 * 0.001 = 0.003, q_B = 3 * 0.04 / 2 = 0.06
        self.assertTrue(classified["A"].highly_significant)
        self.assertFalse(classified["B"].highly_significant)
        self.assertFalse(classified["C"].highly_significant)
        self.assertIsNone(classified["D"].q)
        self.assertEqual([e.group for e in report.entries], ["A", "B", "C"])
        self.assertTrue(report.entries[0].highly_significant)

    def test_label_mismatch(self):
        from services.multiplicity import LabelMismatch, classify, qvalues

        results = [_result("A", 0.01), _result("B", 0.2)]
        report = qvalues([0.01, 0.2], labels=["A", "Z"], pi0=1.0)

        with self.assertRaises(LabelMismatch):
            classify(results, report)

    def test_all_skipped(self):
        from services.multiplicity import classify, qvalues_for_results

        results = [_result("A", None, skipped=True)]

        self.assertIsNone(qvalues_for_results(results))
        self.assertFalse(classify(results, None)[0].highly_significant)


if __name__ == "__main__":
    unittest.main()
