import tempfile

import numpy as np
from django.test import SimpleTestCase
from scipy import stats

from topic_reliability.exceptions import ValidationError
from topic_reliability.lda import LdaConfig, fit_lda, run_replications
from topic_reliability.synthgen import (
    GenerativeSpec,
    generate,
    inject_degenerate,
    load_ground_truth,
    make_degenerate_replication,
    make_labels,
    save_ground_truth,
)


class GenerateTests(SimpleTestCase):
    def test_shapes_and_distributions(self):
        corpus, truth = generate(GenerativeSpec(K_true=3, V=30, D=50, doc_length=20, seed=1))
        self.assertEqual(corpus.n_docs, 50)
        self.assertEqual(corpus.n_terms, 30)
        self.assertEqual(truth.phi_true.shape, (3, 30))
        self.assertEqual(truth.theta_true.shape, (50, 3))
        np.testing.assert_allclose(truth.phi_true.sum(axis=1), 1.0)
        np.testing.assert_allclose(truth.theta_true.sum(axis=1), 1.0)
        self.assertTrue((corpus.doc_lengths >= 1).all())

    def test_same_seed_same_corpus(self):
        spec = GenerativeSpec(K_true=2, V=10, D=20, seed=4)
        self.assertEqual(generate(spec)[0], generate(spec)[0])

    def test_single_topic_is_rejected(self):
        with self.assertRaises(ValidationError):
            GenerativeSpec(K_true=1, V=10, D=5)

    def test_small_alpha_gives_single_topic_documents(self):
        _, truth = generate(GenerativeSpec(K_true=2, V=16, D=1000, dirichlet_alpha=0.01, seed=3))
        self.assertGreater((truth.theta_true.max(axis=1) > 0.9).mean(), 0.9)

    def test_disjoint_topics_use_own_block(self):
        _, truth = generate(GenerativeSpec(K_true=2, V=16, D=10, seed=2, disjoint_topics=True))
        self.assertEqual(truth.phi_true[0, 8:].sum(), 0.0)
        self.assertEqual(truth.phi_true[1, :8].sum(), 0.0)

    def test_ground_truth_round_trip(self):
        _, truth = generate(GenerativeSpec(K_true=2, V=10, D=15, seed=8))
        with tempfile.TemporaryDirectory() as tmp:
            save_ground_truth(truth, tmp)
            loaded = load_ground_truth(tmp)
        self.assertTrue(np.array_equal(loaded.phi_true, truth.phi_true))
        self.assertTrue(np.array_equal(loaded.theta_true, truth.theta_true))


class LabelTests(SimpleTestCase):
    def test_both_classes_occur_and_are_seeded(self):
        _, truth = generate(GenerativeSpec(K_true=5, V=40, D=300, seed=6))
        labels = make_labels(truth.theta_true, n_active=3, seed=2)
        self.assertEqual(set(np.unique(labels)), {0, 1})
        self.assertTrue(np.array_equal(labels, make_labels(truth.theta_true, n_active=3, seed=2)))


class DegenerateReplicationTests(SimpleTestCase):
    def test_proportions_stay_within_epsilon_of_uniform(self):
        model = make_degenerate_replication(D=10000, K=2, epsilon=0.01, seed=1, V=16)
        self.assertTrue((model.theta >= 0.49 - 1e-12).all())
        self.assertTrue((model.theta <= 0.51 + 1e-12).all())
        first = int((model.theta.argmax(axis=1) == 0).sum())
        self.assertGreater(stats.binomtest(first, 10000, 0.5).pvalue, 1e-4)

    def test_zero_epsilon_is_exactly_uniform(self):
        model = make_degenerate_replication(D=20, K=4, epsilon=0.0, seed=1, V=8)
        self.assertTrue((model.theta == 0.25).all())

    def test_epsilon_must_be_below_one_over_k(self):
        with self.assertRaises(ValidationError):
            make_degenerate_replication(D=10, K=2, epsilon=0.5, seed=1, V=8)

    def test_reference_ordering_is_kept(self):
        corpus, _ = generate(GenerativeSpec(K_true=2, V=16, D=300, seed=9, disjoint_topics=True))
        reference = fit_lda(corpus, LdaConfig(K=2, alpha=0.1, iterations=30, burn_in=10, seed=1))
        model = make_degenerate_replication(300, 2, 0.01, seed=2, reference=reference)
        correlation = np.corrcoef(model.theta[:, 0], reference.theta[:, 0])[0, 1]
        self.assertGreater(correlation, 0.5)
        self.assertLessEqual(np.abs(model.theta - 0.5).max(), 0.01 + 1e-12)

    def test_inject_replaces_one_replication(self):
        corpus, _ = generate(GenerativeSpec(K_true=2, V=16, D=100, seed=9, disjoint_topics=True))
        reps = run_replications(corpus, LdaConfig(K=2, alpha=0.1, iterations=10, burn_in=2), 3, master_seed=1)
        injected = inject_degenerate(reps, 2, 0.01, seed=12345)
        self.assertTrue(injected.models[2].metadata['degenerate'])
        self.assertIs(injected.models[0], reps.models[0])
        with self.assertRaises(ValidationError):
            inject_degenerate(reps, 0, 0.01, seed=1)
