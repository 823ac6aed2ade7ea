import numpy as np
from django.test import SimpleTestCase, tag
from scipy.stats import spearmanr

from topic_reliability.align import align_topics, build_topic_groups
from topic_reliability.corpus import Corpus, remove_words
from topic_reliability.exceptions import ValidationError
from topic_reliability.lda import FIXED, LdaConfig, fit_lda
from topic_reliability.perturbation import (
    VARIED,
    frex_stability,
    metric_spread,
    perturbed_replications,
    restrict_to_common,
    sensitivity_study,
)
from topic_reliability.reliability import COEFFICIENTS, MULTIVARIATE_OMEGA, STANDARD_PRACTICE, score_coefficients
from topic_reliability.services import lda_config, resolve_corpus
from topic_reliability.synthgen import GenerativeSpec, generate
from topic_reliability.utils import load_run_config


class RestrictToCommonTests(SimpleTestCase):
    def test_projects_on_shared_terms_and_documents(self):
        corpus = Corpus.from_documents(
            [{0: 2, 1: 1}, {1: 2, 2: 2}, {2: 1, 3: 4}, {0: 1, 3: 1}], ['a', 'b', 'c', 'd'],
        )
        config = LdaConfig(K=2, iterations=5, burn_in=1, seed=3)
        reduced = remove_words(corpus, 1, rng_seed=1)
        models, vocabulary, docs = restrict_to_common(
            [fit_lda(corpus, config), fit_lda(reduced, config)], [corpus, reduced]
        )
        self.assertEqual(len(vocabulary), 3)
        self.assertNotIn(reduced.metadata['removed_terms'][0], vocabulary)
        for model in models:
            self.assertEqual(model.V, 3)
            self.assertEqual(model.D, len(docs))
            np.testing.assert_allclose(model.phi.sum(axis=1), 1.0)


class SensitivityTests(SimpleTestCase):
    def setUp(self):
        self.corpus, _ = generate(GenerativeSpec(K_true=3, V=30, D=60, doc_length=25, seed=2))
        self.config = LdaConfig(K=3, alpha=0.1, iterations=15, burn_in=5)

    def test_fixed_seed_without_removal_is_perfectly_reliable(self):
        rows, _ = sensitivity_study(self.corpus, self.config, [0], n_reps=3, master_seed=1)
        fixed = {row['metric']: row['value'] for row in rows if row['mode'] == FIXED}
        for metric in COEFFICIENTS:
            self.assertAlmostEqual(fixed[metric], 1.0, places=6, msg=metric)

    def test_row_count_and_modes(self):
        rows, frex_rows = sensitivity_study(self.corpus, self.config, [0, 2], n_reps=2, master_seed=1, frex_top=3)
        self.assertEqual(len(rows), 2 * 2 * len(COEFFICIENTS))
        self.assertEqual({row['mode'] for row in rows}, {FIXED, VARIED})
        self.assertEqual(len(frex_rows), 2 * 2 * 2 * 3)
        stability = frex_stability(frex_rows)
        self.assertEqual(stability[(FIXED, 0)], 3)
        spread = metric_spread(rows)
        self.assertTrue(all(value >= 0 for value in spread.values()))

    def test_varied_mode_uses_distinct_sampler_seeds(self):
        reps, _ = perturbed_replications(self.corpus, self.config, 2, 3, VARIED, master_seed=5)
        self.assertEqual(len(set(reps.seeds)), 3)
        fixed, _ = perturbed_replications(self.corpus, self.config, 2, 3, FIXED, master_seed=5)
        self.assertEqual(len(set(fixed.seeds)), 1)

    def test_removal_must_leave_terms(self):
        with self.assertRaises(ValidationError):
            sensitivity_study(self.corpus, self.config, [30], n_reps=2, master_seed=1)


class FrexStabilityTests(SimpleTestCase):
    def rows(self, mode, n_removed, replication, terms):
        return [
            {'mode': mode, 'n_removed': n_removed, 'replication': replication, 'rank': rank, 'term': term}
            for rank, term in enumerate(terms, start=1)
        ]

    def test_counts_terms_shared_by_every_replication(self):
        frex_rows = self.rows(FIXED, 1, 0, ['a', 'b', 'c']) + self.rows(FIXED, 1, 1, ['a', 'b', 'd'])
        self.assertEqual(frex_stability(frex_rows), {(FIXED, 1): 2})

    def test_rank_changes_do_not_matter(self):
        frex_rows = self.rows(VARIED, 0, 0, ['a', 'b', 'c']) + self.rows(VARIED, 0, 1, ['c', 'a', 'b'])
        self.assertEqual(frex_stability(frex_rows), {(VARIED, 0): 3})

    def test_one_outlier_replication_limits_the_count(self):
        frex_rows = (
            self.rows(FIXED, 10, 0, ['a', 'b', 'c'])
            + self.rows(FIXED, 10, 1, ['a', 'b', 'c'])
            + self.rows(FIXED, 10, 2, ['x', 'y', 'a'])
        )
        self.assertEqual(frex_stability(frex_rows), {(FIXED, 10): 1})


@tag('slow')
class RemovalTrendTests(SimpleTestCase):
    """
    Fixed sampler seed on a fifty-topic corpus: omega starts at exactly one
    and falls as more terms are removed, while the cosine rule barely moves
    between one and ten removals.
    """

    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        run_config = load_run_config(preset='removal', seed=7, jobs=4)
        corpus, _, _ = resolve_corpus(run_config)
        config = lda_config(run_config, run_config.k_values[0])
        cls.schedule = run_config.removal_schedule
        cls.values = {}
        for n_removed in cls.schedule:
            reps, _ = perturbed_replications(
                corpus, config, n_removed, run_config.n_reps, FIXED, master_seed=2024, jobs=int(run_config.jobs),
            )
            alignment = align_topics(reps, top_n=run_config.top_n)
            values, _ = score_coefficients(alignment, build_topic_groups(reps, alignment))
            cls.values[n_removed] = values

    def test_omega_is_perfect_without_removal(self):
        self.assertAlmostEqual(self.values[0][MULTIVARIATE_OMEGA], 1.0, places=6)

    def test_omega_falls_with_removals(self):
        omegas = [self.values[n][MULTIVARIATE_OMEGA] for n in self.schedule]
        rho, _ = spearmanr(self.schedule, omegas)
        self.assertLessEqual(rho, -0.8 + 1e-9, msg=omegas)

    def test_cosine_rule_is_insensitive_to_small_removals(self):
        change = abs(self.values[10][STANDARD_PRACTICE] - self.values[1][STANDARD_PRACTICE])
        self.assertLess(change, 0.05)
