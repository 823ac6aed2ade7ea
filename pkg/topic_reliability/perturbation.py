"""
Sensitivity of reliability to small corpus perturbations: remove a few
random terms, refit, and score the replications on their common terms and
documents.
"""

import logging
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .align import align_topics, build_topic_groups, frex_words
from .corpus import Vocabulary, remove_words
from .exceptions import ValidationError
from .lda import DISTINCT, FIXED, ReplicationSet, TopicModel, child_seed, fit_lda, most_prevalent_topic
from .reliability import COEFFICIENTS, interpret_reliability, score_coefficients
from .utils import json_digest

logger = logging.getLogger(__name__)

VARIED = 'varied'
PERTURBATION_MODES = (FIXED, VARIED)

# spawn-key prefixes that keep removal and sampler seeds apart
REMOVAL_STREAM = 1
SAMPLER_STREAM = 2


def restrict_to_common(models, corpora):
    """
    Project each model onto the terms and documents shared by every corpus
    (in the first corpus's order). Topic rows are renormalised.

    Returns:
        tuple: (models, common Vocabulary, common doc ids)
    """
    term_sets = [set(c.vocabulary.terms) for c in corpora]
    doc_sets = [set(c.doc_ids) for c in corpora]
    common_terms = tuple(t for t in corpora[0].vocabulary.terms if all(t in s for s in term_sets))
    common_docs = tuple(d for d in corpora[0].doc_ids if all(d in s for s in doc_sets))
    if not common_terms or not common_docs:
        raise ValidationError("Perturbed corpora share no terms or no documents")

    digest = json_digest({'terms': common_terms, 'docs': common_docs})
    restricted = []
    for model, corpus in zip(models, corpora):
        term_index = [corpus.vocabulary.index(t) for t in common_terms]
        position = {doc_id: i for i, doc_id in enumerate(corpus.doc_ids)}
        doc_index = [position[d] for d in common_docs]
        phi = model.phi[:, term_index]
        phi = phi / phi.sum(axis=1, keepdims=True)
        restricted.append(TopicModel(
            phi, model.theta[doc_index], model.config, model.log_likelihood_trace, digest, dict(model.metadata)
        ))
    return restricted, Vocabulary(common_terms), common_docs


def perturbed_replications(corpus, config, n_removed, n_reps, mode, master_seed, jobs=1):
    """
    ``n_reps`` fits, each on the corpus minus ``n_removed`` random terms
    (a different removal per replication). In fixed mode the sampler seed is
    shared; in varied mode it differs per replication.

    Returns:
        tuple: (ReplicationSet on common terms/documents, common Vocabulary)
    """
    if mode not in PERTURBATION_MODES:
        raise ValidationError(f"Unknown perturbation mode '{mode}'")
    if n_reps < 2:
        raise ValidationError("reliability requires ≥ 2 replications")

    removal_seeds = [child_seed(master_seed, REMOVAL_STREAM, n_removed, r) for r in range(n_reps)]
    if mode == FIXED:
        sampler_seeds = [child_seed(master_seed, SAMPLER_STREAM)] * n_reps
    else:
        sampler_seeds = [child_seed(master_seed, SAMPLER_STREAM, r) for r in range(n_reps)]

    def task(r):
        perturbed = remove_words(corpus, n_removed, removal_seeds[r])
        return perturbed, fit_lda(perturbed, config.with_seed(sampler_seeds[r]))

    t0 = time.perf_counter()
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as executor:
            results = list(executor.map(task, range(n_reps)))
    else:
        results = [task(r) for r in range(n_reps)]
    corpora = [c for c, _ in results]
    models, vocabulary, _ = restrict_to_common([m for _, m in results], corpora)
    logger.info(f"{mode} perturbation, {n_removed} terms removed: {n_reps} fits took {time.perf_counter() - t0:.4f}s")

    seed_mode = FIXED if mode == FIXED else DISTINCT
    reps = ReplicationSet(tuple(models), tuple(sampler_seeds), models[0].corpus_digest, seed_mode)
    return reps, vocabulary


def sensitivity_study(corpus, config, schedule, n_reps, master_seed, jobs=1, top_n=None, cutoff=0.7,
                      drop='last', matching='greedy', pool='coefficient', similarity='cosine', frex_top=3):
    """
    Score every (mode, removal count) pair.

    Returns:
        tuple: (metric rows, FREX rows) as lists of dicts
    """
    for n_removed in schedule:
        if not 0 <= n_removed < corpus.n_terms:
            raise ValidationError(f"Cannot remove {n_removed} of {corpus.n_terms} terms")

    rows, frex_rows = [], []
    for mode in PERTURBATION_MODES:
        for n_removed in schedule:
            reps, vocabulary = perturbed_replications(corpus, config, n_removed, n_reps, mode, master_seed, jobs)
            alignment = align_topics(reps, top_n=top_n, method=matching)
            groups = build_topic_groups(reps, alignment)
            values, _ = score_coefficients(alignment, groups, drop, cutoff, pool, similarity)
            for metric in COEFFICIENTS:
                value = values.get(metric)
                rows.append({
                    'mode': mode, 'n_removed': n_removed, 'metric': metric,
                    'value': value, 'label': interpret_reliability(value),
                })
            for r, model in enumerate(reps.models):
                words = frex_words(model, most_prevalent_topic(model), top_n=frex_top, vocabulary=vocabulary)
                for rank, term in enumerate(words, start=1):
                    frex_rows.append({
                        'mode': mode, 'n_removed': n_removed, 'replication': r, 'rank': rank, 'term': term,
                    })
    return rows, frex_rows


def frex_stability(frex_rows):
    """Number of FREX terms shared by every replication, per (mode, n_removed)."""
    terms = {}
    for row in frex_rows:
        key = (row['mode'], row['n_removed'])
        terms.setdefault(key, {}).setdefault(row['replication'], set()).add(row['term'])
    return {key: len(set.intersection(*by_rep.values())) for key, by_rep in terms.items()}


def metric_spread(rows):
    """Range of each metric across the removal schedule, per mode."""
    spread = {}
    for row in rows:
        if row['value'] is None:
            continue
        spread.setdefault((row['mode'], row['metric']), []).append(row['value'])
    return {key: float(np.ptp(values)) for key, values in spread.items()}
