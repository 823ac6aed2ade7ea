"""
Topic alignment across replications: similarity measures, greedy and
Hungarian matching, per-topic observation groups, FREX words.
"""

import logging
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment
from scipy.stats import rankdata

from .exceptions import ValidationError
from .utils import write_table

logger = logging.getLogger(__name__)

GREEDY = 'greedy'
HUNGARIAN = 'hungarian'
MATCHING_METHODS = (GREEDY, HUNGARIAN)

ROW_SUM_TOLERANCE = 1e-9
ALIGNMENT_COLUMNS = ['replication', 'ref_topic', 'matched_topic', 'cosine']
COSINE_COLUMNS = ['full', 'matched']


def _pair(x, y):
    x = np.asarray(x, dtype=float).ravel()
    y = np.asarray(y, dtype=float).ravel()
    if x.shape != y.shape:
        raise ValidationError(f"Vectors differ in length: {x.size} vs {y.size}")
    return x, y


def cosine_similarity(x, y):
    """
    Cosine of the angle between two non-negative vectors, in [0, 1].

    Raises:
        ValidationError: On mismatched lengths, negative entries or a zero vector
    """
    x, y = _pair(x, y)
    if (x < 0).any() or (y < 0).any():
        raise ValidationError("cosine_similarity expects non-negative vectors")
    nx, ny = np.linalg.norm(x), np.linalg.norm(y)
    if nx == 0 or ny == 0:
        raise ValidationError("cosine_similarity is undefined for a zero-norm vector")
    return float(np.clip(x @ y / (nx * ny), 0.0, 1.0))


def pearson_correlation(x, y):
    """Pearson correlation of two vectors, in [-1, 1]."""
    x, y = _pair(x, y)
    if x.size < 2:
        raise ValidationError("pearson_correlation needs at least two entries")
    xc, yc = x - x.mean(), y - y.mean()
    nx, ny = np.linalg.norm(xc), np.linalg.norm(yc)
    if nx == 0 or ny == 0:
        raise ValidationError("pearson_correlation is undefined for a constant vector")
    return float(np.clip(xc @ yc / (nx * ny), -1.0, 1.0))


def _top_mask(matrix, top_n):
    mask = np.zeros(matrix.shape, dtype=bool)
    order = np.argsort(-matrix, axis=1, kind='stable')[:, :top_n]
    np.put_along_axis(mask, order, True, axis=1)
    return mask


def effective_top_n(top_n, V):
    """``None`` means all terms; values of at least V are clipped to V."""
    if top_n is None or top_n == 'all':
        return None
    top_n = int(top_n)
    if top_n < 1:
        raise ValidationError(f"top_n must be >= 1, got {top_n}")
    if top_n >= V:
        if top_n > V:
            logger.warning(f"top_n={top_n} exceeds the vocabulary size {V}; using all terms")
        return None
    return top_n


def topic_similarity_matrix(reference_phi, candidate_phi, top_n=None):
    """
    Cosine similarity of every reference topic against every candidate topic.

    With ``top_n``, each pair is compared on the union of the two topics'
    ``top_n`` most probable terms.
    """
    reference_phi = np.asarray(reference_phi, dtype=float)
    candidate_phi = np.asarray(candidate_phi, dtype=float)
    if reference_phi.shape[1] != candidate_phi.shape[1]:
        raise ValidationError("Topic matrices have different vocabularies")
    top_n = effective_top_n(top_n, reference_phi.shape[1])

    if top_n is None:
        ref = reference_phi / np.linalg.norm(reference_phi, axis=1, keepdims=True)
        cand = candidate_phi / np.linalg.norm(candidate_phi, axis=1, keepdims=True)
        return np.clip(ref @ cand.T, 0.0, 1.0)

    ref_mask = _top_mask(reference_phi, top_n)
    cand_mask = _top_mask(candidate_phi, top_n)
    similarity = np.empty((reference_phi.shape[0], candidate_phi.shape[0]))
    for i in range(reference_phi.shape[0]):
        union = ref_mask[i] | cand_mask
        x = np.where(union, reference_phi[i], 0.0)
        y = np.where(union, candidate_phi, 0.0)
        similarity[i] = (x * y).sum(axis=1) / (np.linalg.norm(x, axis=1) * np.linalg.norm(y, axis=1))
    return np.clip(similarity, 0.0, 1.0)


def _greedy_match(similarity):
    K = similarity.shape[0]
    rows, cols = np.indices(similarity.shape)
    order = np.lexsort((cols.ravel(), rows.ravel(), -similarity.ravel()))
    mapping = np.full(K, -1, dtype=np.int64)
    used = np.zeros(similarity.shape[1], dtype=bool)
    matched = 0
    for flat in order:
        i, j = divmod(int(flat), similarity.shape[1])
        if mapping[i] < 0 and not used[j]:
            mapping[i] = j
            used[j] = True
            matched += 1
            if matched == K:
                break
    return mapping


def match_topics(similarity, method=GREEDY):
    """
    One-to-one assignment of reference topics (rows) to candidate topics.

    Greedy takes the globally most similar remaining pair first, ties
    broken by (row, column); Hungarian maximises total similarity.
    """
    if method == GREEDY:
        return _greedy_match(similarity)
    if method == HUNGARIAN:
        rows, cols = linear_sum_assignment(similarity, maximize=True)
        mapping = np.empty(similarity.shape[0], dtype=np.int64)
        mapping[rows] = cols
        return mapping
    raise ValidationError(f"Unknown matching method '{method}'")


@dataclass(frozen=True, eq=False)
class Alignment:
    """
    Per non-reference replication r: ``mappings[r][k]`` is the topic of r
    matched to reference topic k, ``matched_similarities[r][k]`` its cosine.
    """
    reference_index: int
    n_reps: int
    K: int
    mappings: dict
    matched_similarities: dict
    top_n: int = None
    method: str = GREEDY

    def mapping_for(self, r):
        if r == self.reference_index:
            return np.arange(self.K)
        return self.mappings[r]

    @property
    def non_reference(self):
        return [r for r in range(self.n_reps) if r != self.reference_index]


@dataclass(eq=False)
class TopicGroup:
    """
    One reference topic observed in every replication: ``theta_columns``
    is D x n, ``phi_rows`` is n x V.
    """
    topic_id: int
    theta_columns: np.ndarray
    phi_rows: np.ndarray

    @property
    def n_reps(self):
        return self.theta_columns.shape[1]

    def validate(self):
        if self.theta_columns.shape[1] != self.phi_rows.shape[0]:
            raise ValidationError(f"Topic {self.topic_id}: theta and phi disagree on the replication count")
        if (self.theta_columns < 0).any() or (self.theta_columns > 1).any():
            raise ValidationError(f"Topic {self.topic_id}: theta entries must lie in [0, 1]")
        if np.abs(self.phi_rows.sum(axis=1) - 1.0).max() > ROW_SUM_TOLERANCE:
            raise ValidationError(f"Topic {self.topic_id}: phi rows must sum to 1")


def align_topics(reps, top_n=None, reference_index=0, method=GREEDY):
    """
    Align every replication to the reference replication.

    Args:
        reps (ReplicationSet): Replications sharing K and V
        top_n (int | None): Restrict cosine comparisons to top terms; None = all
        reference_index (int): Replication used as reference
        method (str): 'greedy' or 'hungarian'

    Returns:
        Alignment
    """
    if method not in MATCHING_METHODS:
        raise ValidationError(f"Unknown matching method '{method}'")
    if not 0 <= reference_index < reps.n_reps:
        raise ValidationError(f"Reference index {reference_index} outside 0..{reps.n_reps - 1}")
    top_n = effective_top_n(top_n, reps.V)
    reference = reps.models[reference_index]

    mappings, similarities = {}, {}
    for r, model in enumerate(reps.models):
        if r == reference_index:
            continue
        similarity = topic_similarity_matrix(reference.phi, model.phi, top_n)
        mapping = match_topics(similarity, method)
        mappings[r] = mapping
        similarities[r] = similarity[np.arange(reps.K), mapping]
    logger.info(f"Aligned {reps.n_reps - 1} replications to replication {reference_index} ({method}, top_n={top_n})")
    return Alignment(reference_index, reps.n_reps, reps.K, mappings, similarities, top_n, method)


def build_topic_groups(reps, alignment):
    """One TopicGroup per reference topic, replications in index order."""
    groups = []
    for k in range(reps.K):
        columns = [reps.models[r].theta[:, alignment.mapping_for(r)[k]] for r in range(reps.n_reps)]
        rows = [reps.models[r].phi[alignment.mapping_for(r)[k]] for r in range(reps.n_reps)]
        group = TopicGroup(k, np.column_stack(columns), np.vstack(rows))
        group.validate()
        groups.append(group)
    return groups


def cosine_distributions(reps, alignment):
    """
    Best-available and matched cosines per (non-reference replication,
    reference topic). Matched never exceeds best-available.

    Returns:
        tuple: (full, matched) 1-D arrays
    """
    reference = reps.models[alignment.reference_index]
    full, matched = [], []
    for r in alignment.non_reference:
        similarity = topic_similarity_matrix(reference.phi, reps.models[r].phi, alignment.top_n)
        full.append(similarity.max(axis=1))
        matched.append(similarity[np.arange(reps.K), alignment.mappings[r]])
    if not full:
        return np.empty(0), np.empty(0)
    return np.concatenate(full), np.concatenate(matched)


def frex_scores(model, topic, weight=0.5):
    """
    Harmonic mean of the empirical CDFs of exclusivity and frequency for
    every term of ``topic``.
    """
    if not 0.0 <= weight <= 1.0:
        raise ValidationError(f"FREX weight must lie in [0, 1], got {weight}")
    phi = model.phi
    V = phi.shape[1]
    exclusivity = phi[topic] / phi.sum(axis=0)
    ecdf_excl = rankdata(exclusivity, method='max') / V
    ecdf_freq = rankdata(phi[topic], method='max') / V
    return 1.0 / (weight / ecdf_excl + (1.0 - weight) / ecdf_freq)


def frex_words(model, topic, weight=0.5, top_n=10, vocabulary=None):
    """Top FREX terms of ``topic``; ids, or strings when ``vocabulary`` is given."""
    scores = frex_scores(model, topic, weight)
    order = np.lexsort((np.arange(scores.size), -scores))[:top_n]
    if vocabulary is None:
        return [int(i) for i in order]
    return [vocabulary.lookup(int(i)) for i in order]


def top_document_overlap(group, top_n=10, reference_index=0):
    """
    How many of the reference replication's ``top_n`` documents for this
    topic each replication also ranks in its own top ``top_n``.
    """
    top_n = min(top_n, group.theta_columns.shape[0])

    def top_docs(column):
        order = np.lexsort((np.arange(column.size), -column))
        return set(order[:top_n].tolist())

    reference = top_docs(group.theta_columns[:, reference_index])
    return np.array([len(reference & top_docs(group.theta_columns[:, r])) for r in range(group.n_reps)])


def save_alignment(alignment, path):
    rows = [
        {'replication': r, 'ref_topic': k, 'matched_topic': int(j), 'cosine': float(s)}
        for r in alignment.non_reference
        for k, (j, s) in enumerate(zip(alignment.mappings[r], alignment.matched_similarities[r]))
    ]
    return write_table(path, rows, columns=ALIGNMENT_COLUMNS)


def save_cosine_distributions(full, matched, path):
    rows = [{'full': float(f), 'matched': float(m)} for f, m in zip(full, matched)]
    return write_table(path, rows, columns=COSINE_COLUMNS)
