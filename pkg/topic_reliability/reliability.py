"""
Reliability coefficients for replicated topic models.

Every aligned topic is observed n times (once per replication) from two
sides: document-topic proportions (D observations) and topic-word
probabilities (V observations). Coefficients are computed per side and
pooled with weights proportional to the observation counts.
"""

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .align import TopicGroup, cosine_distributions, top_document_overlap
from .exceptions import (
    BootstrapError,
    ComputationError,
    FactorFitError,
    ReliabilityUndefinedError,
    ValidationError,
)
from .utils import write_json, write_table

logger = logging.getLogger(__name__)

DOC_TOPIC = 'doc_topic'
TOPIC_WORD = 'topic_word'
SOURCES = (DOC_TOPIC, TOPIC_WORD)

COSINE = 'cosine'
PEARSON = 'pearson'

POOL_COEFFICIENTS = 'coefficient'
POOL_MOMENTS = 'moments'

DROP_LAST = 'last'

STANDARD_PRACTICE = 'standard_practice'
STRATIFIED_ALPHA = 'stratified_alpha'
MULTIVARIATE_OMEGA = 'multivariate_omega'
MAXIMAL_RELIABILITY = 'maximal_reliability'
COEFFICIENTS = (STANDARD_PRACTICE, STRATIFIED_ALPHA, MULTIVARIATE_OMEGA, MAXIMAL_RELIABILITY)

HEYWOOD_FLOOR = 1e-6
FACTOR_TOLERANCE = 1e-6
FACTOR_MAX_ITERATIONS = 1000
SMC_CONDITION_LIMIT = 1e12
MIN_BOOTSTRAP_DRAWS = 50
MAX_BOOTSTRAP_FAILURE_RATE = 0.10

# (lower bound, label), checked top-down with a strict ">"
INTERPRETATION_BANDS = (
    (0.9, 'Excellent'),
    (0.8, 'Good'),
    (0.7, 'Acceptable'),
    (0.6, 'Questionable'),
    (0.5, 'Poor'),
)


@dataclass(frozen=True, eq=False)
class ObservationMatrix:
    """
    N observations x n replications for one topic from one side.
    """
    data: np.ndarray
    source: str = DOC_TOPIC

    def __post_init__(self):
        data = np.asarray(self.data, dtype=float)
        if data.ndim != 2:
            raise ValidationError("Observation matrix must be 2-D")
        if data.shape[1] < 2:
            raise ValidationError(f"Need at least 2 replications, got {data.shape[1]}")
        if data.shape[0] < 3:
            raise ValidationError(f"Need at least 3 observations, got {data.shape[0]}")
        if not np.isfinite(data).all():
            raise ValidationError("Observation matrix holds non-finite values")
        if self.source not in SOURCES:
            raise ValidationError(f"Unknown observation source '{self.source}'")
        object.__setattr__(self, 'data', data)

    @classmethod
    def from_group(cls, group, source):
        if source == DOC_TOPIC:
            return cls(group.theta_columns, DOC_TOPIC)
        if source == TOPIC_WORD:
            return cls(group.phi_rows.T, TOPIC_WORD)
        raise ValidationError(f"Unknown observation source '{source}'")

    @property
    def n_observations(self):
        return self.data.shape[0]

    @property
    def n_items(self):
        return self.data.shape[1]

    @property
    def constant_columns(self):
        return np.flatnonzero(np.ptp(self.data, axis=0) == 0)

    def covariance(self):
        return np.cov(self.data, rowvar=False, ddof=1)


@dataclass(frozen=True, eq=False)
class FactorSolution:
    loadings: np.ndarray
    uniquenesses: np.ndarray
    converged: bool = True
    iterations: int = 0

    def __post_init__(self):
        object.__setattr__(self, 'loadings', np.asarray(self.loadings, dtype=float))
        object.__setattr__(self, 'uniquenesses', np.asarray(self.uniquenesses, dtype=float))


@dataclass(frozen=True)
class PooledMoments:
    v_bar: float
    c_bar: float
    n_items: int
    per_source: dict = field(default_factory=dict)


def _require_variation(m):
    constant = m.constant_columns
    if constant.size:
        raise ReliabilityUndefinedError(
            f"Replication(s) {constant.tolist()} are constant on the {m.source} side"
        )


def moments(m):
    """Mean item variance and mean inter-item covariance (ddof=1)."""
    cov = m.covariance()
    n = m.n_items
    v_bar = float(np.trace(cov) / n)
    c_bar = float((cov.sum() - np.trace(cov)) / (n * (n - 1)))
    return v_bar, c_bar


def alpha_from_moments(n, v_bar, c_bar):
    denominator = v_bar + (n - 1) * c_bar
    if denominator == 0 or abs(denominator) <= 1e-12 * abs(v_bar):
        raise ReliabilityUndefinedError(f"alpha undefined: v_bar + (n-1) c_bar = {denominator:.3g}")
    return float(n * c_bar / denominator)


def cronbach_alpha(m):
    """
    Cronbach's alpha, n c_bar / (v_bar + (n-1) c_bar).

    Raises:
        ReliabilityUndefinedError: For a constant column or a vanishing denominator
    """
    _require_variation(m)
    v_bar, c_bar = moments(m)
    return alpha_from_moments(m.n_items, v_bar, c_bar)


def _initial_communalities(cov, variances):
    sd = np.sqrt(variances)
    corr = cov / np.outer(sd, sd)
    try:
        if np.linalg.cond(corr) > SMC_CONDITION_LIMIT:
            raise np.linalg.LinAlgError("ill-conditioned")
        smc = 1.0 - 1.0 / np.diag(np.linalg.inv(corr))
    except np.linalg.LinAlgError:
        off_diagonal = np.abs(corr - np.diag(np.diag(corr)))
        smc = off_diagonal.max(axis=1)
    return np.clip(smc, 0.0, 1.0) * variances


def fit_single_factor_covariance(cov, tol=FACTOR_TOLERANCE, max_iter=FACTOR_MAX_ITERATIONS):
    """
    Principal-axis factoring of a covariance matrix with one factor.

    Starts from squared multiple correlations (largest absolute correlation
    when the matrix is near singular). Loadings are sign-normalised so their
    sum is non-negative; uniquenesses are floored at 1e-6.

    Raises:
        FactorFitError: If the covariance is non-finite or an item has no variance
    """
    cov = np.asarray(cov, dtype=float)
    if not np.isfinite(cov).all():
        raise FactorFitError("Covariance matrix holds non-finite values")
    variances = np.diag(cov).copy()
    if (variances <= 0).any():
        raise FactorFitError(f"Singular covariance: item(s) {np.flatnonzero(variances <= 0).tolist()} have no variance")

    communalities = _initial_communalities(cov, variances)
    loadings = np.zeros(cov.shape[0])
    converged = False
    iteration = 0
    for iteration in range(1, max_iter + 1):
        reduced = cov.copy()
        np.fill_diagonal(reduced, communalities)
        values, vectors = np.linalg.eigh(reduced)
        updated = np.sqrt(max(values[-1], 0.0)) * vectors[:, -1]
        if updated.sum() < 0:
            updated = -updated
        change = np.abs(updated - loadings).max()
        loadings = updated
        communalities = np.minimum(loadings ** 2, variances)
        if change < tol:
            converged = True
            break
    if not converged:
        logger.warning(f"Single-factor fit did not converge in {max_iter} iterations")

    uniquenesses = np.maximum(variances - loadings ** 2, HEYWOOD_FLOOR)
    return FactorSolution(loadings, uniquenesses, converged, iteration)


def fit_single_factor(m):
    """Single-factor fit of an observation matrix's covariance."""
    return fit_single_factor_covariance(m.covariance())


def mcdonald_omega(m):
    """
    McDonald's omega, (sum lambda)^2 / ((sum lambda)^2 + sum theta).

    Accepts an ObservationMatrix (fitted here) or a ready FactorSolution.
    """
    solution = m if isinstance(m, FactorSolution) else fit_single_factor(m)
    explained = solution.loadings.sum() ** 2
    total = explained + solution.uniquenesses.sum()
    if total <= 0:
        raise ReliabilityUndefinedError("omega undefined: zero total variance")
    return float(explained / total)


def omega_total(m, solution=None):
    """
    Omega against the observed composite variance, (sum lambda)^2 / 1'S1,
    capped at 1.
    """
    cov = m.covariance()
    solution = solution or fit_single_factor_covariance(cov)
    composite = cov.sum()
    if composite <= 0:
        raise ReliabilityUndefinedError("omega undefined: composite variance is not positive")
    return min(float(solution.loadings.sum() ** 2 / composite), 1.0)


def spearman_brown(r, n):
    """
    Reliability of an n-replication composite whose single-replication
    reliability is ``r``.
    """
    if n < 1:
        raise ValidationError(f"n must be >= 1, got {n}")
    if r < 0:
        raise ValidationError(f"Spearman-Brown needs r >= 0, got {r}")
    if r > 1 + 1e-12:
        raise ValidationError(f"Spearman-Brown needs r <= 1, got {r}")
    if r >= 1:
        return 1.0
    return float(n * r / (1 + (n - 1) * r))


def _pooled(doc_value, word_value, n_doc, n_word):
    return (n_doc * doc_value + n_word * word_value) / (n_doc + n_word)


def pool_estimates(doc_side, word_side):
    """Observation-count-weighted mean of the two sides' moments."""
    if doc_side.n_items != word_side.n_items:
        raise ValidationError(
            f"Sides disagree on replication count: {doc_side.n_items} vs {word_side.n_items}"
        )
    v_d, c_d = moments(doc_side)
    v_w, c_w = moments(word_side)
    n_d, n_w = doc_side.n_observations, word_side.n_observations
    return PooledMoments(
        v_bar=_pooled(v_d, v_w, n_d, n_w),
        c_bar=_pooled(c_d, c_w, n_d, n_w),
        n_items=doc_side.n_items,
        per_source={
            DOC_TOPIC: {'v_bar': v_d, 'c_bar': c_d, 'n': n_d},
            TOPIC_WORD: {'v_bar': v_w, 'c_bar': c_w, 'n': n_w},
        },
    )


def _sides(group):
    return ObservationMatrix.from_group(group, DOC_TOPIC), ObservationMatrix.from_group(group, TOPIC_WORD)


def topic_alpha(group):
    """Cronbach's alpha of one topic from pooled doc-side and word-side moments."""
    doc_side, word_side = _sides(group)
    _require_variation(doc_side)
    _require_variation(word_side)
    pooled = pool_estimates(doc_side, word_side)
    return alpha_from_moments(pooled.n_items, pooled.v_bar, pooled.c_bar)


def resolve_drop(drop, K):
    """Topic index to leave out: 'last' means K-1, None means none."""
    if drop is None:
        return None
    if drop == DROP_LAST:
        return K - 1
    drop = int(drop)
    if not 0 <= drop < K:
        raise ValidationError(f"Dropped topic {drop} outside 0..{K - 1}")
    return drop


def _retained(groups, drop):
    if len(groups) < 2:
        raise ValidationError(f"Need at least 2 topics, got {len(groups)}")
    dropped = resolve_drop(drop, len(groups))
    return [g for g in groups if g.topic_id != dropped]


def stratified_alpha_detail(groups, drop=DROP_LAST):
    """
    Stratified alpha with per-topic alphas.

    Returns:
        tuple: (value, {topic_id: alpha_i})
    """
    retained = _retained(groups, drop)
    D = retained[0].theta_columns.shape[0]
    V = retained[0].phi_rows.shape[1]

    penalty = 0.0
    per_topic = {}
    total_doc = np.zeros(D)
    total_word = np.zeros(V)
    for group in retained:
        alpha_i = topic_alpha(group)
        per_topic[group.topic_id] = alpha_i
        composite_doc = group.theta_columns.mean(axis=1)
        composite_word = group.phi_rows.mean(axis=0)
        sigma_i = _pooled(np.var(composite_doc, ddof=1), np.var(composite_word, ddof=1), D, V)
        penalty += sigma_i * (1.0 - alpha_i)
        total_doc += composite_doc
        total_word += composite_word

    sigma = _pooled(np.var(total_doc, ddof=1), np.var(total_word, ddof=1), D, V)
    if sigma <= 0:
        raise ReliabilityUndefinedError("Stratified alpha undefined: total composite variance is zero")
    return float(1.0 - penalty / sigma), per_topic


def stratified_alpha(groups, drop=DROP_LAST):
    """
    1 - sum_i sigma_i^2 (1 - alpha_i) / sigma^2 over the retained topics.
    """
    return stratified_alpha_detail(groups, drop)[0]


def _topic_omega(group, pool):
    doc_side, word_side = _sides(group)
    n_d, n_w = doc_side.n_observations, word_side.n_observations
    if pool == POOL_MOMENTS:
        cov = _pooled(doc_side.covariance(), word_side.covariance(), n_d, n_w)
        solution = fit_single_factor_covariance(cov)
        composite = cov.sum()
        if composite <= 0:
            raise ReliabilityUndefinedError("omega undefined: composite variance is not positive")
        value = min(float(solution.loadings.sum() ** 2 / composite), 1.0)
        return {'omega': value}
    if pool != POOL_COEFFICIENTS:
        raise ValidationError(f"Unknown pooling '{pool}'")
    omega_doc = omega_total(doc_side)
    omega_word = omega_total(word_side)
    return {
        'omega': float(_pooled(omega_doc, omega_word, n_d, n_w)),
        DOC_TOPIC: omega_doc,
        TOPIC_WORD: omega_word,
    }


def multivariate_omega_detail(groups, drop=DROP_LAST, pool=POOL_COEFFICIENTS):
    """
    Multivariate omega with per-topic values and the topics whose single-factor
    fit failed (excluded from the mean).

    Returns:
        tuple: (value, {topic_id: {...}}, [failed topic ids])
    """
    retained = _retained(groups, drop)
    per_topic, failed = {}, []
    for group in retained:
        try:
            per_topic[group.topic_id] = _topic_omega(group, pool)
        except ComputationError as e:
            failed.append(group.topic_id)
            logger.warning(f"Topic {group.topic_id} excluded from omega: {e}")
    if not per_topic:
        raise ReliabilityUndefinedError("Omega undefined: every topic's factor fit failed")
    value = float(np.mean([entry['omega'] for entry in per_topic.values()]))
    return value, per_topic, failed


def multivariate_omega(groups, drop=DROP_LAST, pool=POOL_COEFFICIENTS):
    """
    Mean over retained topics of the per-topic omega. With ``pool='coefficient'``
    each topic's omega is the count-weighted mean of its doc-side and
    word-side omegas; with ``pool='moments'`` one factor is fitted to the
    count-weighted pooled covariance.
    """
    return multivariate_omega_detail(groups, drop, pool)[0]


def _mean_pairwise(vectors, similarity):
    vectors = np.asarray(vectors, dtype=float)
    if similarity == COSINE:
        if (vectors < 0).any():
            raise ValidationError("cosine similarity expects non-negative vectors")
        low, high = 0.0, 1.0
    elif similarity == PEARSON:
        vectors = vectors - vectors.mean(axis=1, keepdims=True)
        low, high = -1.0, 1.0
    else:
        raise ValidationError(f"Unknown similarity '{similarity}'")
    norms = np.linalg.norm(vectors, axis=1)
    if (norms == 0).any():
        raise ValidationError(f"{similarity} similarity undefined for a zero or constant vector")
    unit = vectors / norms[:, None]
    gram = np.clip(unit @ unit.T, low, high)
    upper = np.triu_indices(vectors.shape[0], k=1)
    return float(gram[upper].mean())


def topic_similarity(group, similarity=COSINE):
    """
    Mean pairwise similarity between replications of one topic, averaged
    over the doc side and the word side.
    """
    doc = _mean_pairwise(group.theta_columns.T, similarity)
    word = _mean_pairwise(group.phi_rows, similarity)
    return (doc + word) / 2.0


def maximal_reliability_detail(groups, n_reps=None, drop=None, similarity=COSINE):
    """
    Maximal reliability with per-topic r_i and the between-topic rho.

    Returns:
        tuple: (value, {topic_id: r_i}, rho)
    """
    selected = groups if drop is None else _retained(groups, drop)
    if not selected:
        raise ValidationError("No topics to score")
    n_reps = n_reps or selected[0].n_reps
    K = len(selected)

    r = {}
    for group in selected:
        value = topic_similarity(group, similarity)
        if value < 0:
            logger.warning(f"Topic {group.topic_id}: negative mean correlation {value:.4f} floored at 0")
            value = 0.0
        r[group.topic_id] = value

    rho = 0.0
    if K > 1:
        rho = (
            _mean_pairwise(np.vstack([g.theta_columns.mean(axis=1) for g in selected]), similarity)
            + _mean_pairwise(np.vstack([g.phi_rows.mean(axis=0) for g in selected]), similarity)
        ) / 2.0
        rho = max(rho, 0.0)

    if any(value >= 1.0 for value in r.values()):
        return 1.0, r, rho
    strength = sum(n_reps * value / (1.0 - value) for value in r.values())
    value = strength / (K / (1.0 + (K - 1) * rho) + strength)
    return float(value), r, rho


def maximal_reliability(groups, alignment=None, drop=None, similarity=COSINE):
    """
    S / (K / (1 + (K-1) rho) + S) with S = sum_i n r_i / (1 - r_i).

    With one topic this is the Spearman-Brown reliability of its n replications.
    """
    n_reps = alignment.n_reps if alignment is not None else None
    return maximal_reliability_detail(groups, n_reps, drop, similarity)[0]


def standard_practice_reliability(alignment, cutoff=0.7):
    """
    Fraction of matched (replication, topic) pairs whose cosine exceeds ``cutoff``.
    """
    if not alignment.matched_similarities:
        raise ValidationError("Alignment holds no non-reference replications")
    similarities = np.concatenate([alignment.matched_similarities[r] for r in alignment.non_reference])
    return float((similarities > cutoff).mean())


def bootstrap_se(metric, groups, B=200, seed=0):
    """
    Bootstrap standard error of ``metric(groups)``.

    Each draw resamples documents and terms with replacement, jointly across
    every topic group, and recomputes the metric. Draws whose metric raises
    a computation or validation error are skipped.

    Raises:
        ValidationError: If B < 50
        BootstrapError: If more than 10% of draws fail
    """
    if B < MIN_BOOTSTRAP_DRAWS:
        raise ValidationError(f"Bootstrap needs B >= {MIN_BOOTSTRAP_DRAWS}, got {B}")
    rng = np.random.default_rng(seed)
    D = groups[0].theta_columns.shape[0]
    V = groups[0].phi_rows.shape[1]

    values, failures = [], 0
    for _ in range(B):
        docs = rng.integers(0, D, size=D)
        terms = rng.integers(0, V, size=V)
        resampled = [TopicGroup(g.topic_id, g.theta_columns[docs], g.phi_rows[:, terms]) for g in groups]
        try:
            values.append(metric(resampled))
        except (ComputationError, ValidationError):
            failures += 1
    if failures > MAX_BOOTSTRAP_FAILURE_RATE * B:
        raise BootstrapError(f"{failures} of {B} bootstrap draws failed")
    if failures:
        logger.warning(f"{failures} of {B} bootstrap draws failed and were skipped")
    return float(np.std(values, ddof=1))


def interpret_reliability(value):
    """Conventional label for a reliability value."""
    if value is None or not np.isfinite(value) or value < 0 or value > 1:
        return 'Out of range'
    for bound, label in INTERPRETATION_BANDS:
        if value > bound:
            return label
    return 'Unacceptable'


def coefficient_functions(K, n_reps, drop=DROP_LAST, pool=POOL_COEFFICIENTS, similarity=COSINE):
    """
    Callables ``groups -> value`` for the three statistical coefficients.
    With K = 2 maximal reliability scores the retained topic alone.
    """
    maximal_drop = drop if K == 2 else None
    return {
        STRATIFIED_ALPHA: lambda gs: stratified_alpha(gs, drop),
        MULTIVARIATE_OMEGA: lambda gs: multivariate_omega(gs, drop, pool),
        MAXIMAL_RELIABILITY: lambda gs: maximal_reliability_detail(gs, n_reps, maximal_drop, similarity)[0],
    }


def score_coefficients(alignment, groups, drop=DROP_LAST, cutoff=0.7, pool=POOL_COEFFICIENTS, similarity=COSINE):
    """
    All four coefficients. A coefficient that cannot be computed is None and
    its error message is returned alongside.

    Returns:
        tuple: ({name: value}, {name: error message})
    """
    values, errors = {}, {}
    values[STANDARD_PRACTICE] = standard_practice_reliability(alignment, cutoff)
    functions = coefficient_functions(len(groups), alignment.n_reps, drop, pool, similarity)
    for name, function in functions.items():
        try:
            values[name] = function(groups)
        except ComputationError as e:
            values[name] = None
            errors[name] = str(e)
            logger.warning(f"{name} undefined: {e}")
    return values, errors


@dataclass
class ReliabilityReport:
    coefficients: dict
    standard_errors: dict
    labels: dict
    per_topic: list
    provenance: dict
    errors: dict = field(default_factory=dict)

    def to_dict(self):
        return {
            'coefficients': self.coefficients,
            'standard_errors': self.standard_errors,
            'labels': self.labels,
            'per_topic': self.per_topic,
            'provenance': self.provenance,
            'errors': self.errors,
        }


def _per_topic_rows(reps, alignment, groups, similarity, pool):
    try:
        _, omegas, _ = multivariate_omega_detail(groups, drop=None, pool=pool)
    except ComputationError:
        omegas = {}
    rows = []
    for group in groups:
        try:
            alpha = topic_alpha(group)
        except ComputationError:
            alpha = None
        try:
            r = topic_similarity(group, similarity)
        except ValidationError:
            r = None
        omega = omegas.get(group.topic_id, {})
        matched = [alignment.matched_similarities[i][group.topic_id] for i in alignment.non_reference]
        overlap = top_document_overlap(group, reference_index=alignment.reference_index)
        rows.append({
            'topic': group.topic_id,
            'alpha': alpha,
            'omega': omega.get('omega'),
            'omega_doc_topic': omega.get(DOC_TOPIC),
            'omega_topic_word': omega.get(TOPIC_WORD),
            'r': r,
            'matched_cosine': float(np.mean(matched)) if matched else None,
            'top_doc_overlap': float(np.mean(np.delete(overlap, alignment.reference_index))),
        })
    return rows


def build_report(reps, alignment, groups, drop=DROP_LAST, cutoff=0.7, bootstrap_b=200, seed=0,
                 pool=POOL_COEFFICIENTS, similarity=COSINE):
    """
    Score a replication set: the four coefficients, bootstrap standard errors
    of the three statistical ones (skipped when ``bootstrap_b`` is 0),
    interpretation labels, per-topic diagnostics and provenance.
    """
    t0 = time.perf_counter()
    values, errors = score_coefficients(alignment, groups, drop, cutoff, pool, similarity)

    standard_errors = {}
    if bootstrap_b:
        functions = coefficient_functions(len(groups), alignment.n_reps, drop, pool, similarity)
        for name, function in functions.items():
            if values.get(name) is None:
                standard_errors[name] = None
                continue
            try:
                standard_errors[name] = bootstrap_se(function, groups, bootstrap_b, seed)
            except BootstrapError as e:
                standard_errors[name] = None
                errors[f"{name}_se"] = str(e)
                logger.warning(f"No standard error for {name}: {e}")

    full, matched = cosine_distributions(reps, alignment)
    report = ReliabilityReport(
        coefficients=values,
        standard_errors=standard_errors,
        labels={name: interpret_reliability(value) for name, value in values.items()},
        per_topic=_per_topic_rows(reps, alignment, groups, similarity, pool),
        provenance={
            'K': reps.K,
            'n_reps': reps.n_reps,
            'seeds': list(reps.seeds),
            'seed_mode': reps.seed_mode,
            'corpus_digest': reps.corpus_digest,
            'reference_index': alignment.reference_index,
            'matching': alignment.method,
            'top_n': alignment.top_n,
            'cutoff': cutoff,
            'drop': resolve_drop(drop, reps.K),
            'pool': pool,
            'similarity': similarity,
            'bootstrap_b': bootstrap_b,
            'mean_full_cosine': float(full.mean()) if full.size else None,
            'mean_matched_cosine': float(matched.mean()) if matched.size else None,
        },
        errors=errors,
    )
    logger.info(f"Reliability report for K={reps.K} took {time.perf_counter() - t0:.4f}s")
    return report


def save_report(report, path):
    return write_json(path, report.to_dict())


def save_per_topic(report, path):
    columns = ['topic', 'alpha', 'omega', 'omega_doc_topic', 'omega_topic_word', 'r', 'matched_cosine', 'top_doc_overlap']
    return write_table(path, report.per_topic, columns=columns)
