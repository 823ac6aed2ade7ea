"""
Downstream study: per-replication logistic regressions of document labels on
document-topic proportions, and the spread of the implied word weights.
"""

import logging
from dataclasses import dataclass

import numpy as np
from scipy.special import expit

from .exceptions import ValidationError
from .lda import most_prevalent_topic, top_words

logger = logging.getLogger(__name__)

RIDGE = 1e-6
IRLS_TOLERANCE = 1e-8
IRLS_MAX_ITERATIONS = 100
SEPARATION_LOGIT = 25.0
WORD_WEIGHT_COLUMNS = ['term', 'min', 'Q1', 'Q2', 'Q3', 'max']


@dataclass(frozen=True, eq=False)
class PredictionModel:
    """
    Logistic model for one replication. ``coefficients[0]`` is the
    intercept, ``coefficients[1:]`` one weight per topic.
    """
    coefficients: np.ndarray
    train_accuracy: float
    holdout_accuracy: float
    replication_id: int
    converged: bool = True
    separated: bool = False
    iterations: int = 0


@dataclass(frozen=True)
class WordWeightSummary:
    term: str
    weights: tuple
    minimum: float
    q1: float
    median: float
    q3: float
    maximum: float

    def to_row(self):
        return {
            'term': self.term, 'min': self.minimum, 'Q1': self.q1, 'Q2': self.median,
            'Q3': self.q3, 'max': self.maximum,
        }


def irls(X, y, ridge=RIDGE, tol=IRLS_TOLERANCE, max_iter=IRLS_MAX_ITERATIONS):
    """
    Newton iterations for the ridge-penalised logistic log-likelihood
    (penalty ridge/2 * ||beta||^2 on every coefficient).

    Returns:
        tuple: (beta, converged, iterations)
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    beta = np.zeros(X.shape[1])
    penalty = ridge * np.eye(X.shape[1])
    for iteration in range(1, max_iter + 1):
        p = expit(X @ beta)
        gradient = X.T @ (y - p) - ridge * beta
        hessian = (X * (p * (1 - p))[:, None]).T @ X + penalty
        step = np.linalg.solve(hessian, gradient)
        beta = beta + step
        if np.abs(step).max() < tol:
            return beta, True, iteration
    return beta, False, max_iter


def _accuracy(X, y, beta):
    if y.size == 0:
        return float('nan')
    return float(((X @ beta > 0).astype(np.int64) == y).mean())


def fit_logistic(theta, labels, holdout_fraction=0.2, seed=0, replication_id=0):
    """
    Fit labels ~ 1 + theta on a seeded training split.

    ``holdout_fraction=0`` is also accepted, widening the usual 0 < h < 0.5
    range: every document is used for training and ``holdout_accuracy`` is NaN.

    Raises:
        ValidationError: If labels are single-class or the split is invalid
    """
    theta = np.asarray(theta, dtype=float)
    labels = np.asarray(labels, dtype=np.int64)
    if labels.shape[0] != theta.shape[0]:
        raise ValidationError(f"{labels.shape[0]} labels for {theta.shape[0]} documents")
    if np.unique(labels).size < 2:
        raise ValidationError("Labels must contain both classes")
    if not 0.0 <= holdout_fraction < 0.5:
        raise ValidationError(f"holdout_fraction must lie in [0, 0.5), got {holdout_fraction}")

    rng = np.random.default_rng(seed)
    order = rng.permutation(labels.size)
    n_holdout = int(round(labels.size * holdout_fraction))
    holdout, train = order[:n_holdout], order[n_holdout:]
    X = np.column_stack([np.ones(labels.size), theta])

    beta, converged, iterations = irls(X[train], labels[train])
    separated = not converged or np.abs(X[train] @ beta).max() > SEPARATION_LOGIT
    if separated:
        logger.warning(f"Replication {replication_id}: labels look separable; coefficients are ridge-bounded")
    return PredictionModel(
        coefficients=beta,
        train_accuracy=_accuracy(X[train], labels[train], beta),
        holdout_accuracy=_accuracy(X[holdout], labels[holdout], beta),
        replication_id=replication_id,
        converged=converged,
        separated=bool(separated),
        iterations=iterations,
    )


def fit_replications(reps, labels, holdout_fraction=0.2, seed=0):
    """One PredictionModel per replication, all on the same split."""
    return [
        fit_logistic(model.theta, labels, holdout_fraction, seed, replication_id=r)
        for r, model in enumerate(reps.models)
    ]


def word_weight(prediction, phi, term):
    """Sum over topics of coefficient times phi[k, term]."""
    return float(prediction.coefficients[1:] @ phi[:, term])


def word_weight_summary(reps, predictions, terms, vocabulary=None):
    """Five-number summary of each term's weight across replications."""
    summaries = []
    for term in terms:
        weights = np.array([
            word_weight(prediction, model.phi, term)
            for model, prediction in zip(reps.models, predictions)
        ])
        low, q1, median, q3, high = np.percentile(weights, [0, 25, 50, 75, 100])
        name = vocabulary.lookup(term) if vocabulary is not None else str(term)
        summaries.append(WordWeightSummary(name, tuple(weights.tolist()), low, q1, median, q3, high))
    return summaries


def select_prevalent_terms(reps, corpus, n_terms=2, top_n=20):
    """
    Terms in the top ``top_n`` words of every replication's most prevalent
    topic, most frequent first. Falls back to the corpus's most frequent
    terms when the intersection is too small.
    """
    shared = None
    for model in reps.models:
        words = set(top_words(model, most_prevalent_topic(model), top_n))
        shared = words if shared is None else shared & words
    frequencies = corpus.term_frequencies()
    by_frequency = [int(t) for t in np.lexsort((np.arange(frequencies.size), -frequencies))]

    chosen = [t for t in by_frequency if t in shared][:n_terms]
    if len(chosen) < n_terms:
        logger.info(f"Only {len(chosen)} shared prevalent terms; filling with the most frequent terms")
        chosen += [t for t in by_frequency if t not in chosen][:n_terms - len(chosen)]
    return chosen


def accuracy_summary(predictions):
    """Five-number summaries of training and holdout accuracy."""
    summary = {}
    for name in ('train', 'holdout'):
        values = np.array([getattr(p, f'{name}_accuracy') for p in predictions])
        values = values[np.isfinite(values)]
        if values.size == 0:
            summary[name] = None
            continue
        summary[name] = dict(zip(('min', 'q1', 'median', 'q3', 'max'), np.percentile(values, [0, 25, 50, 75, 100]).tolist()))
    return summary
