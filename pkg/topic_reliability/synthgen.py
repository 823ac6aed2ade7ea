"""
Synthetic corpora drawn from the LDA generative process, outcome labels for
the downstream study, and hand-built degenerate replications.
"""

import logging
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np
from scipy import sparse
from scipy.special import expit

from .corpus import Corpus, Vocabulary
from .exceptions import ValidationError
from .lda import LdaConfig, TopicModel
from .utils import read_matrix, write_json, write_matrix

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class GenerativeSpec:
    """
    Parameters of the generative process. With ``disjoint_topics`` each topic
    puts all of its mass on its own contiguous block of V/K_true terms.
    """
    K_true: int
    V: int
    D: int
    doc_length: float = 50.0
    dirichlet_alpha: float = 0.1
    dirichlet_beta: float = 0.1
    seed: int = 0
    disjoint_topics: bool = False

    def __post_init__(self):
        if self.K_true < 2:
            raise ValidationError(f"K_true must be >= 2, got {self.K_true}")
        if self.V < self.K_true:
            raise ValidationError(f"V={self.V} must be >= K_true={self.K_true}")
        if self.D < 1:
            raise ValidationError(f"D must be >= 1, got {self.D}")
        if self.doc_length < 1:
            raise ValidationError(f"doc_length must be >= 1, got {self.doc_length}")
        if self.dirichlet_alpha <= 0 or self.dirichlet_beta <= 0:
            raise ValidationError("Dirichlet concentrations must be positive")


@dataclass(frozen=True, eq=False)
class GroundTruth:
    phi_true: np.ndarray
    theta_true: np.ndarray


def _term_names(V):
    if V <= 26:
        return tuple(chr(ord('a') + i) for i in range(V))
    width = len(str(V - 1))
    return tuple(f"w{i:0{width}d}" for i in range(V))


def _draw_topics(rng, spec):
    if not spec.disjoint_topics:
        return rng.dirichlet(np.full(spec.V, spec.dirichlet_beta), size=spec.K_true)
    phi = np.zeros((spec.K_true, spec.V))
    for k, block in enumerate(np.array_split(np.arange(spec.V), spec.K_true)):
        phi[k, block] = rng.dirichlet(np.full(block.size, spec.dirichlet_beta))
    return phi


def generate(spec):
    """
    Draw a corpus and its ground truth.

    Document lengths are Poisson(doc_length), redrawn while zero. Each
    document's topic counts are multinomial in theta_d and each topic's word
    counts multinomial in phi_k, which is the per-token ancestral process
    aggregated.

    Returns:
        tuple: (Corpus, GroundTruth)
    """
    rng = np.random.default_rng(spec.seed)
    phi = _draw_topics(rng, spec)
    theta = rng.dirichlet(np.full(spec.K_true, spec.dirichlet_alpha), size=spec.D)

    lengths = rng.poisson(spec.doc_length, size=spec.D)
    while (lengths == 0).any():
        zero = lengths == 0
        lengths[zero] = rng.poisson(spec.doc_length, size=int(zero.sum()))

    topic_counts = rng.multinomial(lengths, theta)
    counts = np.zeros((spec.D, spec.V), dtype=np.int64)
    for k in range(spec.K_true):
        counts += rng.multinomial(topic_counts[:, k], phi[k])

    width = len(str(spec.D - 1))
    corpus = Corpus(
        Vocabulary(_term_names(spec.V)),
        sparse.csr_matrix(counts),
        tuple(f"d{d:0{width}d}" for d in range(spec.D)),
        metadata={'generative_spec': asdict(spec)},
    )
    logger.info(f"Generated corpus: D={spec.D}, V={spec.V}, K_true={spec.K_true}, {corpus.total_tokens} tokens")
    return corpus, GroundTruth(phi, theta)


def make_labels(theta_true, n_active, seed, scale=4.0):
    """
    Binary outcomes from a logistic model on ``n_active`` randomly chosen
    true topics. Logits are centred on their median so both classes occur.
    """
    theta_true = np.asarray(theta_true, dtype=float)
    D, K = theta_true.shape
    if not 1 <= n_active:
        raise ValidationError(f"n_active must be >= 1, got {n_active}")
    rng = np.random.default_rng(seed)
    active = rng.choice(K, size=min(n_active, K), replace=False)
    weights = rng.normal(0.0, scale, size=active.size)
    logits = K * (theta_true[:, active] @ weights)
    logits -= np.median(logits)
    labels = (rng.random(D) < expit(logits)).astype(np.int64)
    logger.info(f"Labels: {labels.sum()} positive of {D}")
    return labels


def with_labels(corpus, labels):
    return replace(corpus, labels=labels)


def make_degenerate_replication(D, K, epsilon, seed, reference=None, V=None, blend=0.5, signal=0.5):
    """
    A replication whose document-topic proportions sit within ``epsilon`` of
    uniform.

    Without a reference the deviations from 1/K are centred uniform noise.
    With a reference model they mix (weight ``signal``) the reference's own
    deviations, scaled to unit maximum, so the near-uniform replication still
    orders documents the way the reference does. Rows are rescaled so no
    deviation exceeds ``epsilon``. Topics are ``blend`` times the reference
    topics plus uniform mass; without a reference they blend random
    Dirichlet(1) topics instead.

    Raises:
        ValidationError: If epsilon is outside [0, 1/K) or shapes disagree
    """
    if K < 2:
        raise ValidationError(f"K must be >= 2, got {K}")
    if not 0.0 <= epsilon < 1.0 / K:
        raise ValidationError(f"epsilon must lie in [0, 1/K) = [0, {1.0 / K:.4g}), got {epsilon}")
    if not 0.0 <= blend <= 1.0:
        raise ValidationError(f"blend must lie in [0, 1], got {blend}")
    rng = np.random.default_rng(seed)

    if reference is not None:
        if reference.theta.shape != (D, K):
            raise ValidationError(f"Reference theta has shape {reference.theta.shape}, expected {(D, K)}")
        V = reference.V
        deviation = reference.theta - 1.0 / K
        peak = np.abs(deviation).max(axis=1, keepdims=True)
        reference_dev = deviation / np.where(peak > 0, peak, 1.0)
    elif V is None:
        raise ValidationError("V is required without a reference model")
    else:
        reference_dev = np.zeros((D, K))
        signal = 0.0

    noise = rng.uniform(-1.0, 1.0, size=(D, K))
    noise -= noise.mean(axis=1, keepdims=True)
    dev = signal * reference_dev + (1.0 - signal) * noise
    dev /= np.maximum(1.0, np.abs(dev).max(axis=1, keepdims=True))
    theta = 1.0 / K + epsilon * dev
    theta /= theta.sum(axis=1, keepdims=True)

    if reference is not None:
        base = reference.phi
        config = reference.config.with_seed(seed)
    else:
        base = rng.dirichlet(np.ones(V), size=K)
        config = LdaConfig(K=K, iterations=1, burn_in=0, seed=seed)
    phi = blend * base + (1.0 - blend) / V
    phi /= phi.sum(axis=1, keepdims=True)

    return TopicModel(
        phi, theta, config,
        corpus_digest=reference.corpus_digest if reference is not None else '',
        metadata={'degenerate': True, 'epsilon': float(epsilon), 'blend': float(blend)},
    )


def inject_degenerate(reps, index, epsilon, seed, blend=0.5, reference_index=0):
    """Replace replication ``index`` with a degenerate one built from the reference."""
    if not 0 <= index < reps.n_reps or index == reference_index:
        raise ValidationError(f"Cannot replace replication {index} (reference is {reference_index})")
    model = make_degenerate_replication(
        reps.D, reps.K, epsilon, seed, reference=reps.models[reference_index], blend=blend
    )
    logger.info(f"Injected degenerate replication at index {index} (epsilon={epsilon})")
    return reps.replace_model(index, model, seed)


def save_ground_truth(truth, directory):
    directory = Path(directory)
    write_matrix(directory / 'phi_true.csv', truth.phi_true)
    write_matrix(directory / 'theta_true.csv', truth.theta_true)
    return [directory / 'phi_true.csv', directory / 'theta_true.csv']


def load_ground_truth(directory):
    directory = Path(directory)
    return GroundTruth(read_matrix(directory / 'phi_true.csv'), read_matrix(directory / 'theta_true.csv'))


def save_generative_spec(spec, path):
    return write_json(path, asdict(spec))
