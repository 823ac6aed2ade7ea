"""
Collapsed Gibbs sampling LDA and the replication runner.

The per-token sampling loop is compiled with numba; uniforms are drawn from a
seeded numpy Generator one sweep at a time, so a fit is fully determined by
its seed.
"""

import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
from numba import njit
from scipy.special import gammaln

from .exceptions import ValidationError
from .utils import read_matrix, write_matrix

logger = logging.getLogger(__name__)

DEFAULT_BETA = 0.1
DEFAULT_ITERATIONS = 1000
DEFAULT_BURN_IN = 500
ROW_SUM_TOLERANCE = 1e-9

DISTINCT = 'distinct'
FIXED = 'fixed'
SEED_MODES = (DISTINCT, FIXED)


@dataclass(frozen=True)
class LdaConfig:
    """
    Sampler settings. ``alpha`` defaults to 50/K.
    """
    K: int
    alpha: float = None
    beta: float = DEFAULT_BETA
    iterations: int = DEFAULT_ITERATIONS
    burn_in: int = DEFAULT_BURN_IN
    seed: int = 0

    def __post_init__(self):
        if self.K < 2:
            raise ValidationError(f"LDA needs K >= 2 topics, got {self.K}")
        if self.alpha is None:
            object.__setattr__(self, 'alpha', 50.0 / self.K)
        if self.alpha <= 0 or self.beta <= 0:
            raise ValidationError(f"alpha and beta must be positive, got {self.alpha}, {self.beta}")
        if not self.iterations > self.burn_in >= 0:
            raise ValidationError(
                f"Need iterations > burn_in >= 0, got iterations={self.iterations}, burn_in={self.burn_in}"
            )

    def with_seed(self, seed):
        return replace(self, seed=int(seed))

    def to_dict(self):
        return {
            'K': self.K, 'alpha': self.alpha, 'beta': self.beta,
            'iterations': self.iterations, 'burn_in': self.burn_in, 'seed': self.seed,
        }


def _check_stochastic(name, matrix):
    if matrix.ndim != 2:
        raise ValidationError(f"{name} must be a matrix")
    if not np.isfinite(matrix).all() or (matrix < 0).any():
        raise ValidationError(f"{name} must be finite and non-negative")
    sums = matrix.sum(axis=1)
    if matrix.shape[0] and np.abs(sums - 1.0).max() > ROW_SUM_TOLERANCE:
        raise ValidationError(f"{name} rows must sum to 1 (max deviation {np.abs(sums - 1.0).max():.3g})")


@dataclass(frozen=True, eq=False)
class TopicModel:
    """
    One fitted replication: ``phi`` is K x V (topic-word), ``theta`` is
    D x K (document-topic).
    """
    phi: np.ndarray
    theta: np.ndarray
    config: LdaConfig
    log_likelihood_trace: np.ndarray = field(default_factory=lambda: np.empty(0))
    corpus_digest: str = ''
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        phi = np.asarray(self.phi, dtype=float)
        theta = np.asarray(self.theta, dtype=float)
        _check_stochastic('phi', phi)
        _check_stochastic('theta', theta)
        if theta.shape[1] != phi.shape[0]:
            raise ValidationError(f"theta has {theta.shape[1]} topics but phi has {phi.shape[0]}")
        if (phi.max(axis=1) <= 0).any():
            raise ValidationError("phi has an all-zero row")
        object.__setattr__(self, 'phi', phi)
        object.__setattr__(self, 'theta', theta)
        object.__setattr__(self, 'log_likelihood_trace', np.asarray(self.log_likelihood_trace, dtype=float))

    @property
    def K(self):
        return self.phi.shape[0]

    @property
    def V(self):
        return self.phi.shape[1]

    @property
    def D(self):
        return self.theta.shape[0]


@dataclass(frozen=True, eq=False)
class ReplicationSet:
    """
    Models fitted on one corpus with shared K and hyperparameters.
    """
    models: tuple
    seeds: tuple
    corpus_digest: str = ''
    seed_mode: str = DISTINCT

    def __post_init__(self):
        models = tuple(self.models)
        seeds = tuple(int(s) for s in self.seeds)
        if not models:
            raise ValidationError("A replication set needs at least one model")
        if len(seeds) != len(models):
            raise ValidationError(f"{len(models)} models but {len(seeds)} seeds")
        shapes = {(m.K, m.V, m.D) for m in models}
        if len(shapes) != 1:
            raise ValidationError(f"Replications disagree on (K, V, D): {sorted(shapes)}")
        if self.seed_mode == DISTINCT and len(set(seeds)) != len(seeds):
            raise ValidationError("Replication seeds must be distinct in distinct-seed mode")
        object.__setattr__(self, 'models', models)
        object.__setattr__(self, 'seeds', seeds)

    @property
    def n_reps(self):
        return len(self.models)

    @property
    def K(self):
        return self.models[0].K

    @property
    def V(self):
        return self.models[0].V

    @property
    def D(self):
        return self.models[0].D

    def subset(self, indices):
        """Replication set restricted to ``indices`` (in the given order)."""
        indices = [int(i) for i in indices]
        if any(not 0 <= i < self.n_reps for i in indices):
            raise ValidationError(f"Subset {indices} outside 0..{self.n_reps - 1}")
        return ReplicationSet(
            tuple(self.models[i] for i in indices),
            tuple(self.seeds[i] for i in indices),
            self.corpus_digest,
            self.seed_mode,
        )

    def replace_model(self, index, model, seed):
        models = list(self.models)
        seeds = list(self.seeds)
        models[index] = model
        seeds[index] = seed
        return ReplicationSet(tuple(models), tuple(seeds), self.corpus_digest, self.seed_mode)


def child_seed(master_seed, *key):
    """
    Seed for task ``key`` derived from ``master_seed``. Adding tasks never
    changes the seeds of existing ones.
    """
    sequence = np.random.SeedSequence(int(master_seed), spawn_key=tuple(int(k) for k in key))
    return int(sequence.generate_state(1)[0])


def replication_seeds(master_seed, n_reps, seed_mode=DISTINCT):
    """Sampler seed of every replication."""
    if seed_mode not in SEED_MODES:
        raise ValidationError(f"Unknown seed mode '{seed_mode}'")
    if seed_mode == FIXED:
        return [child_seed(master_seed, 0)] * n_reps
    return [child_seed(master_seed, r) for r in range(n_reps)]


def token_arrays(corpus):
    """
    Expand a corpus into (doc_of_token, word_of_token): documents in order,
    term ids ascending within a document, each repeated by its count.
    """
    counts = corpus.counts
    doc_of_entry = np.repeat(np.arange(corpus.n_docs, dtype=np.int64), np.diff(counts.indptr))
    doc_of = np.repeat(doc_of_entry, counts.data)
    word_of = np.repeat(counts.indices.astype(np.int64), counts.data)
    return doc_of, word_of


@njit(cache=True, nogil=True)
def _gibbs_sweep(doc_of, word_of, z, n_dk, n_kw, n_k, alpha, beta, v_beta, uniforms):
    K = n_k.shape[0]
    cumulative = np.empty(K)
    for i in range(doc_of.shape[0]):
        d = doc_of[i]
        w = word_of[i]
        k = z[i]
        n_dk[d, k] -= 1
        n_kw[k, w] -= 1
        n_k[k] -= 1

        total = 0.0
        for j in range(K):
            total += (n_dk[d, j] + alpha) * (n_kw[j, w] + beta) / (n_k[j] + v_beta)
            cumulative[j] = total

        target = uniforms[i] * total
        k = K - 1
        for j in range(K):
            if cumulative[j] > target:
                k = j
                break

        z[i] = k
        n_dk[d, k] += 1
        n_kw[k, w] += 1
        n_k[k] += 1


def joint_log_likelihood(n_dk, n_kw, alpha, beta):
    """log p(w, z) of the collapsed model for the current assignment counts."""
    K, V = n_kw.shape
    D = n_dk.shape[0]
    n_k = n_kw.sum(axis=1)
    n_d = n_dk.sum(axis=1)
    words = (
        K * (gammaln(V * beta) - V * gammaln(beta))
        + gammaln(n_kw + beta).sum()
        - gammaln(n_k + V * beta).sum()
    )
    topics = (
        D * (gammaln(K * alpha) - K * gammaln(alpha))
        + gammaln(n_dk + alpha).sum()
        - gammaln(n_d + K * alpha).sum()
    )
    return float(words + topics)


def fit_lda(corpus, config):
    """
    Fit LDA by collapsed Gibbs sampling.

    Point estimates come from the final sweep's assignments:
    phi[k, w] = (n_kw + beta) / (n_k + V beta) and
    theta[d, k] = (n_dk + alpha) / (n_d + K alpha).

    Args:
        corpus (Corpus): Non-empty corpus
        config (LdaConfig): Sampler settings, including the seed

    Returns:
        TopicModel: Fitted model with the per-sweep log-likelihood trace

    Raises:
        ValidationError: If the corpus is empty
    """
    if corpus.n_docs == 0 or corpus.total_tokens == 0:
        raise ValidationError("Cannot fit LDA on an empty corpus")
    K, V, D = config.K, corpus.n_terms, corpus.n_docs
    if K > corpus.total_tokens:
        logger.warning(f"K={K} exceeds the corpus token count {corpus.total_tokens}; the model is oversized")

    t0 = time.perf_counter()
    doc_of, word_of = token_arrays(corpus)
    n_tokens = doc_of.shape[0]
    rng = np.random.default_rng(config.seed)

    z = rng.integers(0, K, size=n_tokens)
    n_dk = np.zeros((D, K), dtype=np.int64)
    n_kw = np.zeros((K, V), dtype=np.int64)
    np.add.at(n_dk, (doc_of, z), 1)
    np.add.at(n_kw, (z, word_of), 1)
    n_k = n_kw.sum(axis=1)

    trace = np.empty(config.iterations)
    for sweep in range(config.iterations):
        uniforms = rng.random(n_tokens)
        _gibbs_sweep(doc_of, word_of, z, n_dk, n_kw, n_k, config.alpha, config.beta, V * config.beta, uniforms)
        trace[sweep] = joint_log_likelihood(n_dk, n_kw, config.alpha, config.beta)

    phi = (n_kw + config.beta) / (n_k[:, None] + V * config.beta)
    theta = (n_dk + config.alpha) / (corpus.doc_lengths[:, None] + K * config.alpha)
    logger.info(
        f"LDA fit (K={K}, seed={config.seed}, {config.iterations} sweeps, {n_tokens} tokens) "
        f"took {time.perf_counter() - t0:.4f}s"
    )
    return TopicModel(phi, theta, config, trace, corpus.digest())


def run_replications(corpus, config, n_reps, seed_mode=DISTINCT, master_seed=None, jobs=1):
    """
    Fit ``n_reps`` replications of ``config`` on ``corpus``.

    In distinct mode replication r uses ``child_seed(master_seed, r)``; in
    fixed mode every replication uses ``child_seed(master_seed, 0)``.
    ``master_seed`` defaults to ``config.seed``.

    Raises:
        ValidationError: If fewer than two replications are requested
    """
    if n_reps < 2:
        raise ValidationError("reliability requires ≥ 2 replications")
    master_seed = config.seed if master_seed is None else master_seed
    seeds = replication_seeds(master_seed, n_reps, seed_mode)

    if seed_mode == FIXED:
        model = fit_lda(corpus, config.with_seed(seeds[0]))
        logger.info(f"Fixed-seed mode: {n_reps} replications share seed {seeds[0]}")
        return ReplicationSet((model,) * n_reps, tuple(seeds), model.corpus_digest, FIXED)

    t0 = time.perf_counter()
    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as executor:
            models = list(executor.map(lambda s: fit_lda(corpus, config.with_seed(s)), seeds))
    else:
        models = [fit_lda(corpus, config.with_seed(s)) for s in seeds]
    logger.info(f"{n_reps} replications (K={config.K}, jobs={jobs}) took {time.perf_counter() - t0:.4f}s")
    return ReplicationSet(tuple(models), tuple(seeds), models[0].corpus_digest, DISTINCT)


def top_words(model, topic, n=10):
    """Term ids of the ``n`` most probable words of ``topic`` (ties by id)."""
    order = np.lexsort((np.arange(model.V), -model.phi[topic]))
    return [int(i) for i in order[:n]]


def most_prevalent_topic(model):
    """Topic with the largest mean document proportion."""
    return int(np.argmax(model.theta.mean(axis=0)))


def save_model(model, directory):
    """Persist a model as phi.csv, theta.csv and meta.json."""
    directory = Path(directory)
    write_matrix(directory / 'phi.csv', model.phi)
    write_matrix(directory / 'theta.csv', model.theta)
    meta = {
        'config': model.config.to_dict(),
        'corpus_digest': model.corpus_digest,
        'log_likelihood_trace': [float(x) for x in model.log_likelihood_trace],
        'metadata': model.metadata,
    }
    (directory / 'meta.json').write_text(json.dumps(meta, indent=2, sort_keys=True) + '\n', encoding='utf-8')
    return [directory / 'phi.csv', directory / 'theta.csv', directory / 'meta.json']


def load_model(directory):
    directory = Path(directory)
    meta = json.loads((directory / 'meta.json').read_text(encoding='utf-8'))
    return TopicModel(
        read_matrix(directory / 'phi.csv'),
        read_matrix(directory / 'theta.csv'),
        LdaConfig(**meta['config']),
        np.asarray(meta['log_likelihood_trace'], dtype=float),
        meta['corpus_digest'],
        meta.get('metadata', {}),
    )


def save_replications(reps, directory):
    """Persist every replication under ``rep<r>/`` plus replications.json."""
    directory = Path(directory)
    written = []
    for r, model in enumerate(reps.models):
        written.extend(save_model(model, directory / f'rep{r:03d}'))
    index = {
        'corpus_digest': reps.corpus_digest,
        'seed_mode': reps.seed_mode,
        'seeds': list(reps.seeds),
        'config': {k: v for k, v in reps.models[0].config.to_dict().items() if k != 'seed'},
    }
    path = directory / 'replications.json'
    path.write_text(json.dumps(index, indent=2, sort_keys=True) + '\n', encoding='utf-8')
    written.append(path)
    return written


def load_replications(directory):
    directory = Path(directory)
    index = json.loads((directory / 'replications.json').read_text(encoding='utf-8'))
    models = [load_model(directory / f'rep{r:03d}') for r in range(len(index['seeds']))]
    return ReplicationSet(tuple(models), tuple(index['seeds']), index['corpus_digest'], index['seed_mode'])


def replications_match(directory, corpus_digest, config, seeds, seed_mode):
    """Whether persisted replications under ``directory`` were fitted with these inputs."""
    path = Path(directory) / 'replications.json'
    if not path.exists():
        return False
    index = json.loads(path.read_text(encoding='utf-8'))
    expected = {k: v for k, v in config.to_dict().items() if k != 'seed'}
    return (
        index.get('corpus_digest') == corpus_digest
        and index.get('seed_mode') == seed_mode
        and index.get('seeds') == [int(s) for s in seeds]
        and index.get('config') == expected
    )
