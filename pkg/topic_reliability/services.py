"""
Service layer: the pipelines behind each management command, output
manifests and the run ledger.
"""

import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from django.conf import settings
from django.db import DatabaseError, transaction

from . import plots
from .align import align_topics, build_topic_groups, cosine_distributions, frex_words, save_alignment, save_cosine_distributions
from .corpus import LINE_TOKENS, load_corpus, save_corpus
from .downstream import (
    WORD_WEIGHT_COLUMNS, accuracy_summary, fit_replications, select_prevalent_terms, word_weight_summary,
)
from .exceptions import ConfigError, TopicReliabilityError, ValidationError
from .lda import (
    LdaConfig,
    child_seed,
    load_replications,
    replication_seeds,
    replications_match,
    run_replications,
    save_replications,
    top_words,
)
from .models import CoefficientRecord, ExperimentRun, RunArtifact
from .perturbation import sensitivity_study
from .reliability import build_report, interpret_reliability, save_per_topic, save_report
from .synthgen import GenerativeSpec, generate, inject_degenerate, make_labels, save_generative_spec, save_ground_truth, with_labels
from .utils import sha256_file, write_json, write_table

logger = logging.getLogger(__name__)

# spawn-key prefixes for seeds derived from the master seed
LABEL_STREAM = 10
DEGENERATE_STREAM = 11
SPLIT_STREAM = 12
BOOTSTRAP_STREAM = 13
PERTURB_STREAM = 14


@dataclass
class RunResult:
    command: str
    directory: Path
    files: list = field(default_factory=list)
    failures: list = field(default_factory=list)
    coefficients: list = field(default_factory=list)

    @property
    def status(self):
        return 'partial' if self.failures else 'success'

    @property
    def invalid_input(self):
        return any(f.get('invalid_input') for f in self.failures)


def resolve_corpus(run_config):
    """
    Load or generate the corpus a run config names.

    Returns:
        tuple: (Corpus, GroundTruth or None, GenerativeSpec or None)

    Raises:
        ConfigError: If the corpus source is malformed
        CorpusFormatError: If a corpus file cannot be read
    """
    source = run_config.corpus
    if 'path' in source:
        path = Path(source['path'])
        if not path.exists():
            raise ConfigError(f"Corpus file '{path}' does not exist")
        return load_corpus(path, source.get('format', LINE_TOKENS)), None, None

    parameters = dict(source['generate'])
    parameters.setdefault('seed', run_config.master_seed)
    try:
        spec = GenerativeSpec(**parameters)
    except TypeError as e:
        raise ConfigError(f"Invalid generate spec: {e}") from None
    corpus, truth = generate(spec)

    if 'labels' in source:
        n_active = int(source['labels'].get('n_active', spec.K_true))
        labels = make_labels(truth.theta_true, n_active, child_seed(run_config.master_seed, LABEL_STREAM))
        corpus = with_labels(corpus, labels)
    return corpus, truth, spec


def lda_config(run_config, K):
    try:
        return LdaConfig(K=int(K), **run_config.lda)
    except TypeError as e:
        raise ConfigError(f"Invalid lda settings: {e}") from None


def _require_replications(run_config):
    if run_config.n_reps < 2:
        raise ValidationError("reliability requires ≥ 2 replications")


def obtain_replications(corpus, run_config, K):
    """
    Replications for ``K``: reused from ``<out>/fit/K<K>`` when they were fitted
    from the same corpus, settings and seeds, fitted and persisted otherwise.
    """
    config = lda_config(run_config, K)
    directory = Path(run_config.output_dir) / 'fit' / f'K{K}'
    seeds = replication_seeds(run_config.master_seed, run_config.n_reps, run_config.seed_mode)
    if replications_match(directory, corpus.digest(), config, seeds, run_config.seed_mode):
        logger.info(f"Reusing replications for K={K} from '{directory}'")
        return load_replications(directory), []
    reps = run_replications(
        corpus, config, run_config.n_reps, run_config.seed_mode, run_config.master_seed, int(run_config.jobs)
    )
    return reps, save_replications(reps, directory)


def write_manifest(result, run_config):
    """Sorted file list with SHA-256 digests plus any per-task failures."""
    directory = Path(result.directory)
    entries = sorted(
        {Path(f).resolve().relative_to(directory.resolve()).as_posix(): sha256_file(f) for f in result.files}.items()
    )
    payload = {
        'command': result.command,
        'config_digest': run_config.digest(),
        'files': [{'path': path, 'sha256': digest} for path, digest in entries],
        'failures': result.failures,
    }
    return write_json(directory / 'manifest.json', payload)


def record_run(result, run_config, message=''):
    """
    Add the run to the ledger. The ledger is optional: database errors are
    logged and otherwise ignored.
    """
    if not settings.RELIABILITY_LEDGER_ENABLED:
        return None
    try:
        with transaction.atomic():
            run = ExperimentRun.objects.create(
                command=result.command,
                config_digest=run_config.digest(),
                master_seed=run_config.master_seed,
                output_dir=str(result.directory),
                status=result.status,
                message=message or '; '.join(f"{f['task']}: {f['error']}" for f in result.failures),
            )
            RunArtifact.objects.bulk_create([
                RunArtifact(run=run, path=str(Path(f).resolve()), sha256=sha256_file(f)) for f in result.files
            ])
            CoefficientRecord.objects.bulk_create([CoefficientRecord(run=run, **row) for row in result.coefficients])
        return run
    except DatabaseError as e:
        logger.warning(f"Run ledger unavailable, run not recorded: {e}")
        return None


def _per_k(result, Ks, task):
    """Run ``task(K)`` for every K; a failing K is reported and the rest continue."""
    for K in Ks:
        t0 = time.perf_counter()
        try:
            result.files.extend(task(K))
        except TopicReliabilityError as e:
            logger.error(f"{result.command} failed for K={K}: {e}")
            result.failures.append({'task': f'K={K}', 'error': str(e), 'invalid_input': isinstance(e, ValidationError)})
        else:
            logger.info(f"{result.command} for K={K} took {time.perf_counter() - t0:.4f}s")


def run_generate(run_config):
    directory = Path(run_config.output_dir) / 'generate'
    result = RunResult('generate', directory)
    corpus, truth, spec = resolve_corpus(run_config)
    result.files.extend(save_corpus(corpus, directory / 'corpus.txt'))
    if truth is not None:
        result.files.extend(save_ground_truth(truth, directory))
        result.files.append(save_generative_spec(spec, directory / 'generative_spec.json'))
    write_manifest(result, run_config)
    return result


def run_fit(run_config):
    _require_replications(run_config)
    result = RunResult('fit', Path(run_config.output_dir) / 'fit')
    corpus, _, _ = resolve_corpus(run_config)

    def task(K):
        reps, written = obtain_replications(corpus, run_config, K)
        if not written:
            directory = result.directory / f'K{K}'
            written = sorted(p for p in directory.rglob('*') if p.is_file())
        return written

    _per_k(result, run_config.k_values, task)
    write_manifest(result, run_config)
    return result


def _topics_table(reps, vocabulary, reference_index):
    model = reps.models[reference_index]
    return [
        {
            'topic': k,
            'top_words': ' '.join(vocabulary.lookup(t) for t in top_words(model, k, 10)),
            'frex_words': ' '.join(frex_words(model, k, top_n=10, vocabulary=vocabulary)),
        }
        for k in range(model.K)
    ]


def run_align(run_config):
    _require_replications(run_config)
    result = RunResult('align', Path(run_config.output_dir) / 'align')
    corpus, _, _ = resolve_corpus(run_config)

    def task(K):
        reps, _ = obtain_replications(corpus, run_config, K)
        alignment = align_topics(reps, run_config.top_n, run_config.reference_index, run_config.matching)
        full, matched = cosine_distributions(reps, alignment)
        directory = result.directory / f'K{K}'
        return [
            save_alignment(alignment, directory / 'alignment.csv'),
            save_cosine_distributions(full, matched, directory / 'cosines.csv'),
            write_table(directory / 'topics.csv', _topics_table(reps, corpus.vocabulary, run_config.reference_index)),
            plots.cosine_histogram(full, matched, directory / 'cosines.svg', run_config.cutoff, title=f'K={K}'),
        ]

    _per_k(result, run_config.k_values, task)
    write_manifest(result, run_config)
    return result


def _score(reps, run_config, directory, name, K, subset=''):
    alignment = align_topics(reps, run_config.top_n, 0 if subset else run_config.reference_index, run_config.matching)
    groups = build_topic_groups(reps, alignment)
    report = build_report(
        reps, alignment, groups,
        drop=run_config.drop,
        cutoff=run_config.cutoff,
        bootstrap_b=int(run_config.bootstrap_b),
        seed=child_seed(run_config.master_seed, BOOTSTRAP_STREAM, K),
        pool=run_config.pool,
        similarity=run_config.similarity,
    )
    records = [
        {
            'k': K, 'subset': subset, 'metric': metric, 'value': value,
            'standard_error': report.standard_errors.get(metric), 'label': report.labels[metric],
        }
        for metric, value in report.coefficients.items()
    ]
    files = [
        save_report(report, directory / f'{name}.json'),
        save_per_topic(report, directory / f'{name}_per_topic.csv'),
    ]
    return report, alignment, files, records


def run_reliability(run_config):
    _require_replications(run_config)
    result = RunResult('reliability', Path(run_config.output_dir) / 'reliability')
    corpus, _, _ = resolve_corpus(run_config)

    def task(K):
        reps, _ = obtain_replications(corpus, run_config, K)
        if run_config.inject_degenerate:
            degenerate = dict(run_config.inject_degenerate)
            reps = inject_degenerate(
                reps,
                int(degenerate['index']),
                float(degenerate['epsilon']),
                child_seed(run_config.master_seed, DEGENERATE_STREAM, K),
                blend=float(degenerate.get('blend', 0.5)),
                reference_index=run_config.reference_index,
            )
        directory = result.directory / f'K{K}'
        _, alignment, files, records = _score(reps, run_config, directory, f'report_K{K}', K)
        full, matched = cosine_distributions(reps, alignment)
        files.extend([
            save_cosine_distributions(full, matched, directory / 'cosines.csv'),
            plots.cosine_histogram(full, matched, directory / 'cosines.svg', run_config.cutoff, title=f'K={K}'),
        ])
        result.coefficients.extend(records)

        for subset in run_config.subsets:
            label = '_'.join(str(int(i)) for i in subset)
            _, _, subset_files, subset_records = _score(
                reps.subset(subset), run_config, directory, f'report_K{K}_subset_{label}', K, subset=label
            )
            files.extend(subset_files)
            result.coefficients.extend(subset_records)
        return files

    _per_k(result, run_config.k_values, task)
    write_manifest(result, run_config)
    return result


def run_perturb(run_config):
    _require_replications(run_config)
    result = RunResult('perturb', Path(run_config.output_dir) / 'perturb')
    corpus, _, _ = resolve_corpus(run_config)
    K = int(run_config.perturb_k or run_config.k_values[0])

    def task(K):
        rows, frex_rows = sensitivity_study(
            corpus,
            lda_config(run_config, K),
            [int(n) for n in run_config.removal_schedule],
            run_config.n_reps,
            child_seed(run_config.master_seed, PERTURB_STREAM),
            jobs=int(run_config.jobs),
            top_n=run_config.top_n,
            cutoff=run_config.cutoff,
            drop=run_config.drop,
            matching=run_config.matching,
            pool=run_config.pool,
            similarity=run_config.similarity,
        )
        result.coefficients.extend(
            {
                'k': K, 'subset': f"{row['mode']}:{row['n_removed']}", 'metric': row['metric'],
                'value': row['value'], 'standard_error': None, 'label': row['label'],
            }
            for row in rows
        )
        directory = result.directory / f'K{K}'
        return [
            write_table(directory / 'sensitivity.csv', rows, columns=['mode', 'n_removed', 'metric', 'value', 'label']),
            write_table(directory / 'frex.csv', frex_rows, columns=['mode', 'n_removed', 'replication', 'rank', 'term']),
            plots.sensitivity_plot(rows, directory / 'sensitivity.svg'),
        ]

    _per_k(result, [K], task)
    write_manifest(result, run_config)
    return result


def run_downstream(run_config):
    _require_replications(run_config)
    result = RunResult('downstream', Path(run_config.output_dir) / 'downstream')
    corpus, _, _ = resolve_corpus(run_config)
    if corpus.labels is None:
        raise ValidationError("The downstream study needs document labels")
    split_seed = child_seed(run_config.master_seed, SPLIT_STREAM)

    def task(K):
        reps, _ = obtain_replications(corpus, run_config, K)
        predictions = fit_replications(reps, corpus.labels, run_config.holdout_fraction, split_seed)
        terms = select_prevalent_terms(reps, corpus, run_config.prevalent_terms)
        summaries = word_weight_summary(reps, predictions, terms, corpus.vocabulary)

        coefficient_rows = []
        for p in predictions:
            row = {'replication': p.replication_id, 'intercept': float(p.coefficients[0])}
            row.update({f'topic_{k}': float(c) for k, c in enumerate(p.coefficients[1:])})
            coefficient_rows.append(row)
        accuracy_rows = [
            {
                'replication': p.replication_id, 'train': p.train_accuracy, 'holdout': p.holdout_accuracy,
                'converged': p.converged, 'separated': p.separated,
            }
            for p in predictions
        ]
        weights = np.array([s.weights for s in summaries])
        directory = result.directory / f'K{K}'
        return [
            write_table(directory / 'coefficients.csv', coefficient_rows),
            write_table(directory / 'accuracy.csv', accuracy_rows),
            write_table(directory / 'word_weights.csv', [s.to_row() for s in summaries], columns=WORD_WEIGHT_COLUMNS),
            write_table(directory / 'word_weights_by_replication.csv', [
                {'replication': r, **{s.term: float(weights[i, r]) for i, s in enumerate(summaries)}}
                for r in range(reps.n_reps)
            ]),
            write_json(directory / 'accuracy_summary.json', accuracy_summary(predictions)),
            plots.word_weight_boxplot(summaries, directory / 'word_weights.svg'),
        ]

    _per_k(result, run_config.k_values, task)
    write_manifest(result, run_config)
    return result


PIPELINES = {
    'generate': run_generate,
    'fit': run_fit,
    'align': run_align,
    'reliability': run_reliability,
    'perturb': run_perturb,
    'downstream': run_downstream,
}


def summarise_coefficients(result):
    """Human-readable lines for the command's console summary."""
    lines = []
    for row in result.coefficients:
        value = row['value']
        shown = 'n/a' if value is None else f"{value:.4f}"
        subset = f" [{row['subset']}]" if row['subset'] else ''
        lines.append(f"K={row['k']}{subset} {row['metric']}: {shown} ({interpret_reliability(value)})")
    return lines


def degenerate_pair_flagged(result, subset):
    """
    True when the cosine rule rates ``subset`` perfect while alpha and omega
    both mark it unreliable (alpha < 0.6, omega < 0.95).
    """
    values = {row['metric']: row['value'] for row in result.coefficients if row['subset'] == subset}
    cosine_rule = values.get('standard_practice')
    alpha = values.get('stratified_alpha')
    omega = values.get('multivariate_omega')
    if None in (cosine_rule, alpha, omega):
        return False
    return cosine_rule == 1.0 and alpha < 0.6 and omega < 0.95
