"""
Utility functions for the reliability toolkit: matrix and table files,
digests, and the declarative run configuration.
"""

import hashlib
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np
import pandas as pd

from .exceptions import ConfigError

# Floats are written with enough digits to reload bit-identically
MATRIX_FLOAT_FORMAT = '%.17g'
TABLE_FLOAT_FORMAT = '%.10g'


def write_matrix(path, matrix):
    """Write a 2-D array as header-less CSV."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    pd.DataFrame(np.asarray(matrix, dtype=float)).to_csv(
        path, header=False, index=False, float_format=MATRIX_FLOAT_FORMAT, lineterminator='\n'
    )


def read_matrix(path):
    """Read a header-less CSV written by :func:`write_matrix`."""
    return pd.read_csv(path, header=None, dtype=float, float_precision='round_trip').to_numpy()


def write_table(path, rows, columns=None):
    """Write a list of dicts (or a DataFrame) as a CSV table."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    table = rows if isinstance(rows, pd.DataFrame) else pd.DataFrame(list(rows), columns=columns)
    table.to_csv(path, index=False, float_format=TABLE_FLOAT_FORMAT, lineterminator='\n')
    return path


def write_json(path, payload):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + '\n', encoding='utf-8', newline='\n')
    return path


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, 'rb') as handle:
        for chunk in iter(lambda: handle.read(1 << 20), b''):
            h.update(chunk)
    return h.hexdigest()


def json_digest(payload):
    return hashlib.sha256(json.dumps(payload, sort_keys=True).encode('utf-8')).hexdigest()


# Experiment presets. Keys in a config file override the preset values.
PRESETS = {
    'trivial': {
        'corpus': {
            'generate': {
                'K_true': 2, 'V': 16, 'D': 10000, 'doc_length': 50.0,
                'dirichlet_alpha': 0.1, 'dirichlet_beta': 0.1, 'disjoint_topics': True,
            },
        },
        'k_values': [2],
        'n_reps': 10,
        'lda': {'alpha': 0.1, 'beta': 0.1, 'iterations': 200, 'burn_in': 100},
        'inject_degenerate': {'index': 5, 'epsilon': 0.01, 'blend': 0.5},
        'subsets': [[4, 5]],
        'top_n': 16,
    },
    'nontrivial': {
        'corpus': {
            'generate': {
                'K_true': 5, 'V': 500, 'D': 2000, 'doc_length': 100.0,
                'dirichlet_alpha': 0.1, 'dirichlet_beta': 0.1,
            },
            'labels': {'n_active': 3},
        },
        'k_values': [10, 25, 50],
        'n_reps': 20,
        'lda': {'alpha': 0.1, 'beta': 0.1, 'iterations': 300, 'burn_in': 150},
        'removal_schedule': [0, 1, 10, 50, 100],
    },
    'removal': {
        'corpus': {
            'generate': {
                'K_true': 50, 'V': 500, 'D': 2000, 'doc_length': 100.0,
                'dirichlet_alpha': 0.1, 'dirichlet_beta': 0.1,
            },
        },
        'k_values': [50],
        'n_reps': 5,
        'lda': {'alpha': 0.1, 'beta': 0.1, 'iterations': 300, 'burn_in': 150},
        'removal_schedule': [0, 1, 10, 50, 100],
    },
}


@dataclass
class RunConfig:
    """
    Declarative description of one study. Loaded from a JSON file; absent
    keys fall back to the preset named in ``corpus.preset`` and then to the
    project settings.
    """
    corpus: dict
    k_values: list = field(default_factory=lambda: [20, 50, 100])
    n_reps: int = 10
    seed_mode: str = 'distinct'
    master_seed: int = None
    top_n: object = None
    cutoff: float = None
    bootstrap_b: int = None
    removal_schedule: list = field(default_factory=lambda: [0, 1, 10, 50, 100])
    output_dir: str = None
    jobs: int = None
    lda: dict = field(default_factory=dict)
    matching: str = 'greedy'
    reference_index: int = 0
    pool: str = 'coefficient'
    similarity: str = 'cosine'
    drop: object = 'last'
    inject_degenerate: dict = None
    subsets: list = field(default_factory=list)
    holdout_fraction: float = 0.2
    prevalent_terms: int = 2
    perturb_k: int = None

    def __post_init__(self):
        from django.conf import settings

        if self.master_seed is None:
            self.master_seed = settings.RELIABILITY_MASTER_SEED
        if self.top_n is None:
            self.top_n = settings.RELIABILITY_TOP_N
        if self.cutoff is None:
            self.cutoff = settings.RELIABILITY_CUTOFF
        if self.bootstrap_b is None:
            self.bootstrap_b = settings.RELIABILITY_BOOTSTRAP_B
        if self.output_dir is None:
            self.output_dir = settings.RELIABILITY_OUTPUT_DIR
        if self.jobs is None:
            self.jobs = settings.RELIABILITY_JOBS
        self.validate()

    def validate(self):
        if not isinstance(self.corpus, dict) or not ({'path', 'generate', 'preset'} & set(self.corpus)):
            raise ConfigError("corpus must name a 'path', a 'preset' or a 'generate' spec")
        if not self.k_values or any(int(k) < 2 for k in self.k_values):
            raise ConfigError(f"Every K must be >= 2, got {self.k_values}")
        if self.seed_mode not in ('distinct', 'fixed'):
            raise ConfigError(f"seed_mode must be 'distinct' or 'fixed', got '{self.seed_mode}'")
        if self.matching not in ('greedy', 'hungarian'):
            raise ConfigError(f"matching must be 'greedy' or 'hungarian', got '{self.matching}'")
        if self.pool not in ('coefficient', 'moments'):
            raise ConfigError(f"pool must be 'coefficient' or 'moments', got '{self.pool}'")
        if self.similarity not in ('cosine', 'pearson'):
            raise ConfigError(f"similarity must be 'cosine' or 'pearson', got '{self.similarity}'")
        if any(int(n) < 0 for n in self.removal_schedule):
            raise ConfigError("Removal counts must be non-negative")
        if int(self.jobs) < 1:
            raise ConfigError("jobs must be >= 1")
        if not 0.0 < float(self.cutoff) < 1.0:
            raise ConfigError(f"cutoff must lie in (0, 1), got {self.cutoff}")
        if self.bootstrap_b and int(self.bootstrap_b) < 50:
            raise ConfigError("bootstrap_b must be 0 (disabled) or >= 50")

    def digest(self):
        """Digest of everything that determines the data outputs."""
        payload = asdict(self)
        payload.pop('output_dir')
        payload.pop('jobs')
        return json_digest(payload)


def load_run_config(path=None, preset=None, seed=None, out=None, jobs=None):
    """
    Build a RunConfig from a JSON file and/or a preset, then apply CLI overrides.

    Raises:
        ConfigError: If the file is missing, not JSON, or holds unknown keys
    """
    data = {}
    if path is not None:
        try:
            data = json.loads(Path(path).read_text(encoding='utf-8'))
        except FileNotFoundError:
            raise ConfigError(f"Could not find the config file '{path}'") from None
        except json.JSONDecodeError as e:
            raise ConfigError(f"Invalid JSON format in '{path}': {e}") from None
        if not isinstance(data, dict):
            raise ConfigError(f"'{path}' must hold a JSON object")

    preset = preset or data.get('corpus', {}).get('preset')
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"Unknown preset '{preset}'; expected one of {sorted(PRESETS)}")
        merged = json.loads(json.dumps(PRESETS[preset]))
        for key, value in data.items():
            if key == 'corpus':
                merged['corpus'].update({k: v for k, v in value.items() if k != 'preset'})
            elif isinstance(value, dict) and isinstance(merged.get(key), dict):
                merged[key].update(value)
            else:
                merged[key] = value
        data = merged

    known = {f.name for f in fields(RunConfig)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"Unknown config keys: {sorted(unknown)}")
    if 'corpus' not in data:
        raise ConfigError("Config must define a corpus source")

    if seed is not None:
        data['master_seed'] = seed
    if out is not None:
        data['output_dir'] = str(out)
    if jobs is not None:
        data['jobs'] = jobs
    return RunConfig(**data)
