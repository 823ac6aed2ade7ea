"""
Document representation, vocabulary management and file I/O for corpora.

Two on-disk formats are supported:

* ``line-tokens``: UTF-8, one document per line, whitespace-separated tokens.
* ``sparse-triplets``: CSV ``doc_id,term_id,count`` with a vocabulary sidecar
  (``<stem>.vocab``, one term per line, line number = term id).

Both formats may carry a ``<stem>.docs.csv`` sidecar (``doc_id[,label]``) so
that document identifiers and outcome labels survive a save/load round trip.
"""

import hashlib
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
from scipy import sparse

from .exceptions import CorpusFormatError, ValidationError

logger = logging.getLogger(__name__)

LINE_TOKENS = 'line-tokens'
SPARSE_TRIPLETS = 'sparse-triplets'
FORMATS = (LINE_TOKENS, SPARSE_TRIPLETS)

TRIPLET_COLUMNS = ['doc_id', 'term_id', 'count']


@dataclass(frozen=True)
class Vocabulary:
    """
    Ordered set of unique terms with dense integer ids 0..V-1.
    """
    terms: tuple
    _index: dict = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        terms = tuple(str(term) for term in self.terms)
        index = {term: i for i, term in enumerate(terms)}
        if len(index) != len(terms):
            seen = set()
            duplicates = [t for t in terms if t in seen or seen.add(t)]
            raise ValidationError(f"Duplicate vocabulary terms: {duplicates[:5]}")
        object.__setattr__(self, 'terms', terms)
        object.__setattr__(self, '_index', index)

    def __len__(self):
        return len(self.terms)

    def __iter__(self):
        return iter(self.terms)

    def __contains__(self, term):
        return term in self._index

    def index(self, term):
        """Return the integer id of ``term``."""
        try:
            return self._index[term]
        except KeyError:
            raise ValidationError(f"Unknown term '{term}'") from None

    def lookup(self, term_id):
        """Return the term string for ``term_id``."""
        if not 0 <= term_id < len(self.terms):
            raise ValidationError(f"Term id {term_id} outside vocabulary of size {len(self.terms)}")
        return self.terms[term_id]


@dataclass(frozen=True, eq=False)
class Corpus:
    """
    Bag-of-words document collection.

    ``counts`` is a D x V CSR matrix of positive integer counts; each row is
    one document's sparse count vector.
    """
    vocabulary: Vocabulary
    counts: sparse.csr_matrix
    doc_ids: tuple
    labels: np.ndarray = None
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        counts = sparse.csr_matrix(self.counts, dtype=np.int64)
        counts.sum_duplicates()
        counts.eliminate_zeros()
        counts.sort_indices()
        doc_ids = tuple(str(doc_id) for doc_id in self.doc_ids)

        if counts.shape[1] != len(self.vocabulary):
            raise ValidationError(
                f"Count matrix has {counts.shape[1]} columns but vocabulary has {len(self.vocabulary)} terms"
            )
        if counts.shape[0] != len(doc_ids):
            raise ValidationError(f"{counts.shape[0]} documents but {len(doc_ids)} doc ids")
        if len(set(doc_ids)) != len(doc_ids):
            raise ValidationError("Document ids must be unique")
        if counts.nnz and counts.data.min() < 1:
            raise ValidationError("Document counts must be positive integers")
        lengths = np.asarray(counts.sum(axis=1)).ravel()
        empty = np.flatnonzero(lengths < 1)
        if empty.size:
            raise ValidationError(f"Document '{doc_ids[empty[0]]}' is empty")

        labels = self.labels
        if labels is not None:
            labels = np.asarray(labels, dtype=np.int64)
            if labels.shape != (len(doc_ids),):
                raise ValidationError(f"Expected {len(doc_ids)} labels, got shape {labels.shape}")
            if not np.isin(labels, (0, 1)).all():
                raise ValidationError("Labels must be 0 or 1")

        object.__setattr__(self, 'counts', counts)
        object.__setattr__(self, 'doc_ids', doc_ids)
        object.__setattr__(self, 'labels', labels)

    @classmethod
    def from_documents(cls, documents, vocabulary, doc_ids=None, labels=None, metadata=None):
        """
        Build a corpus from a list of ``{term_id: count}`` mappings.
        """
        if not isinstance(vocabulary, Vocabulary):
            vocabulary = Vocabulary(tuple(vocabulary))
        rows, cols, vals = [], [], []
        for d, document in enumerate(documents):
            for term_id, count in document.items():
                if not 0 <= term_id < len(vocabulary):
                    raise ValidationError(f"Document {d} uses unknown term id {term_id}")
                rows.append(d)
                cols.append(term_id)
                vals.append(count)
        counts = sparse.csr_matrix(
            (np.asarray(vals, dtype=np.int64), (np.asarray(rows, dtype=np.int64), np.asarray(cols, dtype=np.int64))),
            shape=(len(documents), len(vocabulary)),
        )
        if doc_ids is None:
            doc_ids = tuple(str(d) for d in range(len(documents)))
        return cls(vocabulary, counts, tuple(doc_ids), labels, dict(metadata or {}))

    def __eq__(self, other):
        if not isinstance(other, Corpus):
            return NotImplemented
        if self.vocabulary.terms != other.vocabulary.terms or self.doc_ids != other.doc_ids:
            return False
        if self.counts.shape != other.counts.shape or (self.counts != other.counts).nnz:
            return False
        if (self.labels is None) != (other.labels is None):
            return False
        return self.labels is None or np.array_equal(self.labels, other.labels)

    __hash__ = None

    @property
    def n_docs(self):
        return self.counts.shape[0]

    @property
    def n_terms(self):
        return self.counts.shape[1]

    @property
    def doc_lengths(self):
        return np.asarray(self.counts.sum(axis=1)).ravel()

    @property
    def total_tokens(self):
        return int(self.counts.sum())

    @property
    def documents(self):
        return [self.document(d) for d in range(self.n_docs)]

    def document(self, d):
        """Return document ``d`` as ``{term_id: count}``."""
        start, end = self.counts.indptr[d], self.counts.indptr[d + 1]
        return {
            int(term_id): int(count)
            for term_id, count in zip(self.counts.indices[start:end], self.counts.data[start:end])
        }

    def term_frequencies(self):
        """Corpus frequency of every term."""
        return np.asarray(self.counts.sum(axis=0)).ravel()

    def digest(self):
        """SHA-256 over vocabulary, counts, doc ids and labels."""
        h = hashlib.sha256()
        h.update('\x1f'.join(self.vocabulary.terms).encode('utf-8'))
        h.update(b'\x00')
        for array in (self.counts.indptr, self.counts.indices, self.counts.data):
            h.update(np.ascontiguousarray(array, dtype='<i8').tobytes())
        h.update('\x1f'.join(self.doc_ids).encode('utf-8'))
        if self.labels is not None:
            h.update(np.ascontiguousarray(self.labels, dtype='<i8').tobytes())
        return h.hexdigest()


def _sidecar(path, suffix):
    path = Path(path)
    return path.with_name(path.stem + suffix)


def _read_vocabulary(path):
    try:
        lines = Path(path).read_text(encoding='utf-8').split('\n')
    except FileNotFoundError:
        raise CorpusFormatError(f"Vocabulary sidecar '{path}' not found") from None
    except UnicodeDecodeError as e:
        raise CorpusFormatError(f"Vocabulary sidecar '{path}' is not valid UTF-8: {e}") from None
    if lines and lines[-1] == '':
        lines = lines[:-1]
    for line_number, term in enumerate(lines, start=1):
        if not term or term != term.strip() or len(term.split()) != 1:
            raise CorpusFormatError(f"Vocabulary line {line_number}: malformed term {term!r}")
    return Vocabulary(tuple(lines))


def _read_doc_sidecar(path):
    """Return (doc_ids, labels) from ``<stem>.docs.csv`` or (None, None)."""
    sidecar = _sidecar(path, '.docs.csv')
    if not sidecar.exists():
        return None, None
    table = pd.read_csv(sidecar, dtype={'doc_id': str}, keep_default_na=False)
    if 'doc_id' not in table.columns:
        raise CorpusFormatError(f"'{sidecar}' has no doc_id column")
    labels = None
    if 'label' in table.columns:
        labels = pd.to_numeric(table['label'], errors='coerce')
        if labels.isna().any():
            bad = int(np.flatnonzero(labels.isna().to_numpy())[0])
            raise CorpusFormatError(f"'{sidecar}' line {bad + 2}: label is not an integer")
        labels = labels.to_numpy(dtype=np.int64)
    return tuple(table['doc_id']), labels


def _load_line_tokens(path):
    raw = Path(path).read_bytes()
    lines = raw.split(b'\n')
    if lines and lines[-1] == b'':
        lines = lines[:-1]
    if not lines:
        raise CorpusFormatError(f"'{path}': no documents")

    doc_ids, labels = _read_doc_sidecar(path)
    if doc_ids is not None and len(doc_ids) != len(lines):
        raise CorpusFormatError(f"'{path}' has {len(lines)} documents but its doc sidecar lists {len(doc_ids)}")
    if doc_ids is None:
        doc_ids = tuple(str(d) for d in range(len(lines)))

    vocab_path = _sidecar(path, '.vocab')
    vocabulary = _read_vocabulary(vocab_path) if vocab_path.exists() else None
    term_ids = {} if vocabulary is None else {term: i for i, term in enumerate(vocabulary.terms)}

    documents = []
    for line_number, line in enumerate(lines, start=1):
        try:
            text = line.rstrip(b'\r').decode('utf-8')
        except UnicodeDecodeError:
            raise CorpusFormatError(f"'{path}' line {line_number}: not valid UTF-8") from None
        tokens = text.split()
        if not tokens:
            raise CorpusFormatError(f"'{path}' line {line_number}: document '{doc_ids[line_number - 1]}' is empty")
        document = {}
        for token in tokens:
            if token not in term_ids:
                if vocabulary is not None:
                    raise CorpusFormatError(
                        f"'{path}' line {line_number}: token '{token}' is not in the vocabulary sidecar"
                    )
                term_ids[token] = len(term_ids)
            term_id = term_ids[token]
            document[term_id] = document.get(term_id, 0) + 1
        documents.append(document)

    if vocabulary is None:
        vocabulary = Vocabulary(tuple(term_ids))
    return Corpus.from_documents(documents, vocabulary, doc_ids, labels)


def _load_sparse_triplets(path):
    vocabulary = _read_vocabulary(_sidecar(path, '.vocab'))
    try:
        table = pd.read_csv(path, dtype=str, keep_default_na=False, on_bad_lines='error')
    except pd.errors.EmptyDataError:
        raise CorpusFormatError(f"'{path}': no documents") from None
    except pd.errors.ParserError as e:
        raise CorpusFormatError(f"'{path}': malformed line ({e})") from None
    if list(table.columns) != TRIPLET_COLUMNS:
        raise CorpusFormatError(f"'{path}' line 1: expected header {','.join(TRIPLET_COLUMNS)}")
    if table.empty:
        raise CorpusFormatError(f"'{path}': no documents")

    numeric = table[['term_id', 'count']].apply(pd.to_numeric, errors='coerce')
    bad_rows = numeric.isna().any(axis=1).to_numpy() | (table['doc_id'] == '').to_numpy()
    if bad_rows.any():
        row = int(np.flatnonzero(bad_rows)[0])
        raise CorpusFormatError(f"'{path}' line {row + 2}: malformed triplet {table.iloc[row].tolist()}")
    term_id = numeric['term_id'].to_numpy()
    count = numeric['count'].to_numpy()
    non_integer = (term_id != np.floor(term_id)) | (count != np.floor(count)) | (count < 1)
    if non_integer.any():
        row = int(np.flatnonzero(non_integer)[0])
        raise CorpusFormatError(f"'{path}' line {row + 2}: term id and count must be integers, count >= 1")
    term_id = term_id.astype(np.int64)
    count = count.astype(np.int64)
    unknown = (term_id < 0) | (term_id >= len(vocabulary))
    if unknown.any():
        row = int(np.flatnonzero(unknown)[0])
        raise CorpusFormatError(f"'{path}' line {row + 2}: unknown term id {term_id[row]}")

    doc_ids, labels = _read_doc_sidecar(path)
    appearing = pd.unique(table['doc_id'])
    if doc_ids is None:
        doc_ids = tuple(appearing)
    else:
        missing = set(doc_ids) - set(appearing)
        if missing:
            raise CorpusFormatError(f"'{path}': document '{sorted(missing)[0]}' is empty")
        unknown_docs = set(appearing) - set(doc_ids)
        if unknown_docs:
            raise CorpusFormatError(f"'{path}': document '{sorted(unknown_docs)[0]}' missing from doc sidecar")
    row_of = {doc_id: d for d, doc_id in enumerate(doc_ids)}
    rows = table['doc_id'].map(row_of).to_numpy(dtype=np.int64)
    counts = sparse.csr_matrix((count, (rows, term_id)), shape=(len(doc_ids), len(vocabulary)))
    return Corpus(vocabulary, counts, doc_ids, labels)


def load_corpus(path, format=LINE_TOKENS):
    """
    Load a corpus from ``path``.

    Args:
        path (Path): Corpus file
        format (str): ``line-tokens`` or ``sparse-triplets``

    Returns:
        Corpus: Validated corpus

    Raises:
        CorpusFormatError: If the file is missing, malformed or holds no documents
    """
    path = Path(path)
    if format not in FORMATS:
        raise CorpusFormatError(f"Unknown corpus format '{format}'; expected one of {FORMATS}")
    if not path.exists():
        raise CorpusFormatError(f"Could not find the corpus file '{path}'")
    if format == LINE_TOKENS:
        corpus = _load_line_tokens(path)
    else:
        corpus = _load_sparse_triplets(path)
    logger.info(f"Loaded corpus '{path}': D={corpus.n_docs}, V={corpus.n_terms}, tokens={corpus.total_tokens}")
    return corpus


def _write_text(path, text):
    Path(path).write_text(text, encoding='utf-8', newline='\n')


def save_corpus(corpus, path, format=LINE_TOKENS):
    """
    Write ``corpus`` to ``path`` plus its vocabulary and doc sidecars.

    Raises:
        ValidationError: If the path cannot be written
    """
    path = Path(path)
    if format not in FORMATS:
        raise CorpusFormatError(f"Unknown corpus format '{format}'; expected one of {FORMATS}")
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        terms = corpus.vocabulary.terms
        _write_text(_sidecar(path, '.vocab'), ''.join(f'{term}\n' for term in terms))

        if format == LINE_TOKENS:
            lines = []
            for d in range(corpus.n_docs):
                tokens = []
                for term_id, count in sorted(corpus.document(d).items()):
                    tokens.extend([terms[term_id]] * count)
                lines.append(' '.join(tokens) + '\n')
            _write_text(path, ''.join(lines))
        else:
            coo = corpus.counts.tocoo()
            order = np.lexsort((coo.col, coo.row))
            table = pd.DataFrame({
                'doc_id': np.asarray(corpus.doc_ids, dtype=object)[coo.row[order]],
                'term_id': coo.col[order],
                'count': coo.data[order],
            })
            table.to_csv(path, index=False, lineterminator='\n')

        docs = pd.DataFrame({'doc_id': list(corpus.doc_ids)})
        if corpus.labels is not None:
            docs['label'] = corpus.labels
        docs.to_csv(_sidecar(path, '.docs.csv'), index=False, lineterminator='\n')
    except OSError as e:
        raise ValidationError(f"Cannot write corpus to '{path}': {e}") from e
    logger.debug(f"Saved corpus to '{path}' as {format}")
    return [path, _sidecar(path, '.vocab'), _sidecar(path, '.docs.csv')]


def remove_words(corpus, n, rng_seed):
    """
    Delete ``n`` vocabulary terms sampled uniformly without replacement.

    Documents emptied by the removal are dropped; their ids are recorded in
    ``metadata['dropped_doc_ids']`` and the removed terms in
    ``metadata['removed_terms']``.
    """
    V = corpus.n_terms
    if n < 0:
        raise ValidationError(f"Cannot remove a negative number of words ({n})")
    if n >= V:
        raise ValidationError(f"Cannot remove {n} words from a vocabulary of {V}")

    rng = np.random.default_rng(rng_seed)
    removed = np.sort(rng.choice(V, size=n, replace=False)) if n else np.array([], dtype=np.int64)
    keep = np.setdiff1d(np.arange(V), removed)

    counts = corpus.counts[:, keep]
    lengths = np.asarray(counts.sum(axis=1)).ravel()
    kept_docs = np.flatnonzero(lengths > 0)
    dropped = [corpus.doc_ids[d] for d in np.flatnonzero(lengths == 0)]
    if dropped:
        logger.warning(f"Word removal (n={n}, seed={rng_seed}) emptied {len(dropped)} documents; dropping them")

    metadata = dict(corpus.metadata)
    metadata['removed_terms'] = [corpus.vocabulary.terms[i] for i in removed]
    metadata['dropped_doc_ids'] = dropped
    return Corpus(
        Vocabulary(tuple(corpus.vocabulary.terms[i] for i in keep)),
        counts[kept_docs],
        tuple(corpus.doc_ids[d] for d in kept_docs),
        None if corpus.labels is None else corpus.labels[kept_docs],
        metadata,
    )
