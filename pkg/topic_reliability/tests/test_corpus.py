import tempfile
from pathlib import Path

import numpy as np
from django.test import SimpleTestCase

from topic_reliability.corpus import (
    LINE_TOKENS,
    SPARSE_TRIPLETS,
    Corpus,
    Vocabulary,
    load_corpus,
    remove_words,
    save_corpus,
)
from topic_reliability.exceptions import CorpusFormatError, ValidationError


def write(directory, name, text):
    path = Path(directory) / name
    path.write_text(text, encoding='utf-8')
    return path


class LoadLineTokensTests(SimpleTestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)

    def test_counts_and_vocabulary_in_first_appearance_order(self):
        corpus = load_corpus(write(self.tmp.name, 'c.txt', 'a b b\nc a\n'))
        self.assertEqual(corpus.vocabulary.terms, ('a', 'b', 'c'))
        self.assertEqual(corpus.n_docs, 2)
        self.assertEqual(corpus.document(0), {0: 1, 1: 2})
        self.assertEqual(corpus.document(1), {0: 1, 2: 1})
        self.assertEqual(corpus.doc_ids, ('0', '1'))

    def test_vocab_sidecar_fixes_term_ids(self):
        write(self.tmp.name, 'c.vocab', 'c\nb\na\n')
        corpus = load_corpus(write(self.tmp.name, 'c.txt', 'a b b\n'))
        self.assertEqual(corpus.vocabulary.terms, ('c', 'b', 'a'))
        self.assertEqual(corpus.document(0), {1: 2, 2: 1})

    def test_empty_file_is_rejected(self):
        with self.assertRaisesMessage(CorpusFormatError, 'no documents'):
            load_corpus(write(self.tmp.name, 'c.txt', ''))

    def test_empty_document_names_its_id(self):
        with self.assertRaisesMessage(ValidationError, "'1'"):
            load_corpus(write(self.tmp.name, 'c.txt', 'a b\n\nc\n'))

    def test_missing_file(self):
        with self.assertRaises(CorpusFormatError):
            load_corpus(Path(self.tmp.name) / 'absent.txt')

    def test_unicode_round_trip(self):
        path = write(self.tmp.name, 'c.txt', 'café naïve café\n日本 語\n')
        corpus = load_corpus(path)
        out = Path(self.tmp.name) / 'out' / 'c.txt'
        save_corpus(corpus, out)
        self.assertEqual(load_corpus(out), corpus)


class SparseTripletTests(SimpleTestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)

    def test_triplets_with_vocab_sidecar(self):
        write(self.tmp.name, 't.vocab', 'x\ny\n')
        corpus = load_corpus(write(self.tmp.name, 't.csv', 'doc_id,term_id,count\n0,0,2\n1,1,1\n'), SPARSE_TRIPLETS)
        self.assertEqual(corpus.n_docs, 2)
        self.assertEqual(corpus.n_terms, 2)
        self.assertEqual(corpus.document(0), {0: 2})
        self.assertEqual(corpus.document(1), {1: 1})

    def test_unknown_term_id_is_rejected(self):
        write(self.tmp.name, 't.vocab', 'x\ny\n')
        path = write(self.tmp.name, 't.csv', 'doc_id,term_id,count\n0,5,2\n')
        with self.assertRaises(CorpusFormatError):
            load_corpus(path, SPARSE_TRIPLETS)

    def test_round_trip_both_formats_with_labels(self):
        corpus = Corpus.from_documents(
            [{0: 3, 2: 1}, {1: 2}, {0: 1, 1: 1, 2: 1}], ['alpha', 'beta', 'gamma'],
            doc_ids=['d1', 'd2', 'd3'], labels=[1, 0, 1],
        )
        for fmt in (LINE_TOKENS, SPARSE_TRIPLETS):
            path = Path(self.tmp.name) / fmt / 'corpus.txt'
            save_corpus(corpus, path, fmt)
            self.assertEqual(load_corpus(path, fmt), corpus)


class CorpusInvariantTests(SimpleTestCase):
    def test_duplicate_vocabulary_terms(self):
        with self.assertRaises(ValidationError):
            Vocabulary(('a', 'b', 'a'))

    def test_labels_must_be_binary(self):
        with self.assertRaises(ValidationError):
            Corpus.from_documents([{0: 1}, {0: 2}], ['a'], labels=[0, 2])

    def test_duplicate_doc_ids(self):
        with self.assertRaises(ValidationError):
            Corpus.from_documents([{0: 1}, {0: 2}], ['a'], doc_ids=['x', 'x'])

    def test_digest_ignores_metadata(self):
        a = Corpus.from_documents([{0: 1, 1: 1}], ['a', 'b'])
        b = Corpus.from_documents([{0: 1, 1: 1}], ['a', 'b'], metadata={'note': 'x'})
        self.assertEqual(a.digest(), b.digest())


class RemoveWordsTests(SimpleTestCase):
    def setUp(self):
        self.corpus = Corpus.from_documents(
            [{0: 2, 1: 1}, {2: 3}, {3: 1, 4: 1}, {0: 1, 5: 2}],
            ['a', 'b', 'c', 'd', 'e', 'f'],
        )

    def test_removing_nothing_keeps_the_corpus(self):
        self.assertEqual(remove_words(self.corpus, 0, rng_seed=3), self.corpus)

    def test_removes_exactly_n_terms(self):
        reduced = remove_words(self.corpus, 2, rng_seed=7)
        self.assertEqual(reduced.n_terms, 4)
        self.assertEqual(len(reduced.metadata['removed_terms']), 2)
        for term in reduced.metadata['removed_terms']:
            self.assertNotIn(term, reduced.vocabulary)

    def test_is_deterministic_in_the_seed(self):
        self.assertEqual(remove_words(self.corpus, 3, rng_seed=11), remove_words(self.corpus, 3, rng_seed=11))

    def test_emptied_documents_are_dropped_and_reported(self):
        # document '1' only holds 'c'; some seed must remove it
        for seed in range(50):
            reduced = remove_words(self.corpus, 1, rng_seed=seed)
            if reduced.metadata['removed_terms'] == ['c']:
                self.assertEqual(reduced.metadata['dropped_doc_ids'], ['1'])
                self.assertNotIn('1', reduced.doc_ids)
                return
        self.fail('no seed removed term c')

    def test_cannot_remove_whole_vocabulary(self):
        with self.assertRaises(ValidationError):
            remove_words(self.corpus, 6, rng_seed=0)
        with self.assertRaises(ValidationError):
            remove_words(self.corpus, -1, rng_seed=0)
