import json
import tempfile
from pathlib import Path

from django.test import SimpleTestCase, override_settings

from topic_reliability.exceptions import ConfigError
from topic_reliability.utils import load_run_config


class RunConfigTests(SimpleTestCase):
    def setUp(self):
        self.tmp = tempfile.TemporaryDirectory()
        self.addCleanup(self.tmp.cleanup)

    def write(self, payload):
        path = Path(self.tmp.name) / 'config.json'
        path.write_text(json.dumps(payload) if not isinstance(payload, str) else payload, encoding='utf-8')
        return path

    @override_settings(RELIABILITY_MASTER_SEED=99, RELIABILITY_TOP_N=25)
    def test_settings_fill_missing_values(self):
        config = load_run_config(self.write({'corpus': {'path': 'c.txt'}, 'k_values': [5]}))
        self.assertEqual(config.master_seed, 99)
        self.assertEqual(config.top_n, 25)

    def test_cli_overrides_win(self):
        config = load_run_config(self.write({'corpus': {'path': 'c.txt'}, 'master_seed': 1}), seed=7, out='/tmp/x', jobs=3)
        self.assertEqual(config.master_seed, 7)
        self.assertEqual(config.output_dir, '/tmp/x')
        self.assertEqual(config.jobs, 3)

    def test_preset_is_merged_under_file_values(self):
        config = load_run_config(self.write({'corpus': {'preset': 'trivial'}, 'n_reps': 4}))
        self.assertEqual(config.n_reps, 4)
        self.assertEqual(config.k_values, [2])
        self.assertEqual(config.corpus['generate']['V'], 16)
        self.assertEqual(config.inject_degenerate['index'], 5)

    def test_preset_without_file(self):
        self.assertEqual(load_run_config(preset='nontrivial').k_values, [10, 25, 50])
        self.assertEqual(load_run_config(preset='removal').corpus['generate']['K_true'], 50)

    def test_rejects_unknown_keys_and_bad_values(self):
        with self.assertRaises(ConfigError):
            load_run_config(self.write({'corpus': {'path': 'c.txt'}, 'colour': 'blue'}))
        with self.assertRaises(ConfigError):
            load_run_config(self.write({'corpus': {'path': 'c.txt'}, 'k_values': [1]}))
        with self.assertRaises(ConfigError):
            load_run_config(self.write({'corpus': {'path': 'c.txt'}, 'bootstrap_b': 10}))
        with self.assertRaises(ConfigError):
            load_run_config(self.write('{not json'))
        with self.assertRaises(ConfigError):
            load_run_config(Path(self.tmp.name) / 'absent.json')

    def test_digest_ignores_output_location_and_jobs(self):
        path = self.write({'corpus': {'path': 'c.txt'}})
        self.assertEqual(
            load_run_config(path, out='/a', jobs=1).digest(),
            load_run_config(path, out='/b', jobs=4).digest(),
        )
