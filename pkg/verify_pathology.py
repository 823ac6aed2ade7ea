"""
Walk-through of the degenerate-replication scenario on the trivial preset.
"""

import os
import sys
import tempfile

import django

# Setup Django environment
sys.path.append(os.path.dirname(os.path.abspath(__file__)))
os.environ.setdefault('DJANGO_SETTINGS_MODULE', 'reliability_project.settings')
django.setup()

from topic_reliability import services
from topic_reliability.utils import load_run_config

print("DEGENERATE REPLICATION CHECK")
print("=" * 50)

out = sys.argv[1] if len(sys.argv) > 1 else tempfile.mkdtemp(prefix='pathology_')
run_config = load_run_config(preset='trivial', out=out)

print("\n1. Configuration:")
print(f"   - Documents: {run_config.corpus['generate']['D']}")
print(f"   - Replications: {run_config.n_reps}")
print(f"   - Degenerate replication: {run_config.inject_degenerate['index']}")
print(f"   - Output: {out}")

print("\n2. Fitting and scoring (this takes a while)...")
result = services.run_reliability(run_config)

print("\n3. Coefficients:")
for line in services.summarise_coefficients(result):
    print(f"   {line}")

print("\n4. Verdict:")
if services.degenerate_pair_flagged(result, '4_5'):
    print("   ✅ Cosine rule rates the degenerate pair perfect; alpha and omega flag it")
else:
    print("   ❌ Degenerate pair was not separated by the coefficients")
    sys.exit(1)
