import sys
from pathlib import Path

# Make the test-local oracle helpers importable regardless of invocation dir.
sys.path.insert(0, str(Path(__file__).parent))

FIXTURES = Path(__file__).parent.parent / "fixtures"
