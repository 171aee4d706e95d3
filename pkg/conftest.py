import sys
from pathlib import Path

# Make `src` and `process` importable when pytest runs from the project root
sys.path.insert(0, str(Path(__file__).parent))
