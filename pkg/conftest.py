"""Make `src` importable from tests exactly as somnus.py imports it"""

import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).parent))
