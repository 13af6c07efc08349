import sys
from pathlib import Path

# modules are imported by bare name, as when running the scripts directly
sys.path.insert(0, str(Path(__file__).resolve().parent.parent))
