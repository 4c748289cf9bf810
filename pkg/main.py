import sys
from pathlib import Path

# backend modules use flat imports
sys.path.insert(0, str(Path(__file__).parent / "backend"))

from cli import main  # noqa: E402

if __name__ == "__main__":
    main()
