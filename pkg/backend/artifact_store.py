import json
import logging
from pathlib import Path
from typing import Any

from models import ModelSpec, RatePathSet

logger = logging.getLogger(__name__)


class ArtifactStore:
    """Writes the JSON and CSV artifacts of a command into one output directory"""

    MODEL_FILE = "model.json"
    REPORT_FILE = "report.json"
    PATHS_FILE = "paths.csv"

    def __init__(self, out_dir: str | Path):
        self.out_dir = Path(out_dir)

    def _prepare(self, name: str) -> Path:
        try:
            self.out_dir.mkdir(parents=True, exist_ok=True)
        except OSError as e:
            raise OSError(f"cannot create output directory {self.out_dir}: {e}") from e
        return self.out_dir / name

    def _write_text(self, name: str, text: str) -> Path:
        path = self._prepare(name)
        try:
            path.write_text(text, encoding="utf-8")
        except OSError as e:
            raise OSError(f"cannot write {path}: {e}") from e
        logger.info("Wrote %s", path)
        return path

    def write_model(self, model: ModelSpec) -> Path:
        """Resolved model dump"""
        return self._write_text(self.MODEL_FILE, model.model_dump_json(indent=2))

    def write_report(self, report: dict[str, Any]) -> Path:
        return self._write_text(self.REPORT_FILE, json.dumps(report, indent=2))

    def write_paths(self, paths: RatePathSet, max_paths: int | None = None) -> Path:
        """
        Long-format path CSV with columns path, time, maturity, rate.

        Only the first `max_paths` paths are written; the output is a pure
        function of the path set so reruns with one seed give identical files.
        """
        path = self._prepare(self.PATHS_FILE)
        frame = paths.to_frame(max_paths)
        try:
            frame.to_csv(path, index=False, float_format="%.17g")
        except OSError as e:
            raise OSError(f"cannot write {path}: {e}") from e
        logger.info("Wrote %d rows to %s", len(frame), path)
        return path

    def load_report(self) -> dict[str, Any]:
        path = self.out_dir / self.REPORT_FILE
        try:
            return json.loads(path.read_text(encoding="utf-8"))
        except OSError as e:
            raise OSError(f"cannot read {path}: {e}") from e
