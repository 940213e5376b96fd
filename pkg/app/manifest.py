import sys
import os
import time
from datetime import datetime, timezone
from typing import Any, Dict, Optional

from pydantic import BaseModel, Field, PrivateAttr

sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), "..")))

from utils.io import write_json
from utils.metrics import current_rss_bytes

MANIFEST_FORMAT_VERSION: int = 1


class RunManifest(BaseModel):
    """
    Sidecar record of one command run.

    Everything except `started_at`, `finished_at`, `timings` and `peak_rss_bytes`
    is a pure function of the command's inputs.
    """

    command: str
    format_version: int = MANIFEST_FORMAT_VERSION
    config: Dict[str, Any] = Field(default_factory=dict)
    seeds: Dict[str, int] = Field(default_factory=dict)
    inputs: Dict[str, str] = Field(default_factory=dict)
    outputs: Dict[str, str] = Field(default_factory=dict)
    summary: Dict[str, Any] = Field(default_factory=dict)
    started_at: str = ""
    finished_at: str = ""
    timings: Dict[str, float] = Field(default_factory=dict)
    peak_rss_bytes: int = 0

    _clock: float = PrivateAttr(default=0.0)
    _stage_clock: float = PrivateAttr(default=0.0)

    def model_post_init(self, __context: Any) -> None:
        self._clock = time.perf_counter()
        self._stage_clock = self._clock
        if not self.started_at:
            self.started_at = datetime.now(timezone.utc).isoformat()
        self.sample_memory()

    @property
    def file_name(self) -> str:
        return f"{self.command}.manifest.json"

    def sample_memory(self) -> None:
        self.peak_rss_bytes = max(self.peak_rss_bytes, current_rss_bytes())

    def mark(self, stage: str) -> None:
        """Records the wall-clock seconds since the previous mark under `stage`."""
        now = time.perf_counter()
        self.timings[stage] = round(now - self._stage_clock, 6)
        self._stage_clock = now
        self.sample_memory()

    def add_output(self, name: str, path: str) -> None:
        self.outputs[name] = os.path.basename(path)

    def write(self, out_dir: str, summary: Optional[Dict[str, Any]] = None) -> str:
        if summary:
            self.summary.update(summary)
        self.timings["total"] = round(time.perf_counter() - self._clock, 6)
        self.finished_at = datetime.now(timezone.utc).isoformat()
        self.sample_memory()
        path = os.path.join(out_dir, self.file_name)
        write_json(path, self.model_dump(mode="json"))
        return path
