from __future__ import annotations

import json
import os
from datetime import datetime, timezone
from typing import Any, Dict, Optional

from app.config import Settings
from app.services.repo.json_repo import _locked  # reuse existing cross-platform lock


class RunJournal:
    """Append-only JSONL journal of completed runs under data/.

    Writes one JSON object per line with fields:
      - ts: ISO timestamp (UTC)
      - kind: "run" | "sweep" | "prune-mc" | "attack"
      - name: scenario file or short label
      - duration_ms: float
      - extra: optional dict (strategy, seed, headline metrics, output dir)
    """

    def __init__(self, settings: Optional[Settings] = None) -> None:
        self.settings = settings or Settings()
        self.path = os.path.join(self.settings.data_dir, self.settings.journal_file)

    def record(
        self,
        kind: str,
        name: str,
        duration_ms: float,
        extra: Optional[Dict[str, Any]] = None,
    ) -> None:
        entry = {
            "ts": datetime.now(timezone.utc).isoformat(),
            "kind": kind,
            "name": name,
            "duration_ms": float(duration_ms),
        }
        if extra:
            entry["extra"] = extra
        line = (json.dumps(entry, ensure_ascii=False, separators=(",", ":"), default=str) + "\n").encode("utf-8")
        try:
            with _locked(self.path) as f:
                f.seek(0, os.SEEK_END)
                f.write(line)
                f.flush()
                os.fsync(f.fileno())
        except Exception:
            # The journal must never fail a run.
            pass

    def entries(self) -> list[dict]:
        if not os.path.exists(self.path):
            return []
        with open(self.path, "r", encoding="utf-8") as f:
            return [json.loads(line) for line in f if line.strip()]
