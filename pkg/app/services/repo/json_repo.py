from __future__ import annotations

import io
import json
import os
import tempfile
from contextlib import contextmanager
from typing import Iterator, Sequence, Type, TypeVar

import pandas as pd
from pydantic import BaseModel, ValidationError

from app.core.models import MetricsSummary, PruneMonteCarloConfig, ScenarioConfig
from app.services.exceptions import ConfigError, RepoError

M = TypeVar("M", bound=BaseModel)

CSV_FLOAT_FORMAT = "%.17g"


# Cross-platform file lock (fcntl for *nix; msvcrt for Windows)
@contextmanager
def _locked(path: str) -> Iterator[io.FileIO]:
    os.makedirs(os.path.dirname(path) or ".", exist_ok=True)
    f = open(path, "a+b")  # create if missing
    try:
        try:
            import fcntl  # type: ignore
            fcntl.flock(f.fileno(), fcntl.LOCK_EX)
            locker = ("fcntl", None)
        except ImportError:
            try:
                import msvcrt  # type: ignore
                msvcrt.locking(f.fileno(), msvcrt.LK_LOCK, 1)
                locker = ("msvcrt", 1)
            except Exception as e:
                f.close()
                raise RepoError(f"Could not lock file {path}: {e}") from e
        yield f
    finally:
        try:
            if locker[0] == "fcntl":
                import fcntl  # type: ignore
                fcntl.flock(f.fileno(), fcntl.LOCK_UN)
            else:
                import msvcrt  # type: ignore
                msvcrt.locking(f.fileno(), msvcrt.LK_UNLCK, locker[1])
        except Exception:
            pass
        f.close()


def _atomic_write(path: str, data: bytes) -> None:
    d = os.path.dirname(path) or "."
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=d)
    try:
        with os.fdopen(fd, "wb") as w:
            w.write(data)
            w.flush()
            os.fsync(w.fileno())
        os.replace(tmp, path)
    except Exception as e:
        try:
            os.remove(tmp)
        except Exception:
            pass
        raise RepoError(f"Atomic write failed for {path}: {e}") from e


def _dump_json(obj) -> bytes:
    return (json.dumps(obj, ensure_ascii=False, indent=2, sort_keys=False) + "\n").encode("utf-8")


class ScenarioRepo:
    """Loads and stores scenario / Monte Carlo files (JSON)."""

    def _load(self, path: str, model: Type[M]) -> M:
        try:
            with open(path, "rb") as f:
                raw = f.read() or b"{}"
            obj = json.loads(raw.decode("utf-8"))
        except FileNotFoundError as e:
            raise RepoError(f"Config file not found: {path}") from e
        except (OSError, UnicodeDecodeError, json.JSONDecodeError) as e:
            raise ConfigError(f"Failed to parse {path}: {e}") from e
        try:
            return model.model_validate(obj)
        except ValidationError as e:
            raise ConfigError(f"Invalid {model.__name__} in {path}:\n{e}") from e

    def load(self, path: str) -> ScenarioConfig:
        return self._load(path, ScenarioConfig)

    def load_monte_carlo(self, path: str) -> PruneMonteCarloConfig:
        return self._load(path, PruneMonteCarloConfig)

    def save(self, path: str, config: BaseModel) -> None:
        try:
            _atomic_write(path, _dump_json(config.model_dump(mode="json")))
        except RepoError:
            raise
        except Exception as e:
            raise RepoError(f"Failed to save config to {path}: {e}") from e


class RunRepo:
    """Writes the artifacts of one run into its directory.

    Layout: <out_dir>/run.csv, metrics.json, config.json (+ plots written by
    app.services.plots).
    """

    def __init__(self, out_dir: str):
        self.out_dir = out_dir

    def path(self, name: str) -> str:
        return os.path.join(self.out_dir, name)

    def write_frame(self, name: str, frame: pd.DataFrame) -> str:
        path = self.path(name)
        try:
            payload = frame.to_csv(index=False, float_format=CSV_FLOAT_FORMAT, lineterminator="\n").encode("utf-8")
        except Exception as e:
            raise RepoError(f"Failed to serialize {name}: {e}") from e
        _atomic_write(path, payload)
        return path

    def write_log(self, frame: pd.DataFrame) -> str:
        return self.write_frame("run.csv", frame)

    def write_metrics(self, summary: MetricsSummary) -> str:
        path = self.path("metrics.json")
        _atomic_write(path, _dump_json(summary.model_dump(mode="json")))
        return path

    def write_metrics_table(self, summaries: Sequence[MetricsSummary]) -> str:
        frame = pd.DataFrame([s.model_dump() for s in summaries])
        return self.write_frame("metrics.csv", frame)

    def write_config(self, config: BaseModel) -> str:
        path = self.path("config.json")
        _atomic_write(path, _dump_json(config.model_dump(mode="json")))
        return path

    def write_json(self, name: str, model: BaseModel) -> str:
        path = self.path(name)
        _atomic_write(path, _dump_json(model.model_dump(mode="json")))
        return path

    def read_log(self) -> pd.DataFrame:
        try:
            return pd.read_csv(self.path("run.csv"))
        except Exception as e:
            raise RepoError(f"Failed to read run log from {self.out_dir}: {e}") from e
