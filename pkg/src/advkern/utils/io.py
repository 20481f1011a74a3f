"""
advkern File Utilities.

JSON and CSV writers used by the command-line harness. Every CSV starts with
a provenance comment line carrying the configuration hash and the seed,
followed by the header row. JSON files are written with sorted keys so
identical runs produce identical bytes.
"""

import hashlib
import json
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Union

import pandas as pd

from advkern.exceptions import DataIOError
from advkern.utils.logging import _to_jsonable, get_advkern_logger

logger = get_advkern_logger(__name__)


def config_digest(config: Dict[str, Any]) -> str:
    """SHA-256 of the canonical JSON form of a configuration."""
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"), default=_to_jsonable)
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def provenance_line(digest: str, seed: int) -> str:
    return f"# config_sha256={digest}, seed={seed}"


def write_json(path: Union[str, Path], data: Union[Dict, List]) -> Path:
    """
    Write a JSON document with sorted keys and a trailing newline.

    Raises:
        DataIOError: If the file cannot be written
    """
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(data, indent=2, sort_keys=True, default=_to_jsonable) + "\n", encoding="utf-8")
    except OSError as e:
        raise DataIOError(f"Failed to write {path}: {e}")
    logger.debug(f"Wrote {path}")
    return path


def read_json(path: Union[str, Path]) -> Any:
    """
    Read a JSON document.

    Raises:
        DataIOError: If the file is missing or malformed
    """
    path = Path(path)
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise DataIOError(f"File not found: {path}")
    except (OSError, json.JSONDecodeError) as e:
        raise DataIOError(f"Failed to read JSON from {path}: {e}")


class ProvenanceCsv:
    """
    Incremental CSV writer with a provenance comment line.

    Rows are appended and flushed as they arrive so that a failing run keeps
    everything written before the failure.

    Example:
        >>> with ProvenanceCsv(out / "rate.csv", ["n", "rep", "mse"], digest, seed=0) as table:
        ...     table.append([{"n": 32, "rep": 0, "mse": 0.01}])
    """

    def __init__(self, path: Union[str, Path], columns: Sequence[str], digest: str, seed: int):
        self.path = Path(path)
        self.columns = list(columns)
        self.digest = digest
        self.seed = seed
        self._handle = None

    def __enter__(self) -> "ProvenanceCsv":
        try:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            self._handle = self.path.open("w", encoding="utf-8", newline="")
        except OSError as e:
            raise DataIOError(f"Failed to open {self.path} for writing: {e}")
        self._handle.write(provenance_line(self.digest, self.seed) + "\n")
        pd.DataFrame(columns=self.columns).to_csv(self._handle, index=False)
        self._handle.flush()
        return self

    def append(self, rows: List[Dict[str, Any]]) -> None:
        if not rows:
            return
        pd.DataFrame(rows, columns=self.columns).to_csv(self._handle, header=False, index=False)
        self._handle.flush()

    def __exit__(self, exc_type, exc, tb) -> None:
        if self._handle is not None:
            self._handle.close()
            self._handle = None


def write_csv(
    path: Union[str, Path], rows: List[Dict[str, Any]], columns: Sequence[str], digest: str, seed: int
) -> Path:
    """Write a whole table at once."""
    with ProvenanceCsv(path, columns, digest, seed) as table:
        table.append(rows)
    return Path(path)


def read_csv(path: Union[str, Path], columns: Optional[Sequence[str]] = None) -> pd.DataFrame:
    """Read a CSV written by this module, skipping the provenance line."""
    try:
        frame = pd.read_csv(path, comment="#")
    except (OSError, pd.errors.ParserError, pd.errors.EmptyDataError) as e:
        raise DataIOError(f"Failed to read {path}: {e}")
    return frame if columns is None else frame[list(columns)]
