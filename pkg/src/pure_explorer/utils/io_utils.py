"""Utility functions for writing and reading result files and run manifests."""

import csv
import hashlib
import json
from pathlib import Path
from typing import Any, Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

from pure_explorer.config import MANIFEST_FILE_NAME
from pure_explorer.stats import TrajectoryRecord
from pure_explorer.utils.exceptions import ConfigHashMismatchError

HASH_COLUMN = "config_hash"
_RECORD_COLUMNS = ["seed", "env", "trajectory", "correct", "tau"]


def file_sha256(path: Path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _format(value: Any) -> Any:
    if isinstance(value, bool):
        return int(value)
    if isinstance(value, float):
        return repr(value)
    return value


def write_table(rows: Sequence[Mapping[str, Any]], path: Path, config_hash: str) -> Path:
    """Write dict rows as a CSV with a trailing ``config_hash`` column; floats keep full precision."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    columns = list(rows[0]) if rows else []
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(columns + [HASH_COLUMN])
        for row in rows:
            writer.writerow([_format(row[c]) for c in columns] + [config_hash])
    return path


def read_table(path: Path) -> Tuple[List[Dict[str, str]], Optional[str]]:
    """Rows of a result CSV (as strings, hash column removed) and the single config hash it carries."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"Result file not found: {path}")
    with open(path, newline="", encoding="utf-8") as f:
        rows = list(csv.DictReader(f))
    hashes = {row.pop(HASH_COLUMN, None) for row in rows}
    if len(hashes) > 1:
        found = sorted(h or "" for h in hashes)
        raise ConfigHashMismatchError(found[0], found[-1], str(path))
    return rows, next(iter(hashes), None)


def write_records(records: Iterable[TrajectoryRecord], path: Path, config_hash: str) -> Path:
    records = list(records)
    extras = sorted({key for r in records for key in r.extra})
    rows = [
        {"seed": r.seed, "env": r.env, "trajectory": r.trajectory, "correct": r.correct, "tau": r.tau}
        | {key: float(r.extra.get(key, float("nan"))) for key in extras}
        for r in records
    ]
    return write_table(rows, path, config_hash)


def read_records(path: Path) -> Tuple[List[TrajectoryRecord], Optional[str]]:
    rows, config_hash = read_table(path)
    records = [
        TrajectoryRecord(
            seed=int(row["seed"]),
            env=int(row["env"]),
            trajectory=int(row["trajectory"]),
            correct=bool(int(row["correct"])),
            tau=int(row["tau"]),
            extra={k: float(v) for k, v in row.items() if k not in _RECORD_COLUMNS},
        )
        for row in rows
    ]
    return records, config_hash


def check_hashes(hashes: Mapping[str, Optional[str]]) -> str:
    """
    Return the common config hash of several result files.

    Raises
    ------
    ConfigHashMismatchError
        If two files carry different hashes.
    """
    expected: Optional[str] = None
    for source, found in hashes.items():
        if found is None:
            continue
        if expected is None:
            expected = found
        elif found != expected:
            raise ConfigHashMismatchError(expected, found, source)
    return expected or ""


def write_manifest(
    output_dir: Path,
    config: Mapping[str, Any],
    config_hash: str,
    files: Sequence[Path],
    timings: Mapping[str, float],
) -> Path:
    """Write ``manifest.json`` listing the config, its hash, every output file's SHA-256 and wall-clock timings."""
    output_dir = Path(output_dir)
    manifest = {
        "config": config,
        "config_hash": config_hash,
        "files": {Path(p).name: file_sha256(p) for p in files},
        "timings": dict(timings),
    }
    path = output_dir / MANIFEST_FILE_NAME
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True), encoding="utf-8")
    return path


def read_manifest(output_dir: Path) -> Dict[str, Any]:
    path = Path(output_dir) / MANIFEST_FILE_NAME
    if not path.is_file():
        raise FileNotFoundError(f"Manifest not found: {path}")
    return json.loads(path.read_text(encoding="utf-8"))
