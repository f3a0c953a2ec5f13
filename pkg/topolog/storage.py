"""
File storage for datasets, manifests and reports.
Runs are stored one JSONL file per run next to a manifest.json index.
"""

import logging
from pathlib import Path
from typing import Iterable, Optional, Union

from pydantic import BaseModel, ValidationError

from topolog.errors import DatasetError, TopologError
from topolog.log_model import Label, Run, parse_run, serialize_run

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"


class DatasetManifest(BaseModel):
    """Config echo plus a label index for a generated dataset."""
    config: dict
    runs: dict[str, Label]


def atomic_write_text(path: Union[str, Path], text: str) -> Path:
    """
    Write text to a file using an atomic rename.

    Writes to a temporary sibling first, then replaces the target, so a crash
    never leaves a half-written file behind.

    Args:
        path: Destination file
        text: Content to write

    Returns:
        Path of the written file
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    temp_path = path.with_suffix(path.suffix + ".tmp")
    try:
        with open(temp_path, "w", encoding="utf-8", newline="\n") as f:
            f.write(text)
        temp_path.replace(path)
    except Exception:
        if temp_path.exists():
            temp_path.unlink()
        raise
    return path


class DatasetStore:
    """
    Directory of JSONL run files plus a manifest.

    Each run lives in ``<run_id>.jsonl``; ``manifest.json`` echoes the
    generator configuration and maps run ids to labels.
    """

    def __init__(self, root: Union[str, Path]):
        """
        Initialize the store.

        Args:
            root: Dataset directory (created if missing)
        """
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)

    def run_path(self, run_id: str) -> Path:
        return self.root / f"{run_id}.jsonl"

    def save_run(self, run: Run) -> Path:
        """Write one run as JSONL."""
        return atomic_write_text(self.run_path(run.run_id), serialize_run(run))

    def save_dataset(self, runs: Iterable[Run], config: Optional[dict] = None) -> DatasetManifest:
        """
        Write every run plus the manifest.

        Run files already in the directory that are not part of this dataset
        are removed, so the directory always matches its manifest.

        Args:
            runs: Runs to store
            config: Generator configuration to echo in the manifest

        Returns:
            The manifest that was written
        """
        index = {}
        for run in runs:
            self.save_run(run)
            index[run.run_id] = run.label

        stale = [path for path in self.run_files() if path.stem not in index]
        for path in stale:
            path.unlink()
        if stale:
            logger.warning("Removed %d run files of a previous dataset from %s", len(stale), self.root)

        manifest = DatasetManifest(config=config or {}, runs=dict(sorted(index.items())))
        atomic_write_text(self.root / MANIFEST_NAME, manifest.model_dump_json(indent=2) + "\n")
        logger.info("Wrote %d runs to %s", len(index), self.root)
        return manifest

    def run_files(self) -> list[Path]:
        return sorted(self.root.glob("*.jsonl"))

    def load_run(self, path: Union[str, Path]) -> Run:
        """
        Parse one run file.

        Raises:
            DatasetError: If the file cannot be read or parsed; the message
                names the file and, for parse errors, the line
        """
        path = Path(path)
        try:
            return parse_run(path.read_text(encoding="utf-8"))
        except (TopologError, OSError, UnicodeDecodeError) as e:
            raise DatasetError(path, e) from e

    def load_runs(self) -> list[Run]:
        """
        Load every run of the dataset.

        Returns:
            Runs sorted by run_id

        Raises:
            DatasetError: If the directory holds no run files, any file fails,
                or the runs disagree with the manifest
        """
        files = self.run_files()
        if not files:
            raise DatasetError(self.root, ValueError("no *.jsonl run files found"))
        runs = [self.load_run(path) for path in files]
        runs.sort(key=lambda r: r.run_id)

        manifest = self.load_manifest()
        if manifest is not None:
            self._check_manifest(manifest, runs)
        logger.info("Loaded %d runs from %s", len(runs), self.root)
        return runs

    def load_manifest(self) -> Optional[DatasetManifest]:
        """
        Load the manifest if one exists.

        Returns:
            The manifest, or None when the dataset has none or it is unreadable
        """
        path = self.root / MANIFEST_NAME
        if not path.exists():
            return None
        try:
            return DatasetManifest.model_validate_json(path.read_text(encoding="utf-8"))
        except ValidationError as e:
            logger.warning("Ignoring unreadable manifest %s: %s", path, e)
            return None

    def _check_manifest(self, manifest: DatasetManifest, runs: list[Run]) -> None:
        loaded = {run.run_id: run.label for run in runs}
        if set(loaded) != set(manifest.runs):
            extra = sorted(set(loaded) - set(manifest.runs))
            missing = sorted(set(manifest.runs) - set(loaded))
            raise DatasetError(
                self.root / MANIFEST_NAME,
                ValueError(f"run files do not match the manifest (unlisted: {extra[:5]}, missing: {missing[:5]})"),
            )
        mislabelled = sorted(run_id for run_id, label in loaded.items() if manifest.runs[run_id] != label)
        if mislabelled:
            raise DatasetError(
                self.root / MANIFEST_NAME,
                ValueError(f"labels differ from the manifest for {mislabelled[:5]}"),
            )
