"""Writers for result tables, JSON sidecars and run manifests."""

import json
import time
from datetime import datetime
from importlib import metadata
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

import pandas as pd
from packaging.version import InvalidVersion, Version

from utils.helpers import sanitize_for_json
from utils.logging_config import get_logger

logger = get_logger(__name__)

TRACKED_PACKAGES = ("numpy", "scipy", "pandas", "pydantic", "pydantic-settings", "langgraph")


def package_versions() -> Dict[str, Optional[str]]:
    versions: Dict[str, Optional[str]] = {}
    for name in TRACKED_PACKAGES:
        try:
            versions[name] = metadata.version(name)
        except metadata.PackageNotFoundError:
            versions[name] = None
    return versions


def version_drift(recorded: Dict[str, Optional[str]]) -> List[str]:
    """
    Packages whose installed major.minor release differs from the one recorded in a manifest.

    Args:
        recorded: The manifest's "versions" block

    Returns:
        Messages of the form "numpy 1.26.4 -> 2.1.0", empty when nothing drifted
    """
    current = package_versions()
    drifted = []
    for name, old in recorded.items():
        new = current.get(name)
        if old is None or new is None:
            continue
        try:
            if Version(old).release[:2] != Version(new).release[:2]:
                drifted.append(f"{name} {old} -> {new}")
        except InvalidVersion:
            drifted.append(f"{name} {old} -> {new}")
    return drifted


class ResultsWriter:
    """Writes one run's outputs into a directory."""

    def __init__(self, out_dir: Union[str, Path]):
        """
        Initialize the writer.

        Args:
            out_dir: Output directory (created if missing)
        """
        self.out_dir = Path(out_dir)
        self.out_dir.mkdir(parents=True, exist_ok=True)
        self.started = time.perf_counter()
        self.written: List[str] = []

    def path(self, name: str) -> Path:
        return self.out_dir / name

    def write_csv(self, name: str, frame: pd.DataFrame, header: bool = True) -> Path:
        path = self.path(name)
        frame.to_csv(path, index=False, header=header)
        self.written.append(name)
        logger.info(f"Wrote {path} ({len(frame)} rows)")
        return path

    def write_json(self, name: str, data: Any) -> Path:
        path = self.path(name)
        with open(path, "w", encoding="utf-8") as f:
            json.dump(sanitize_for_json(data), f, indent=2)
        self.written.append(name)
        logger.info(f"Wrote {path}")
        return path

    def write_manifest(self, command: str, config: Dict[str, Any], extra: Optional[Dict[str, Any]] = None) -> Path:
        """
        Record the command, its validated configuration, package versions and wall time.

        The config block is exactly what ConfigManager.from_manifest reads back.
        """
        manifest = {
            "command": command,
            "config": config,
            "seed": config.get("seed"),
            "versions": package_versions(),
            "created_at": datetime.now(),
            "wall_time_seconds": time.perf_counter() - self.started,
            "files": list(self.written),
        }
        if extra:
            manifest.update(extra)
        return self.write_json("manifest.json", manifest)
