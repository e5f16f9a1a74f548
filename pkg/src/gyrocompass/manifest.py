"""Run manifests: enough provenance to re-run a command bit-identically."""

from __future__ import annotations

import hashlib
import json
import os
import time
from datetime import datetime, timezone

from . import __version__
from .config import canonical_json


def sha256_file(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()


def hash_tree(root) -> dict[str, str]:
    """sha256 of every file under ``root`` keyed by relative path."""
    out = {}
    for dirpath, _, filenames in os.walk(root):
        for name in sorted(filenames):
            full = os.path.join(dirpath, name)
            out[os.path.relpath(full, root)] = sha256_file(full)
    return out


class RunTimer:
    def __init__(self):
        self.started = time.monotonic()
        self.started_utc = datetime.now(timezone.utc).isoformat()

    def elapsed(self) -> float:
        return time.monotonic() - self.started


def write_manifest(out_dir, command: str, config_dict: dict, inputs: dict[str, str],
                   outputs: list[str], timer: RunTimer) -> str:
    """Atomically write manifest_<command>.json and return its path."""
    manifest = {
        "schema_version": 1,
        "command": command,
        "code_version": __version__,
        "config": config_dict,
        "config_sha256": hashlib.sha256(canonical_json(config_dict).encode()).hexdigest(),
        "inputs": inputs,
        "outputs": [
            {
                "path": os.path.relpath(path, out_dir),
                "sha256": sha256_file(path),
                "bytes": os.path.getsize(path),
            }
            for path in sorted(outputs)
        ],
        "timings": {"started_utc": timer.started_utc, "elapsed_s": timer.elapsed()},
    }
    path = os.path.join(out_dir, f"manifest_{command.replace('-', '_')}.json")
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
    os.replace(tmp, path)
    return path
