"""Run manifests: enough resolved state to re-run any CLI stage exactly.

A manifest records the command name, the fully resolved parameters (seeds
included), a hash of those parameters, and the input/output paths.  The
``replay`` command re-executes a stage from its manifest; rerunning with
identical inputs produces byte-identical artifacts because every writer in
the toolkit is deterministic.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

from . import __version__
from .errors import ConfigError


def params_hash(params: dict) -> str:
    payload = json.dumps(params, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(payload.encode()).hexdigest()


def write_manifest(path, command: str, params: dict, inputs: list,
                   outputs: list, wall_time: float) -> dict:
    manifest = {
        "command": command,
        "params": params,
        "config_hash": params_hash(params),
        "inputs": [str(p) for p in inputs],
        "outputs": [str(p) for p in outputs],
        "version": __version__,
        "wall_time_s": round(float(wall_time), 6),
    }
    Path(path).write_text(json.dumps(manifest, sort_keys=True, indent=2)
                          + "\n")
    return manifest


def load_manifest(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"manifest not found: {path}")
    try:
        manifest = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: malformed manifest ({exc})") from None
    for key in ("command", "params", "config_hash"):
        if key not in manifest:
            raise ConfigError(f"{path}: manifest missing '{key}'")
    if params_hash(manifest["params"]) != manifest["config_hash"]:
        raise ConfigError(f"{path}: config hash does not match the resolved "
                          "parameters")
    return manifest
