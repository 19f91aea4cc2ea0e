"""Self-describing array container used for training sets and model files.

A container is a ZIP archive holding ``container.json`` (kind tag, format
version, scalar metadata) plus one ``.npy`` entry per array.  Entries are
stored uncompressed with a frozen timestamp, so writing the same content
twice produces byte-identical files -- the property the run manifests rely
on.  The files are also valid ``.npz`` archives: ``numpy.load`` reads the
arrays directly.

All floating point payloads are stored as binary64; no rounding happens on
save/load.
"""

from __future__ import annotations

import io
import json
import zipfile
from pathlib import Path

import numpy as np

from .errors import ConfigError

FORMAT_VERSION = 1

# Fixed DOS timestamp (1980-01-01) keeps archives byte-stable across runs.
_EPOCH = (1980, 1, 1, 0, 0, 0)


def save_container(path, kind: str, meta: dict, arrays: dict) -> None:
    """Write arrays + metadata to `path` deterministically.

    `meta` must be JSON-serializable; keys ``kind`` and ``format_version``
    are reserved.
    """
    header = {"kind": kind, "format_version": FORMAT_VERSION, "meta": meta}
    payload = json.dumps(header, sort_keys=True, separators=(",", ":"))
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with zipfile.ZipFile(path, "w", zipfile.ZIP_STORED) as zf:
        zf.writestr(zipfile.ZipInfo("container.json", date_time=_EPOCH), payload)
        for name in sorted(arrays):
            buf = io.BytesIO()
            np.lib.format.write_array(buf, np.asarray(arrays[name]))
            zf.writestr(zipfile.ZipInfo(name + ".npy", date_time=_EPOCH),
                        buf.getvalue())


def load_container(path, expect_kind: str | None = None):
    """Read a container; returns ``(kind, meta, arrays)``."""
    path = Path(path)
    try:
        with zipfile.ZipFile(path, "r") as zf:
            try:
                header = json.loads(zf.read("container.json"))
            except KeyError:
                raise ConfigError(f"{path}: not a uqkit container "
                                  "(missing container.json)") from None
            arrays = {}
            for entry in zf.namelist():
                if entry.endswith(".npy"):
                    buf = io.BytesIO(zf.read(entry))
                    arrays[entry[:-4]] = np.lib.format.read_array(buf)
    except zipfile.BadZipFile as exc:
        raise ConfigError(f"{path}: not a uqkit container ({exc})") from None
    kind = header.get("kind")
    if expect_kind is not None and kind != expect_kind:
        raise ConfigError(f"{path}: expected a '{expect_kind}' container, "
                          f"found '{kind}'")
    return kind, header.get("meta", {}), arrays


def container_kind(path) -> str:
    kind, _, _ = load_container(path)
    return kind
